#include "abcran/model.hpp"

#include <cmath>
#include <random>
#include <string>

#include "abcran/binary_io.hpp"
#include "abcran/errors.hpp"
#include "abcran/ops.hpp"

namespace abcran::model {

using ad::Tape;
using ad::Var;

ArchConfig ArchConfig::desk(std::size_t nx) {
  ArchConfig c;
  c.nx = nx;
  c.conv_channels = {4, 8};
  c.dense_widths = {32};
  c.lstm_hidden = 16;
  return c;
}

void ArchConfig::validate() const {
  if (latent_dim < 1) throw InvalidArgument("latent_dim must be >= 1");
  if (conv_channels.empty()) throw InvalidArgument("encoder needs at least one conv layer");
  for (auto c : conv_channels) {
    if (c < 1) throw InvalidArgument("conv channel counts must be positive");
  }
  for (auto w : dense_widths) {
    if (w < 1) throw InvalidArgument("dense widths must be positive");
  }
  if (kernel < 1 || kernel % 2 == 0) throw InvalidArgument("conv kernel must be odd");
  if (lstm_hidden < 1) throw InvalidArgument("lstm_hidden must be >= 1");
  if (k_in < 1 || k_out < 1) throw InvalidArgument("k_in and k_out must be >= 1");
  const std::size_t factor = std::size_t{1} << conv_channels.size();
  if (nx < factor || nx % factor != 0) {
    throw InvalidArgument("nx = " + std::to_string(nx) + " must be a positive multiple of " + std::to_string(factor) +
                          " (one halving per conv layer)");
  }
}

std::size_t ArchConfig::reduced_length() const { return nx >> conv_channels.size(); }

std::vector<std::string> ArchConfig::layer_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < conv_channels.size(); ++i) {
    names.push_back("enc_conv" + std::to_string(i));
    names.push_back("enc_pool" + std::to_string(i));
  }
  for (std::size_t i = 0; i < dense_widths.size(); ++i) names.push_back("enc_dense" + std::to_string(i));
  names.push_back("enc_latent");
  // attention is parameter-free and lives inside the decoder LSTM layer
  names.insert(names.end(), {"prop_enc_lstm", "prop_dec_lstm", "prop_out"});
  names.push_back("dec_latent");
  for (std::size_t i = dense_widths.size(); i-- > 0;) names.push_back("dec_dense" + std::to_string(i));
  for (std::size_t i = conv_channels.size(); i-- > 0;) {
    names.push_back("dec_upsample" + std::to_string(i));
    names.push_back("dec_conv" + std::to_string(i));
  }
  return names;
}

nlohmann::json ArchConfig::to_json() const {
  return {{"nx", nx},
          {"latent_dim", latent_dim},
          {"conv_channels", conv_channels},
          {"kernel", kernel},
          {"dense_widths", dense_widths},
          {"lstm_hidden", lstm_hidden},
          {"k_in", k_in},
          {"k_out", k_out}};
}

ArchConfig ArchConfig::from_json(const nlohmann::json& j) {
  ArchConfig c;
  try {
    c.nx = j.at("nx").get<std::size_t>();
    c.latent_dim = j.at("latent_dim").get<std::size_t>();
    c.conv_channels = j.at("conv_channels").get<std::vector<std::size_t>>();
    c.kernel = j.at("kernel").get<std::size_t>();
    c.dense_widths = j.at("dense_widths").get<std::vector<std::size_t>>();
    c.lstm_hidden = j.at("lstm_hidden").get<std::size_t>();
    c.k_in = j.at("k_in").get<std::size_t>();
    c.k_out = j.at("k_out").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("architecture config: ") + e.what());
  }
  return c;
}

AbcranModel::AbcranModel(ArchConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
  config_.validate();
  const auto& c = config_;
  const std::size_t r = c.latent_dim, h = c.lstm_hidden;

  std::size_t in_ch = 1;
  for (std::size_t i = 0; i < c.conv_channels.size(); ++i) {
    const std::string n = "enc_conv" + std::to_string(i);
    enc_conv_.push_back({add_param(n + ".weight", {c.conv_channels[i], in_ch, c.kernel}),
                         add_param(n + ".bias", {c.conv_channels[i]})});
    in_ch = c.conv_channels[i];
  }
  std::size_t width = c.flat_width();
  for (std::size_t i = 0; i < c.dense_widths.size(); ++i) {
    const std::string n = "enc_dense" + std::to_string(i);
    enc_dense_.push_back({add_param(n + ".weight", {width, c.dense_widths[i]}), add_param(n + ".bias", {c.dense_widths[i]})});
    width = c.dense_widths[i];
  }
  enc_latent_ = {add_param("enc_latent.weight", {width, r}), add_param("enc_latent.bias", {r})};

  prop_enc_ = {add_param("prop_enc_lstm.input_weight", {r, 4 * h}),
               add_param("prop_enc_lstm.hidden_weight", {h, 4 * h}), add_param("prop_enc_lstm.bias", {4 * h})};
  prop_dec_ = {add_param("prop_dec_lstm.input_weight", {r + h, 4 * h}),
               add_param("prop_dec_lstm.hidden_weight", {h, 4 * h}), add_param("prop_dec_lstm.bias", {4 * h})};
  prop_out_ = {add_param("prop_out.weight", {h, r}), add_param("prop_out.bias", {r})};

  // decoder: mirror image of the encoder
  const std::size_t last_dense = c.dense_widths.empty() ? c.flat_width() : c.dense_widths.back();
  dec_latent_ = {add_param("dec_latent.weight", {r, last_dense}), add_param("dec_latent.bias", {last_dense})};
  width = last_dense;
  for (std::size_t i = c.dense_widths.size(); i-- > 0;) {
    const std::size_t out = i == 0 ? c.flat_width() : c.dense_widths[i - 1];
    const std::string n = "dec_dense" + std::to_string(i);
    dec_dense_.push_back({add_param(n + ".weight", {width, out}), add_param(n + ".bias", {out})});
    width = out;
  }
  for (std::size_t i = c.conv_channels.size(); i-- > 0;) {
    const std::size_t out_ch = i == 0 ? 1 : c.conv_channels[i - 1];
    const std::string n = "dec_conv" + std::to_string(i);
    dec_conv_.push_back({add_param(n + ".weight", {out_ch, c.conv_channels[i], c.kernel}), add_param(n + ".bias", {out_ch})});
  }
  initialize();
}

std::size_t AbcranModel::add_param(std::string name, Shape shape) {
  params_.push_back({std::move(name), Tensor(std::move(shape)), true});
  return params_.size() - 1;
}

void AbcranModel::initialize() {
  std::mt19937_64 rng(seed_);
  for (auto& p : params_) {
    const auto& sh = p.tensor.shape();
    const bool is_bias = p.name.ends_with(".bias");
    if (is_bias) {
      p.tensor.fill(0.0);
      continue;
    }
    double fan_in = 1.0;
    if (p.name.find("conv") != std::string::npos) {
      fan_in = static_cast<double>(sh[1] * sh[2]);
    } else if (p.name.find("lstm") != std::string::npos) {
      fan_in = static_cast<double>(config_.lstm_hidden);
    } else {
      fan_in = static_cast<double>(sh[0]);
    }
    const double limit = std::sqrt(3.0 / fan_in);
    std::uniform_real_distribution<double> u(-limit, limit);
    for (auto& v : p.tensor.data()) v = u(rng);
  }
  // forget-gate bias of 1 so early training does not wipe the cell state
  for (const auto* idx : {&prop_enc_, &prop_dec_}) {
    auto& b = params_[idx->bias].tensor;
    for (std::size_t j = config_.lstm_hidden; j < 2 * config_.lstm_hidden; ++j) b[j] = 1.0;
  }
}

Parameter& AbcranModel::parameter(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw InvalidArgument("no parameter named " + std::string(name));
}

const Parameter& AbcranModel::parameter(std::string_view name) const {
  return const_cast<AbcranModel*>(this)->parameter(name);
}

std::size_t AbcranModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

AbcranModel::Bound AbcranModel::bind(Tape& tape, bool trainable) const {
  Bound b;
  b.vars.reserve(params_.size());
  for (const auto& p : params_) {
    b.vars.push_back(trainable && p.trainable ? tape.variable(p.tensor) : tape.constant(p.tensor));
  }
  return b;
}

ad::LstmWeights AbcranModel::lstm_weights(const Bound& p, const LstmIndex& idx) const {
  return {p.vars[idx.input_weight], p.vars[idx.hidden_weight], p.vars[idx.bias]};
}

Var AbcranModel::encode(const Bound& p, Var field) const {
  const auto& c = config_;
  if (field.shape().size() != 2 || field.shape()[1] != c.nx) {
    throw ShapeError("encode expects [B, " + std::to_string(c.nx) + "], got " + shape_str(field.shape()));
  }
  const std::size_t batch = field.shape()[0];
  const std::size_t pad = c.kernel / 2;
  Var x = ad::reshape(field, {batch, 1, c.nx});
  for (const auto& l : enc_conv_) {
    x = ad::maxpool1d(ad::tanh(ad::conv1d(x, p.vars[l.weight], p.vars[l.bias], 1, pad)));
  }
  x = ad::reshape(x, {batch, c.flat_width()});
  for (const auto& l : enc_dense_) x = ad::tanh(ad::dense(x, p.vars[l.weight], p.vars[l.bias]));
  return ad::dense(x, p.vars[enc_latent_.weight], p.vars[enc_latent_.bias]);
}

Var AbcranModel::decode(const Bound& p, Var latent) const {
  const auto& c = config_;
  if (latent.shape().size() != 2 || latent.shape()[1] != c.latent_dim) {
    throw ShapeError("decode expects [B, " + std::to_string(c.latent_dim) + "], got " + shape_str(latent.shape()));
  }
  const std::size_t batch = latent.shape()[0];
  const std::size_t pad = c.kernel / 2;
  Var x = ad::tanh(ad::dense(latent, p.vars[dec_latent_.weight], p.vars[dec_latent_.bias]));
  for (const auto& l : dec_dense_) x = ad::tanh(ad::dense(x, p.vars[l.weight], p.vars[l.bias]));
  x = ad::reshape(x, {batch, c.conv_channels.back(), c.reduced_length()});
  for (std::size_t i = 0; i < dec_conv_.size(); ++i) {
    const auto& l = dec_conv_[i];
    x = ad::conv1d(ad::upsample1d(x), p.vars[l.weight], p.vars[l.bias], 1, pad);
    if (i + 1 < dec_conv_.size()) x = ad::tanh(x);
  }
  return ad::reshape(x, {batch, c.nx});
}

Var AbcranModel::propagate(const Bound& p, Var latent_seq) const {
  const auto& c = config_;
  const Shape& sh = latent_seq.shape();
  if (sh.size() != 3 || sh[1] != c.k_in || sh[2] != c.latent_dim) {
    throw ShapeError("propagate expects [B, " + std::to_string(c.k_in) + ", " + std::to_string(c.latent_dim) +
                     "], got " + shape_str(sh));
  }
  const std::size_t batch = sh[0], r = c.latent_dim, h = c.lstm_hidden;
  Tape& tape = *latent_seq.tape;
  const auto enc_w = lstm_weights(p, prop_enc_);
  const auto dec_w = lstm_weights(p, prop_dec_);

  ad::LstmState state{tape.constant(Tensor({batch, h})), tape.constant(Tensor({batch, h}))};
  std::vector<Var> hidden;
  Var input;
  for (std::size_t t = 0; t < c.k_in; ++t) {
    input = ad::reshape(ad::slice(latent_seq, 1, t, t + 1), {batch, r});
    state = ad::lstm_cell(input, state, enc_w);
    hidden.push_back(state.h);
  }
  const Var memory = ad::stack_steps(hidden);

  std::vector<Var> outputs;
  for (std::size_t j = 0; j < c.k_out; ++j) {
    const Var context = ad::dot_attention(state.h, memory, memory);
    const Var step_in[] = {input, context};
    state = ad::lstm_cell(ad::concat(step_in, 1), state, dec_w);
    input = ad::dense(state.h, p.vars[prop_out_.weight], p.vars[prop_out_.bias]);
    outputs.push_back(input);
  }
  return ad::stack_steps(outputs);
}

Tensor AbcranModel::encode(const Tensor& field) const {
  Tape tape;
  const auto p = bind(tape, false);
  return encode(p, tape.constant(field)).value();
}

Tensor AbcranModel::decode(const Tensor& latent) const {
  Tape tape;
  const auto p = bind(tape, false);
  return decode(p, tape.constant(latent)).value();
}

Tensor AbcranModel::propagate(const Tensor& latent_seq) const {
  Tape tape;
  const auto p = bind(tape, false);
  return propagate(p, tape.constant(latent_seq)).value();
}

Tensor rollout(const AbcranModel& model, const Tensor& seed_window, std::size_t n_steps) {
  const auto& c = model.config();
  if (n_steps < 1) throw InvalidArgument("rollout needs n_steps >= 1");
  if (seed_window.shape() != Shape{c.k_in, c.nx}) {
    throw ShapeError("rollout seed window must be [" + std::to_string(c.k_in) + ", " + std::to_string(c.nx) +
                     "], got " + shape_str(seed_window.shape()));
  }
  const std::size_t r = c.latent_dim;
  const Tensor seed_latent = model.encode(seed_window);
  std::vector<double> latents(seed_latent.data().begin(), seed_latent.data().end());
  Tensor out({n_steps, c.nx});
  std::size_t produced = 0;
  while (produced < n_steps) {
    Tensor window({1, c.k_in, r},
                  std::vector<double>(latents.end() - static_cast<std::ptrdiff_t>(c.k_in * r), latents.end()));
    const Tensor next = model.propagate(window).reshaped({c.k_out, r});
    const Tensor fields = model.decode(next);
    latents.insert(latents.end(), next.data().begin(), next.data().end());
    const std::size_t take = std::min(c.k_out, n_steps - produced);
    std::copy_n(fields.data().begin(), take * c.nx, out.data().begin() + produced * c.nx);
    produced += take;
  }
  return out;
}

void save_model(const AbcranModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = nlohmann::json::array();
  std::vector<double> flat;
  for (const auto& p : model.parameters()) {
    manifest.push_back({{"name", p.name},
                        {"shape", p.tensor.shape()},
                        {"offset", flat.size() * sizeof(double)},
                        {"trainable", p.trainable}});
    flat.insert(flat.end(), p.tensor.data().begin(), p.tensor.data().end());
  }
  const nlohmann::json arch = {{"version", kModelFormatVersion},
                               {"config", model.config().to_json()},
                               {"seed", model.seed()},
                               {"dtype", "f64le"},
                               {"parameters", manifest}};
  io::write_json(dir / "arch.json", arch);
  io::write_f64le(dir / "weights.bin", flat);
}

AbcranModel load_model(const std::filesystem::path& dir) {
  const auto arch = io::read_json(dir / "arch.json");
  ArchConfig config;
  std::uint64_t seed = 0;
  nlohmann::json manifest;
  try {
    const int version = arch.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw FormatError("unsupported model format version " + std::to_string(version));
    }
    config = ArchConfig::from_json(arch.at("config"));
    seed = arch.at("seed").get<std::uint64_t>();
    manifest = arch.at("parameters");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "arch.json").string() + ": " + e.what());
  }
  try {
    config.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("model config invalid: ") + e.what());
  }
  AbcranModel model(config, seed);
  auto& params = model.parameters();
  if (manifest.size() != params.size()) throw FormatError("parameter manifest does not match architecture");

  const auto flat = io::read_f64le(dir / "weights.bin");
  if (flat.size() != model.parameter_count()) {
    throw FormatError("weights.bin holds " + std::to_string(flat.size()) + " values, manifest implies " +
                      std::to_string(model.parameter_count()));
  }
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = manifest[i];
    try {
      if (entry.at("name").get<std::string>() != params[i].name ||
          entry.at("shape").get<Shape>() != params[i].tensor.shape() ||
          entry.at("offset").get<std::size_t>() != offset * sizeof(double)) {
        throw FormatError("manifest entry " + std::to_string(i) + " (" + params[i].name + ") is inconsistent");
      }
      params[i].trainable = entry.value("trainable", true);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("manifest entry malformed: ") + e.what());
    }
    auto dst = params[i].tensor.data();
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), dst.size(), dst.begin());
    offset += dst.size();
  }
  return model;
}

}  // namespace abcran::model
