#include "abcran/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "abcran/errors.hpp"
#include "abcran/ops.hpp"

namespace abcran::train {
namespace {

using model::AbcranModel;

ad::Var mse(ad::Var pred, ad::Var target) { return ad::mean_all(ad::square(ad::sub(pred, target))); }

struct Window {
  std::size_t mu;
  std::size_t start;
};

std::vector<Window> make_windows(const data::WaveDataset& ds, std::size_t k_in, std::size_t k_out) {
  const std::size_t nt = ds.grid.nt;
  if (nt < k_in + k_out) {
    throw InvalidArgument("nt=" + std::to_string(nt) + " is shorter than k_in + k_out = " +
                          std::to_string(k_in + k_out));
  }
  std::vector<Window> out;
  for (std::size_t m = 0; m < ds.n_mu(); ++m) {
    for (std::size_t s = 0; s + k_in + k_out <= nt; ++s) out.push_back({m, s});
  }
  return out;
}

// Copies [count, nx] fields for every window, starting `offset` steps after its start.
Tensor gather(const data::WaveDataset& ds, std::span<const Window> windows, std::size_t offset, std::size_t count) {
  const std::size_t nx = ds.grid.nx;
  std::vector<double> buf;
  buf.reserve(windows.size() * count * nx);
  for (const Window& w : windows) {
    for (std::size_t j = 0; j < count; ++j) {
      auto row = ds.profile_at(w.mu, w.start + offset + j);
      buf.insert(buf.end(), row.begin(), row.end());
    }
  }
  return Tensor({windows.size(), count, nx}, std::move(buf));
}

void require_finite(double v, const char* what, std::size_t epoch) {
  if (!std::isfinite(v)) {
    throw NumericalError(std::string(what) + " became non-finite in epoch " + std::to_string(epoch));
  }
}

struct BatchResult {
  double total = 0.0;
  double decoder = 0.0;
  double propagator = 0.0;
  decomp::ErrorDecomposition decomposition;
};

BatchResult run_batch(const AbcranModel& model, ad::Tape& tape, const model::AbcranModel::Bound& params,
                      const Tensor& win_in, const Tensor& win_target, Rng& rng, double noise_std,
                      const TrainConfig& cfg, bool with_backward) {
  const std::size_t b = win_in.dim(0), k_in = win_in.dim(1), nx = win_in.dim(2);
  const Tensor clean = win_in.reshaped({b * k_in, nx});
  ad::Var dec = denoising_decoder_loss(model, params, clean, rng, noise_std);
  PropagatorLoss prop = propagator_loss(model, params, win_in, win_target, cfg.loss_mode, cfg.weights);
  const double alpha = cfg.weights.alpha;
  ad::Var total = ad::add(ad::scale(dec, 1.0 - alpha), ad::scale(prop.loss, alpha));
  if (with_backward) tape.backward(total);
  BatchResult r;
  r.total = total.value()[0];
  r.decoder = dec.value()[0];
  r.propagator = prop.loss.value()[0];
  r.decomposition = prop.decomposition;
  return r;
}

WindowLoss evaluate_windows(const AbcranModel& model, const data::WaveDataset& ds, std::span<const Window> windows,
                            const TrainConfig& cfg) {
  const auto& arch = model.config();
  if (windows.empty()) return {};
  double loss = 0.0, tau = 0.0;
  std::size_t count = 0;
  Rng unused(0);
  ad::Tape tape;
  for (std::size_t pos = 0; pos < windows.size(); pos += cfg.batch_size) {
    const std::size_t end = std::min(windows.size(), pos + cfg.batch_size);
    auto chunk = windows.subspan(pos, end - pos);
    tape.reset();
    auto params = model.bind(tape, false);
    const Tensor in = gather(ds, chunk, 0, arch.k_in);
    const Tensor target = gather(ds, chunk, arch.k_in, arch.k_out);
    BatchResult r = run_batch(model, tape, params, in, target, unused, 0.0, cfg, false);
    loss += r.total * static_cast<double>(chunk.size());
    tau += r.decomposition.tau * static_cast<double>(chunk.size());
    count += chunk.size();
  }
  return {loss / static_cast<double>(count), tau / static_cast<double>(count)};
}

}  // namespace

std::string to_string(LossMode mode) { return mode == LossMode::mse ? "mse" : "decomposed"; }

LossMode parse_loss_mode(const std::string& s) {
  if (s == "mse") return LossMode::mse;
  if (s == "decomposed") return LossMode::decomposed;
  throw InvalidArgument("unknown loss mode '" + s + "' (expected mse or decomposed)");
}

void TrainConfig::validate() const {
  weights.validate();
  if (noise_std && !(*noise_std >= 0.0 && std::isfinite(*noise_std))) throw InvalidArgument("noise_std must be >= 0");
  if (!(noise_rel >= 0.0 && std::isfinite(noise_rel))) throw InvalidArgument("noise_rel must be >= 0");
  if (!(lr >= 0.0 && std::isfinite(lr))) throw InvalidArgument("lr must be >= 0");
  if (!(lr_min >= 0.0 && lr_min <= lr)) throw InvalidArgument("lr_min must lie in [0, lr]");
  if (!(weight_decay >= 0.0 && std::isfinite(weight_decay))) throw InvalidArgument("weight_decay must be >= 0");
  if (restart_period == 0) throw InvalidArgument("restart_period must be positive");
  if (restart_mult == 0) throw InvalidArgument("restart_mult must be positive");
  if (patience == 0) throw InvalidArgument("patience must be positive");
  if (max_epochs == 0) throw InvalidArgument("max_epochs must be positive");
  if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
  if (n_validation == 0) throw InvalidArgument("n_validation must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j = {{"alpha", weights.alpha},
                      {"beta", weights.beta},
                      {"noise_rel", noise_rel},
                      {"lr", lr},
                      {"lr_min", lr_min},
                      {"weight_decay", weight_decay},
                      {"restart_period", restart_period},
                      {"restart_mult", restart_mult},
                      {"patience", patience},
                      {"max_epochs", max_epochs},
                      {"batch_size", batch_size},
                      {"n_validation", n_validation},
                      {"seed", seed},
                      {"loss", to_string(loss_mode)}};
  j["noise_std"] = noise_std ? nlohmann::json(*noise_std) : nlohmann::json(nullptr);
  return j;
}

std::string TrainReport::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,lr,train_loss,val_loss,tau_diss,tau_disp\n";
  for (const auto& e : epochs) {
    os << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.val_loss << ',' << e.tau_diss << ','
       << e.tau_disp << '\n';
  }
  return os.str();
}

nlohmann::json TrainReport::summary(const TrainConfig& config) const {
  nlohmann::json j;
  j["config"] = config.to_json();
  j["noise_std"] = noise_std;
  j["train_mu"] = train_mu;
  j["val_mu"] = val_mu;
  j["best_epoch"] = best_epoch;
  j["stopped_epoch"] = stopped_epoch;
  j["best_val_loss"] = best_val_loss;
  if (!epochs.empty()) {
    j["first_train_loss"] = epochs.front().train_loss;
    j["final_train_loss"] = epochs.back().train_loss;
    j["best_val_tau"] = best().val_tau;
  }
  return j;
}

Tensor add_noise(const Tensor& batch, double noise_std, Rng& rng) {
  if (!(noise_std >= 0.0 && std::isfinite(noise_std))) throw InvalidArgument("noise_std must be >= 0");
  Tensor out = batch;
  if (noise_std == 0.0) return out;
  std::normal_distribution<double> dist(0.0, noise_std);
  for (double& v : out.storage()) v += dist(rng);
  return out;
}

ad::Var decomposed_loss(ad::Var pred, const Tensor& truth, double w_diss, double w_disp) {
  const Tensor& p = pred.value();
  const auto d = decomp::decompose_batched(truth, p);
  Tensor value = Tensor::scalar(w_diss * d.tau_diss + w_disp * d.tau_disp);
  const std::size_t id = pred.id;
  return pred.tape->record("decomposed_loss", std::move(value), {pred},
                           [id, truth, w_diss, w_disp](ad::Tape& t, const Tensor&, const Tensor& g) {
                             Tensor grad = decomp::decompose_batched_gradient(truth, t.value_at(id), w_diss, w_disp);
                             const double s = g[0];
                             for (double& v : grad.storage()) v *= s;
                             t.accumulate(id, grad);
                           });
}

ad::Var denoising_decoder_loss(const AbcranModel& model, const AbcranModel::Bound& params, const Tensor& clean,
                               Rng& rng, double noise_std) {
  if (clean.rank() != 2 || clean.dim(1) != model.config().nx) {
    throw ShapeError("decoder batch must be [N, " + std::to_string(model.config().nx) + "], got " +
                     shape_str(clean.shape()));
  }
  ad::Tape& tape = *params.vars.front().tape;
  ad::Var noisy = tape.constant(add_noise(clean, noise_std, rng));
  ad::Var target = tape.constant(clean);
  ad::Var recon = model.decode(params, model.encode(params, noisy));
  return mse(recon, target);
}

double denoising_decoder_loss(const AbcranModel& model, const Tensor& clean, Rng& rng, double noise_std) {
  ad::Tape tape;
  auto params = model.bind(tape, false);
  return denoising_decoder_loss(model, params, clean, rng, noise_std).value()[0];
}

PropagatorLoss propagator_loss(const AbcranModel& model, const AbcranModel::Bound& params, const Tensor& window_in,
                               const Tensor& window_target, LossMode mode, const decomp::LossWeights& weights) {
  const auto& arch = model.config();
  if (window_in.rank() != 3 || window_in.dim(1) != arch.k_in || window_in.dim(2) != arch.nx) {
    throw ShapeError("input window must be [B, " + std::to_string(arch.k_in) + ", " + std::to_string(arch.nx) +
                     "], got " + shape_str(window_in.shape()));
  }
  const std::size_t b = window_in.dim(0);
  const Shape target_shape{b, arch.k_out, arch.nx};
  if (window_target.shape() != target_shape) {
    throw ShapeError("target window must be " + shape_str(target_shape) + ", got " +
                     shape_str(window_target.shape()));
  }
  weights.validate();
  ad::Tape& tape = *params.vars.front().tape;
  ad::Var in = tape.constant(window_in.reshaped({b * arch.k_in, arch.nx}));
  ad::Var z = ad::reshape(model.encode(params, in), {b, arch.k_in, arch.latent_dim});
  ad::Var z_out = ad::reshape(model.propagate(params, z), {b * arch.k_out, arch.latent_dim});
  ad::Var pred = model.decode(params, z_out);
  const Tensor truth = window_target.reshaped({b * arch.k_out, arch.nx});

  PropagatorLoss out;
  out.decomposition = decomp::decompose_batched(truth, pred.value());
  out.prediction = pred.value().reshaped(target_shape);
  if (mode == LossMode::mse) {
    out.loss = mse(pred, tape.constant(truth));
  } else {
    out.loss = decomposed_loss(pred, truth, weights.beta, 1.0 - weights.beta);
  }
  return out;
}

void adamw_step(std::vector<model::Parameter>& params, const std::vector<Tensor>& grads, AdamState& state, double lr,
                double weight_decay) {
  if (grads.size() != params.size()) throw InvalidArgument("gradient count does not match parameter count");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.shape(), 0.0);
      state.v.emplace_back(p.tensor.shape(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw InvalidArgument("optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].tensor.shape()) {
      throw ShapeError("gradient shape mismatch for " + params[i].name);
    }
    if (!grads[i].all_finite()) throw NumericalError("non-finite gradient for " + params[i].name);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    auto& p = params[i].tensor.storage();
    auto& m = state.m[i].storage();
    auto& v = state.v[i].storage();
    const auto& g = grads[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      p[k] -= lr * (m_hat / (std::sqrt(v_hat) + state.eps) + weight_decay * p[k]);
    }
  }
}

double cosine_warm_restart_lr(std::size_t epoch, double lr_max, double lr_min, std::size_t t0, std::size_t mult) {
  if (t0 == 0 || mult == 0) throw InvalidArgument("restart period and multiplier must be positive");
  std::size_t t_cur = epoch;
  std::size_t t_i = t0;
  while (t_cur >= t_i) {
    t_cur -= t_i;
    t_i *= mult;
  }
  const double frac = static_cast<double>(t_cur) / static_cast<double>(t_i);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

std::vector<std::size_t> validation_indices(std::size_t n_mu, std::size_t n_val) {
  if (n_val == 0 || n_val >= n_mu) {
    throw InvalidArgument("need 0 < n_validation < n_mu (got " + std::to_string(n_val) + " of " +
                          std::to_string(n_mu) + ")");
  }
  std::vector<std::size_t> out;
  for (std::size_t k = 1; k <= n_val; ++k) out.push_back(k * n_mu / (n_val + 1));
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (out.size() != n_val) throw InvalidArgument("cannot spread validation indices");
  return out;
}

WindowLoss validation_loss(const AbcranModel& model, const data::WaveDataset& dataset, const TrainConfig& config) {
  config.validate();
  if (dataset.grid.nx != model.config().nx) throw ShapeError("dataset and model disagree on nx");
  const auto windows = make_windows(dataset, model.config().k_in, model.config().k_out);
  return evaluate_windows(model, dataset, windows, config);
}

TrainReport fit(AbcranModel& model, const data::WaveDataset& dataset, const TrainConfig& cfg) {
  cfg.validate();
  const auto& arch = model.config();
  if (dataset.grid.nx != arch.nx) {
    throw ShapeError("dataset nx=" + std::to_string(dataset.grid.nx) + " but model nx=" + std::to_string(arch.nx));
  }
  if (dataset.n_mu() < 3) throw InvalidArgument("training needs at least 3 mu instances");
  const auto val_idx = validation_indices(dataset.n_mu(), cfg.n_validation);
  std::vector<std::size_t> train_idx;
  for (std::size_t m = 0; m < dataset.n_mu(); ++m) {
    if (std::find(val_idx.begin(), val_idx.end(), m) == val_idx.end()) train_idx.push_back(m);
  }
  const data::WaveDataset train_ds = data::select_mu(dataset, train_idx);
  const data::WaveDataset val_ds = data::select_mu(dataset, val_idx);
  std::vector<Window> windows = make_windows(train_ds, arch.k_in, arch.k_out);
  const std::vector<Window> val_windows = make_windows(val_ds, arch.k_in, arch.k_out);

  TrainReport report;
  report.train_mu = train_ds.mu_values;
  report.val_mu = val_ds.mu_values;
  report.noise_std = cfg.noise_std ? *cfg.noise_std : cfg.noise_rel * train_ds.max_abs();

  Rng rng(cfg.seed);
  AdamState adam;
  ad::Tape tape;
  std::vector<Tensor> best_params;
  double best_val = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = cosine_warm_restart_lr(epoch - 1, cfg.lr, cfg.lr_min, cfg.restart_period, cfg.restart_mult);
    std::shuffle(windows.begin(), windows.end(), rng);

    std::size_t n_batches = 0;
    for (std::size_t pos = 0; pos < windows.size(); pos += cfg.batch_size) {
      const std::size_t end = std::min(windows.size(), pos + cfg.batch_size);
      std::span<const Window> chunk(windows.data() + pos, end - pos);
      const Tensor in = gather(train_ds, chunk, 0, arch.k_in);
      const Tensor target = gather(train_ds, chunk, arch.k_in, arch.k_out);

      tape.reset();
      auto params = model.bind(tape, true);
      BatchResult r = run_batch(model, tape, params, in, target, rng, report.noise_std, cfg, true);
      require_finite(r.total, "training loss", epoch);
      std::vector<Tensor> grads;
      grads.reserve(params.vars.size());
      for (const auto& v : params.vars) grads.push_back(tape.grad(v));
      adamw_step(model.parameters(), grads, adam, rec.lr, cfg.weight_decay);

      rec.train_loss += r.total;
      rec.decoder_loss += r.decoder;
      rec.propagator_loss += r.propagator;
      rec.tau_diss += r.decomposition.tau_diss;
      rec.tau_disp += r.decomposition.tau_disp;
      ++n_batches;
    }
    const double inv = 1.0 / static_cast<double>(n_batches);
    rec.decoder_loss *= inv;
    rec.propagator_loss *= inv;
    rec.tau_diss *= inv;
    rec.tau_disp *= inv;
    rec.train_loss = (1.0 - cfg.weights.alpha) * rec.decoder_loss + cfg.weights.alpha * rec.propagator_loss;

    const WindowLoss val = evaluate_windows(model, val_ds, val_windows, cfg);
    rec.val_loss = val.loss;
    rec.val_tau = val.tau;
    require_finite(rec.val_loss, "validation loss", epoch);
    report.epochs.push_back(rec);

    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      report.best_epoch = epoch;
      best_params.clear();
      for (const auto& p : model.parameters()) best_params.push_back(p.tensor);
    }
    report.stopped_epoch = epoch;
    if (epoch - report.best_epoch >= cfg.patience) break;
  }
  for (std::size_t i = 0; i < best_params.size(); ++i) model.parameters()[i].tensor = best_params[i];
  report.best_val_loss = best_val;
  return report;
}

}  // namespace abcran::train
