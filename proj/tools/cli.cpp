#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "abcran/binary_io.hpp"
#include "abcran/error_decomposition.hpp"
#include "abcran/errors.hpp"
#include "abcran/evaluator.hpp"
#include "abcran/model.hpp"
#include "abcran/pde_data.hpp"
#include "abcran/sweep.hpp"
#include "abcran/trainer.hpp"
#include "json_config.hpp"

namespace abcran::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

template <class T>
std::string show(const T& v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

template <class T>
std::string show(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + show(v[i]);
  return s;
}

/// One subcommand: registers flags and remembers how to echo their final values.
class Command {
 public:
  Command(CLI::App& parent, const std::string& name, const std::string& description)
      : app_(parent.add_subcommand(name, description)) {
    app_->fallthrough();
    app_->footer("--config FILE reads flag values from JSON (a run manifest works too); flags take precedence.");
  }

  CLI::App* app() const { return app_; }

  template <class T>
  CLI::Option* flag(const std::string& name, T& ref, const std::string& description) {
    CLI::Option* o = app_->add_option("--" + name, ref, description);
    if constexpr (requires { ref.empty(); }) {
      if (!ref.empty()) o->default_str(show(ref));
    } else {
      o->default_str(show(ref));
    }
    if constexpr (requires { ref.begin(); } && !std::is_same_v<T, std::string>) o->delimiter(',');
    echo_.emplace_back(name, [&ref] { return json(ref); });
    return o;
  }

  /// Flag without a default; echoed as null unless given.
  template <class T>
  CLI::Option* optional(const std::string& name, T& ref, const std::string& description) {
    CLI::Option* o = app_->add_option("--" + name, ref, description);
    if constexpr (requires { ref.begin(); } && !std::is_same_v<T, std::string>) o->delimiter(',');
    echo_.emplace_back(name, [o, &ref] { return o->count() ? json(ref) : json(nullptr); });
    return o;
  }

  json echo() const {
    json j = json::object();
    for (const auto& [name, get] : echo_) j[name] = get();
    return j;
  }

 private:
  CLI::App* app_;
  std::vector<std::pair<std::string, std::function<json()>>> echo_;
};

struct RunContext {
  std::vector<std::string> argv;
  std::ostream& out;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();
};

void write_manifest(const fs::path& dir, const RunContext& ctx, const std::string& command, const json& config,
                    std::uint64_t seed, const std::vector<std::string>& artifacts, json extra = json::object()) {
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - ctx.started).count();
  json m = {{"tool", "abcran"},   {"version", ABCRAN_VERSION}, {"command", command}, {"argv", ctx.argv},
            {"seed", seed},       {"config", config},          {"artifacts", artifacts},
            {"duration_s", seconds}};
  for (auto& [k, v] : extra.items()) m[k] = v;
  io::write_json(dir / "manifest.json", m);
}

/// A dataset directory, or a parent holding `preferred`/ (as written by gen).
fs::path resolve_dataset(const fs::path& path, const std::string& preferred) {
  if (fs::exists(path / "meta.json")) return path;
  if (fs::exists(path / preferred / "meta.json")) return path / preferred;
  throw IoError("no dataset at " + path.string() + " (expected meta.json or " + preferred + "/meta.json)");
}

std::vector<std::size_t> select_indices(const data::WaveDataset& ds, const std::vector<double>& mu,
                                        const std::vector<std::size_t>& idx) {
  std::vector<std::size_t> out;
  if (!mu.empty() && !idx.empty()) throw InvalidArgument("give either --mu or --mu-index, not both");
  for (double v : mu) {
    std::size_t found = ds.n_mu();
    for (std::size_t m = 0; m < ds.n_mu(); ++m) {
      if (std::abs(ds.mu_values[m] - v) <= 1e-12 * std::max(1.0, std::abs(v))) found = m;
    }
    if (found == ds.n_mu()) throw InvalidArgument("mu=" + show(v) + " is not in the dataset " + json(ds.mu_values).dump());
    out.push_back(found);
  }
  for (std::size_t m : idx) {
    if (m >= ds.n_mu()) throw InvalidArgument("mu index " + show(m) + " out of range");
    out.push_back(m);
  }
  if (out.empty()) {
    for (std::size_t m = 0; m < ds.n_mu(); ++m) out.push_back(m);
  }
  return out;
}

// ---------------------------------------------------------------- gen

struct GenOptions {
  std::size_t nx = 256, nt = 200, n_train = 20;
  double x0 = 0.0, x1 = 1.0, t_final = 1.0, sigma_g = 5e-3, x_center = 0.0;
  double mu_min = 0.775, mu_max = 1.25;
  std::uint64_t seed = 0;
  std::string out;
};

void add_gen(Command& c, GenOptions& o) {
  c.flag("nx", o.nx, "spatial grid points");
  c.flag("nt", o.nt, "snapshots per mu");
  c.flag("x0", o.x0, "left domain end");
  c.flag("x1", o.x1, "right domain end");
  c.flag("t-final", o.t_final, "final time");
  c.flag("sigma-g", o.sigma_g, "Gaussian width parameter (variance)");
  c.flag("x-center", o.x_center, "initial pulse centre");
  c.flag("mu-min", o.mu_min, "smallest training speed");
  c.flag("mu-max", o.mu_max, "largest training speed");
  c.flag("n-train", o.n_train, "number of training speeds");
  c.flag("seed", o.seed, "recorded for reproducibility (generation is deterministic)");
  c.flag("out", o.out, "output directory")->required();
}

void run_gen(const GenOptions& o, const json& echo, RunContext& ctx) {
  data::GridSpec grid{o.nx, o.x0, o.x1, o.nt, o.t_final};
  data::InitialProfile profile{o.sigma_g, o.x_center};
  const auto mu = data::make_parameter_grid(o.mu_min, o.mu_max, o.n_train);
  const fs::path out(o.out);
  data::write_dataset(data::generate_dataset(grid, profile, mu.mu_train), out / "train");
  data::write_dataset(data::generate_dataset(grid, profile, mu.mu_test), out / "test");
  io::write_json(out / "mu_grid.json", {{"mu_train", mu.mu_train}, {"mu_test", mu.mu_test}});
  write_manifest(out, ctx, "gen", echo, o.seed, {"train/meta.json", "train/snapshots.bin", "test/meta.json",
                                                 "test/snapshots.bin", "mu_grid.json"});
  ctx.out << "wrote " << mu.mu_train.size() << " training and " << mu.mu_test.size() << " test speeds to " << out.string()
          << "\n";
}

// ---------------------------------------------------------------- train / sweep

struct TrainOptions {
  std::string data, out;
  std::string loss = "decomposed";
  std::string arch = "default";
  train::TrainConfig cfg;
  double noise_std = 0.0;
  std::size_t latent_dim = 0, k_in = 0, k_out = 0, hidden = 0, kernel = 0;
  std::vector<std::size_t> channels, dense;
  std::uint64_t seed = 0;
  CLI::Option* noise_opt = nullptr;
  CLI::Option *latent_opt = nullptr, *k_in_opt = nullptr, *k_out_opt = nullptr, *hidden_opt = nullptr,
              *kernel_opt = nullptr, *channels_opt = nullptr, *dense_opt = nullptr;
};

void add_train_flags(Command& c, TrainOptions& o) {
  c.flag("data", o.data, "dataset directory, or a gen output directory (uses train/)")->required();
  c.flag("out", o.out, "output directory")->required();
  c.flag("loss", o.loss, "propagator loss: decomposed or mse")->check(CLI::IsMember({"decomposed", "mse"}));
  c.flag("alpha", o.cfg.weights.alpha, "weight of the propagator loss in the composite objective");
  c.flag("beta", o.cfg.weights.beta, "weight of tau_diss inside the propagator loss (1-beta on tau_disp)");
  c.flag("lr", o.cfg.lr, "maximum learning rate of the cosine schedule");
  c.flag("lr-min", o.cfg.lr_min, "minimum learning rate of the cosine schedule");
  c.flag("weight-decay", o.cfg.weight_decay, "AdamW decoupled weight decay");
  c.flag("t0", o.cfg.restart_period, "first cosine cycle length in epochs");
  c.flag("t-mult", o.cfg.restart_mult, "cycle length multiplier");
  c.flag("patience", o.cfg.patience, "early-stopping patience in epochs");
  c.flag("max-epochs", o.cfg.max_epochs, "epoch limit");
  c.flag("batch-size", o.cfg.batch_size, "windows per batch");
  o.noise_opt = c.optional("noise-std", o.noise_std, "input noise std (default: noise-rel * max|U|)");
  c.flag("noise-rel", o.cfg.noise_rel, "input noise std relative to the data amplitude");
  c.flag("n-val", o.cfg.n_validation, "mu instances held out for early stopping");
  c.flag("seed", o.seed, "seed for initialisation, shuffling and noise");
  c.flag("arch", o.arch, "architecture preset: default or desk (reduced widths)")
      ->check(CLI::IsMember({"default", "desk"}));
  o.latent_opt = c.optional("latent-dim", o.latent_dim, "latent size (preset: 2)");
  o.k_in_opt = c.optional("k-in", o.k_in, "input window length (preset: 10)");
  o.k_out_opt = c.optional("k-out", o.k_out, "output window length (preset: 10)");
  o.channels_opt = c.optional("channels", o.channels, "conv channels per stage, comma separated (preset: 8,16)");
  o.dense_opt = c.optional("dense", o.dense, "dense widths, comma separated (preset: 128)");
  o.hidden_opt = c.optional("hidden", o.hidden, "LSTM hidden size (preset: 64)");
  o.kernel_opt = c.optional("kernel", o.kernel, "odd conv kernel size (preset: 5)");
}

model::ArchConfig resolve_arch(const TrainOptions& o, std::size_t nx) {
  model::ArchConfig a = o.arch == "desk" ? model::ArchConfig::desk(nx) : model::ArchConfig{};
  a.nx = nx;
  if (o.latent_opt->count()) a.latent_dim = o.latent_dim;
  if (o.k_in_opt->count()) a.k_in = o.k_in;
  if (o.k_out_opt->count()) a.k_out = o.k_out;
  if (o.channels_opt->count()) a.conv_channels = o.channels;
  if (o.dense_opt->count()) a.dense_widths = o.dense;
  if (o.hidden_opt->count()) a.lstm_hidden = o.hidden;
  if (o.kernel_opt->count()) a.kernel = o.kernel;
  a.validate();
  return a;
}

train::TrainConfig resolve_train(const TrainOptions& o) {
  train::TrainConfig cfg = o.cfg;
  cfg.loss_mode = train::parse_loss_mode(o.loss);
  if (o.noise_opt->count()) cfg.noise_std = o.noise_std;
  // Independent stream from the one that initialises the model.
  cfg.seed = o.seed ^ 0x9e3779b97f4a7c15ULL;
  cfg.validate();
  return cfg;
}

void run_train(const TrainOptions& o, const json& echo, RunContext& ctx) {
  const auto ds = data::read_dataset(resolve_dataset(o.data, "train"));
  const auto arch = resolve_arch(o, ds.grid.nx);
  const auto cfg = resolve_train(o);
  model::AbcranModel m(arch, o.seed);
  const auto report = train::fit(m, ds, cfg);
  const fs::path out(o.out);
  model::save_model(m, out);
  io::write_text(out / "report.csv", report.to_csv());
  json summary = report.summary(cfg);
  summary["arch"] = arch.to_json();
  summary["parameter_count"] = m.parameter_count();
  io::write_json(out / "summary.json", summary);
  write_manifest(out, ctx, "train", echo, o.seed, {"arch.json", "weights.bin", "report.csv", "summary.json"},
                 {{"arch", arch.to_json()}, {"train", cfg.to_json()}});
  const auto& best = report.best();
  ctx.out << "trained " << report.stopped_epoch << " epochs; best epoch " << report.best_epoch
          << " val_loss=" << best.val_loss << " val_mse=" << best.val_tau << "\n";
}

struct SweepOptions {
  TrainOptions t;
  std::vector<double> alphas{0.3, 0.7};
  std::vector<double> betas{0.3, 0.7};
  sweep::Budget budget{25, 2, 1};
};

void add_sweep(Command& c, SweepOptions& o) {
  add_train_flags(c, o.t);
  c.flag("alphas", o.alphas, "alpha values, comma separated");
  c.flag("betas", o.betas, "beta values, comma separated");
  c.flag("initial-epochs", o.budget.initial_epochs, "epochs in the first rung");
  c.flag("growth", o.budget.growth, "epoch multiplier between rungs");
  c.flag("jobs", o.budget.jobs, "candidate fits run concurrently");
}

void run_sweep(const SweepOptions& o, const json& echo, RunContext& ctx) {
  const auto ds = data::read_dataset(resolve_dataset(o.t.data, "train"));
  const auto arch = resolve_arch(o.t, ds.grid.nx);
  const auto cfg = resolve_train(o.t);
  const auto grid = sweep::make_grid(o.alphas, o.betas);
  const auto result = sweep::successive_halving(grid, o.budget, sweep::fit_objective(arch, o.t.seed, ds, cfg));
  const fs::path out(o.t.out);
  fs::create_directories(out);
  io::write_text(out / "sweep.csv", result.to_csv());
  io::write_json(out / "best.json", {{"alpha", result.best_weights.alpha},
                                     {"beta", result.best_weights.beta},
                                     {"val_mse", result.best_score},
                                     {"runs", result.runs}});
  write_manifest(out, ctx, "sweep", echo, o.t.seed, {"sweep.csv", "best.json"},
                 {{"arch", arch.to_json()}, {"train", cfg.to_json()}});
  ctx.out << "best alpha=" << result.best_weights.alpha << " beta=" << result.best_weights.beta
          << " val_mse=" << result.best_score << " after " << result.runs << " fits\n";
}

// ---------------------------------------------------------------- eval / compare

struct EvalOptions {
  std::string model, model_b, data, out;
  std::vector<double> mu;
  std::vector<std::size_t> mu_index;
  std::size_t start = 0, horizon = 10;
  std::uint64_t seed = 0;
};

void add_eval_common(Command& c, EvalOptions& o) {
  c.flag("data", o.data, "dataset directory, or a gen output directory (uses test/)")->required();
  c.flag("out", o.out, "output directory")->required();
  c.optional("mu", o.mu, "mu values to evaluate, comma separated (default: all)");
  c.optional("mu-index", o.mu_index, "mu indices to evaluate, comma separated");
  c.flag("start", o.start, "first seed snapshot index");
  c.flag("horizon", o.horizon, "forecast steps");
  c.flag("seed", o.seed, "recorded for reproducibility (evaluation is deterministic)");
}

void run_eval(const EvalOptions& o, const json& echo, RunContext& ctx) {
  const auto m = model::load_model(o.model);
  const auto ds = data::read_dataset(resolve_dataset(o.data, "test"));
  std::vector<eval::RolloutReport> reports;
  for (std::size_t idx : select_indices(ds, o.mu, o.mu_index)) {
    reports.push_back(eval::evaluate_rollout(m, ds, idx, o.start, o.horizon));
  }
  const fs::path out(o.out);
  fs::create_directories(out);
  io::write_text(out / "rollout.csv", eval::rollout_csv(reports));
  io::write_json(out / "summary.json", eval::rollout_summary(reports));
  eval::write_error_fields(reports, out / "error_fields");
  write_manifest(out, ctx, "eval", echo, o.seed,
                 {"rollout.csv", "summary.json", "error_fields/meta.json", "error_fields/snapshots.bin"});
  ctx.out << "evaluated " << reports.size() << " mu over " << o.horizon << " steps\n";
}

void run_compare(const EvalOptions& o, const json& echo, RunContext& ctx) {
  const auto a = model::load_model(o.model);
  const auto b = model::load_model(o.model_b);
  const auto ds = data::read_dataset(resolve_dataset(o.data, "test"));
  const auto cmp = eval::compare_models(a, b, ds, select_indices(ds, o.mu, o.mu_index), o.start, o.horizon);
  const fs::path out(o.out);
  fs::create_directories(out);
  io::write_text(out / "comparison.csv", cmp.to_csv());
  io::write_json(out / "summary.json", cmp.summary());
  write_manifest(out, ctx, "compare", echo, o.seed, {"comparison.csv", "summary.json"});
  ctx.out << cmp.summary()["delta"].dump() << "\n";
}

// ---------------------------------------------------------------- decompose / info

struct DecomposeOptions {
  std::string truth, pred, out;
  std::size_t nx = 0;
  std::uint64_t seed = 0;
  CLI::Option* nx_opt = nullptr;
};

void run_decompose(const DecomposeOptions& o, const json& echo, RunContext& ctx) {
  const auto truth = io::read_f64le(o.truth);
  const auto pred = io::read_f64le(o.pred);
  if (truth.size() != pred.size()) {
    throw ShapeError("truth has " + show(truth.size()) + " values, pred has " + show(pred.size()));
  }
  if (truth.empty()) throw InvalidArgument("empty input files");
  std::size_t nx = truth.size();
  if (o.nx_opt->count()) {
    if (o.nx == 0 || truth.size() % o.nx != 0) {
      throw ShapeError(show(truth.size()) + " values do not split into slices of --nx " + show(o.nx));
    }
    nx = o.nx;
  }
  const Shape shape{truth.size() / nx, nx};
  const auto d = decomp::decompose_batched(Tensor(shape, truth), Tensor(shape, pred));
  json j = d.to_json();
  j["slices"] = shape[0];
  j["length"] = nx;
  ctx.out << j.dump(2) << "\n";
  if (!o.out.empty()) {
    const fs::path out(o.out);
    fs::create_directories(out);
    io::write_json(out / "decomposition.json", j);
    write_manifest(out, ctx, "decompose", echo, o.seed, {"decomposition.json"});
  }
}

struct InfoOptions {
  std::string data, model, out;
  std::uint64_t seed = 0;
};

void run_info(const InfoOptions& o, const json& echo, RunContext& ctx) {
  json j;
  if (!o.data.empty()) {
    const fs::path dir(o.data);
    for (const char* sub : {"", "train", "test"}) {
      const fs::path p = *sub ? dir / sub : dir;
      if (!fs::exists(p / "meta.json")) continue;
      const auto ds = data::read_dataset(p);
      j[*sub ? sub : "dataset"] = {{"shape", ds.snapshots.shape()},
                                   {"mu", ds.mu_values},
                                   {"max_abs", ds.max_abs()},
                                   {"dx", ds.grid.dx()},
                                   {"dt", ds.grid.dt()}};
    }
    if (j.is_null()) throw IoError("no dataset under " + dir.string());
  }
  if (!o.model.empty()) {
    const auto m = model::load_model(o.model);
    j["model"] = {{"arch", m.config().to_json()},
                  {"seed", m.seed()},
                  {"parameter_count", m.parameter_count()},
                  {"layers", m.config().layer_names()}};
  }
  ctx.out << j.dump(2) << "\n";
  if (!o.out.empty()) {
    const fs::path out(o.out);
    fs::create_directories(out);
    io::write_json(out / "info.json", j);
    write_manifest(out, ctx, "info", echo, o.seed, {"info.json"});
  }
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reduced-order surrogate for parametric advection: data generation, training with an "
               "error-decomposition loss, and rollout evaluation.",
               "abcran"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ABCRAN_VERSION);
  app.config_formatter(std::make_shared<JsonConfig>(&app));
  app.set_config("--config", "", "JSON file of flag values for the subcommand; command-line flags take precedence");

  GenOptions gen;
  Command gen_cmd(app, "gen", "generate exact advection snapshot datasets (train/ and test/)");
  add_gen(gen_cmd, gen);

  TrainOptions tr;
  Command train_cmd(app, "train", "train a model and write weights, report.csv and summary.json");
  add_train_flags(train_cmd, tr);

  SweepOptions sw;
  Command sweep_cmd(app, "sweep", "successive-halving search over (alpha, beta)");
  add_sweep(sweep_cmd, sw);

  EvalOptions ev;
  Command eval_cmd(app, "eval", "roll a trained model out and record error traces");
  eval_cmd.flag("model", ev.model, "model directory (arch.json + weights.bin)")->required();
  add_eval_common(eval_cmd, ev);

  EvalOptions cmp;
  Command cmp_cmd(app, "compare", "compare two models on the same rollouts (deltas are b - a)");
  cmp_cmd.flag("model-a", cmp.model, "first model directory")->required();
  cmp_cmd.flag("model-b", cmp.model_b, "second model directory")->required();
  add_eval_common(cmp_cmd, cmp);

  DecomposeOptions dec;
  Command dec_cmd(app, "decompose", "decompose the MSE between two raw f64le files");
  dec_cmd.flag("truth", dec.truth, "reference values (f64le)")->required();
  dec_cmd.flag("pred", dec.pred, "predicted values (f64le)")->required();
  dec.nx_opt = dec_cmd.optional("nx", dec.nx, "slice length; statistics are averaged over slices");
  dec_cmd.optional("out", dec.out, "also write decomposition.json and manifest.json here");
  dec_cmd.flag("seed", dec.seed, "recorded for reproducibility");

  InfoOptions info;
  Command info_cmd(app, "info", "describe a dataset and/or a model");
  auto* info_data = info_cmd.optional("data", info.data, "dataset or gen output directory");
  auto* info_model = info_cmd.optional("model", info.model, "model directory");
  info_cmd.optional("out", info.out, "also write info.json and manifest.json here");
  info_cmd.flag("seed", info.seed, "recorded for reproducibility");
  info_cmd.app()->require_option(1, 0);
  (void)info_data;
  (void)info_model;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return kOk;
    if (app.get_subcommands().empty()) err << app.help();
    return kUsage;
  }

  RunContext ctx{std::vector<std::string>(argv, argv + argc), out};
  try {
    if (gen_cmd.app()->parsed()) run_gen(gen, gen_cmd.echo(), ctx);
    if (train_cmd.app()->parsed()) run_train(tr, train_cmd.echo(), ctx);
    if (sweep_cmd.app()->parsed()) run_sweep(sw, sweep_cmd.echo(), ctx);
    if (eval_cmd.app()->parsed()) run_eval(ev, eval_cmd.echo(), ctx);
    if (cmp_cmd.app()->parsed()) run_compare(cmp, cmp_cmd.echo(), ctx);
    if (dec_cmd.app()->parsed()) run_decompose(dec, dec_cmd.echo(), ctx);
    if (info_cmd.app()->parsed()) run_info(info, info_cmd.echo(), ctx);
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNumericalError;
  } catch (const InvalidArgument& e) {
    err << "invalid input: " << e.what() << "\n";
    return kDataError;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kDataError;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kOk;
}

}  // namespace abcran::cli
