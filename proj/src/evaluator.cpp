#include "abcran/evaluator.hpp"

#include <cmath>
#include <sstream>

#include "abcran/binary_io.hpp"
#include "abcran/error_decomposition.hpp"
#include "abcran/errors.hpp"

namespace abcran::eval {
namespace {

Tensor rows(const data::WaveDataset& ds, std::size_t mu_index, std::size_t begin, std::size_t count) {
  std::vector<double> buf;
  buf.reserve(count * ds.grid.nx);
  for (std::size_t j = begin; j < begin + count; ++j) {
    auto r = ds.profile_at(mu_index, j);
    buf.insert(buf.end(), r.begin(), r.end());
  }
  return Tensor({count, ds.grid.nx}, std::move(buf));
}

double mean_of(std::span<const RolloutReport> reports, double (*field)(const StepRecord&)) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : reports) {
    for (const auto& st : r.steps) {
      s += field(st);
      ++n;
    }
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

double get_mse(const StepRecord& s) { return s.mse; }
double get_diss(const StepRecord& s) { return s.tau_diss; }
double get_disp(const StepRecord& s) { return s.tau_disp; }
double get_abs_lag(const StepRecord& s) { return std::abs(static_cast<double>(s.phase_lag)); }

}  // namespace

double RolloutReport::mean_mse() const { return mean_of({this, 1}, get_mse); }
double RolloutReport::mean_abs_phase_lag() const { return mean_of({this, 1}, get_abs_lag); }

Tensor pointwise_error(const Tensor& pred, const Tensor& truth) {
  if (pred.shape() != truth.shape()) {
    throw ShapeError("pointwise_error: " + shape_str(pred.shape()) + " vs " + shape_str(truth.shape()));
  }
  Tensor out(pred.shape(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) out.storage()[i] = std::abs(pred[i] - truth[i]);
  return out;
}

int phase_lag(std::span<const double> pred, std::span<const double> truth) {
  const std::size_t nx = truth.size();
  if (pred.size() != nx) {
    throw ShapeError("phase_lag: length " + std::to_string(pred.size()) + " vs " + std::to_string(nx));
  }
  if (nx == 0) throw ShapeError("phase_lag: empty slice");
  bool constant = true;
  for (double v : truth) constant = constant && v == truth[0];
  if (constant) throw InvalidArgument("phase_lag: constant truth slice has no defined lag");

  const long n = static_cast<long>(nx);
  long best_s = 0;
  double best = -INFINITY;
  for (long s = -n / 2; s <= n / 2; ++s) {
    double c = 0.0;
    for (long i = 0; i < n; ++i) c += truth[static_cast<std::size_t>(i)] * pred[static_cast<std::size_t>(((i - s) % n + n) % n)];
    if (c > best) {
      best = c;
      best_s = s;
    }
  }
  return static_cast<int>(best_s);
}

RolloutReport evaluate_rollout(const Forecaster& forecaster, std::size_t k_in, const data::WaveDataset& ds,
                               std::size_t mu_index, std::size_t start_index, std::size_t horizon) {
  if (mu_index >= ds.n_mu()) {
    throw InvalidArgument("mu index " + std::to_string(mu_index) + " out of range (" + std::to_string(ds.n_mu()) +
                          " instances)");
  }
  if (horizon == 0) throw InvalidArgument("horizon must be positive");
  if (start_index + k_in + horizon > ds.grid.nt) {
    throw InvalidArgument("start " + std::to_string(start_index) + " + k_in " + std::to_string(k_in) +
                          " + horizon " + std::to_string(horizon) + " exceeds nt=" + std::to_string(ds.grid.nt));
  }
  const std::size_t nx = ds.grid.nx;
  RolloutReport rep;
  rep.mu = ds.mu_values[mu_index];
  rep.mu_index = mu_index;
  rep.start_index = start_index;
  rep.horizon = horizon;
  rep.prediction = forecaster(rows(ds, mu_index, start_index, k_in), horizon);
  const Shape want{horizon, nx};
  if (rep.prediction.shape() != want) {
    throw ShapeError("forecast shape " + shape_str(rep.prediction.shape()) + ", expected " + shape_str(want));
  }
  const Tensor truth = rows(ds, mu_index, start_index + k_in, horizon);
  rep.error_field = pointwise_error(rep.prediction, truth);
  for (std::size_t s = 0; s < horizon; ++s) {
    std::span<const double> p(rep.prediction.data().data() + s * nx, nx);
    std::span<const double> u(truth.data().data() + s * nx, nx);
    const auto d = decomp::decompose(u, p);
    StepRecord rec;
    rec.step = s + 1;
    rec.t = ds.grid.t(start_index + k_in + s);
    rec.mse = d.tau;
    rec.tau_diss = d.tau_diss;
    rec.tau_disp = d.tau_disp;
    rec.rho = d.stats.rho;
    rec.phase_lag = phase_lag(p, u);
    rep.steps.push_back(rec);
  }
  return rep;
}

Forecaster forecaster(const model::AbcranModel& model) {
  return [&model](const Tensor& seed, std::size_t n) { return model::rollout(model, seed, n); };
}

RolloutReport evaluate_rollout(const model::AbcranModel& model, const data::WaveDataset& ds, std::size_t mu_index,
                               std::size_t start_index, std::size_t horizon) {
  if (model.config().nx != ds.grid.nx) {
    throw ShapeError("model nx=" + std::to_string(model.config().nx) + " but dataset nx=" +
                     std::to_string(ds.grid.nx));
  }
  return evaluate_rollout(forecaster(model), model.config().k_in, ds, mu_index, start_index, horizon);
}

std::string rollout_csv(std::span<const RolloutReport> reports) {
  std::ostringstream os;
  os.precision(17);
  os << "mu,step,t,mse,tau_diss,tau_disp,rho,phase_lag\n";
  for (const auto& r : reports) {
    for (const auto& s : r.steps) {
      os << r.mu << ',' << s.step << ',' << s.t << ',' << s.mse << ',' << s.tau_diss << ',' << s.tau_disp << ','
         << s.rho << ',' << s.phase_lag << '\n';
    }
  }
  return os.str();
}

nlohmann::json rollout_summary(std::span<const RolloutReport> reports) {
  nlohmann::json per_mu = nlohmann::json::array();
  for (const auto& r : reports) {
    per_mu.push_back({{"mu", r.mu},
                      {"start_index", r.start_index},
                      {"horizon", r.horizon},
                      {"mean_mse", r.mean_mse()},
                      {"mean_abs_phase_lag", r.mean_abs_phase_lag()}});
  }
  return {{"reports", per_mu},
          {"mean_mse", mean_of(reports, get_mse)},
          {"mean_tau_diss", mean_of(reports, get_diss)},
          {"mean_tau_disp", mean_of(reports, get_disp)},
          {"mean_abs_phase_lag", mean_of(reports, get_abs_lag)}};
}

void write_error_fields(std::span<const RolloutReport> reports, const std::filesystem::path& dir) {
  if (reports.empty()) throw InvalidArgument("no reports to write");
  const Shape one = reports.front().error_field.shape();
  std::vector<double> buf;
  std::vector<double> mu;
  for (const auto& r : reports) {
    if (r.error_field.shape() != one) throw ShapeError("error fields differ in shape");
    buf.insert(buf.end(), r.error_field.data().begin(), r.error_field.data().end());
    mu.push_back(r.mu);
  }
  nlohmann::json meta = {{"version", data::kDatasetFormatVersion},
                         {"kind", "abs_error"},
                         {"layout", "mu,t,x"},
                         {"mu", mu},
                         {"start_index", reports.front().start_index},
                         {"horizon", reports.front().horizon}};
  io::write_field_dir(dir, meta, Tensor({reports.size(), one[0], one[1]}, std::move(buf)));
}

std::string Comparison::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "mu,step,t,mse_a,mse_b,tau_diss_a,tau_diss_b,tau_disp_a,tau_disp_b,rho_a,rho_b,phase_lag_a,phase_lag_b,"
        "delta_mse,delta_tau_diss,delta_tau_disp,delta_abs_phase_lag\n";
  for (std::size_t r = 0; r < a.size(); ++r) {
    for (std::size_t s = 0; s < a[r].steps.size(); ++s) {
      const auto& x = a[r].steps[s];
      const auto& y = b[r].steps[s];
      os << a[r].mu << ',' << x.step << ',' << x.t << ',' << x.mse << ',' << y.mse << ',' << x.tau_diss << ','
         << y.tau_diss << ',' << x.tau_disp << ',' << y.tau_disp << ',' << x.rho << ',' << y.rho << ','
         << x.phase_lag << ',' << y.phase_lag << ',' << y.mse - x.mse << ',' << y.tau_diss - x.tau_diss << ','
         << y.tau_disp - x.tau_disp << ',' << std::abs(y.phase_lag) - std::abs(x.phase_lag) << '\n';
    }
  }
  return os.str();
}

nlohmann::json Comparison::summary() const {
  nlohmann::json ja = rollout_summary(a), jb = rollout_summary(b);
  nlohmann::json delta;
  for (const char* k : {"mean_mse", "mean_tau_diss", "mean_tau_disp", "mean_abs_phase_lag"}) {
    delta[k] = jb[k].get<double>() - ja[k].get<double>();
  }
  return {{"a", ja}, {"b", jb}, {"delta", delta}};
}

Comparison compare_models(const Forecaster& a, std::size_t k_in_a, const Forecaster& b, std::size_t k_in_b,
                          const data::WaveDataset& ds, std::span<const std::size_t> mu_indices,
                          std::size_t start_index, std::size_t horizon) {
  if (mu_indices.empty()) throw InvalidArgument("no mu indices to compare");
  Comparison c;
  for (std::size_t m : mu_indices) {
    c.a.push_back(evaluate_rollout(a, k_in_a, ds, m, start_index, horizon));
    c.b.push_back(evaluate_rollout(b, k_in_b, ds, m, start_index, horizon));
  }
  return c;
}

Comparison compare_models(const model::AbcranModel& a, const model::AbcranModel& b, const data::WaveDataset& ds,
                          std::span<const std::size_t> mu_indices, std::size_t start_index, std::size_t horizon) {
  if (a.config().nx != b.config().nx || a.config().nx != ds.grid.nx) {
    throw ShapeError("models and dataset disagree on nx (" + std::to_string(a.config().nx) + ", " +
                     std::to_string(b.config().nx) + ", " + std::to_string(ds.grid.nx) + ")");
  }
  return compare_models(forecaster(a), a.config().k_in, forecaster(b), b.config().k_in, ds, mu_indices, start_index,
                        horizon);
}

}  // namespace abcran::eval
