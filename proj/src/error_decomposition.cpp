#include "abcran/error_decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "abcran/errors.hpp"

namespace abcran::decomp {
namespace {

void check_pair(std::span<const double> ua, std::span<const double> ud, std::size_t min_len) {
  if (ua.size() != ud.size()) {
    throw ShapeError("length mismatch: " + std::to_string(ua.size()) + " vs " + std::to_string(ud.size()));
  }
  if (ua.size() < min_len) throw InvalidArgument("need at least " + std::to_string(min_len) + " samples");
}

double degeneracy_eps(std::span<const double> ua, std::span<const double> ud) {
  double mx = 1.0;
  for (double v : ua) mx = std::max(mx, std::abs(v));
  for (double v : ud) mx = std::max(mx, std::abs(v));
  return 1e-15 * mx;
}

std::size_t last_axis(const Tensor& ua, const Tensor& ud) {
  if (ua.shape() != ud.shape()) {
    throw ShapeError("shape mismatch: " + shape_str(ua.shape()) + " vs " + shape_str(ud.shape()));
  }
  if (ua.rank() == 0) throw ShapeError("empty tensor");
  return ua.shape().back();
}

}  // namespace

nlohmann::json ErrorDecomposition::to_json() const {
  return {{"tau", tau},           {"tau_diss", tau_diss},     {"tau_disp", tau_disp},
          {"rho", stats.rho},     {"mean_a", stats.mean_a},   {"mean_d", stats.mean_d},
          {"std_a", stats.std_a}, {"std_d", stats.std_d}};
}

void LossWeights::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0, 1]");
  if (!(beta >= 0.0 && beta <= 1.0)) throw InvalidArgument("beta must lie in [0, 1]");
}

SignalStats signal_stats(std::span<const double> ua, std::span<const double> ud) {
  check_pair(ua, ud, 1);
  const double n = static_cast<double>(ua.size());
  SignalStats s;
  for (std::size_t i = 0; i < ua.size(); ++i) {
    s.mean_a += ua[i];
    s.mean_d += ud[i];
  }
  s.mean_a /= n;
  s.mean_d /= n;
  double va = 0.0, vd = 0.0, c = 0.0;
  for (std::size_t i = 0; i < ua.size(); ++i) {
    const double da = ua[i] - s.mean_a;
    const double dd = ud[i] - s.mean_d;
    va += da * da;
    vd += dd * dd;
    c += da * dd;
  }
  s.std_a = std::sqrt(va / n);
  s.std_d = std::sqrt(vd / n);
  s.cov = c / n;
  s.std_ad = std::sqrt((va / n) * (vd / n));
  s.rho = s.std_ad >= degeneracy_eps(ua, ud) ? std::clamp(s.cov / s.std_ad, -1.0, 1.0) : 1.0;
  return s;
}

ErrorDecomposition decompose(std::span<const double> ua, std::span<const double> ud) {
  check_pair(ua, ud, 1);
  for (std::size_t i = 0; i < ua.size(); ++i) {
    if (!std::isfinite(ua[i]) || !std::isfinite(ud[i])) throw InvalidArgument("decompose: non-finite input");
  }
  ErrorDecomposition d;
  d.stats = signal_stats(ua, ud);
  double sq = 0.0;
  for (std::size_t i = 0; i < ua.size(); ++i) sq += (ua[i] - ud[i]) * (ua[i] - ud[i]);
  d.tau = sq / static_cast<double>(ua.size());
  const auto& s = d.stats;
  const double dstd = s.std_a - s.std_d;
  const double dmean = s.mean_a - s.mean_d;
  d.tau_diss = dstd * dstd + dmean * dmean;
  d.tau_disp = 2.0 * (s.std_ad - s.cov);
  return d;
}

ErrorDecomposition decompose_batched(const Tensor& ua, const Tensor& ud) {
  const std::size_t n = last_axis(ua, ud);
  const std::size_t slices = ua.size() / n;
  ErrorDecomposition acc;
  acc.stats.rho = 0.0;
  for (std::size_t k = 0; k < slices; ++k) {
    const auto d = decompose(ua.data().subspan(k * n, n), ud.data().subspan(k * n, n));
    acc.tau += d.tau;
    acc.tau_diss += d.tau_diss;
    acc.tau_disp += d.tau_disp;
    acc.stats.mean_a += d.stats.mean_a;
    acc.stats.mean_d += d.stats.mean_d;
    acc.stats.std_a += d.stats.std_a;
    acc.stats.std_d += d.stats.std_d;
    acc.stats.cov += d.stats.cov;
    acc.stats.std_ad += d.stats.std_ad;
    acc.stats.rho += d.stats.rho;
  }
  const double inv = 1.0 / static_cast<double>(slices);
  for (double* v : {&acc.tau, &acc.tau_diss, &acc.tau_disp, &acc.stats.mean_a, &acc.stats.mean_d, &acc.stats.std_a,
                    &acc.stats.std_d, &acc.stats.cov, &acc.stats.std_ad, &acc.stats.rho}) {
    *v *= inv;
  }
  return acc;
}

double composite_loss(double decoder_loss, const ErrorDecomposition& propagator, const LossWeights& w) {
  w.validate();
  if (!std::isfinite(decoder_loss) || !std::isfinite(propagator.tau_diss) || !std::isfinite(propagator.tau_disp)) {
    throw InvalidArgument("composite_loss: non-finite input");
  }
  const double prop = (1.0 - w.beta) * propagator.tau_disp + w.beta * propagator.tau_diss;
  return (1.0 - w.alpha) * decoder_loss + w.alpha * prop;
}

std::vector<double> decompose_gradient(std::span<const double> ua, std::span<const double> ud, double w_diss,
                                       double w_disp) {
  check_pair(ua, ud, 2);
  const auto s = signal_stats(ua, ud);
  const double n = static_cast<double>(ua.size());
  const bool std_ok = s.std_d >= degeneracy_eps(ua, ud);
  // d/d(ud_k) of tau_diss = -2 (std_a - std_d) dstd_k - 2 (mean_a - mean_d) / n
  // d/d(ud_k) of tau_disp =  2 std_a dstd_k - 2 (ua_k - mean_a) / n
  const double std_coeff = -2.0 * w_diss * (s.std_a - s.std_d) + 2.0 * w_disp * s.std_a;
  const double mean_term = -2.0 * w_diss * (s.mean_a - s.mean_d) / n;
  std::vector<double> g(ua.size());
  for (std::size_t k = 0; k < ua.size(); ++k) {
    const double dstd = std_ok ? (ud[k] - s.mean_d) / (n * s.std_d) : 0.0;
    g[k] = std_coeff * dstd + mean_term - 2.0 * w_disp * (ua[k] - s.mean_a) / n;
  }
  return g;
}

Tensor decompose_batched_gradient(const Tensor& ua, const Tensor& ud, double w_diss, double w_disp) {
  const std::size_t n = last_axis(ua, ud);
  const std::size_t slices = ua.size() / n;
  Tensor g(ua.shape());
  const double inv = 1.0 / static_cast<double>(slices);
  for (std::size_t k = 0; k < slices; ++k) {
    const auto gk = decompose_gradient(ua.data().subspan(k * n, n), ud.data().subspan(k * n, n), w_diss, w_disp);
    for (std::size_t i = 0; i < n; ++i) g[k * n + i] = gk[i] * inv;
  }
  return g;
}

}  // namespace abcran::decomp
