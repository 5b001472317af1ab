#pragma once

#include <span>
#include <vector>

#include <json.hpp>

#include "abcran/tensor.hpp"

/// Splits the mean squared error between a reference signal `ua` and a
/// prediction `ud` into an amplitude part (dissipation) and a phase part
/// (dispersion):
///
///   tau      = mean((ua - ud)^2)
///   tau_diss = (std_a - std_d)^2 + (mean_a - mean_d)^2
///   tau_disp = 2 (1 - rho) std_a std_d = 2 (std_a std_d - cov)
///
/// All statistics are population statistics (normalised by n), which is what
/// makes tau == tau_diss + tau_disp an identity.
namespace abcran::decomp {

struct SignalStats {
  double mean_a = 0.0;
  double mean_d = 0.0;
  double std_a = 0.0;
  double std_d = 0.0;
  double cov = 0.0;
  double std_ad = 0.0;  // sqrt(var_a * var_d); exact when ua == ud
  double rho = 1.0;  // 1 when std_a * std_d is below the degeneracy threshold
};

struct ErrorDecomposition {
  double tau = 0.0;
  double tau_diss = 0.0;
  double tau_disp = 0.0;
  SignalStats stats;

  nlohmann::json to_json() const;
};

/// Weights of the composite objective
///   (1 - alpha) * decoder_loss + alpha * ((1 - beta) * tau_disp + beta * tau_diss).
struct LossWeights {
  double alpha = 0.7;
  double beta = 0.7;

  void validate() const;
};

SignalStats signal_stats(std::span<const double> ua, std::span<const double> ud);

ErrorDecomposition decompose(std::span<const double> ua, std::span<const double> ud);

/// Decomposes every slice along the last axis and averages the components
/// (and statistics) over all slices.
ErrorDecomposition decompose_batched(const Tensor& ua, const Tensor& ud);

double composite_loss(double decoder_loss, const ErrorDecomposition& propagator, const LossWeights& w);

/// Exact d(w_diss * tau_diss + w_disp * tau_disp)/d(ud).
///
/// When std_d is degenerate the derivative of std_d is taken as 0 (a valid
/// subgradient of the std terms at a constant prediction).
std::vector<double> decompose_gradient(std::span<const double> ua, std::span<const double> ud, double w_diss,
                                       double w_disp);

/// Gradient of the slice-averaged weighted loss of decompose_batched w.r.t. `ud`.
Tensor decompose_batched_gradient(const Tensor& ua, const Tensor& ud, double w_diss, double w_disp);

}  // namespace abcran::decomp
