#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "abcran/tensor.hpp"

/// Exact solutions of the parametric linear advection problem
///   dU/dt + mu dU/dx = 0,  U(x, 0) = f(x),
/// sampled into [mu, t, x] snapshot tensors.
namespace abcran::data {

inline constexpr int kDatasetFormatVersion = 1;

struct GridSpec {
  std::size_t nx = 256;
  double x0 = 0.0;
  double x1 = 1.0;
  std::size_t nt = 200;
  double t_final = 1.0;

  /// Throws InvalidArgument unless nx >= 2, nt >= 2, x1 > x0, t_final > 0.
  void validate() const;
  double dx() const { return (x1 - x0) / static_cast<double>(nx - 1); }
  double dt() const { return t_final / static_cast<double>(nt - 1); }
  double x(std::size_t i) const { return x0 + static_cast<double>(i) * (x1 - x0) / static_cast<double>(nx - 1); }
  double t(std::size_t j) const { return static_cast<double>(j) * t_final / static_cast<double>(nt - 1); }
};

/// Gaussian pulse f(x) = exp(-(x - c)^2 / (2 s)) / sqrt(2 pi s).
/// Note `sigma_g` plays the role of a variance in the formula.
struct InitialProfile {
  double sigma_g = 5e-3;
  double x_center = 0.0;

  void validate() const;
  double operator()(double x) const;
};

struct ParameterGrid {
  std::vector<double> mu_train;
  std::vector<double> mu_test;  // consecutive midpoints of mu_train
};

struct WaveDataset {
  GridSpec grid;
  InitialProfile profile;
  std::vector<double> mu_values;
  Tensor snapshots;  // [n_mu, nt, nx]

  std::size_t n_mu() const { return mu_values.size(); }
  /// Spatial profile at (mu index m, time index j).
  std::span<const double> profile_at(std::size_t m, std::size_t j) const;
  double max_abs() const;
};

/// U(x, t) = f(x - mu t), evaluated directly (no boundary wrapping).
double exact_solution(double mu, double x, double t, const InitialProfile& profile);

ParameterGrid make_parameter_grid(double mu_min, double mu_max, std::size_t n_train);

WaveDataset generate_dataset(const GridSpec& grid, const InitialProfile& profile, std::span<const double> mu_values);

/// Writes meta.json + snapshots.bin into `dir` (created if missing).
void write_dataset(const WaveDataset& ds, const std::filesystem::path& dir);
/// Throws IoError, or FormatError on version/shape/metadata inconsistency.
WaveDataset read_dataset(const std::filesystem::path& dir);

/// Sub-dataset holding only the listed mu indices, in the given order.
WaveDataset select_mu(const WaveDataset& ds, std::span<const std::size_t> indices);

}  // namespace abcran::data
