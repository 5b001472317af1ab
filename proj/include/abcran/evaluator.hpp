#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "abcran/model.hpp"
#include "abcran/pde_data.hpp"
#include "abcran/tensor.hpp"

namespace abcran::eval {

struct StepRecord {
  std::size_t step = 0;  // 1-based forecast step
  double t = 0.0;
  double mse = 0.0;
  double tau_diss = 0.0;
  double tau_disp = 0.0;
  double rho = 1.0;
  int phase_lag = 0;  // grid cells, positive = prediction behind the truth
};

struct RolloutReport {
  double mu = 0.0;
  std::size_t mu_index = 0;
  std::size_t start_index = 0;
  std::size_t horizon = 0;
  std::vector<StepRecord> steps;
  Tensor prediction;   // [horizon, nx]
  Tensor error_field;  // |prediction - truth|, [horizon, nx]

  double mean_mse() const;
  double mean_abs_phase_lag() const;
};

/// Produces [n_steps, nx] forecasts from a [k_in, nx] window of true fields.
using Forecaster = std::function<Tensor(const Tensor& seed_window, std::size_t n_steps)>;

Tensor pointwise_error(const Tensor& pred, const Tensor& truth);

/// argmax over s in [-nx/2, nx/2] of sum_i truth[i] * pred[(i - s) mod nx]
/// (first maximum on ties). pred[i] = truth[i + s] gives s, i.e. a prediction
/// trailing a rightward-moving truth has positive lag.
int phase_lag(std::span<const double> pred, std::span<const double> truth);

/// Seeds with true snapshots [start, start + k_in) of mu `mu_index` and runs
/// free for `horizon` steps.
RolloutReport evaluate_rollout(const Forecaster& forecaster, std::size_t k_in, const data::WaveDataset& dataset,
                               std::size_t mu_index, std::size_t start_index, std::size_t horizon);
RolloutReport evaluate_rollout(const model::AbcranModel& model, const data::WaveDataset& dataset,
                               std::size_t mu_index, std::size_t start_index, std::size_t horizon);

Forecaster forecaster(const model::AbcranModel& model);

/// mu,step,t,mse,tau_diss,tau_disp,rho,phase_lag
std::string rollout_csv(std::span<const RolloutReport> reports);
nlohmann::json rollout_summary(std::span<const RolloutReport> reports);

/// Writes the error fields of all reports as one [n_reports, horizon, nx] field file.
void write_error_fields(std::span<const RolloutReport> reports, const std::filesystem::path& dir);

struct Comparison {
  std::vector<RolloutReport> a;
  std::vector<RolloutReport> b;

  /// One row per (mu, step) with both models' metrics and b - a deltas.
  std::string to_csv() const;
  /// Per-model means over all rows and the mean deltas.
  nlohmann::json summary() const;
};

Comparison compare_models(const Forecaster& a, std::size_t k_in_a, const Forecaster& b, std::size_t k_in_b,
                          const data::WaveDataset& dataset, std::span<const std::size_t> mu_indices,
                          std::size_t start_index, std::size_t horizon);
Comparison compare_models(const model::AbcranModel& a, const model::AbcranModel& b, const data::WaveDataset& dataset,
                          std::span<const std::size_t> mu_indices, std::size_t start_index, std::size_t horizon);

}  // namespace abcran::eval
