#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "abcran/error_decomposition.hpp"
#include "abcran/model.hpp"
#include "abcran/pde_data.hpp"
#include "abcran/trainer.hpp"

/// Successive-halving search over (alpha, beta). Every rung retrains the
/// surviving candidates from scratch with a larger epoch budget and keeps the
/// better half, ranked by held-out propagator MSE (comparable across weights).
namespace abcran::sweep {

struct Budget {
  std::size_t initial_epochs = 4;
  std::size_t growth = 2;  // epoch multiplier between rungs
  std::size_t jobs = 1;    // candidates trained concurrently within a rung

  void validate() const;
};

struct Row {
  std::size_t rung = 0;
  std::size_t candidate = 0;  // index into the grid
  decomp::LossWeights weights;
  std::size_t epochs = 0;
  double score = 0.0;
  bool promoted = false;
};

struct Result {
  std::vector<Row> rows;
  std::size_t best = 0;  // grid index
  decomp::LossWeights best_weights;
  double best_score = 0.0;
  std::size_t runs = 0;

  /// rung,candidate,alpha,beta,epochs,score,promoted
  std::string to_csv() const;
};

/// Scores one candidate trained for `epochs`; lower is better.
using Objective = std::function<double(const decomp::LossWeights&, std::size_t epochs)>;

Result successive_halving(std::span<const decomp::LossWeights> grid, const Budget& budget, const Objective& objective);

/// Cartesian product of the alpha and beta values.
std::vector<decomp::LossWeights> make_grid(std::span<const double> alphas, std::span<const double> betas);

/// Objective that fits a fresh model (arch, model_seed) on `dataset` with `base`
/// overriding weights and max_epochs, and returns the best validation MSE.
Objective fit_objective(const model::ArchConfig& arch, std::uint64_t model_seed, const data::WaveDataset& dataset,
                        const train::TrainConfig& base);

}  // namespace abcran::sweep
