#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "abcran/error_decomposition.hpp"
#include "abcran/model.hpp"
#include "abcran/pde_data.hpp"

namespace abcran::train {

using Rng = std::mt19937_64;

enum class LossMode { mse, decomposed };

std::string to_string(LossMode mode);
LossMode parse_loss_mode(const std::string& s);

struct TrainConfig {
  decomp::LossWeights weights{0.7, 0.7};
  /// Absolute input-noise std; when unset, noise_rel * max|U| of the dataset.
  std::optional<double> noise_std;
  double noise_rel = 0.01;
  double lr = 1e-3;       // cosine schedule maximum
  double lr_min = 1e-5;   // cosine schedule minimum
  double weight_decay = 1e-4;
  std::size_t restart_period = 25;  // T0, epochs
  std::size_t restart_mult = 2;
  std::size_t patience = 50;
  std::size_t max_epochs = 500;
  std::size_t batch_size = 16;
  std::size_t n_validation = 2;  // mu instances held out for early stopping
  std::uint64_t seed = 0;
  LossMode loss_mode = LossMode::decomposed;

  void validate() const;
  nlohmann::json to_json() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0;  // composite, mean over batches
  double val_loss = 0.0;    // composite on held-out mu, no input noise
  double decoder_loss = 0.0;
  double propagator_loss = 0.0;
  double tau_diss = 0.0;  // training propagator decomposition, mean over batches
  double tau_disp = 0.0;
  double val_tau = 0.0;  // plain MSE of held-out propagator predictions
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::size_t stopped_epoch = 0;
  double best_val_loss = 0.0;
  double noise_std = 0.0;
  std::vector<double> train_mu;
  std::vector<double> val_mu;

  const EpochRecord& best() const { return epochs.at(best_epoch - 1); }
  /// epoch,lr,train_loss,val_loss,tau_diss,tau_disp
  std::string to_csv() const;
  nlohmann::json summary(const TrainConfig& config) const;
};

/// batch + N(0, noise_std^2) elementwise.
Tensor add_noise(const Tensor& batch, double noise_std, Rng& rng);

/// Scalar tape node: w_diss * tau_diss + w_disp * tau_disp of `pred` against
/// `truth`, decomposed along the last axis and averaged over slices. Uses the
/// analytic gradient of the decomposition in backward.
ad::Var decomposed_loss(ad::Var pred, const Tensor& truth, double w_diss, double w_disp);

/// MSE between decode(encode(clean + noise)) and `clean` [N, nx].
ad::Var denoising_decoder_loss(const model::AbcranModel& model, const model::AbcranModel::Bound& params,
                               const Tensor& clean, Rng& rng, double noise_std);
double denoising_decoder_loss(const model::AbcranModel& model, const Tensor& clean, Rng& rng, double noise_std);

struct PropagatorLoss {
  ad::Var loss;
  decomp::ErrorDecomposition decomposition;  // physical-space, always filled
  Tensor prediction;                         // [B, k_out, nx]
};

/// Encodes window_in [B, k_in, nx], propagates, decodes, and scores against
/// window_target [B, k_out, nx]: decomposed -> (1-beta) tau_disp + beta tau_diss,
/// mse -> plain MSE.
PropagatorLoss propagator_loss(const model::AbcranModel& model, const model::AbcranModel::Bound& params,
                               const Tensor& window_in, const Tensor& window_target, LossMode mode,
                               const decomp::LossWeights& weights);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// AdamW with decoupled weight decay:
///   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
void adamw_step(std::vector<model::Parameter>& params, const std::vector<Tensor>& grads, AdamState& state, double lr,
                double weight_decay);

/// SGDR schedule; cycle lengths T0, T0*mult, T0*mult^2, ... (epoch is 0-based).
double cosine_warm_restart_lr(std::size_t epoch, double lr_max, double lr_min, std::size_t t0, std::size_t mult);

/// Holds out `n_val` mu indices spread evenly through the interior.
std::vector<std::size_t> validation_indices(std::size_t n_mu, std::size_t n_val);

/// Composite loss over every window of `dataset` without input noise, plus the
/// plain propagator MSE; the quantity early stopping monitors.
struct WindowLoss {
  double loss = 0.0;
  double tau = 0.0;
};
WindowLoss validation_loss(const model::AbcranModel& model, const data::WaveDataset& dataset,
                           const TrainConfig& config);

/// Trains `model` in place and restores its best-validation parameters.
/// Throws NumericalError if a loss turns non-finite.
TrainReport fit(model::AbcranModel& model, const data::WaveDataset& dataset, const TrainConfig& config);

}  // namespace abcran::train
