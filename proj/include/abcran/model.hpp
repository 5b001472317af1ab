#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "abcran/recurrent.hpp"
#include "abcran/tensor.hpp"

/// Attention-based convolutional recurrent autoencoder.
///
///   encoder:    [conv1d -> tanh -> maxpool] x C -> flatten -> [dense -> tanh] x D -> dense(r)
///   propagator: LSTM over k_in latents; attention LSTM decoder emits k_out latents
///   decoder:    mirror of the encoder, nearest-neighbour upsampling in place of pooling
namespace abcran::model {

inline constexpr int kModelFormatVersion = 1;

struct ArchConfig {
  std::size_t nx = 256;
  std::size_t latent_dim = 2;
  std::vector<std::size_t> conv_channels{8, 16};
  std::size_t kernel = 5;
  std::vector<std::size_t> dense_widths{128};
  std::size_t lstm_hidden = 64;
  std::size_t k_in = 10;
  std::size_t k_out = 10;

  /// Smaller widths for CPU-bound experiments on coarse grids.
  static ArchConfig desk(std::size_t nx);

  void validate() const;
  /// Spatial length after all pooling stages.
  std::size_t reduced_length() const;
  std::size_t flat_width() const { return conv_channels.back() * reduced_length(); }
  /// Named layers in forward order (encoder, propagator, decoder).
  std::vector<std::string> layer_names() const;

  nlohmann::json to_json() const;
  static ArchConfig from_json(const nlohmann::json& j);

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

struct Parameter {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

class AbcranModel {
 public:
  /// Parameters bound to one tape, in the same order as parameters().
  struct Bound {
    std::vector<ad::Var> vars;
  };

  AbcranModel(ArchConfig config, std::uint64_t seed);

  const ArchConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  Parameter& parameter(std::string_view name);
  const Parameter& parameter(std::string_view name) const;
  std::size_t parameter_count() const;

  /// Records every parameter on `tape`; as variables when `trainable`, else constants.
  Bound bind(ad::Tape& tape, bool trainable = true) const;

  /// [B, nx] -> [B, r]
  ad::Var encode(const Bound& p, ad::Var field) const;
  /// [B, r] -> [B, nx]
  ad::Var decode(const Bound& p, ad::Var latent) const;
  /// [B, k_in, r] -> [B, k_out, r]
  ad::Var propagate(const Bound& p, ad::Var latent_seq) const;

  // Gradient-free conveniences.
  Tensor encode(const Tensor& field) const;
  Tensor decode(const Tensor& latent) const;
  Tensor propagate(const Tensor& latent_seq) const;

 private:
  struct LayerIndex {
    std::size_t weight;
    std::size_t bias;
  };
  struct LstmIndex {
    std::size_t input_weight;
    std::size_t hidden_weight;
    std::size_t bias;
  };

  std::size_t add_param(std::string name, Shape shape);
  void initialize();
  ad::LstmWeights lstm_weights(const Bound& p, const LstmIndex& idx) const;

  ArchConfig config_;
  std::uint64_t seed_;
  std::vector<Parameter> params_;

  std::vector<LayerIndex> enc_conv_, enc_dense_, dec_dense_, dec_conv_;
  LayerIndex enc_latent_{}, dec_latent_{}, prop_out_{};
  LstmIndex prop_enc_{}, prop_dec_{};
};

/// Autoregressive free-running prediction seeded with true fields [k_in, nx].
/// Each block propagates the newest k_in latents by k_out steps and decodes
/// them; output is truncated to [n_steps, nx].
Tensor rollout(const AbcranModel& model, const Tensor& seed_window, std::size_t n_steps);

/// Writes arch.json (config, seed, parameter manifest) and weights.bin.
void save_model(const AbcranModel& model, const std::filesystem::path& dir);
AbcranModel load_model(const std::filesystem::path& dir);

}  // namespace abcran::model
