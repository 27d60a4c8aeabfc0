#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mplexnet/data.hpp"
#include "mplexnet/diffcore/nn.hpp"
#include "mplexnet/diffcore/optim.hpp"
#include "mplexnet/matrix.hpp"

namespace mplexnet::encoders {

struct AutoencoderSpec {
  std::size_t input_dim = 0;
  std::size_t bottleneck_dim = 0;
  /// LeakyReLU slope on the code; 1.0 gives a linear autoencoder.
  double neg_slope = diffcore::kLeakySlope;

  void validate() const;
};

/// Single-layer autoencoder with tied weights:
///   z = leaky(x W + b_enc),  x_hat = z W^T + b_dec
/// The decoder reads the same W tensor as the encoder.
class TiedAutoencoder {
 public:
  TiedAutoencoder() = default;
  TiedAutoencoder(const AutoencoderSpec& spec, diffcore::Rng& rng);

  const AutoencoderSpec& spec() const { return spec_; }
  diffcore::ParameterSet& params() { return params_; }
  const diffcore::ParameterSet& params() const { return params_; }
  const diffcore::Tensor& weight() const { return params_.get("weight"); }
  const diffcore::Tensor& enc_bias() const { return params_.get("enc_bias"); }
  const diffcore::Tensor& dec_bias() const { return params_.get("dec_bias"); }

  diffcore::Tensor encode(const diffcore::Tensor& x) const;
  diffcore::Tensor decode(const diffcore::Tensor& z) const;
  diffcore::Tensor reconstruct(const diffcore::Tensor& x) const { return decode(encode(x)); }

  /// Gradient-free batch maps.
  Matrix encode(const Matrix& x) const;
  Matrix decode(const Matrix& z) const;
  /// One row, written into `out` (size bottleneck_dim). Safe for concurrent callers.
  void encode_row(std::span<const double> x, std::span<double> out) const;

  /// Mean squared reconstruction error over all entries.
  double reconstruction_mse(const Matrix& x) const;

 private:
  AutoencoderSpec spec_;
  diffcore::ParameterSet params_;
};

struct AeTrainConfig {
  int epochs = 40;
  std::size_t batch_size = 8;
  diffcore::LrSchedule schedule{};
  double weight_decay = 1e-3;
  std::uint64_t seed = 0;
  /// Minimum ratio initial/final training MSE for the run to count as converged.
  double required_reduction = 2.0;
};

struct AeTrainResult {
  /// Training-set MSE before training (index 0) and after each epoch.
  std::vector<double> mse_history;
  bool converged = false;

  double initial_mse() const { return mse_history.front(); }
  double final_mse() const { return mse_history.back(); }
};

/// Minibatch AdamW on the reconstruction MSE. Rejects NaN inputs and N < 2.
AeTrainResult train_autoencoder(TiedAutoencoder& ae, const Matrix& data, const AeTrainConfig& cfg);

struct TrainedAutoencoder {
  TiedAutoencoder model;
  AeTrainResult result;
};

TrainedAutoencoder train_dae(const Matrix& modality, const AutoencoderSpec& spec, const AeTrainConfig& cfg);
/// Common autoencoder from the concatenated codes to K concepts.
TrainedAutoencoder train_cae(const Matrix& features, std::size_t k, const AeTrainConfig& cfg,
                             double neg_slope = diffcore::kLeakySlope);

/// Six domain autoencoders, the common autoencoder, and the training-set
/// normalization applied in front of each.
struct EncoderStack {
  std::vector<data::ModalitySchema> schemas;
  /// Continuous modalities are z-scored; categorical ones pass through.
  std::vector<data::Standardizer> input_norm;
  std::vector<TiedAutoencoder> daes;
  /// z-scoring of the concatenated codes; the result is the node feature vector x.
  data::Standardizer code_norm;
  TiedAutoencoder cae;

  std::size_t num_features() const { return cae.spec().input_dim; }
  std::size_t num_concepts() const { return cae.spec().bottleneck_dim; }
  bool trained() const { return !daes.empty() && cae.params().size() > 0; }

  /// N x P node features of an imputed cohort.
  Matrix features(const data::Cohort& cohort) const;
  std::vector<double> cae_encode(std::span<const double> x) const;
};

struct StackTrainConfig {
  AeTrainConfig dae{};
  AeTrainConfig cae{};
  std::size_t num_concepts = 32;
  double neg_slope = diffcore::kLeakySlope;
};

struct StackTrainReport {
  std::vector<AeTrainResult> dae;
  AeTrainResult cae;
};

/// Trains the d-AEs on the training rows of an imputed cohort, then the c-AE
/// on their frozen (standardized) codes.
EncoderStack train_encoder_stack(const data::Cohort& cohort, std::span<const std::size_t> train_rows,
                                 const StackTrainConfig& cfg, StackTrainReport* report = nullptr);

/// Checkpoint with every autoencoder's weights plus normalization statistics
/// and schemas in the manifest.
void save_encoder_stack(const std::filesystem::path& base, const EncoderStack& stack, const std::string& config_hash);
EncoderStack load_encoder_stack(const std::filesystem::path& base, std::string* config_hash = nullptr);

}  // namespace mplexnet::encoders
