#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "lisr/differentiable.hpp"
#include "lisr/nn.hpp"
#include "lisr/volume.hpp"

namespace lisr {

/// Up to three stride-2 levels between the volume and the latent grid; every
/// volume extent must be divisible by 2^downsampling_levels. With three
/// levels a 160x224x160 volume gives a 20x28x20 latent grid and the 32^3 toy
/// default gives 4^3.
struct AutoencoderConfig {
  std::array<int, 3> volume_shape{32, 32, 32};
  int latent_channels = 4;
  int downsampling_levels = 3;
  /// Encoder widths at full, 1/2, 1/4 and 1/8 resolution.
  std::array<int, 4> encoder_channels{4, 8, 16, 32};
  /// Decoder widths at 1/8, 1/4, 1/2 and full resolution.
  std::array<int, 4> decoder_channels{32, 16, 8, 4};
  double learning_rate = 2e-3;
  double kl_weight = 1e-6;
  double perceptual_weight = 0.1;
  int epochs = 30;
  int batch_size = 4;
  std::uint64_t seed = 0;

  Shape input_shape() const;
  Shape latent_shape() const;
  void validate() const;
  friend bool operator==(const AutoencoderConfig&, const AutoencoderConfig&) = default;
};

/// Diagonal Gaussian over the latent grid.
struct LatentPosterior {
  Latent mean;
  Tensor log_variance;

  /// mean + exp(log_variance / 2) * eps with eps ~ N(0, I).
  Latent sample(std::mt19937_64& rng) const;
};

/// Per-sample autoencoder objective and its parts.
struct AutoencoderLoss {
  double total = 0.0;
  double l1 = 0.0;
  double perceptual = 0.0;
  double kl = 0.0;
};

/// Encoder/decoder pair. Latents exchanged through the public interface are
/// in standardized units: the raw encoder mean multiplied by latent_scale().
class Autoencoder final : public LatentDecoder, public PerceptualMetric {
 public:
  /// Randomly initialized from config.seed.
  explicit Autoencoder(const AutoencoderConfig& config);
  Autoencoder(const AutoencoderConfig& config, std::vector<double> params, double latent_scale);

  const AutoencoderConfig& config() const noexcept { return config_; }
  std::span<const double> parameters() const noexcept { return params_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }
  double latent_scale() const noexcept { return latent_scale_; }

  LatentPosterior encode(const Volume& x) const;
  Volume decode(const Latent& z) const;
  /// Self-perceptual distance: summed per-level mean squared differences of
  /// the encoder's activation maps.
  double perceptual_loss(const Volume& a, const Volume& b) const;
  /// Encoder activation maps used by the perceptual distance, finest first.
  std::vector<Tensor> features(const Tensor& x) const;

  Shape latent_shape() const override;
  Shape volume_shape() const override;
  Tensor decode(const Tensor& z, std::unique_ptr<Tape>* tape) const override;
  Tensor decode_pullback(const Tape& tape, const Tensor& g_x) const override;
  double distance(const Tensor& a, const Tensor& b, Tensor* grad_a) const override;

  /// Training objective on one volume with a fixed reparameterization draw
  /// `eps`: L1 + perceptual_weight * perceptual + kl_weight * KL. Perceptual
  /// features come from `feature_params` (a frozen encoder snapshot) and are
  /// not differentiated. Gradients w.r.t. `params` accumulate into `grads`
  /// when it is non-empty. Ignores latent_scale().
  AutoencoderLoss training_loss(std::span<const double> params,
                                std::span<const double> feature_params, const Tensor& x,
                                const Tensor& eps, std::span<double> grads) const;

  /// Returns a copy with new parameters; latent scale reset to 1.
  Autoencoder with_parameters(std::vector<double> params) const;

 private:
  struct EncoderPass;
  struct DecoderPass;

  void build_layers();
  /// Whether encoder layer l downsamples (and decoder layer l upsamples).
  bool upsampled(int l) const noexcept { return l <= config_.downsampling_levels; }
  EncoderPass run_encoder(std::span<const double> p, const Tensor& x, bool with_head) const;
  Tensor encoder_backward(std::span<const double> p, const EncoderPass& pass,
                          const Tensor* g_head, std::vector<Tensor> g_features,
                          std::span<double> grads, bool need_input) const;
  DecoderPass run_decoder(std::span<const double> p, const Tensor& z_raw) const;
  Tensor decoder_backward(std::span<const double> p, const DecoderPass& pass, const Tensor& g_out,
                          std::span<double> grads) const;
  double feature_distance(std::span<const double> feature_params, const Tensor& a,
                          const Tensor& b, Tensor* grad_a) const;

  AutoencoderConfig config_;
  nn::ParamLayout layout_;
  std::array<nn::Conv3d, 5> encoder_;
  std::array<nn::Conv3d, 5> decoder_;
  std::array<nn::GroupNorm, 4> encoder_norms_;
  std::array<nn::GroupNorm, 4> decoder_norms_;
  std::vector<double> params_;
  double latent_scale_ = 1.0;
};

/// Loss curve recorded by training; heldout[0] is the initialization.
struct TrainingCurve {
  std::vector<double> train;
  std::vector<double> heldout;
};

/// Trains on all but the last max(1, n/10) volumes, which are held out.
/// Deterministic given config.seed. Sets latent_scale() to 1/std of the
/// training-set posterior means.
Autoencoder train_autoencoder(std::span<const Volume> data, const AutoencoderConfig& config,
                              TrainingCurve* curve = nullptr);

/// Held-out criterion: mean over volumes of L1(decode(mean), x) + kl_weight * KL.
double autoencoder_heldout_loss(const Autoencoder& ae, std::span<const Volume> data);

/// Writes `<base>.json` (descriptor) and `<base>.weights` (binary weights).
void save_autoencoder(const Autoencoder& ae, const std::filesystem::path& base);
Autoencoder load_autoencoder(const std::filesystem::path& base);

}  // namespace lisr
