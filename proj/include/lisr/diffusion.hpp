#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "lisr/autoencoder.hpp"
#include "lisr/differentiable.hpp"
#include "lisr/nn.hpp"
#include "lisr/volume.hpp"

namespace lisr {

/// Scaled-linear beta schedule: beta interpolates linearly in sqrt-space
/// between beta_start and beta_end; alpha_t is the cumulative product of
/// (1 - beta_s).
struct ScheduleConfig {
  int train_steps = 1000;
  double beta_start = 0.0015;
  double beta_end = 0.0195;

  friend bool operator==(const ScheduleConfig&, const ScheduleConfig&) = default;
};

/// Cumulative signal fractions alpha_1..alpha_T, strictly decreasing in
/// (0,1]. alpha(0) is 1 by convention.
class NoiseSchedule {
 public:
  explicit NoiseSchedule(std::vector<double> alphas);
  static NoiseSchedule scaled_linear(const ScheduleConfig& config);

  int train_steps() const noexcept { return static_cast<int>(alphas_.size()); }
  double alpha(int t) const;
  std::span<const double> alphas() const noexcept { return alphas_; }

 private:
  std::vector<double> alphas_;
};

/// Strictly increasing timesteps in [1, T_train] ending at T_train.
class TimestepSubsequence {
 public:
  TimestepSubsequence(std::vector<int> steps, int train_steps);
  /// steps_i = round(i * T_train / count), i = 1..count.
  static TimestepSubsequence evenly_spaced(int train_steps, int count);

  const std::vector<int>& steps() const noexcept { return steps_; }
  int size() const noexcept { return static_cast<int>(steps_.size()); }

 private:
  std::vector<int> steps_;
};

/// sqrt(alpha_t) * z0 + sqrt(1 - alpha_t) * eps.
Latent forward_noising(const NoiseSchedule& schedule, const Latent& z0, int t, const Latent& eps);

/// ||eps - eps_theta(forward_noising(z0, t, eps), t, C)||^2 (summed).
double diffusion_training_loss(const NoisePredictor& model, const NoiseSchedule& schedule,
                               const Latent& z0, const Conditioning& cond, int t,
                               const Latent& eps);

/// (z_t - sqrt(1 - alpha_t) * eps_theta) / sqrt(alpha_t).
Latent predicted_x0(const NoisePredictor& model, const NoiseSchedule& schedule, const Latent& z_t,
                    const Conditioning& cond, int t);

/// Deterministic DDIM update for given alphas and noise prediction.
Tensor ddim_update(const Tensor& z_t, const Tensor& eps, double alpha_t, double alpha_prev);

/// One deterministic step from t to t_prev < t (t_prev may be 0).
Latent ddim_step(const NoiseSchedule& schedule, const NoisePredictor& model, const Latent& z_t,
                 const Conditioning& cond, int t, int t_prev);

/// Folds ddim_step over the subsequence from its largest step down, with a
/// final hop to t = 0.
Latent ddim_sample(const NoiseSchedule& schedule, const NoisePredictor& model, const Latent& z_T,
                   const Conditioning& cond, const TimestepSubsequence& subseq);

/// Intermediate state of a differentiable DDIM chain.
struct DdimTrace {
  std::vector<int> from;                     // t at each step
  std::vector<int> to;                       // t_prev at each step
  std::vector<Tensor> states;                // z at the start of each step
  std::vector<std::unique_ptr<Tape>> tapes;  // noise-predictor tapes
};

/// ddim_sample on raw tensors with a relaxed (unvalidated) conditioning
/// vector; records what the pullback needs when `trace` is non-null.
Tensor ddim_sample_traced(const NoiseSchedule& schedule, const NoisePredictor& model,
                          const Tensor& z_T, std::span<const double> cond,
                          const TimestepSubsequence& subseq, DdimTrace* trace);

/// Reverse-mode pass through the chain: g_z0 -> (g_zT, g_cond). g_cond is
/// accumulated into.
void ddim_sample_pullback(const NoiseSchedule& schedule, const NoisePredictor& model,
                          std::span<const double> cond, const DdimTrace& trace,
                          const Tensor& g_z0, Tensor& g_zT, std::span<double> g_cond);

struct DenoiserConfig {
  int latent_channels = 4;
  std::array<int, 3> latent_grid{4, 4, 4};
  int conditioning_size = 4;
  int hidden_channels = 32;
  /// Number of conv + injected-bias + SiLU blocks before the output conv.
  int blocks = 2;
  int time_features = 16;
  int embedding_width = 64;
  double learning_rate = 1e-3;
  int epochs = 200;
  int batch_size = 16;
  std::uint64_t seed = 0;
  ScheduleConfig schedule;

  Shape latent_shape() const {
    return {latent_channels, latent_grid[0], latent_grid[1], latent_grid[2]};
  }
  void validate() const;
  friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

/// Convolutional noise predictor. Timestep and conditioning enter through
/// an MLP embedding that adds a per-channel bias to every hidden block.
class Denoiser final : public NoisePredictor {
 public:
  explicit Denoiser(const DenoiserConfig& config);
  Denoiser(const DenoiserConfig& config, std::vector<double> params);

  const DenoiserConfig& config() const noexcept { return config_; }
  std::span<const double> parameters() const noexcept { return params_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }
  Denoiser with_parameters(std::vector<double> params) const;

  Shape latent_shape() const override { return config_.latent_shape(); }
  int conditioning_size() const override { return config_.conditioning_size; }
  Tensor predict(const Tensor& z, int t, std::span<const double> cond,
                 std::unique_ptr<Tape>* tape) const override;
  void predict_pullback(const Tape* tape, const Tensor& z, int t, std::span<const double> cond,
                        const Tensor& g_eps, Tensor& g_z, std::span<double> g_cond) const override;

  /// Full reverse pass including parameter gradients (accumulated into
  /// `grads` when non-empty).
  void backward(const Tape& tape, const Tensor& g_eps, Tensor* g_z, std::span<double> g_cond,
                std::span<double> grads) const;

  /// Sinusoidal timestep features.
  std::vector<double> time_features(int t) const;

 private:
  struct Pass;
  void build_layers();
  std::unique_ptr<Pass> run(const Tensor& z, int t, std::span<const double> cond) const;

  DenoiserConfig config_;
  nn::ParamLayout layout_;
  nn::Dense embed_in_;
  nn::Dense embed_hidden_;
  std::vector<nn::Dense> projections_;
  std::vector<nn::Conv3d> convs_;
  nn::Conv3d conv_out_;
  std::vector<double> params_;
};

/// Paired latents and covariates for denoiser training.
struct LatentDataset {
  std::vector<Latent> latents;
  std::vector<Conditioning> conditioning;
};

/// Trains eps_theta on all but the last max(1, n/10) samples, drawing t
/// uniformly in [1, T_train] per sample. Deterministic given config.seed.
Denoiser train_denoiser(const LatentDataset& data, const DenoiserConfig& config,
                        TrainingCurve* curve = nullptr);

/// Mean training loss over `data` with draws fixed by `seed`.
double denoiser_loss(const Denoiser& model, const NoiseSchedule& schedule,
                     std::span<const Latent> latents, std::span<const Conditioning> cond,
                     std::uint64_t seed);

/// Writes `<base>.json` (config incl. schedule and conditioning size) and
/// `<base>.weights`.
void save_denoiser(const Denoiser& model, const std::filesystem::path& base);
Denoiser load_denoiser(const std::filesystem::path& base);

}  // namespace lisr
