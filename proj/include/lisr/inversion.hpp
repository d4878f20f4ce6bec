#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lisr/corruption.hpp"
#include "lisr/differentiable.hpp"
#include "lisr/diffusion.hpp"
#include "lisr/error.hpp"
#include "lisr/nn.hpp"

namespace lisr {

enum class InversionMode { kLdm, kDecoder };

std::string to_string(InversionMode mode);
InversionMode parse_inversion_mode(const std::string& name);

struct InversionConfig {
  double perceptual_weight = 1.0;
  double mae_weight = 1.0;
  int steps = 600;
  nn::AdamConfig optimizer{0.07, 0.9, 0.999, 1e-8};
  /// Length of the evenly spaced DDIM subsequence.
  int inference_steps = 46;
  std::uint64_t seed = 0;
  InversionMode mode = InversionMode::kLdm;
  /// Starting value of every conditioning entry, also used for the mean latent.
  double initial_conditioning = 0.5;
  /// DDIM draws averaged into the decoder-mode starting latent.
  int mean_latent_samples = 64;

  void validate() const;
  friend bool operator==(const InversionConfig&, const InversionConfig&) = default;
};

struct InversionResult {
  /// Best-loss iterate: z_T (ldm mode) or z_0 (decoder mode).
  Latent latent;
  /// Best-loss conditioning; empty in decoder mode.
  std::vector<double> conditioning;
  /// Decoder output for the best iterate.
  Volume reconstruction;
  /// Loss evaluated before each of the `steps` updates.
  std::vector<double> loss_trace;
  int best_step = 0;
  /// State after the last update.
  Latent final_latent;
  std::vector<double> final_conditioning;
  long updates_applied = 0;
};

/// Raised when the objective becomes NaN or infinite; carries the trace.
class InversionDiverged : public Error {
 public:
  InversionDiverged(int step, std::vector<double> trace);
  int step() const noexcept { return step_; }
  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  int step_;
  std::vector<double> trace_;
};

/// w_perc * perceptual(f(xhat), I) + w_mae * mean|f(xhat) - I|. When `grad`
/// is non-null it receives the gradient w.r.t. xhat. `perceptual` may be
/// null only when w_perc is 0.
double reconstruction_loss(const PerceptualMetric* perceptual, const Tensor& xhat,
                           const Tensor& observed, const CorruptionSpec& f,
                           double perceptual_weight, double mae_weight, Tensor* grad = nullptr);

/// Everything the objectives need besides the optimized variables.
struct InversionProblem {
  const LatentDecoder& decoder;
  const PerceptualMetric* perceptual;
  const CorruptionSpec& corruption;
  const Tensor& observed;
  double perceptual_weight = 1.0;
  double mae_weight = 1.0;
};

/// Loss of D(z0); fills g_z0 when non-null.
double decoder_objective(const InversionProblem& p, const Tensor& z0, Tensor* g_z0,
                         Tensor* xhat = nullptr);

/// Loss of D(DDIM(z_T, C)); fills g_zT and overwrites g_cond when g_zT is
/// non-null.
double ldm_objective(const InversionProblem& p, const NoiseSchedule& schedule,
                     const NoisePredictor& model, const TimestepSubsequence& subseq,
                     const Tensor& z_T, std::span<const double> cond, Tensor* g_zT,
                     std::span<double> g_cond, Tensor* xhat = nullptr);

/// Mean of S deterministic DDIM samples from i.i.d. standard-normal
/// terminal latents drawn from `seed`.
Latent mean_latent(const NoisePredictor& model, const NoiseSchedule& schedule,
                   const Conditioning& cond, int samples, const TimestepSubsequence& subseq,
                   std::uint64_t seed);

/// Optimizes (z_T, C) through the DDIM chain and the decoder.
InversionResult inverse_sr_ldm(const LatentDecoder& decoder, const PerceptualMetric* perceptual,
                               const NoisePredictor& model, const NoiseSchedule& schedule,
                               const Volume& observed, const CorruptionSpec& f,
                               const InversionConfig& config);

/// Optimizes z_0 through the decoder alone, starting from `z_init`.
InversionResult inverse_sr_decoder(const LatentDecoder& decoder,
                                   const PerceptualMetric* perceptual, const Volume& observed,
                                   const CorruptionSpec& f, const InversionConfig& config,
                                   const Latent& z_init);

}  // namespace lisr
