#include "lisr/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

namespace lisr {

std::string to_string(InversionMode mode) {
  return mode == InversionMode::kLdm ? "ldm" : "decoder";
}

InversionMode parse_inversion_mode(const std::string& name) {
  if (name == "ldm") return InversionMode::kLdm;
  if (name == "decoder") return InversionMode::kDecoder;
  throw InvalidArgument("unknown inversion mode '" + name + "'");
}

void InversionConfig::validate() const {
  if (!(perceptual_weight >= 0.0) || !(mae_weight >= 0.0) || !std::isfinite(perceptual_weight) ||
      !std::isfinite(mae_weight))
    throw InvalidArgument("loss weights must be finite and non-negative");
  if (steps < 1) throw InvalidArgument("inversion needs at least one step");
  optimizer.validate();
  if (inference_steps < 1) throw InvalidArgument("inference_steps must be >= 1");
  if (!(initial_conditioning >= 0.0 && initial_conditioning <= 1.0))
    throw InvalidArgument("initial_conditioning must lie in [0,1]");
  if (mean_latent_samples < 1) throw InvalidArgument("mean_latent_samples must be >= 1");
}

namespace {

std::string divergence_message(int step, const std::vector<double>& trace) {
  std::ostringstream os;
  os << "non-finite inversion loss at step " << step << "; trace:";
  const std::size_t from = trace.size() > 10 ? trace.size() - 10 : 0;
  if (from > 0) os << " ...";
  for (std::size_t i = from; i < trace.size(); ++i) os << ' ' << trace[i];
  return os.str();
}

}  // namespace

InversionDiverged::InversionDiverged(int step, std::vector<double> trace)
    : Error(divergence_message(step, trace)), step_(step), trace_(std::move(trace)) {}

double reconstruction_loss(const PerceptualMetric* perceptual, const Tensor& xhat,
                           const Tensor& observed, const CorruptionSpec& f,
                           double perceptual_weight, double mae_weight, Tensor* grad) {
  if (!(perceptual_weight >= 0.0) || !(mae_weight >= 0.0))
    throw InvalidArgument("loss weights must be non-negative");
  require_same_shape(xhat.shape(), observed.shape(), "reconstruction_loss");
  if (perceptual_weight > 0.0 && perceptual == nullptr)
    throw InvalidArgument("a perceptual metric is required when its weight is positive");

  const Tensor fx = apply(f, xhat);
  const double n = static_cast<double>(fx.size());
  double mae = 0.0;
  for (std::size_t i = 0; i < fx.size(); ++i) mae += std::abs(fx[i] - observed[i]);
  mae /= n;

  double perc = 0.0;
  Tensor g_perc;
  if (perceptual_weight > 0.0)
    perc = perceptual->distance(fx, observed, grad != nullptr ? &g_perc : nullptr);

  if (grad != nullptr) {
    Tensor g(fx.shape());
    const double w = mae_weight / n;
    for (std::size_t i = 0; i < fx.size(); ++i) {
      const double d = fx[i] - observed[i];
      g[i] = d > 0.0 ? w : d < 0.0 ? -w : 0.0;
    }
    if (perceptual_weight > 0.0) axpy(perceptual_weight, g_perc, g);
    // Every corruption operator is self-adjoint.
    *grad = apply(f, g);
  }
  return perceptual_weight * perc + mae_weight * mae;
}

double decoder_objective(const InversionProblem& p, const Tensor& z0, Tensor* g_z0,
                         Tensor* xhat) {
  std::unique_ptr<Tape> tape;
  Tensor x = p.decoder.decode(z0, g_z0 != nullptr ? &tape : nullptr);
  Tensor g_x;
  const double loss = reconstruction_loss(p.perceptual, x, p.observed, p.corruption,
                                          p.perceptual_weight, p.mae_weight,
                                          g_z0 != nullptr ? &g_x : nullptr);
  if (g_z0 != nullptr) *g_z0 = p.decoder.decode_pullback(*tape, g_x);
  if (xhat != nullptr) *xhat = std::move(x);
  return loss;
}

double ldm_objective(const InversionProblem& p, const NoiseSchedule& schedule,
                     const NoisePredictor& model, const TimestepSubsequence& subseq,
                     const Tensor& z_T, std::span<const double> cond, Tensor* g_zT,
                     std::span<double> g_cond, Tensor* xhat) {
  DdimTrace trace;
  const Tensor z0 =
      ddim_sample_traced(schedule, model, z_T, cond, subseq, g_zT != nullptr ? &trace : nullptr);
  Tensor g_z0;
  const double loss = decoder_objective(p, z0, g_zT != nullptr ? &g_z0 : nullptr, xhat);
  if (g_zT != nullptr) {
    std::fill(g_cond.begin(), g_cond.end(), 0.0);
    ddim_sample_pullback(schedule, model, cond, trace, g_z0, *g_zT, g_cond);
  }
  return loss;
}

Latent mean_latent(const NoisePredictor& model, const NoiseSchedule& schedule,
                   const Conditioning& cond, int samples, const TimestepSubsequence& subseq,
                   std::uint64_t seed) {
  if (samples < 1) throw InvalidArgument("mean_latent needs at least one sample");
  if (cond.size() != static_cast<std::size_t>(model.conditioning_size()))
    throw InvalidArgument("mean_latent: conditioning size mismatch");
  if (subseq.steps().back() != schedule.train_steps())
    throw InvalidArgument("timestep subsequence does not match the schedule length");

  std::mt19937_64 rng(seed);
  std::vector<Tensor> draws;
  draws.reserve(samples);
  for (int i = 0; i < samples; ++i) draws.push_back(normal_tensor(model.latent_shape(), rng));

  std::vector<Tensor> results(samples);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < samples; ++i)
    results[i] = ddim_sample_traced(schedule, model, draws[i], cond.values(), subseq, nullptr);

  Tensor mean(model.latent_shape());
  for (const Tensor& r : results) mean += r;
  mean *= 1.0 / static_cast<double>(samples);
  return {std::move(mean), LatentRole::kClean};
}

namespace {

void check_observed(const LatentDecoder& decoder, const Volume& observed, const CorruptionSpec& f) {
  require_same_shape(observed.shape(), decoder.volume_shape(), "observed volume");
  f.validate_for(observed.shape());
}

}  // namespace

InversionResult inverse_sr_ldm(const LatentDecoder& decoder, const PerceptualMetric* perceptual,
                               const NoisePredictor& model, const NoiseSchedule& schedule,
                               const Volume& observed, const CorruptionSpec& f,
                               const InversionConfig& config) {
  config.validate();
  if (config.mode != InversionMode::kLdm)
    throw InvalidArgument("inverse_sr_ldm requires mode 'ldm'");
  check_observed(decoder, observed, f);
  require_same_shape(model.latent_shape(), decoder.latent_shape(), "denoiser latent");
  const auto subseq =
      TimestepSubsequence::evenly_spaced(schedule.train_steps(), config.inference_steps);
  const InversionProblem problem{decoder, perceptual, f, observed.data, config.perceptual_weight,
                                 config.mae_weight};

  std::mt19937_64 rng(config.seed);
  Tensor z = normal_tensor(model.latent_shape(), rng);
  const std::size_t nz = z.size();
  const std::size_t nc = static_cast<std::size_t>(model.conditioning_size());
  std::vector<double> cond(nc, config.initial_conditioning);

  nn::Adam adam(nz + nc, config.optimizer);
  std::vector<double> packed(nz + nc);
  std::vector<double> grads(nz + nc);
  std::vector<double> g_cond(nc);
  Tensor g_z;
  Tensor xhat;

  InversionResult result;
  double best = 0.0;
  for (int step = 0; step < config.steps; ++step) {
    const double loss = ldm_objective(problem, schedule, model, subseq, z, cond, &g_z, g_cond, &xhat);
    result.loss_trace.push_back(loss);
    if (!std::isfinite(loss)) throw InversionDiverged(step, result.loss_trace);
    if (step == 0 || loss < best) {
      best = loss;
      result.best_step = step;
      result.latent = {z, LatentRole::kTerminal};
      result.conditioning = cond;
      result.reconstruction = Volume(xhat, observed.spacing);
    }
    std::copy(z.values().begin(), z.values().end(), packed.begin());
    std::copy(cond.begin(), cond.end(), packed.begin() + nz);
    std::copy(g_z.values().begin(), g_z.values().end(), grads.begin());
    std::copy(g_cond.begin(), g_cond.end(), grads.begin() + nz);
    adam.step(packed, grads);
    std::copy(packed.begin(), packed.begin() + nz, z.data());
    for (std::size_t i = 0; i < nc; ++i) cond[i] = std::clamp(packed[nz + i], 0.0, 1.0);
    ++result.updates_applied;
  }
  result.final_latent = {std::move(z), LatentRole::kTerminal};
  result.final_conditioning = std::move(cond);
  return result;
}

InversionResult inverse_sr_decoder(const LatentDecoder& decoder,
                                   const PerceptualMetric* perceptual, const Volume& observed,
                                   const CorruptionSpec& f, const InversionConfig& config,
                                   const Latent& z_init) {
  config.validate();
  if (config.mode != InversionMode::kDecoder)
    throw InvalidArgument("inverse_sr_decoder requires mode 'decoder'");
  check_observed(decoder, observed, f);
  require_same_shape(z_init.shape(), decoder.latent_shape(), "initial latent");
  const InversionProblem problem{decoder, perceptual, f, observed.data, config.perceptual_weight,
                                 config.mae_weight};

  Tensor z = z_init.data;
  nn::Adam adam(z.size(), config.optimizer);
  Tensor g_z;
  Tensor xhat;

  InversionResult result;
  double best = 0.0;
  for (int step = 0; step < config.steps; ++step) {
    const double loss = decoder_objective(problem, z, &g_z, &xhat);
    result.loss_trace.push_back(loss);
    if (!std::isfinite(loss)) throw InversionDiverged(step, result.loss_trace);
    if (step == 0 || loss < best) {
      best = loss;
      result.best_step = step;
      result.latent = {z, LatentRole::kClean};
      result.reconstruction = Volume(xhat, observed.spacing);
    }
    adam.step(z.values(), std::as_const(g_z).values());
    ++result.updates_applied;
  }
  result.final_latent = {std::move(z), LatentRole::kClean};
  return result;
}

}  // namespace lisr
