#include "lisr/serialization.hpp"

namespace lisr {

namespace {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->template get<T>();
}

}  // namespace

void to_json(nlohmann::json& j, const PhantomSpec& s) {
  j = {{"grid", s.grid},
       {"min_ellipsoids", s.min_ellipsoids},
       {"max_ellipsoids", s.max_ellipsoids},
       {"outer_band", s.outer_band},
       {"bright_band", s.bright_band},
       {"dark_band", s.dark_band},
       {"smoothing_sigma", s.smoothing_sigma},
       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, PhantomSpec& s) {
  s = PhantomSpec{};
  read_opt(j, "grid", s.grid);
  read_opt(j, "min_ellipsoids", s.min_ellipsoids);
  read_opt(j, "max_ellipsoids", s.max_ellipsoids);
  read_opt(j, "outer_band", s.outer_band);
  read_opt(j, "bright_band", s.bright_band);
  read_opt(j, "dark_band", s.dark_band);
  read_opt(j, "smoothing_sigma", s.smoothing_sigma);
  read_opt(j, "seed", s.seed);
}

void to_json(nlohmann::json& j, const AutoencoderConfig& c) {
  j = {{"volume_shape", c.volume_shape},
       {"latent_channels", c.latent_channels},
       {"downsampling_levels", c.downsampling_levels},
       {"encoder_channels", c.encoder_channels},
       {"decoder_channels", c.decoder_channels},
       {"learning_rate", c.learning_rate},
       {"kl_weight", c.kl_weight},
       {"perceptual_weight", c.perceptual_weight},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, AutoencoderConfig& c) {
  c = AutoencoderConfig{};
  read_opt(j, "volume_shape", c.volume_shape);
  read_opt(j, "latent_channels", c.latent_channels);
  read_opt(j, "downsampling_levels", c.downsampling_levels);
  read_opt(j, "encoder_channels", c.encoder_channels);
  read_opt(j, "decoder_channels", c.decoder_channels);
  read_opt(j, "learning_rate", c.learning_rate);
  read_opt(j, "kl_weight", c.kl_weight);
  read_opt(j, "perceptual_weight", c.perceptual_weight);
  read_opt(j, "epochs", c.epochs);
  read_opt(j, "batch_size", c.batch_size);
  read_opt(j, "seed", c.seed);
}

void to_json(nlohmann::json& j, const ScheduleConfig& c) {
  j = {{"train_steps", c.train_steps}, {"beta_start", c.beta_start}, {"beta_end", c.beta_end}};
}

void from_json(const nlohmann::json& j, ScheduleConfig& c) {
  c = ScheduleConfig{};
  read_opt(j, "train_steps", c.train_steps);
  read_opt(j, "beta_start", c.beta_start);
  read_opt(j, "beta_end", c.beta_end);
}

void to_json(nlohmann::json& j, const DenoiserConfig& c) {
  j = {{"latent_channels", c.latent_channels},
       {"latent_grid", c.latent_grid},
       {"conditioning_size", c.conditioning_size},
       {"hidden_channels", c.hidden_channels},
       {"blocks", c.blocks},
       {"time_features", c.time_features},
       {"embedding_width", c.embedding_width},
       {"learning_rate", c.learning_rate},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"seed", c.seed},
       {"schedule", c.schedule}};
}

void from_json(const nlohmann::json& j, DenoiserConfig& c) {
  c = DenoiserConfig{};
  read_opt(j, "latent_channels", c.latent_channels);
  read_opt(j, "latent_grid", c.latent_grid);
  read_opt(j, "conditioning_size", c.conditioning_size);
  read_opt(j, "hidden_channels", c.hidden_channels);
  read_opt(j, "blocks", c.blocks);
  read_opt(j, "time_features", c.time_features);
  read_opt(j, "embedding_width", c.embedding_width);
  read_opt(j, "learning_rate", c.learning_rate);
  read_opt(j, "epochs", c.epochs);
  read_opt(j, "batch_size", c.batch_size);
  read_opt(j, "seed", c.seed);
  read_opt(j, "schedule", c.schedule);
}

void to_json(nlohmann::json& j, const InversionConfig& c) {
  j = {{"mode", to_string(c.mode)},
       {"perceptual_weight", c.perceptual_weight},
       {"mae_weight", c.mae_weight},
       {"steps", c.steps},
       {"learning_rate", c.optimizer.learning_rate},
       {"beta1", c.optimizer.beta1},
       {"beta2", c.optimizer.beta2},
       {"epsilon", c.optimizer.epsilon},
       {"inference_steps", c.inference_steps},
       {"seed", c.seed},
       {"initial_conditioning", c.initial_conditioning},
       {"mean_latent_samples", c.mean_latent_samples}};
}

void from_json(const nlohmann::json& j, InversionConfig& c) {
  c = InversionConfig{};
  if (auto it = j.find("mode"); it != j.end()) c.mode = parse_inversion_mode(it->get<std::string>());
  read_opt(j, "perceptual_weight", c.perceptual_weight);
  read_opt(j, "mae_weight", c.mae_weight);
  read_opt(j, "steps", c.steps);
  read_opt(j, "learning_rate", c.optimizer.learning_rate);
  read_opt(j, "beta1", c.optimizer.beta1);
  read_opt(j, "beta2", c.optimizer.beta2);
  read_opt(j, "epsilon", c.optimizer.epsilon);
  read_opt(j, "inference_steps", c.inference_steps);
  read_opt(j, "seed", c.seed);
  read_opt(j, "initial_conditioning", c.initial_conditioning);
  read_opt(j, "mean_latent_samples", c.mean_latent_samples);
}

void to_json(nlohmann::json& j, const SsimOptions& o) {
  j = {{"window", o.window}, {"sigma", o.sigma}, {"k1", o.k1}, {"k2", o.k2}, {"peak", o.peak}};
}

void from_json(const nlohmann::json& j, SsimOptions& o) {
  o = SsimOptions{};
  read_opt(j, "window", o.window);
  read_opt(j, "sigma", o.sigma);
  read_opt(j, "k1", o.k1);
  read_opt(j, "k2", o.k2);
  read_opt(j, "peak", o.peak);
}

void to_json(nlohmann::json& j, const CorruptionDescriptor& d) {
  j = {{"name", d.name}, {"kind", to_string(d.kind)}};
  if (d.kind == CorruptionKind::kSliceMask) {
    j["axis"] = d.axis;
    j["factor"] = d.factor;
    j["offset"] = d.offset;
  } else {
    j["mask_path"] = d.mask_path;
  }
}

void from_json(const nlohmann::json& j, CorruptionDescriptor& d) {
  d = CorruptionDescriptor{};
  if (auto it = j.find("kind"); it != j.end()) d.kind = parse_corruption_kind(it->get<std::string>());
  read_opt(j, "axis", d.axis);
  read_opt(j, "factor", d.factor);
  read_opt(j, "offset", d.offset);
  read_opt(j, "mask_path", d.mask_path);
  read_opt(j, "name", d.name);
  if (d.name.empty())
    d.name = d.kind == CorruptionKind::kSliceMask ? "k" + std::to_string(d.factor) : to_string(d.kind);
}

}  // namespace lisr
