#include "lisr/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "lisr/checkpoint.hpp"
#include "lisr/error.hpp"
#include "lisr/serialization.hpp"

namespace lisr {

NoiseSchedule::NoiseSchedule(std::vector<double> alphas) : alphas_(std::move(alphas)) {
  if (alphas_.empty()) throw InvalidArgument("noise schedule must have at least one step");
  for (std::size_t i = 0; i < alphas_.size(); ++i) {
    const double a = alphas_[i];
    if (!(a > 0.0 && a <= 1.0)) throw InvalidArgument("noise schedule alphas must lie in (0,1]");
    if (i > 0 && !(a < alphas_[i - 1]))
      throw InvalidArgument("noise schedule alphas must be strictly decreasing");
  }
}

NoiseSchedule NoiseSchedule::scaled_linear(const ScheduleConfig& config) {
  if (config.train_steps < 1) throw InvalidArgument("train_steps must be positive");
  if (!(config.beta_start > 0.0 && config.beta_end < 1.0 && config.beta_start <= config.beta_end))
    throw InvalidArgument("beta range must satisfy 0 < beta_start <= beta_end < 1");
  const int n = config.train_steps;
  const double r0 = std::sqrt(config.beta_start);
  const double r1 = std::sqrt(config.beta_end);
  std::vector<double> alphas(n);
  double prod = 1.0;
  for (int i = 0; i < n; ++i) {
    const double r = n == 1 ? r0 : r0 + (r1 - r0) * static_cast<double>(i) / (n - 1);
    prod *= 1.0 - r * r;
    alphas[i] = prod;
  }
  return NoiseSchedule(std::move(alphas));
}

double NoiseSchedule::alpha(int t) const {
  if (t < 0 || t > train_steps())
    throw InvalidArgument("timestep " + std::to_string(t) + " outside [0, " +
                          std::to_string(train_steps()) + "]");
  return t == 0 ? 1.0 : alphas_[t - 1];
}

TimestepSubsequence::TimestepSubsequence(std::vector<int> steps, int train_steps)
    : steps_(std::move(steps)) {
  if (steps_.empty()) throw InvalidArgument("timestep subsequence must be nonempty");
  for (std::size_t i = 0; i < steps_.size(); ++i) {
    if (steps_[i] < 1 || steps_[i] > train_steps)
      throw InvalidArgument("timestep subsequence entry outside [1, T_train]");
    if (i > 0 && steps_[i] <= steps_[i - 1])
      throw InvalidArgument("timestep subsequence must be strictly increasing");
  }
  if (steps_.back() != train_steps)
    throw InvalidArgument("timestep subsequence must end at T_train");
}

TimestepSubsequence TimestepSubsequence::evenly_spaced(int train_steps, int count) {
  if (count < 1 || count > train_steps)
    throw InvalidArgument("inference step count must lie in [1, T_train]");
  std::vector<int> steps(count);
  for (int i = 1; i <= count; ++i) {
    const long long num = 2LL * i * train_steps + count;
    steps[i - 1] = static_cast<int>(num / (2LL * count));
  }
  return TimestepSubsequence(std::move(steps), train_steps);
}

namespace {

void check_timestep(const NoiseSchedule& s, int t) {
  if (t < 1 || t > s.train_steps())
    throw InvalidArgument("timestep " + std::to_string(t) + " outside [1, " +
                          std::to_string(s.train_steps()) + "]");
}

void check_predictor_args(const NoisePredictor& model, const Shape& z, std::size_t cond) {
  require_same_shape(z, model.latent_shape(), "noise predictor input");
  if (cond != static_cast<std::size_t>(model.conditioning_size()))
    throw InvalidArgument("conditioning has " + std::to_string(cond) + " entries, expected " +
                          std::to_string(model.conditioning_size()));
}

}  // namespace

Latent forward_noising(const NoiseSchedule& schedule, const Latent& z0, int t, const Latent& eps) {
  check_timestep(schedule, t);
  require_same_shape(z0.shape(), eps.shape(), "forward_noising");
  const double a = schedule.alpha(t);
  const double s0 = std::sqrt(a);
  const double s1 = std::sqrt(1.0 - a);
  Tensor out(z0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s0 * z0.data[i] + s1 * eps.data[i];
  return {std::move(out), LatentRole::kNoisy};
}

double diffusion_training_loss(const NoisePredictor& model, const NoiseSchedule& schedule,
                               const Latent& z0, const Conditioning& cond, int t,
                               const Latent& eps) {
  check_predictor_args(model, z0.shape(), cond.size());
  require_same_shape(z0.shape(), eps.shape(), "diffusion_training_loss");
  const Latent zt = forward_noising(schedule, z0, t, eps);
  const Tensor pred = model.predict(zt.data, t, cond.values(), nullptr);
  double loss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = eps.data[i] - pred[i];
    loss += d * d;
  }
  return loss;
}

Latent predicted_x0(const NoisePredictor& model, const NoiseSchedule& schedule, const Latent& z_t,
                    const Conditioning& cond, int t) {
  check_timestep(schedule, t);
  check_predictor_args(model, z_t.shape(), cond.size());
  const double a = schedule.alpha(t);
  if (!(a > 0.0)) throw InvalidArgument("singular schedule endpoint");
  const Tensor eps = model.predict(z_t.data, t, cond.values(), nullptr);
  const double s1 = std::sqrt(1.0 - a);
  const double s0 = std::sqrt(a);
  Tensor out(z_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (z_t.data[i] - s1 * eps[i]) / s0;
  return {std::move(out), LatentRole::kClean};
}

Tensor ddim_update(const Tensor& z_t, const Tensor& eps, double alpha_t, double alpha_prev) {
  require_same_shape(z_t.shape(), eps.shape(), "ddim_update");
  if (!(alpha_t > 0.0)) throw InvalidArgument("singular schedule endpoint");
  const double st = std::sqrt(alpha_t);
  const double nt = std::sqrt(1.0 - alpha_t);
  const double sp = std::sqrt(alpha_prev);
  const double np = std::sqrt(1.0 - alpha_prev);
  Tensor out(z_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x0 = (z_t[i] - nt * eps[i]) / st;
    out[i] = sp * x0 + np * eps[i];
  }
  return out;
}

Latent ddim_step(const NoiseSchedule& schedule, const NoisePredictor& model, const Latent& z_t,
                 const Conditioning& cond, int t, int t_prev) {
  check_timestep(schedule, t);
  if (t_prev >= t) throw InvalidArgument("ddim_step requires t_prev < t");
  if (t_prev < 0) throw InvalidArgument("ddim_step requires t_prev >= 0");
  check_predictor_args(model, z_t.shape(), cond.size());
  const Tensor eps = model.predict(z_t.data, t, cond.values(), nullptr);
  return {ddim_update(z_t.data, eps, schedule.alpha(t), schedule.alpha(t_prev)),
          t_prev == 0 ? LatentRole::kClean : LatentRole::kNoisy};
}

Tensor ddim_sample_traced(const NoiseSchedule& schedule, const NoisePredictor& model,
                          const Tensor& z_T, std::span<const double> cond,
                          const TimestepSubsequence& subseq, DdimTrace* trace) {
  check_predictor_args(model, z_T.shape(), cond.size());
  if (subseq.steps().back() != schedule.train_steps())
    throw InvalidArgument("timestep subsequence does not match the schedule length");
  const auto& steps = subseq.steps();
  if (trace != nullptr) *trace = DdimTrace{};
  Tensor z = z_T;
  for (int i = subseq.size() - 1; i >= 0; --i) {
    const int t = steps[i];
    const int t_prev = i > 0 ? steps[i - 1] : 0;
    std::unique_ptr<Tape> tape;
    const Tensor eps = model.predict(z, t, cond, trace != nullptr ? &tape : nullptr);
    Tensor next = ddim_update(z, eps, schedule.alpha(t), schedule.alpha(t_prev));
    if (trace != nullptr) {
      trace->from.push_back(t);
      trace->to.push_back(t_prev);
      trace->states.push_back(std::move(z));
      trace->tapes.push_back(std::move(tape));
    }
    z = std::move(next);
  }
  return z;
}

Latent ddim_sample(const NoiseSchedule& schedule, const NoisePredictor& model, const Latent& z_T,
                   const Conditioning& cond, const TimestepSubsequence& subseq) {
  return {ddim_sample_traced(schedule, model, z_T.data, cond.values(), subseq, nullptr),
          LatentRole::kClean};
}

void ddim_sample_pullback(const NoiseSchedule& schedule, const NoisePredictor& model,
                          std::span<const double> cond, const DdimTrace& trace,
                          const Tensor& g_z0, Tensor& g_zT, std::span<double> g_cond) {
  if (g_cond.size() != cond.size()) throw InvalidArgument("ddim pullback: conditioning size");
  Tensor g = g_z0;
  for (int k = static_cast<int>(trace.from.size()) - 1; k >= 0; --k) {
    const double at = schedule.alpha(trace.from[k]);
    const double ap = schedule.alpha(trace.to[k]);
    const double a = std::sqrt(ap) / std::sqrt(at);
    const double b = std::sqrt(1.0 - ap) - std::sqrt(ap) * std::sqrt(1.0 - at) / std::sqrt(at);
    Tensor g_prev = g * a;
    model.predict_pullback(trace.tapes[k].get(), trace.states[k], trace.from[k], cond, g * b,
                           g_prev, g_cond);
    g = std::move(g_prev);
  }
  g_zT = std::move(g);
}

// ---------------------------------------------------------------------------
// Denoiser

void DenoiserConfig::validate() const {
  if (latent_channels <= 0 || latent_grid[0] <= 0 || latent_grid[1] <= 0 || latent_grid[2] <= 0)
    throw InvalidArgument("denoiser latent shape must be positive");
  if (conditioning_size < 0) throw InvalidArgument("conditioning_size must be >= 0");
  if (hidden_channels <= 0 || blocks <= 0 || embedding_width <= 0)
    throw InvalidArgument("denoiser widths must be positive");
  if (time_features <= 0 || time_features % 2 != 0)
    throw InvalidArgument("time_features must be a positive even number");
  if (!(learning_rate > 0.0) || epochs < 0 || batch_size <= 0)
    throw InvalidArgument("invalid denoiser training hyperparameters");
}

struct Denoiser::Pass : Tape {
  std::vector<double> emb_in;
  std::vector<double> pre_e1;
  std::vector<double> act_e1;
  std::vector<double> pre_e2;
  std::vector<double> h_emb;
  std::vector<Tensor> inputs;
  std::vector<Tensor> pre;
  Tensor last_act;
  Tensor out;
};

Denoiser::Denoiser(const DenoiserConfig& config) : config_(config) {
  config_.validate();
  build_layers();
  params_.assign(layout_.size(), 0.0);
  std::mt19937_64 rng(derive_seed(config_.seed, 100));
  embed_in_.initialize(params_, rng);
  embed_hidden_.initialize(params_, rng);
  for (const auto& p : projections_) p.initialize(params_, rng);
  for (const auto& c : convs_) c.initialize(params_, rng);
  conv_out_.initialize(params_, rng);
}

Denoiser::Denoiser(const DenoiserConfig& config, std::vector<double> params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  build_layers();
  if (params_.size() != layout_.size())
    throw InvalidArgument("denoiser: expected " + std::to_string(layout_.size()) +
                          " parameters, got " + std::to_string(params_.size()));
  for (double v : params_)
    if (!std::isfinite(v)) throw InvalidArgument("denoiser: non-finite parameter");
}

void Denoiser::build_layers() {
  const int h = config_.hidden_channels;
  const int e = config_.embedding_width;
  embed_in_ = nn::Dense::create(layout_, config_.time_features + config_.conditioning_size, e);
  embed_hidden_ = nn::Dense::create(layout_, e, e);
  for (int b = 0; b < config_.blocks; ++b) {
    projections_.push_back(nn::Dense::create(layout_, e, h));
    convs_.push_back(nn::Conv3d::create(layout_, b == 0 ? config_.latent_channels : h, h, 3, 1, 1));
  }
  conv_out_ = nn::Conv3d::create(layout_, h, config_.latent_channels, 3, 1, 1);
}

Denoiser Denoiser::with_parameters(std::vector<double> params) const {
  return Denoiser(config_, std::move(params));
}

std::vector<double> Denoiser::time_features(int t) const {
  const int half = config_.time_features / 2;
  std::vector<double> f(config_.time_features);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
    f[i] = std::sin(t * freq);
    f[half + i] = std::cos(t * freq);
  }
  return f;
}

std::unique_ptr<Denoiser::Pass> Denoiser::run(const Tensor& z, int t,
                                              std::span<const double> cond) const {
  check_predictor_args(*this, z.shape(), cond.size());
  auto pass = std::make_unique<Pass>();
  pass->emb_in = time_features(t);
  pass->emb_in.insert(pass->emb_in.end(), cond.begin(), cond.end());
  pass->pre_e1 = embed_in_.forward(params_, pass->emb_in);
  pass->act_e1 = nn::silu(std::span<const double>(pass->pre_e1));
  pass->pre_e2 = embed_hidden_.forward(params_, pass->act_e1);
  pass->h_emb = nn::silu(std::span<const double>(pass->pre_e2));

  Tensor cur = z;
  for (int b = 0; b < config_.blocks; ++b) {
    Tensor pre = convs_[b].forward(params_, cur);
    nn::add_channel_bias(pre, projections_[b].forward(params_, pass->h_emb));
    Tensor act = nn::silu(pre);
    pass->inputs.push_back(std::move(cur));
    pass->pre.push_back(std::move(pre));
    cur = std::move(act);
  }
  pass->out = conv_out_.forward(params_, cur);
  pass->last_act = std::move(cur);
  return pass;
}

Tensor Denoiser::predict(const Tensor& z, int t, std::span<const double> cond,
                         std::unique_ptr<Tape>* tape) const {
  std::unique_ptr<Pass> pass = run(z, t, cond);
  Tensor out = pass->out;
  if (tape != nullptr) *tape = std::move(pass);
  return out;
}

void Denoiser::backward(const Tape& tape, const Tensor& g_eps, Tensor* g_z,
                        std::span<double> g_cond, std::span<double> grads) const {
  const auto* pass = dynamic_cast<const Pass*>(&tape);
  if (pass == nullptr) throw InvalidArgument("denoiser backward: foreign tape");
  require_same_shape(g_eps.shape(), latent_shape(), "denoiser backward");

  Tensor g_act = conv_out_.backward(params_, pass->last_act, g_eps, grads);
  std::vector<double> g_hemb(config_.embedding_width, 0.0);
  for (int b = config_.blocks - 1; b >= 0; --b) {
    const Tensor g_pre = nn::silu_backward(pass->pre[b], g_act);
    const std::vector<double> g_bias = nn::channel_sums(g_pre);
    const std::vector<double> g_h = projections_[b].backward(params_, pass->h_emb, g_bias, grads);
    for (std::size_t i = 0; i < g_h.size(); ++i) g_hemb[i] += g_h[i];
    if (b > 0) {
      g_act = convs_[b].backward(params_, pass->inputs[b], g_pre, grads);
    } else if (g_z != nullptr) {
      *g_z += convs_[0].backward(params_, pass->inputs[0], g_pre, grads);
    } else if (!grads.empty()) {
      convs_[0].backward_params(pass->inputs[0], g_pre, grads);
    }
  }

  const auto g_pre_e2 = nn::silu_backward(pass->pre_e2, g_hemb);
  const auto g_act_e1 = embed_hidden_.backward(params_, pass->act_e1, g_pre_e2, grads);
  const auto g_pre_e1 = nn::silu_backward(pass->pre_e1, g_act_e1);
  const auto g_emb_in = embed_in_.backward(params_, pass->emb_in, g_pre_e1, grads);
  for (std::size_t i = 0; i < g_cond.size(); ++i) g_cond[i] += g_emb_in[config_.time_features + i];
}

void Denoiser::predict_pullback(const Tape* tape, const Tensor& z, int t,
                                std::span<const double> cond, const Tensor& g_eps, Tensor& g_z,
                                std::span<double> g_cond) const {
  std::unique_ptr<Pass> recomputed;
  if (tape == nullptr) {
    recomputed = run(z, t, cond);
    tape = recomputed.get();
  }
  if (g_z.empty()) g_z = Tensor(latent_shape());
  backward(*tape, g_eps, &g_z, g_cond, {});
}

double denoiser_loss(const Denoiser& model, const NoiseSchedule& schedule,
                     std::span<const Latent> latents, std::span<const Conditioning> cond,
                     std::uint64_t seed) {
  if (latents.size() != cond.size() || latents.empty())
    throw InvalidArgument("denoiser_loss: latents and conditioning must pair up");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_t(1, schedule.train_steps());
  double total = 0.0;
  for (std::size_t i = 0; i < latents.size(); ++i) {
    const int t = pick_t(rng);
    const Latent eps{normal_tensor(latents[i].shape(), rng), LatentRole::kClean};
    total += diffusion_training_loss(model, schedule, latents[i], cond[i], t, eps);
  }
  return total / static_cast<double>(latents.size());
}

Denoiser train_denoiser(const LatentDataset& data, const DenoiserConfig& config,
                        TrainingCurve* curve) {
  const std::size_t n = data.latents.size();
  if (n == 0) throw InvalidArgument("train_denoiser: empty dataset");
  if (n < 2) throw InvalidArgument("train_denoiser: need at least 2 samples");
  if (data.conditioning.size() != n)
    throw InvalidArgument("train_denoiser: latents and conditioning differ in length");
  config.validate();
  const NoiseSchedule schedule = NoiseSchedule::scaled_linear(config.schedule);
  for (std::size_t i = 0; i < n; ++i) {
    require_same_shape(data.latents[i].shape(), config.latent_shape(), "train_denoiser");
    if (data.conditioning[i].size() != static_cast<std::size_t>(config.conditioning_size))
      throw InvalidArgument("train_denoiser: conditioning size mismatch");
  }

  const std::size_t heldout = std::max<std::size_t>(1, n / 10);
  const std::size_t train = n - heldout;
  const std::span<const Latent> all_latents(data.latents);
  const std::span<const Conditioning> all_cond(data.conditioning);
  const std::uint64_t eval_seed = derive_seed(config.seed, 201);

  Denoiser model(config);
  std::vector<double> params(model.parameters().begin(), model.parameters().end());
  nn::Adam adam(params.size(), {config.learning_rate, 0.9, 0.999, 1e-8});
  std::mt19937_64 rng(derive_seed(config.seed, 202));
  std::uniform_int_distribution<int> pick_t(1, schedule.train_steps());

  if (curve != nullptr) {
    curve->train.clear();
    curve->heldout = {denoiser_loss(model, schedule, all_latents.last(heldout),
                                    all_cond.last(heldout), eval_seed)};
  }

  std::vector<std::size_t> order(train);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grads(params.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < train; start += config.batch_size) {
      const std::size_t stop = std::min(train, start + config.batch_size);
      std::fill(grads.begin(), grads.end(), 0.0);
      const Denoiser current = model.with_parameters(params);
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t idx = order[b];
        const int t = pick_t(rng);
        const Latent eps{normal_tensor(config.latent_shape(), rng), LatentRole::kClean};
        const Latent zt = forward_noising(schedule, data.latents[idx], t, eps);
        std::unique_ptr<Tape> tape;
        const Tensor pred = current.predict(zt.data, t, data.conditioning[idx].values(), &tape);
        Tensor g = pred - eps.data;
        epoch_loss += dot(g, g);
        g *= 2.0;
        current.backward(*tape, g, nullptr, {}, grads);
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (double& v : grads) v *= inv;
      adam.step(params, grads);
    }
    if (curve != nullptr) {
      curve->train.push_back(epoch_loss / static_cast<double>(train));
      curve->heldout.push_back(denoiser_loss(model.with_parameters(params), schedule,
                                             all_latents.last(heldout), all_cond.last(heldout),
                                             eval_seed));
    }
  }
  return Denoiser(config, std::move(params));
}

void save_denoiser(const Denoiser& model, const std::filesystem::path& base) {
  const std::filesystem::path weights(base.string() + ".weights");
  write_weights(weights, model.parameters());
  nlohmann::json j;
  j["format"] = "lisr-denoiser";
  j["version"] = 1;
  j["config"] = model.config();
  j["schedule"] = model.config().schedule;
  j["conditioning_size"] = model.config().conditioning_size;
  j["training_seed"] = model.config().seed;
  j["parameter_count"] = model.parameter_count();
  j["weights_file"] = weights.filename().string();
  write_file_atomic(base.string() + ".json", j.dump(2) + "\n");
}

Denoiser load_denoiser(const std::filesystem::path& base) {
  const std::string path = base.string() + ".json";
  try {
    const nlohmann::json j = nlohmann::json::parse(read_file(path));
    if (j.at("format").get<std::string>() != "lisr-denoiser")
      throw ParseError(path, "not a denoiser checkpoint");
    if (j.at("version").get<int>() != 1) throw ParseError(path, "unsupported checkpoint version");
    const auto config = j.at("config").get<DenoiserConfig>();
    std::vector<double> params =
        read_weights(base.parent_path() / j.at("weights_file").get<std::string>());
    return Denoiser(config, std::move(params));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, std::string("invalid checkpoint descriptor: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(path, e.what());
  }
}

}  // namespace lisr
