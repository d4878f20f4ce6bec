#include "lisr/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "lisr/checkpoint.hpp"
#include "lisr/error.hpp"
#include "lisr/serialization.hpp"

namespace lisr {

Shape AutoencoderConfig::input_shape() const {
  return {1, volume_shape[0], volume_shape[1], volume_shape[2]};
}

Shape AutoencoderConfig::latent_shape() const {
  const int f = 1 << downsampling_levels;
  return {latent_channels, volume_shape[0] / f, volume_shape[1] / f, volume_shape[2] / f};
}

void AutoencoderConfig::validate() const {
  if (downsampling_levels < 1 || downsampling_levels > 3)
    throw InvalidArgument("downsampling_levels must be 1, 2 or 3");
  const int f = 1 << downsampling_levels;
  for (int e : volume_shape)
    if (e <= 0 || e % f != 0)
      throw InvalidArgument("autoencoder volume extents must be positive multiples of " +
                            std::to_string(f));
  if (latent_channels <= 0) throw InvalidArgument("latent_channels must be positive");
  for (int c : encoder_channels)
    if (c <= 0) throw InvalidArgument("encoder channel counts must be positive");
  for (int c : decoder_channels)
    if (c <= 0) throw InvalidArgument("decoder channel counts must be positive");
  if (!(learning_rate > 0.0)) throw InvalidArgument("autoencoder learning_rate must be positive");
  if (kl_weight < 0.0 || perceptual_weight < 0.0)
    throw InvalidArgument("autoencoder loss weights must be non-negative");
  if (epochs < 0 || batch_size <= 0) throw InvalidArgument("invalid epochs/batch_size");
}

Latent LatentPosterior::sample(std::mt19937_64& rng) const {
  Tensor eps = normal_tensor(mean.shape(), rng);
  Tensor z = mean.data;
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += std::exp(0.5 * log_variance[i]) * eps[i];
  return {std::move(z), LatentRole::kClean};
}

// Hidden layer l: pre[l] = norm(conv(input)), act[l] = silu(pre[l]).
struct Autoencoder::EncoderPass {
  Tensor input;
  std::array<nn::GroupNorm::Cache, 4> norm;
  std::array<Tensor, 4> pre;
  std::array<Tensor, 4> act;
  Tensor head;
};

struct Autoencoder::DecoderPass : Tape {
  std::array<Tensor, 4> inputs;
  std::array<nn::GroupNorm::Cache, 4> norm;
  std::array<Tensor, 4> pre;
  std::array<Tensor, 4> act;
  Tensor out;
};

Autoencoder::Autoencoder(const AutoencoderConfig& config) : config_(config) {
  config_.validate();
  build_layers();
  params_.assign(layout_.size(), 0.0);
  std::mt19937_64 rng(derive_seed(config_.seed, 0));
  for (const auto& layer : encoder_) layer.initialize(params_, rng);
  for (const auto& layer : decoder_) layer.initialize(params_, rng);
  for (const auto& n : encoder_norms_) n.initialize(params_);
  for (const auto& n : decoder_norms_) n.initialize(params_);
}

Autoencoder::Autoencoder(const AutoencoderConfig& config, std::vector<double> params,
                         double latent_scale)
    : config_(config), params_(std::move(params)), latent_scale_(latent_scale) {
  config_.validate();
  build_layers();
  if (params_.size() != layout_.size())
    throw InvalidArgument("autoencoder: expected " + std::to_string(layout_.size()) +
                          " parameters, got " + std::to_string(params_.size()));
  if (!(latent_scale_ > 0.0) || !std::isfinite(latent_scale_))
    throw InvalidArgument("autoencoder: latent scale must be positive and finite");
  for (double v : params_)
    if (!std::isfinite(v)) throw InvalidArgument("autoencoder: non-finite parameter");
}

void Autoencoder::build_layers() {
  const auto& ec = config_.encoder_channels;
  const auto& dc = config_.decoder_channels;
  const int latent = config_.latent_channels;
  encoder_[0] = nn::Conv3d::create(layout_, 1, ec[0], 3, 1, 1);
  for (int l = 1; l < 4; ++l)
    encoder_[l] = nn::Conv3d::create(layout_, ec[l - 1], ec[l], 3, upsampled(l) ? 2 : 1, 1);
  encoder_[4] = nn::Conv3d::create(layout_, ec[3], 2 * latent, 1, 1, 0);
  decoder_[0] = nn::Conv3d::create(layout_, latent, dc[0], 3, 1, 1);
  decoder_[1] = nn::Conv3d::create(layout_, dc[0], dc[1], 3, 1, 1);
  decoder_[2] = nn::Conv3d::create(layout_, dc[1], dc[2], 3, 1, 1);
  decoder_[3] = nn::Conv3d::create(layout_, dc[2], dc[3], 3, 1, 1);
  decoder_[4] = nn::Conv3d::create(layout_, dc[3], 1, 3, 1, 1);
  for (int l = 0; l < 4; ++l) {
    encoder_norms_[l] = nn::GroupNorm::create(layout_, ec[l]);
    decoder_norms_[l] = nn::GroupNorm::create(layout_, dc[l]);
  }
}

Shape Autoencoder::latent_shape() const { return config_.latent_shape(); }
Shape Autoencoder::volume_shape() const { return config_.input_shape(); }

Autoencoder::EncoderPass Autoencoder::run_encoder(std::span<const double> p, const Tensor& x,
                                                  bool with_head) const {
  EncoderPass pass;
  pass.input = x;
  const Tensor* cur = &pass.input;
  for (int l = 0; l < 4; ++l) {
    const Tensor conv = encoder_[l].forward(p, *cur);
    pass.pre[l] = encoder_norms_[l].forward(p, conv, &pass.norm[l]);
    pass.act[l] = nn::silu(pass.pre[l]);
    cur = &pass.act[l];
  }
  if (with_head) pass.head = encoder_[4].forward(p, pass.act[3]);
  return pass;
}

Tensor Autoencoder::encoder_backward(std::span<const double> p, const EncoderPass& pass,
                                     const Tensor* g_head, std::vector<Tensor> g_features,
                                     std::span<double> grads, bool need_input) const {
  g_features.resize(4);
  auto take = [&](int l) {
    return g_features[l].empty() ? Tensor(pass.act[l].shape()) : std::move(g_features[l]);
  };
  Tensor g_act = take(3);
  if (g_head != nullptr) g_act += encoder_[4].backward(p, pass.act[3], *g_head, grads);
  for (int l = 3; l >= 0; --l) {
    const Tensor g_pre = encoder_norms_[l].backward(
        p, pass.norm[l], nn::silu_backward(pass.pre[l], g_act), grads);
    const Tensor& input = l == 0 ? pass.input : pass.act[l - 1];
    if (l == 0 && !need_input) {
      if (!grads.empty()) encoder_[0].backward_params(input, g_pre, grads);
      return {};
    }
    Tensor g_in = encoder_[l].backward(p, input, g_pre, grads);
    if (l == 0) return g_in;
    g_act = take(l - 1);
    g_act += g_in;
  }
  return {};
}

Autoencoder::DecoderPass Autoencoder::run_decoder(std::span<const double> p,
                                                  const Tensor& z_raw) const {
  DecoderPass pass;
  pass.inputs[0] = z_raw;
  for (int l = 0; l < 4; ++l) {
    if (l > 0)
      pass.inputs[l] = upsampled(l) ? kernels::upsample2(pass.act[l - 1]) : pass.act[l - 1];
    const Tensor conv = decoder_[l].forward(p, pass.inputs[l]);
    pass.pre[l] = decoder_norms_[l].forward(p, conv, &pass.norm[l]);
    pass.act[l] = nn::silu(pass.pre[l]);
  }
  pass.out = nn::sigmoid(decoder_[4].forward(p, pass.act[3]));
  return pass;
}

Tensor Autoencoder::decoder_backward(std::span<const double> p, const DecoderPass& pass,
                                     const Tensor& g_out, std::span<double> grads) const {
  const Tensor g_logits = nn::sigmoid_backward(pass.out, g_out);
  Tensor g_act = decoder_[4].backward(p, pass.act[3], g_logits, grads);
  for (int l = 3; l >= 0; --l) {
    const Tensor g_pre = decoder_norms_[l].backward(
        p, pass.norm[l], nn::silu_backward(pass.pre[l], g_act), grads);
    Tensor g_in = decoder_[l].backward(p, pass.inputs[l], g_pre, grads);
    if (l == 0) return g_in;
    g_act = upsampled(l) ? kernels::upsample2_backward(g_in) : std::move(g_in);
  }
  return {};
}

LatentPosterior Autoencoder::encode(const Volume& x) const {
  require_same_shape(x.shape(), volume_shape(), "encode");
  const EncoderPass pass = run_encoder(params_, x.data, true);
  const Shape ls = latent_shape();
  Tensor mean(ls), logvar(ls);
  const std::size_t n = ls.size();
  const double log_scale2 = 2.0 * std::log(latent_scale_);
  for (std::size_t i = 0; i < n; ++i) {
    mean[i] = pass.head[i] * latent_scale_;
    logvar[i] = pass.head[n + i] + log_scale2;
  }
  return {{std::move(mean), LatentRole::kClean}, std::move(logvar)};
}

Volume Autoencoder::decode(const Latent& z) const {
  return Volume(decode(z.data, nullptr));
}

Tensor Autoencoder::decode(const Tensor& z, std::unique_ptr<Tape>* tape) const {
  require_same_shape(z.shape(), latent_shape(), "decode");
  DecoderPass pass = run_decoder(params_, z * (1.0 / latent_scale_));
  Tensor out = pass.out;
  if (tape != nullptr) *tape = std::make_unique<DecoderPass>(std::move(pass));
  return out;
}

Tensor Autoencoder::decode_pullback(const Tape& tape, const Tensor& g_x) const {
  const auto* pass = dynamic_cast<const DecoderPass*>(&tape);
  if (pass == nullptr) throw InvalidArgument("decode_pullback: foreign tape");
  require_same_shape(g_x.shape(), volume_shape(), "decode_pullback");
  Tensor g = decoder_backward(params_, *pass, g_x, {});
  g *= 1.0 / latent_scale_;
  return g;
}

std::vector<Tensor> Autoencoder::features(const Tensor& x) const {
  require_same_shape(x.shape(), volume_shape(), "features");
  EncoderPass pass = run_encoder(params_, x, false);
  return {pass.act.begin(), pass.act.end()};
}

double Autoencoder::feature_distance(std::span<const double> fp, const Tensor& a,
                                     const Tensor& b, Tensor* grad_a) const {
  require_same_shape(a.shape(), volume_shape(), "perceptual distance");
  require_same_shape(b.shape(), volume_shape(), "perceptual distance");
  const EncoderPass pa = run_encoder(fp, a, false);
  const EncoderPass pb = run_encoder(fp, b, false);
  double total = 0.0;
  std::vector<Tensor> g(4);
  for (int l = 0; l < 4; ++l) {
    const Tensor& fa = pa.act[l];
    const Tensor& fb = pb.act[l];
    const double inv_n = 1.0 / static_cast<double>(fa.size());
    double acc = 0.0;
    if (grad_a != nullptr) g[l] = Tensor(fa.shape());
    for (std::size_t i = 0; i < fa.size(); ++i) {
      const double d = fa[i] - fb[i];
      acc += d * d;
      if (grad_a != nullptr) g[l][i] = 2.0 * d * inv_n;
    }
    total += acc * inv_n;
  }
  if (grad_a != nullptr) *grad_a = encoder_backward(fp, pa, nullptr, std::move(g), {}, true);
  return total;
}

double Autoencoder::distance(const Tensor& a, const Tensor& b, Tensor* grad_a) const {
  return feature_distance(params_, a, b, grad_a);
}

double Autoencoder::perceptual_loss(const Volume& a, const Volume& b) const {
  return distance(a.data, b.data, nullptr);
}

AutoencoderLoss Autoencoder::training_loss(std::span<const double> params,
                                           std::span<const double> feature_params,
                                           const Tensor& x, const Tensor& eps,
                                           std::span<double> grads) const {
  require_same_shape(x.shape(), volume_shape(), "training_loss");
  require_same_shape(eps.shape(), latent_shape(), "training_loss eps");
  if (params.size() != layout_.size() || feature_params.size() != layout_.size())
    throw InvalidArgument("training_loss: parameter vector size mismatch");

  const EncoderPass pe = run_encoder(params, x, true);
  const Shape ls = latent_shape();
  const std::size_t n = ls.size();
  Tensor mu(ls), logvar(ls), z(ls), sd(ls);
  for (std::size_t i = 0; i < n; ++i) {
    mu[i] = pe.head[i];
    logvar[i] = pe.head[n + i];
    sd[i] = std::exp(0.5 * logvar[i]);
    z[i] = mu[i] + sd[i] * eps[i];
  }
  const DecoderPass pd = run_decoder(params, z);

  AutoencoderLoss loss;
  Tensor g_out(x.shape());
  const double inv_voxels = 1.0 / static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = pd.out[i] - x[i];
    loss.l1 += std::abs(r);
    g_out[i] = (r > 0.0 ? 1.0 : r < 0.0 ? -1.0 : 0.0) * inv_voxels;
  }
  loss.l1 *= inv_voxels;

  if (config_.perceptual_weight > 0.0) {
    Tensor g_perc;
    loss.perceptual = feature_distance(feature_params, pd.out, x, grads.empty() ? nullptr : &g_perc);
    if (!grads.empty()) axpy(config_.perceptual_weight, g_perc, g_out);
  }
  for (std::size_t i = 0; i < n; ++i)
    loss.kl += 0.5 * (mu[i] * mu[i] + std::exp(logvar[i]) - 1.0 - logvar[i]);
  loss.total = loss.l1 + config_.perceptual_weight * loss.perceptual + config_.kl_weight * loss.kl;

  if (!grads.empty()) {
    const Tensor g_z = decoder_backward(params, pd, g_out, grads);
    Tensor g_head(pe.head.shape());
    for (std::size_t i = 0; i < n; ++i) {
      g_head[i] = g_z[i] + config_.kl_weight * mu[i];
      g_head[n + i] = g_z[i] * eps[i] * 0.5 * sd[i] +
                      config_.kl_weight * 0.5 * (std::exp(logvar[i]) - 1.0);
    }
    encoder_backward(params, pe, &g_head, {}, grads, false);
  }
  return loss;
}

Autoencoder Autoencoder::with_parameters(std::vector<double> params) const {
  return Autoencoder(config_, std::move(params), 1.0);
}

double autoencoder_heldout_loss(const Autoencoder& ae, std::span<const Volume> data) {
  if (data.empty()) throw InvalidArgument("held-out set is empty");
  const double log_scale2 = 2.0 * std::log(ae.latent_scale());
  double total = 0.0;
  for (const Volume& x : data) {
    const LatentPosterior post = ae.encode(x);
    const Volume recon = ae.decode(post.mean);
    double l1 = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) l1 += std::abs(recon.data[i] - x.data[i]);
    l1 /= static_cast<double>(x.data.size());
    double kl = 0.0;
    for (std::size_t i = 0; i < post.mean.data.size(); ++i) {
      const double mu = post.mean.data[i] / ae.latent_scale();
      const double lv = post.log_variance[i] - log_scale2;
      kl += 0.5 * (mu * mu + std::exp(lv) - 1.0 - lv);
    }
    total += l1 + ae.config().kl_weight * kl;
  }
  return total / static_cast<double>(data.size());
}

Autoencoder train_autoencoder(std::span<const Volume> data, const AutoencoderConfig& config,
                              TrainingCurve* curve) {
  if (data.empty()) throw InvalidArgument("train_autoencoder: empty dataset");
  if (data.size() < 2) throw InvalidArgument("train_autoencoder: need at least 2 volumes");
  config.validate();
  for (const Volume& v : data) require_same_shape(v.shape(), config.input_shape(), "train_autoencoder");

  const std::size_t heldout_count = std::max<std::size_t>(1, data.size() / 10);
  const std::span<const Volume> train = data.first(data.size() - heldout_count);
  const std::span<const Volume> heldout = data.last(heldout_count);

  Autoencoder model(config);
  std::vector<double> params(model.parameters().begin(), model.parameters().end());
  nn::Adam adam(params.size(), {config.learning_rate, 0.9, 0.999, 1e-8});
  std::mt19937_64 rng(derive_seed(config.seed, 1));

  if (curve != nullptr) {
    curve->train.clear();
    curve->heldout = {autoencoder_heldout_loss(model, heldout)};
  }

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grads(params.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<double> feature_params = params;
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::fill(grads.begin(), grads.end(), 0.0);
      for (std::size_t b = start; b < stop; ++b) {
        const Tensor eps = normal_tensor(config.latent_shape(), rng);
        epoch_loss += model.training_loss(params, feature_params, train[order[b]].data, eps, grads).total;
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (double& g : grads) g *= inv;
      adam.step(params, grads);
    }
    if (curve != nullptr) {
      curve->train.push_back(epoch_loss / static_cast<double>(train.size()));
      curve->heldout.push_back(autoencoder_heldout_loss(model.with_parameters(params), heldout));
    }
  }

  // Standardize latents: scale = 1 / std of the training posterior means.
  const Autoencoder trained = model.with_parameters(params);
  double s1 = 0.0, s2 = 0.0;
  std::size_t count = 0;
  for (const Volume& v : train) {
    const LatentPosterior posterior = trained.encode(v);
    for (double m : posterior.mean.data.values()) {
      s1 += m;
      s2 += m * m;
      ++count;
    }
  }
  const double mean = s1 / static_cast<double>(count);
  const double var = s2 / static_cast<double>(count) - mean * mean;
  const double scale = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;
  return Autoencoder(config, std::move(params), scale);
}

void save_autoencoder(const Autoencoder& ae, const std::filesystem::path& base) {
  const std::filesystem::path weights(base.string() + ".weights");
  write_weights(weights, ae.parameters());
  nlohmann::json j;
  j["format"] = "lisr-autoencoder";
  j["version"] = 1;
  j["config"] = ae.config();
  const Shape ls = ae.latent_shape();
  j["latent_shape"] = {ls.c, ls.d, ls.h, ls.w};
  j["latent_scale"] = ae.latent_scale();
  j["training_seed"] = ae.config().seed;
  j["parameter_count"] = ae.parameter_count();
  j["weights_file"] = weights.filename().string();
  write_file_atomic(base.string() + ".json", j.dump(2) + "\n");
}

Autoencoder load_autoencoder(const std::filesystem::path& base) {
  const std::string path = base.string() + ".json";
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
    if (j.at("format").get<std::string>() != "lisr-autoencoder")
      throw ParseError(path, "not an autoencoder checkpoint");
    if (j.at("version").get<int>() != 1) throw ParseError(path, "unsupported checkpoint version");
    const auto config = j.at("config").get<AutoencoderConfig>();
    const double scale = j.at("latent_scale").get<double>();
    std::vector<double> params = read_weights(base.parent_path() / j.at("weights_file").get<std::string>());
    return Autoencoder(config, std::move(params), scale);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, std::string("invalid checkpoint descriptor: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(path, e.what());
  }
}

}  // namespace lisr
