#include "lisr/nn.hpp"

#include <algorithm>
#include <cmath>

#include "lisr/error.hpp"

namespace lisr::nn {

Conv3d Conv3d::create(ParamLayout& layout, int in, int out, int kernel, int stride, int pad) {
  Conv3d c;
  c.geometry = {in, out, kernel, stride, pad};
  c.weight_offset = layout.reserve(c.geometry.weight_count());
  c.bias_offset = layout.reserve(out);
  return c;
}

std::span<const double> Conv3d::weight(std::span<const double> params) const {
  return params.subspan(weight_offset, geometry.weight_count());
}

std::span<const double> Conv3d::bias(std::span<const double> params) const {
  return params.subspan(bias_offset, geometry.out_channels);
}

Tensor Conv3d::forward(std::span<const double> params, const Tensor& x) const {
  return kernels::conv3d_forward(x, weight(params), bias(params), geometry);
}

Tensor Conv3d::backward(std::span<const double> params, const Tensor& x, const Tensor& gy,
                        std::span<double> grads) const {
  if (!grads.empty()) backward_params(x, gy, grads);
  return kernels::conv3d_backward_input(gy, weight(params), geometry, x.shape());
}

void Conv3d::backward_params(const Tensor& x, const Tensor& gy, std::span<double> grads) const {
  kernels::conv3d_backward_params(x, gy, geometry,
                                  grads.subspan(weight_offset, geometry.weight_count()),
                                  grads.subspan(bias_offset, geometry.out_channels));
}

void Conv3d::initialize(std::span<double> params, std::mt19937_64& rng) const {
  const int k = geometry.kernel;
  const double fan_in = static_cast<double>(geometry.in_channels) * k * k * k;
  const double bound = std::sqrt(3.0 / fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& w : params.subspan(weight_offset, geometry.weight_count())) w = dist(rng);
  for (double& b : params.subspan(bias_offset, geometry.out_channels)) b = 0.0;
}

GroupNorm GroupNorm::create(ParamLayout& layout, int channels, int max_groups) {
  if (channels <= 0 || max_groups <= 0) throw InvalidArgument("group norm: bad channel count");
  GroupNorm n;
  n.channels = channels;
  n.groups = 1;
  for (int g = std::min(channels, max_groups); g > 1; --g) {
    if (channels % g == 0) {
      n.groups = g;
      break;
    }
  }
  n.scale_offset = layout.reserve(channels);
  n.shift_offset = layout.reserve(channels);
  return n;
}

Tensor GroupNorm::forward(std::span<const double> params, const Tensor& x, Cache* cache) const {
  if (x.shape().c != channels) throw InvalidArgument("group norm: channel mismatch");
  const std::size_t per_channel = static_cast<std::size_t>(x.shape().d) * x.shape().h * x.shape().w;
  const int cpg = channels / groups;
  const std::size_t n = per_channel * cpg;
  Tensor xhat(x.shape());
  std::vector<double> inv_std(groups);
  for (int g = 0; g < groups; ++g) {
    const double* in = x.data() + g * n;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += in[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (in[i] - mean) * (in[i] - mean);
    var /= static_cast<double>(n);
    inv_std[g] = 1.0 / std::sqrt(var + kEpsilon);
    double* out = xhat.data() + g * n;
    for (std::size_t i = 0; i < n; ++i) out[i] = (in[i] - mean) * inv_std[g];
  }
  Tensor y(x.shape());
  for (int c = 0; c < channels; ++c) {
    const double a = params[scale_offset + c], b = params[shift_offset + c];
    const double* in = xhat.data() + c * per_channel;
    double* out = y.data() + c * per_channel;
    for (std::size_t i = 0; i < per_channel; ++i) out[i] = a * in[i] + b;
  }
  if (cache != nullptr) *cache = {std::move(xhat), std::move(inv_std)};
  return y;
}

Tensor GroupNorm::backward(std::span<const double> params, const Cache& cache, const Tensor& gy,
                           std::span<double> grads) const {
  require_same_shape(cache.normalized.shape(), gy.shape(), "group norm backward");
  const Tensor& xhat = cache.normalized;
  const std::size_t per_channel = static_cast<std::size_t>(gy.shape().d) * gy.shape().h * gy.shape().w;
  const int cpg = channels / groups;
  const std::size_t n = per_channel * cpg;
  Tensor g_hat(gy.shape());
  for (int c = 0; c < channels; ++c) {
    const double a = params[scale_offset + c];
    const double* g = gy.data() + c * per_channel;
    const double* h = xhat.data() + c * per_channel;
    double* out = g_hat.data() + c * per_channel;
    double g_scale = 0.0, g_shift = 0.0;
    for (std::size_t i = 0; i < per_channel; ++i) {
      g_scale += g[i] * h[i];
      g_shift += g[i];
      out[i] = a * g[i];
    }
    if (!grads.empty()) {
      grads[scale_offset + c] += g_scale;
      grads[shift_offset + c] += g_shift;
    }
  }
  // d xhat / d x for a group: inv_std * (I - 1/n - xhat xhat^T / n).
  Tensor gx(gy.shape());
  for (int g = 0; g < groups; ++g) {
    const double* gh = g_hat.data() + g * n;
    const double* h = xhat.data() + g * n;
    double mean_g = 0.0, mean_gh = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mean_g += gh[i];
      mean_gh += gh[i] * h[i];
    }
    mean_g /= static_cast<double>(n);
    mean_gh /= static_cast<double>(n);
    double* out = gx.data() + g * n;
    for (std::size_t i = 0; i < n; ++i) out[i] = cache.inv_std[g] * (gh[i] - mean_g - h[i] * mean_gh);
  }
  return gx;
}

void GroupNorm::initialize(std::span<double> params) const {
  for (int c = 0; c < channels; ++c) {
    params[scale_offset + c] = 1.0;
    params[shift_offset + c] = 0.0;
  }
}

Dense Dense::create(ParamLayout& layout, int in, int out) {
  Dense d;
  d.in = in;
  d.out = out;
  d.weight_offset = layout.reserve(static_cast<std::size_t>(in) * out);
  d.bias_offset = layout.reserve(out);
  return d;
}

std::vector<double> Dense::forward(std::span<const double> params,
                                   std::span<const double> x) const {
  if (x.size() != static_cast<std::size_t>(in)) throw InvalidArgument("dense: input size mismatch");
  std::vector<double> y(out);
  const double* w = params.data() + weight_offset;
  for (int o = 0; o < out; ++o) {
    double acc = params[bias_offset + o];
    for (int i = 0; i < in; ++i) acc += w[static_cast<std::size_t>(o) * in + i] * x[i];
    y[o] = acc;
  }
  return y;
}

std::vector<double> Dense::backward(std::span<const double> params, std::span<const double> x,
                                    std::span<const double> gy, std::span<double> grads) const {
  std::vector<double> gx(in, 0.0);
  const double* w = params.data() + weight_offset;
  for (int o = 0; o < out; ++o) {
    const double g = gy[o];
    for (int i = 0; i < in; ++i) gx[i] += w[static_cast<std::size_t>(o) * in + i] * g;
  }
  if (!grads.empty()) {
    double* gw = grads.data() + weight_offset;
    for (int o = 0; o < out; ++o) {
      for (int i = 0; i < in; ++i) gw[static_cast<std::size_t>(o) * in + i] += gy[o] * x[i];
      grads[bias_offset + o] += gy[o];
    }
  }
  return gx;
}

void Dense::initialize(std::span<double> params, std::mt19937_64& rng, double gain) const {
  const double bound = gain * std::sqrt(3.0 / in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& w : params.subspan(weight_offset, static_cast<std::size_t>(in) * out)) w = dist(rng);
  for (double& b : params.subspan(bias_offset, out)) b = 0.0;
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double silu_derivative(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

Tensor silu(const Tensor& x) {
  Tensor y(x.shape());
  const double* in = x.data();
  double* out = y.data();
#pragma omp parallel for schedule(static) if (x.size() > 16384)
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = silu(in[i]);
  return y;
}

Tensor silu_backward(const Tensor& x, const Tensor& gy) {
  require_same_shape(x.shape(), gy.shape(), "silu_backward");
  Tensor gx(x.shape());
  const double* in = x.data();
  const double* g = gy.data();
  double* out = gx.data();
#pragma omp parallel for schedule(static) if (x.size() > 16384)
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = g[i] * silu_derivative(in[i]);
  return gx;
}

std::vector<double> silu(std::span<const double> x) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = silu(x[i]);
  return y;
}

std::vector<double> silu_backward(std::span<const double> x, std::span<const double> gy) {
  std::vector<double> gx(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) gx[i] = gy[i] * silu_derivative(x[i]);
  return gx;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
  return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& gy) {
  require_same_shape(y.shape(), gy.shape(), "sigmoid_backward");
  Tensor gx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) gx[i] = gy[i] * y[i] * (1.0 - y[i]);
  return gx;
}

void add_channel_bias(Tensor& x, std::span<const double> bias) {
  if (bias.size() != static_cast<std::size_t>(x.shape().c))
    throw InvalidArgument("add_channel_bias: channel count mismatch");
  for (int c = 0; c < x.shape().c; ++c)
    for (double& v : x.channel(c)) v += bias[c];
}

std::vector<double> channel_sums(const Tensor& gy) {
  std::vector<double> s(gy.shape().c, 0.0);
  for (int c = 0; c < gy.shape().c; ++c)
    for (double v : gy.channel(c)) s[c] += v;
  return s;
}

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("adam: step size must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw InvalidArgument("adam: moment decays must lie in [0,1)");
  if (!(epsilon > 0.0)) throw InvalidArgument("adam: epsilon must be positive");
}

Adam::Adam(std::size_t size, AdamConfig config) : config_(config), m_(size, 0.0), v_(size, 0.0) {
  config_.validate();
}

void Adam::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw InvalidArgument("adam: size mismatch");
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * grads[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * grads[i] * grads[i];
    const double mhat = m_[i] / c1;
    const double vhat = v_[i] / c2;
    params[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
  }
}

}  // namespace lisr::nn
