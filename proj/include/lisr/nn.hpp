#pragma once

// Minimal layer kit with hand-written reverse-mode derivatives. All trainable
// values of a network live in one flat parameter vector; layers only store
// offsets into it, and gradients use a vector with the same layout.

#include <random>
#include <span>
#include <vector>

#include "lisr/kernels.hpp"
#include "lisr/tensor.hpp"

namespace lisr::nn {

class ParamLayout {
 public:
  std::size_t reserve(std::size_t n) {
    const std::size_t offset = total_;
    total_ += n;
    return offset;
  }
  std::size_t size() const noexcept { return total_; }

 private:
  std::size_t total_ = 0;
};

struct Conv3d {
  kernels::ConvGeometry geometry;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;

  static Conv3d create(ParamLayout& layout, int in, int out, int kernel, int stride, int pad);

  std::span<const double> weight(std::span<const double> params) const;
  std::span<const double> bias(std::span<const double> params) const;

  Tensor forward(std::span<const double> params, const Tensor& x) const;
  /// Returns the input gradient. Parameter gradients are accumulated into
  /// `grads` unless it is empty.
  Tensor backward(std::span<const double> params, const Tensor& x, const Tensor& gy,
                  std::span<double> grads) const;
  /// Parameter gradients only.
  void backward_params(const Tensor& x, const Tensor& gy, std::span<double> grads) const;

  /// LeCun-uniform weights, zero bias.
  void initialize(std::span<double> params, std::mt19937_64& rng) const;
};

/// Per-sample group normalization with a learned per-channel scale and
/// shift. Keeps hidden activations centred, so a large early update cannot
/// push every unit of a layer into the flat part of its nonlinearity.
struct GroupNorm {
  int channels = 0;
  int groups = 1;
  std::size_t scale_offset = 0;
  std::size_t shift_offset = 0;
  static constexpr double kEpsilon = 1e-5;

  /// What backward needs from a forward pass.
  struct Cache {
    Tensor normalized;
    std::vector<double> inv_std;  // per group
  };

  /// Uses the largest divisor of `channels` that is at most `max_groups`.
  static GroupNorm create(ParamLayout& layout, int channels, int max_groups = 4);

  Tensor forward(std::span<const double> params, const Tensor& x, Cache* cache) const;
  /// Returns the input gradient; parameter gradients accumulate into
  /// `grads` unless it is empty.
  Tensor backward(std::span<const double> params, const Cache& cache, const Tensor& gy,
                  std::span<double> grads) const;
  /// Unit scale, zero shift.
  void initialize(std::span<double> params) const;
};

struct Dense {
  int in = 0;
  int out = 0;
  std::size_t weight_offset = 0;  // [out][in]
  std::size_t bias_offset = 0;

  static Dense create(ParamLayout& layout, int in, int out);

  std::vector<double> forward(std::span<const double> params, std::span<const double> x) const;
  std::vector<double> backward(std::span<const double> params, std::span<const double> x,
                               std::span<const double> gy, std::span<double> grads) const;
  void initialize(std::span<double> params, std::mt19937_64& rng, double gain = 1.0) const;
};

double silu(double x);
double silu_derivative(double x);
Tensor silu(const Tensor& x);
/// gx = gy * silu'(x), with x the pre-activation.
Tensor silu_backward(const Tensor& x, const Tensor& gy);
std::vector<double> silu(std::span<const double> x);
std::vector<double> silu_backward(std::span<const double> x, std::span<const double> gy);

Tensor sigmoid(const Tensor& x);
/// gx = gy * y * (1 - y), with y the sigmoid output.
Tensor sigmoid_backward(const Tensor& y, const Tensor& gy);

/// Adds bias[c] to every voxel of channel c.
void add_channel_bias(Tensor& x, std::span<const double> bias);
/// Per-channel sums of gy (gradient of add_channel_bias w.r.t. bias).
std::vector<double> channel_sums(const Tensor& gy);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Moment-adaptive first-order update with bias correction.
class Adam {
 public:
  Adam(std::size_t size, AdamConfig config);
  void step(std::span<double> params, std::span<const double> grads);
  long steps() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return config_; }

 private:
  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

}  // namespace lisr::nn
