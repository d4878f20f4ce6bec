#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "lisr/differentiable.hpp"
#include "lisr/tensor.hpp"

namespace lisr::testing {

inline Tensor uniform_tensor(const Shape& s, std::mt19937_64& rng, double lo = -1.0,
                             double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(s);
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// |a - n| / max(|a|, |n|, floor).
inline double rel_err(double a, double n, double floor = 1e-12) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// Central difference of f along coordinate i of x (x restored afterwards).
inline double central_difference(const std::function<double()>& f, double& coord, double h) {
  const double saved = coord;
  coord = saved + h;
  const double up = f();
  coord = saved - h;
  const double down = f();
  coord = saved;
  return (up - down) / (2.0 * h);
}

/// Distinct random indices in [0, n).
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count,
                                               std::mt19937_64& rng) {
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min(n, count));
  return all;
}

/// x -> W x + b followed by nothing: a linear decoder used as a toy model
/// with a closed-form least-squares solution.
class LinearDecoder final : public LatentDecoder {
 public:
  LinearDecoder(Shape latent, Shape volume, std::mt19937_64& rng, double scale = 1.0)
      : latent_(latent), volume_(volume), weight_(volume.size() * latent.size()),
        bias_(volume.size()) {
    std::normal_distribution<double> n(0.0, scale / std::sqrt(static_cast<double>(latent.size())));
    for (double& w : weight_) w = n(rng);
    for (double& b : bias_) b = 0.5;
  }

  Shape latent_shape() const override { return latent_; }
  Shape volume_shape() const override { return volume_; }

  Tensor decode(const Tensor& z, std::unique_ptr<Tape>* tape) const override {
    Tensor x(volume_);
    const std::size_t n = latent_.size();
    for (std::size_t i = 0; i < x.size(); ++i) {
      double acc = bias_[i];
      for (std::size_t k = 0; k < n; ++k) acc += weight_[i * n + k] * z[k];
      x[i] = acc;
    }
    if (tape != nullptr) *tape = std::make_unique<Tape>();
    return x;
  }

  Tensor decode_pullback(const Tape&, const Tensor& g_x) const override {
    Tensor g(latent_);
    const std::size_t n = latent_.size();
    for (std::size_t i = 0; i < g_x.size(); ++i)
      for (std::size_t k = 0; k < n; ++k) g[k] += weight_[i * n + k] * g_x[i];
    return g;
  }

  const std::vector<double>& weight() const { return weight_; }
  const std::vector<double>& bias() const { return bias_; }

 private:
  Shape latent_;
  Shape volume_;
  std::vector<double> weight_;
  std::vector<double> bias_;
};

/// eps_theta == 0.
class ZeroPredictor final : public NoisePredictor {
 public:
  ZeroPredictor(Shape latent, int cond) : latent_(latent), cond_(cond) {}
  Shape latent_shape() const override { return latent_; }
  int conditioning_size() const override { return cond_; }
  Tensor predict(const Tensor&, int, std::span<const double>, std::unique_ptr<Tape>*) const override {
    return Tensor(latent_);
  }
  void predict_pullback(const Tape*, const Tensor&, int, std::span<const double>, const Tensor&,
                        Tensor& g_z, std::span<double>) const override {
    if (g_z.empty()) g_z = Tensor(latent_);
  }

 private:
  Shape latent_;
  int cond_;
};

}  // namespace lisr::testing
