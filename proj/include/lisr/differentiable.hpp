#pragma once

// Interfaces the inversion routines differentiate through. Each forward call
// may record a tape; the matching pullback maps an output cotangent to input
// cotangents (a vector-Jacobian product).

#include <memory>
#include <span>

#include "lisr/tensor.hpp"

namespace lisr {

class Tape {
 public:
  virtual ~Tape() = default;
};

/// Latent -> volume generator (the decoder D).
class LatentDecoder {
 public:
  virtual ~LatentDecoder() = default;
  virtual Shape latent_shape() const = 0;
  virtual Shape volume_shape() const = 0;
  virtual Tensor decode(const Tensor& z, std::unique_ptr<Tape>* tape) const = 0;
  /// Returns dL/dz given dL/dx for the forward call recorded in `tape`.
  virtual Tensor decode_pullback(const Tape& tape, const Tensor& g_x) const = 0;
};

/// Feature-space distance between two volumes.
class PerceptualMetric {
 public:
  virtual ~PerceptualMetric() = default;
  /// Distance; when `grad_a` is non-null it receives d(distance)/da.
  virtual double distance(const Tensor& a, const Tensor& b, Tensor* grad_a) const = 0;
};

/// Noise predictor eps_theta(z_t, t, C).
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  virtual Shape latent_shape() const = 0;
  virtual int conditioning_size() const = 0;
  virtual Tensor predict(const Tensor& z, int t, std::span<const double> cond,
                         std::unique_ptr<Tape>* tape) const = 0;
  /// Accumulates the pullback of `g_eps` into g_z and g_cond.
  virtual void predict_pullback(const Tape* tape, const Tensor& z, int t,
                                std::span<const double> cond, const Tensor& g_eps, Tensor& g_z,
                                std::span<double> g_cond) const = 0;
};

}  // namespace lisr
