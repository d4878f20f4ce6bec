#pragma once

// Data-parallel numeric kernels. Every kernel in `lisr::kernels` is OpenMP
// parallel; `lisr::kernels::reference` holds straightforward serial versions
// of the same operations that the tests and the benchmark compare against.
//
// Parallel kernels partition work so that every output element is written by
// exactly one thread with a fixed summation order, so results do not depend
// on the thread count.

#include <span>

#include "lisr/tensor.hpp"

namespace lisr::kernels {

struct ConvGeometry {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int pad = 1;

  int out_extent(int in) const noexcept { return (in + 2 * pad - kernel) / stride + 1; }
  Shape output_shape(const Shape& in) const noexcept {
    return {out_channels, out_extent(in.d), out_extent(in.h), out_extent(in.w)};
  }
  std::size_t weight_count() const noexcept {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel * kernel;
  }
};

/// y = conv(x, weight) + bias. Weight layout [out][in][kz][ky][kx].
Tensor conv3d_forward(const Tensor& x, std::span<const double> weight,
                      std::span<const double> bias, const ConvGeometry& g);

/// Gradient w.r.t. the input, given the upstream gradient gy.
Tensor conv3d_backward_input(const Tensor& gy, std::span<const double> weight,
                             const ConvGeometry& g, const Shape& input_shape);

/// Accumulates weight and bias gradients into gweight / gbias.
void conv3d_backward_params(const Tensor& x, const Tensor& gy, const ConvGeometry& g,
                            std::span<double> gweight, std::span<double> gbias);

/// Nearest-neighbour x2 upsampling along all three spatial axes.
Tensor upsample2(const Tensor& x);
Tensor upsample2_backward(const Tensor& gy);

/// Separable filter with a symmetric odd-length kernel, "valid" mode: the
/// output shrinks by taps.size()-1 along each spatial axis.
Tensor filter3_valid(const Tensor& x, std::span<const double> taps);

/// Separable filter, same-size output, boundary samples replicated.
Tensor filter3_same(const Tensor& x, std::span<const double> taps);

namespace reference {

Tensor conv3d_forward(const Tensor& x, std::span<const double> weight,
                      std::span<const double> bias, const ConvGeometry& g);
Tensor conv3d_backward_input(const Tensor& gy, std::span<const double> weight,
                             const ConvGeometry& g, const Shape& input_shape);
void conv3d_backward_params(const Tensor& x, const Tensor& gy, const ConvGeometry& g,
                            std::span<double> gweight, std::span<double> gbias);
Tensor upsample2(const Tensor& x);
Tensor upsample2_backward(const Tensor& gy);
/// Direct 3D windowed sum with the outer product of `taps`.
Tensor filter3_valid(const Tensor& x, std::span<const double> taps);
Tensor filter3_same(const Tensor& x, std::span<const double> taps);

}  // namespace reference

/// Normalized 1D Gaussian taps of the given odd width.
std::vector<double> gaussian_taps(int width, double sigma);

}  // namespace lisr::kernels
