// Serial reference kernels: direct loops, no blocking, no unfolding.

#include <algorithm>

#include "lisr/error.hpp"
#include "lisr/kernels.hpp"

namespace lisr::kernels::reference {

namespace {

std::size_t weight_index(const ConvGeometry& g, int oc, int ic, int kz, int ky, int kx) {
  const int k = g.kernel;
  return (((static_cast<std::size_t>(oc) * g.in_channels + ic) * k + kz) * k + ky) * k + kx;
}

}  // namespace

Tensor conv3d_forward(const Tensor& x, std::span<const double> weight,
                      std::span<const double> bias, const ConvGeometry& g) {
  const Shape& in = x.shape();
  if (in.c != g.in_channels || weight.size() != g.weight_count())
    throw InvalidArgument("reference conv3d: argument mismatch");
  Tensor y(g.output_shape(in));
  const Shape& o = y.shape();
  for (int oc = 0; oc < o.c; ++oc)
    for (int z = 0; z < o.d; ++z)
      for (int yy = 0; yy < o.h; ++yy)
        for (int xx = 0; xx < o.w; ++xx) {
          double acc = bias.empty() ? 0.0 : bias[oc];
          for (int ic = 0; ic < in.c; ++ic)
            for (int kz = 0; kz < g.kernel; ++kz)
              for (int ky = 0; ky < g.kernel; ++ky)
                for (int kx = 0; kx < g.kernel; ++kx) {
                  const int iz = z * g.stride + kz - g.pad;
                  const int iy = yy * g.stride + ky - g.pad;
                  const int ix = xx * g.stride + kx - g.pad;
                  if (iz < 0 || iy < 0 || ix < 0 || iz >= in.d || iy >= in.h || ix >= in.w)
                    continue;
                  acc += weight[weight_index(g, oc, ic, kz, ky, kx)] * x.at(ic, iz, iy, ix);
                }
          y.at(oc, z, yy, xx) = acc;
        }
  return y;
}

Tensor conv3d_backward_input(const Tensor& gy, std::span<const double> weight,
                             const ConvGeometry& g, const Shape& input_shape) {
  Tensor gx(input_shape);
  const Shape& o = gy.shape();
  for (int oc = 0; oc < o.c; ++oc)
    for (int z = 0; z < o.d; ++z)
      for (int yy = 0; yy < o.h; ++yy)
        for (int xx = 0; xx < o.w; ++xx) {
          const double up = gy.at(oc, z, yy, xx);
          for (int ic = 0; ic < input_shape.c; ++ic)
            for (int kz = 0; kz < g.kernel; ++kz)
              for (int ky = 0; ky < g.kernel; ++ky)
                for (int kx = 0; kx < g.kernel; ++kx) {
                  const int iz = z * g.stride + kz - g.pad;
                  const int iy = yy * g.stride + ky - g.pad;
                  const int ix = xx * g.stride + kx - g.pad;
                  if (iz < 0 || iy < 0 || ix < 0 || iz >= input_shape.d ||
                      iy >= input_shape.h || ix >= input_shape.w)
                    continue;
                  gx.at(ic, iz, iy, ix) += weight[weight_index(g, oc, ic, kz, ky, kx)] * up;
                }
        }
  return gx;
}

void conv3d_backward_params(const Tensor& x, const Tensor& gy, const ConvGeometry& g,
                            std::span<double> gweight, std::span<double> gbias) {
  const Shape& in = x.shape();
  const Shape& o = gy.shape();
  for (int oc = 0; oc < o.c; ++oc)
    for (int z = 0; z < o.d; ++z)
      for (int yy = 0; yy < o.h; ++yy)
        for (int xx = 0; xx < o.w; ++xx) {
          const double up = gy.at(oc, z, yy, xx);
          if (!gbias.empty()) gbias[oc] += up;
          for (int ic = 0; ic < in.c; ++ic)
            for (int kz = 0; kz < g.kernel; ++kz)
              for (int ky = 0; ky < g.kernel; ++ky)
                for (int kx = 0; kx < g.kernel; ++kx) {
                  const int iz = z * g.stride + kz - g.pad;
                  const int iy = yy * g.stride + ky - g.pad;
                  const int ix = xx * g.stride + kx - g.pad;
                  if (iz < 0 || iy < 0 || ix < 0 || iz >= in.d || iy >= in.h || ix >= in.w)
                    continue;
                  gweight[weight_index(g, oc, ic, kz, ky, kx)] += up * x.at(ic, iz, iy, ix);
                }
        }
}

Tensor upsample2(const Tensor& x) {
  const Shape& s = x.shape();
  Tensor y({s.c, 2 * s.d, 2 * s.h, 2 * s.w});
  for (int c = 0; c < s.c; ++c)
    for (int z = 0; z < 2 * s.d; ++z)
      for (int yy = 0; yy < 2 * s.h; ++yy)
        for (int xx = 0; xx < 2 * s.w; ++xx) y.at(c, z, yy, xx) = x.at(c, z / 2, yy / 2, xx / 2);
  return y;
}

Tensor upsample2_backward(const Tensor& gy) {
  const Shape& o = gy.shape();
  Tensor gx({o.c, o.d / 2, o.h / 2, o.w / 2});
  for (int c = 0; c < o.c; ++c)
    for (int z = 0; z < o.d; ++z)
      for (int yy = 0; yy < o.h; ++yy)
        for (int xx = 0; xx < o.w; ++xx) gx.at(c, z / 2, yy / 2, xx / 2) += gy.at(c, z, yy, xx);
  return gx;
}

Tensor filter3_valid(const Tensor& x, std::span<const double> taps) {
  const Shape& s = x.shape();
  const int n = static_cast<int>(taps.size());
  if (n % 2 == 0 || s.d < n || s.h < n || s.w < n)
    throw InvalidArgument("reference filter3_valid: window does not fit");
  Tensor y({s.c, s.d - n + 1, s.h - n + 1, s.w - n + 1});
  const Shape& o = y.shape();
  for (int c = 0; c < o.c; ++c)
    for (int z = 0; z < o.d; ++z)
      for (int yy = 0; yy < o.h; ++yy)
        for (int xx = 0; xx < o.w; ++xx) {
          double acc = 0.0;
          for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
              for (int e = 0; e < n; ++e)
                acc += taps[a] * taps[b] * taps[e] * x.at(c, z + a, yy + b, xx + e);
          y.at(c, z, yy, xx) = acc;
        }
  return y;
}

Tensor filter3_same(const Tensor& x, std::span<const double> taps) {
  const Shape& s = x.shape();
  const int n = static_cast<int>(taps.size());
  const int half = n / 2;
  Tensor y(s);
  for (int c = 0; c < s.c; ++c)
    for (int z = 0; z < s.d; ++z)
      for (int yy = 0; yy < s.h; ++yy)
        for (int xx = 0; xx < s.w; ++xx) {
          double acc = 0.0;
          for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
              for (int e = 0; e < n; ++e) {
                const int iz = std::clamp(z + a - half, 0, s.d - 1);
                const int iy = std::clamp(yy + b - half, 0, s.h - 1);
                const int ix = std::clamp(xx + e - half, 0, s.w - 1);
                acc += taps[a] * taps[b] * taps[e] * x.at(c, iz, iy, ix);
              }
          y.at(c, z, yy, xx) = acc;
        }
  return y;
}

}  // namespace lisr::kernels::reference
