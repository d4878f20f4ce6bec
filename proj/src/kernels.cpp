#include "lisr/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "lisr/error.hpp"

namespace lisr::kernels {
namespace {

constexpr int kColumnBlock = 256;
constexpr int kChannelBlock = 4;

void check_conv_args(const Shape& in, std::span<const double> weight,
                     std::span<const double> bias, const ConvGeometry& g) {
  if (in.c != g.in_channels)
    throw InvalidArgument("conv3d: input has " + std::to_string(in.c) +
                          " channels, expected " + std::to_string(g.in_channels));
  if (weight.size() != g.weight_count())
    throw InvalidArgument("conv3d: weight size mismatch");
  if (!bias.empty() && bias.size() != static_cast<std::size_t>(g.out_channels))
    throw InvalidArgument("conv3d: bias size mismatch");
  if (g.out_extent(in.d) <= 0 || g.out_extent(in.h) <= 0 || g.out_extent(in.w) <= 0)
    throw InvalidArgument("conv3d: kernel larger than padded input");
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kernel == 1 && g.stride == 1 && g.pad == 0;
}

// Per-thread scratch for unfolded columns; grows monotonically.
std::vector<double>& workspace(std::size_t n) {
  static thread_local std::vector<double> buffer;
  if (buffer.size() < n) buffer.resize(n);
  return buffer;
}

// Unfolds x into rows indexed by (ic, kz, ky, kx) and columns indexed by
// output voxel.
void im2col(const Tensor& x, const ConvGeometry& g, const Shape& out, double* col) {
  const Shape& in = x.shape();
  const int k = g.kernel;
  const int k3 = k * k * k;
  const int rows = in.c * k3;
  const std::size_t n = out.spatial();
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const int ic = r / k3;
    const int kz = (r / (k * k)) % k;
    const int ky = (r / k) % k;
    const int kx = r % k;
    double* dst = col + r * n;
    const double* src = x.data() + static_cast<std::size_t>(ic) * in.spatial();
    for (int oz = 0; oz < out.d; ++oz) {
      const int iz = oz * g.stride + kz - g.pad;
      for (int oy = 0; oy < out.h; ++oy) {
        const int iy = oy * g.stride + ky - g.pad;
        double* row = dst + (static_cast<std::size_t>(oz) * out.h + oy) * out.w;
        if (iz < 0 || iz >= in.d || iy < 0 || iy >= in.h) {
          std::fill(row, row + out.w, 0.0);
          continue;
        }
        const double* srow = src + (static_cast<std::size_t>(iz) * in.h + iy) * in.w;
        for (int ox = 0; ox < out.w; ++ox) {
          const int ix = ox * g.stride + kx - g.pad;
          row[ox] = (ix >= 0 && ix < in.w) ? srow[ix] : 0.0;
        }
      }
    }
  }
}

// Scatter-adds one unfolded row back onto its input channel.
void col2im_row(const double* drow, int r, const ConvGeometry& g, const Shape& out,
                const Shape& in, double* gx_channel) {
  const int k = g.kernel;
  const int kz = (r / (k * k)) % k;
  const int ky = (r / k) % k;
  const int kx = r % k;
  for (int oz = 0; oz < out.d; ++oz) {
    const int iz = oz * g.stride + kz - g.pad;
    if (iz < 0 || iz >= in.d) continue;
    for (int oy = 0; oy < out.h; ++oy) {
      const int iy = oy * g.stride + ky - g.pad;
      if (iy < 0 || iy >= in.h) continue;
      const double* row = drow + (static_cast<std::size_t>(oz) * out.h + oy) * out.w;
      double* dst = gx_channel + (static_cast<std::size_t>(iz) * in.h + iy) * in.w;
      for (int ox = 0; ox < out.w; ++ox) {
        const int ix = ox * g.stride + kx - g.pad;
        if (ix >= 0 && ix < in.w) dst[ix] += row[ox];
      }
    }
  }
}

}  // namespace

Tensor conv3d_forward(const Tensor& x, std::span<const double> weight,
                      std::span<const double> bias, const ConvGeometry& g) {
  check_conv_args(x.shape(), weight, bias, g);
  const Shape out = g.output_shape(x.shape());
  const int rows = g.in_channels * g.kernel * g.kernel * g.kernel;
  const std::size_t n = out.spatial();

  const double* col = x.data();
  if (!is_pointwise(g)) {
    std::vector<double>& ws = workspace(static_cast<std::size_t>(rows) * n);
    im2col(x, g, out, ws.data());
    col = ws.data();
  }

  Tensor y(out);
  const int oc_blocks = (g.out_channels + kChannelBlock - 1) / kChannelBlock;
  const int n_blocks = static_cast<int>((n + kColumnBlock - 1) / kColumnBlock);
#pragma omp parallel for collapse(2) schedule(static)
  for (int ob = 0; ob < oc_blocks; ++ob) {
    for (int nb = 0; nb < n_blocks; ++nb) {
      const int oc0 = ob * kChannelBlock;
      const int ocs = std::min(kChannelBlock, g.out_channels - oc0);
      const std::size_t n0 = static_cast<std::size_t>(nb) * kColumnBlock;
      const int len = static_cast<int>(std::min<std::size_t>(kColumnBlock, n - n0));
      double acc[kChannelBlock][kColumnBlock];
      for (int b = 0; b < ocs; ++b) {
        const double init = bias.empty() ? 0.0 : bias[oc0 + b];
        std::fill(acc[b], acc[b] + len, init);
      }
      if (ocs == kChannelBlock) {
        const double* w0 = weight.data() + static_cast<std::size_t>(oc0) * rows;
        const double* w1 = w0 + rows;
        const double* w2 = w1 + rows;
        const double* w3 = w2 + rows;
        for (int r = 0; r < rows; ++r) {
          const double* c = col + r * n + n0;
          const double a0 = w0[r], a1 = w1[r], a2 = w2[r], a3 = w3[r];
#pragma omp simd
          for (int j = 0; j < len; ++j) {
            const double v = c[j];
            acc[0][j] += a0 * v;
            acc[1][j] += a1 * v;
            acc[2][j] += a2 * v;
            acc[3][j] += a3 * v;
          }
        }
      } else {
        for (int b = 0; b < ocs; ++b) {
          const double* wr = weight.data() + static_cast<std::size_t>(oc0 + b) * rows;
          for (int r = 0; r < rows; ++r) {
            const double* c = col + r * n + n0;
            const double a = wr[r];
#pragma omp simd
            for (int j = 0; j < len; ++j) acc[b][j] += a * c[j];
          }
        }
      }
      for (int b = 0; b < ocs; ++b)
        std::copy(acc[b], acc[b] + len, y.data() + (oc0 + b) * n + n0);
    }
  }
  return y;
}

Tensor conv3d_backward_input(const Tensor& gy, std::span<const double> weight,
                             const ConvGeometry& g, const Shape& input_shape) {
  if (gy.shape() != g.output_shape(input_shape) || input_shape.c != g.in_channels)
    throw InvalidArgument("conv3d_backward_input: shape mismatch");
  if (weight.size() != g.weight_count())
    throw InvalidArgument("conv3d_backward_input: weight size mismatch");
  const Shape out = gy.shape();
  const int k3 = g.kernel * g.kernel * g.kernel;
  const int rows = g.in_channels * k3;
  const std::size_t n = out.spatial();
  Tensor gx(input_shape);

#pragma omp parallel for schedule(static)
  for (int ic = 0; ic < g.in_channels; ++ic) {
    std::vector<double>& drow = workspace(n);
    double* gx_channel = gx.data() + static_cast<std::size_t>(ic) * input_shape.spatial();
    for (int kk = 0; kk < k3; ++kk) {
      const int r = ic * k3 + kk;
      double* d = is_pointwise(g) ? gx_channel : drow.data();
      std::fill(d, d + n, 0.0);
      for (int oc = 0; oc < g.out_channels; ++oc) {
        const double a = weight[static_cast<std::size_t>(oc) * rows + r];
        const double* src = gy.data() + static_cast<std::size_t>(oc) * n;
#pragma omp simd
        for (std::size_t j = 0; j < n; ++j) d[j] += a * src[j];
      }
      if (!is_pointwise(g)) col2im_row(d, r, g, out, input_shape, gx_channel);
    }
  }
  return gx;
}

void conv3d_backward_params(const Tensor& x, const Tensor& gy, const ConvGeometry& g,
                            std::span<double> gweight, std::span<double> gbias) {
  check_conv_args(x.shape(), gweight, gbias, g);
  const Shape out = g.output_shape(x.shape());
  if (gy.shape() != out) throw InvalidArgument("conv3d_backward_params: gradient shape mismatch");
  const int rows = g.in_channels * g.kernel * g.kernel * g.kernel;
  const std::size_t n = out.spatial();

  const double* col = x.data();
  if (!is_pointwise(g)) {
    std::vector<double>& ws = workspace(static_cast<std::size_t>(rows) * n);
    im2col(x, g, out, ws.data());
    col = ws.data();
  }

#pragma omp parallel for collapse(2) schedule(static)
  for (int oc = 0; oc < g.out_channels; ++oc) {
    for (int r = 0; r < rows; ++r) {
      const double* a = gy.data() + static_cast<std::size_t>(oc) * n;
      const double* c = col + static_cast<std::size_t>(r) * n;
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (std::size_t j = 0; j < n; ++j) acc += a[j] * c[j];
      gweight[static_cast<std::size_t>(oc) * rows + r] += acc;
    }
  }
  if (!gbias.empty()) {
    for (int oc = 0; oc < g.out_channels; ++oc) {
      const double* a = gy.data() + static_cast<std::size_t>(oc) * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += a[j];
      gbias[oc] += acc;
    }
  }
}

Tensor upsample2(const Tensor& x) {
  const Shape& s = x.shape();
  const Shape o{s.c, 2 * s.d, 2 * s.h, 2 * s.w};
  Tensor y(o);
#pragma omp parallel for collapse(2) schedule(static)
  for (int c = 0; c < o.c; ++c) {
    for (int z = 0; z < o.d; ++z) {
      for (int yy = 0; yy < o.h; ++yy) {
        const double* src = x.data() + x.index(c, z / 2, yy / 2, 0);
        double* dst = y.data() + y.index(c, z, yy, 0);
        for (int xx = 0; xx < o.w; ++xx) dst[xx] = src[xx / 2];
      }
    }
  }
  return y;
}

Tensor upsample2_backward(const Tensor& gy) {
  const Shape& o = gy.shape();
  if (o.d % 2 || o.h % 2 || o.w % 2)
    throw InvalidArgument("upsample2_backward: odd gradient extent");
  const Shape s{o.c, o.d / 2, o.h / 2, o.w / 2};
  Tensor gx(s);
#pragma omp parallel for collapse(2) schedule(static)
  for (int c = 0; c < s.c; ++c) {
    for (int z = 0; z < s.d; ++z) {
      for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
          double acc = 0.0;
          for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx)
                acc += gy.at(c, 2 * z + dz, 2 * y + dy, 2 * x + dx);
          gx.at(c, z, y, x) = acc;
        }
      }
    }
  }
  return gx;
}

namespace {

// One separable pass along `axis` (0 = d, 1 = h, 2 = w).
Tensor filter_axis(const Tensor& x, std::span<const double> taps, int axis, bool valid) {
  const Shape& s = x.shape();
  const int half = static_cast<int>(taps.size()) / 2;
  Shape o = s;
  if (valid) {
    if (axis == 0) o.d -= 2 * half;
    if (axis == 1) o.h -= 2 * half;
    if (axis == 2) o.w -= 2 * half;
  }
  Tensor y(o);
  const int len = s.extent(axis);
  const int taps_n = static_cast<int>(taps.size());
#pragma omp parallel for collapse(2) schedule(static)
  for (int c = 0; c < o.c; ++c) {
    for (int z = 0; z < o.d; ++z) {
      for (int yy = 0; yy < o.h; ++yy) {
        for (int xx = 0; xx < o.w; ++xx) {
          double acc = 0.0;
          for (int t = 0; t < taps_n; ++t) {
            int p[3] = {z, yy, xx};
            if (valid) {
              p[axis] += t;
            } else {
              p[axis] = std::clamp(p[axis] + t - half, 0, len - 1);
            }
            acc += taps[t] * x.at(c, p[0], p[1], p[2]);
          }
          y.at(c, z, yy, xx) = acc;
        }
      }
    }
  }
  return y;
}

void check_taps(const Shape& s, std::span<const double> taps, bool valid) {
  if (taps.empty() || taps.size() % 2 == 0)
    throw InvalidArgument("filter taps must have odd length");
  if (valid) {
    const int n = static_cast<int>(taps.size());
    if (s.d < n || s.h < n || s.w < n)
      throw InvalidArgument("filter window larger than volume");
  }
}

}  // namespace

Tensor filter3_valid(const Tensor& x, std::span<const double> taps) {
  check_taps(x.shape(), taps, true);
  return filter_axis(filter_axis(filter_axis(x, taps, 2, true), taps, 1, true), taps, 0, true);
}

Tensor filter3_same(const Tensor& x, std::span<const double> taps) {
  check_taps(x.shape(), taps, false);
  return filter_axis(filter_axis(filter_axis(x, taps, 2, false), taps, 1, false), taps, 0,
                     false);
}

std::vector<double> gaussian_taps(int width, double sigma) {
  if (width <= 0 || width % 2 == 0) throw InvalidArgument("gaussian width must be odd");
  if (!(sigma > 0.0)) throw InvalidArgument("gaussian sigma must be positive");
  std::vector<double> taps(width);
  const int half = width / 2;
  double total = 0.0;
  for (int i = 0; i < width; ++i) {
    const double r = i - half;
    taps[i] = std::exp(-0.5 * r * r / (sigma * sigma));
    total += taps[i];
  }
  for (double& t : taps) t /= total;
  return taps;
}

}  // namespace lisr::kernels
