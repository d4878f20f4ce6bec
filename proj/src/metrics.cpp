#include "lisr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "lisr/error.hpp"
#include "lisr/kernels.hpp"

namespace lisr {

double psnr(const Tensor& a, const Tensor& b, double peak) {
  require_same_shape(a.shape(), b.shape(), "psnr");
  if (a.empty()) throw InvalidArgument("psnr of empty volumes");
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sse += d * d;
  }
  if (sse == 0.0) return kPsnrIdentical;
  const double mse = sse / static_cast<double>(a.size());
  return 10.0 * std::log10(peak * peak / mse);
}

double psnr(const Volume& a, const Volume& b, double peak) { return psnr(a.data, b.data, peak); }

void SsimOptions::validate() const {
  if (window < 1 || window % 2 == 0) throw InvalidArgument("SSIM window must be odd and positive");
  if (!(sigma > 0.0)) throw InvalidArgument("SSIM sigma must be positive");
  if (!(k1 > 0.0) || !(k2 > 0.0) || !(peak > 0.0))
    throw InvalidArgument("SSIM constants must be positive");
}

double ssim(const Tensor& a, const Tensor& b, const SsimOptions& options) {
  options.validate();
  require_same_shape(a.shape(), b.shape(), "ssim");
  const Shape& s = a.shape();
  if (s.c != 1) throw InvalidArgument("ssim expects single-channel volumes");
  if (options.window > s.d || options.window > s.h || options.window > s.w)
    throw InvalidArgument("SSIM window " + std::to_string(options.window) +
                          " larger than volume " + to_string(s));
  const std::vector<double> taps = kernels::gaussian_taps(options.window, options.sigma);
  Tensor aa(s), bb(s), ab(s);
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const Tensor mu_a = kernels::filter3_valid(a, taps);
  const Tensor mu_b = kernels::filter3_valid(b, taps);
  const Tensor e_aa = kernels::filter3_valid(aa, taps);
  const Tensor e_bb = kernels::filter3_valid(bb, taps);
  const Tensor e_ab = kernels::filter3_valid(ab, taps);
  const double c1 = (options.k1 * options.peak) * (options.k1 * options.peak);
  const double c2 = (options.k2 * options.peak) * (options.k2 * options.peak);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i];
    const double mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

double ssim(const Volume& a, const Volume& b, const SsimOptions& options) {
  return ssim(a.data, b.data, options);
}

namespace {

// Flat offset of voxel (slice index j, in-slice index i) for a slice
// decomposition along `axis`.
struct SliceIndexer {
  Shape s;
  int axis;

  int slices() const { return s.extent(axis); }
  int slice_size() const { return static_cast<int>(s.spatial()) / slices(); }
  std::size_t offset(int j, int i) const {
    switch (axis) {
      case 0: return static_cast<std::size_t>(j) * s.h * s.w + i;
      case 1: {
        const int z = i / s.w;
        const int x = i % s.w;
        return (static_cast<std::size_t>(z) * s.h + j) * s.w + x;
      }
      default: {
        const int z = i / s.h;
        const int y = i % s.h;
        return (static_cast<std::size_t>(z) * s.h + y) * s.w + j;
      }
    }
  }
};

std::vector<double> lagrange_weights(std::span<const int> nodes, double x) {
  std::vector<double> w(nodes.size(), 1.0);
  for (std::size_t i = 0; i < nodes.size(); ++i)
    for (std::size_t k = 0; k < nodes.size(); ++k)
      if (k != i) w[i] *= (x - nodes[k]) / static_cast<double>(nodes[i] - nodes[k]);
  return w;
}

}  // namespace

Volume cubic_interpolate(const Volume& masked, const ObservationMask& mask, int axis) {
  if (axis < 0 || axis > 2) throw InvalidArgument("axis must be 0, 1 or 2");
  require_same_shape(masked.shape(), mask.shape(), "cubic_interpolate mask");
  const SliceIndexer ix{masked.shape(), axis};
  const int n = ix.slices();
  const int per = ix.slice_size();

  std::vector<int> retained;
  for (int j = 0; j < n; ++j) {
    const double first = mask.values()[ix.offset(j, 0)];
    for (int i = 1; i < per; ++i)
      if (mask.values()[ix.offset(j, i)] != first)
        throw InvalidArgument("mask is not a slice pattern along axis " + std::to_string(axis));
    if (first == 1.0) retained.push_back(j);
  }
  if (retained.size() < 2)
    throw InvalidArgument("cubic interpolation needs at least 2 retained slices");

  Tensor out = masked.data;
  const int r = static_cast<int>(retained.size());
  std::size_t next = 0;
  for (int j = 0; j < n; ++j) {
    while (next < retained.size() && retained[next] < j) ++next;
    if (next < retained.size() && retained[next] == j) continue;

    std::span<const int> nodes;
    if (j < retained.front()) {
      nodes = std::span<const int>(retained).first(2);
    } else if (j > retained.back()) {
      nodes = std::span<const int>(retained).last(2);
    } else {
      // retained[next - 1] < j < retained[next]
      const int m = static_cast<int>(next) - 1;
      const int count = std::min(4, r);
      const int start = std::clamp(m - 1, 0, r - count);
      nodes = std::span<const int>(retained).subspan(start, count);
    }
    const std::vector<double> w = lagrange_weights(nodes, j);
    for (int i = 0; i < per; ++i) {
      double v = 0.0;
      for (std::size_t q = 0; q < nodes.size(); ++q) v += w[q] * masked.data[ix.offset(nodes[q], i)];
      out[ix.offset(j, i)] = v;
    }
  }
  return Volume(std::move(out), masked.spacing, masked.meta);
}

Tensor central_crop(const Tensor& v, std::array<int, 3> extents) {
  const Shape& s = v.shape();
  const int cd = std::min(extents[0], s.d);
  const int ch = std::min(extents[1], s.h);
  const int cw = std::min(extents[2], s.w);
  if (cd < 1 || ch < 1 || cw < 1) throw InvalidArgument("crop extents must be positive");
  const int z0 = (s.d - cd) / 2;
  const int y0 = (s.h - ch) / 2;
  const int x0 = (s.w - cw) / 2;
  Tensor out({s.c, cd, ch, cw});
  for (int c = 0; c < s.c; ++c)
    for (int z = 0; z < cd; ++z)
      for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x) out.at(c, z, y, x) = v.at(c, z0 + z, y0 + y, x0 + x);
  return out;
}

Summary summarize(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("cannot summarize an empty cohort");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

MetricReport evaluate_cohort(std::span<const Volume> truths, std::span<const Volume> reconstructions,
                             std::array<int, 3> crop, const SsimOptions& options,
                             std::string method, std::string corruption,
                             std::vector<std::string> cases) {
  if (truths.size() != reconstructions.size())
    throw InvalidArgument("evaluate_cohort: " + std::to_string(truths.size()) + " truths vs " +
                          std::to_string(reconstructions.size()) + " reconstructions");
  if (truths.empty()) throw InvalidArgument("evaluate_cohort: empty cohort");
  if (!cases.empty() && cases.size() != truths.size())
    throw InvalidArgument("evaluate_cohort: case label count mismatch");
  MetricReport report;
  report.method = std::move(method);
  report.corruption = std::move(corruption);
  report.cases = std::move(cases);
  if (report.cases.empty())
    for (std::size_t i = 0; i < truths.size(); ++i) report.cases.push_back(std::to_string(i));
  const int n = static_cast<int>(truths.size());
  report.psnr.resize(n);
  report.ssim.resize(n);
  for (int i = 0; i < n; ++i) {
    const Tensor a = central_crop(truths[i].data, crop);
    const Tensor b = central_crop(reconstructions[i].data, crop);
    report.psnr[i] = psnr(a, b, options.peak);
    report.ssim[i] = ssim(a, b, options);
  }
  report.psnr_summary = summarize(report.psnr);
  report.ssim_summary = summarize(report.ssim);
  return report;
}

namespace {

std::string fixed(double v, int digits) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

std::string format_table(std::span<const MetricReport> reports, const std::string& title) {
  std::size_t width = 6;
  for (const auto& r : reports) width = std::max(width, r.method.size());
  std::ostringstream os;
  os << title << "\n";
  os << pad("Method", width) << "  " << pad("SSIM", 17) << "  PSNR (dB)\n";
  for (const auto& r : reports) {
    os << pad(r.method, width) << "  "
       << pad(fixed(r.ssim_summary.mean, 4) + " +- " + fixed(r.ssim_summary.standard_error, 4), 17)
       << "  " << fixed(r.psnr_summary.mean, 2) << " +- "
       << fixed(r.psnr_summary.standard_error, 2) << "\n";
  }
  return os.str();
}

std::string format_csv(std::span<const MetricReport> reports) {
  std::ostringstream os;
  os << "method,corruption,n,ssim_mean,ssim_se,psnr_mean,psnr_se\n";
  for (const auto& r : reports)
    os << r.method << ',' << r.corruption << ',' << r.ssim.size() << ','
       << fixed(r.ssim_summary.mean, 6) << ',' << fixed(r.ssim_summary.standard_error, 6) << ','
       << fixed(r.psnr_summary.mean, 4) << ',' << fixed(r.psnr_summary.standard_error, 4) << "\n";
  return os.str();
}

std::string format_cases_csv(std::span<const MetricReport> reports) {
  std::ostringstream os;
  os << "method,corruption,case,ssim,psnr\n";
  for (const auto& r : reports)
    for (std::size_t i = 0; i < r.ssim.size(); ++i)
      os << r.method << ',' << r.corruption << ',' << r.cases[i] << ',' << fixed(r.ssim[i], 6)
         << ',' << fixed(r.psnr[i], 4) << "\n";
  return os.str();
}

}  // namespace lisr
