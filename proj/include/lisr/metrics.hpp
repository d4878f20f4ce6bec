#pragma once

#include <array>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "lisr/corruption.hpp"
#include "lisr/volume.hpp"

namespace lisr {

/// Returned by psnr() for identical inputs.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10 log10(peak^2 / MSE).
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);
double psnr(const Volume& a, const Volume& b, double peak = 1.0);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;

  void validate() const;
  friend bool operator==(const SsimOptions&, const SsimOptions&) = default;
};

/// Mean of the local SSIM map computed with a separable 3D Gaussian window
/// over every position where the window fits entirely inside the volume.
double ssim(const Tensor& a, const Tensor& b, const SsimOptions& options = {});
double ssim(const Volume& a, const Volume& b, const SsimOptions& options = {});

/// Fills unobserved slices along `axis` by cubic Lagrange interpolation
/// through the four nearest retained slices (fewer when fewer exist). Beyond
/// the first/last retained slice values are extrapolated linearly from the
/// two nearest retained slices. Retained slices are copied unchanged.
Volume cubic_interpolate(const Volume& masked, const ObservationMask& mask, int axis);

/// Central sub-block of the given extents (clamped to the volume).
Tensor central_crop(const Tensor& v, std::array<int, 3> extents);

struct Summary {
  double mean = 0.0;
  /// Sample standard deviation over sqrt(n); 0 for n = 1.
  double standard_error = 0.0;
};

Summary summarize(std::span<const double> values);

struct MetricReport {
  std::string method;
  std::string corruption;
  std::vector<std::string> cases;
  std::vector<double> psnr;
  std::vector<double> ssim;
  Summary psnr_summary;
  Summary ssim_summary;
};

/// Per-case PSNR/SSIM on the central crop plus cohort mean and standard error.
MetricReport evaluate_cohort(std::span<const Volume> truths, std::span<const Volume> reconstructions,
                             std::array<int, 3> crop, const SsimOptions& options = {},
                             std::string method = {}, std::string corruption = {},
                             std::vector<std::string> cases = {});

/// Text table with one row per method: SSIM and PSNR as mean +- SE.
std::string format_table(std::span<const MetricReport> reports, const std::string& title);
/// method,corruption,n,ssim_mean,ssim_se,psnr_mean,psnr_se
std::string format_csv(std::span<const MetricReport> reports);
/// method,corruption,case,ssim,psnr
std::string format_cases_csv(std::span<const MetricReport> reports);

}  // namespace lisr
