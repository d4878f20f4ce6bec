#include "lisr/corruption.hpp"

#include <complex>
#include <mutex>

#include <fftw3.h>

#include "lisr/error.hpp"

namespace lisr {

std::string to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::kSliceMask: return "slice_mask";
    case CorruptionKind::kRegionMask: return "region_mask";
    case CorruptionKind::kKspaceMask: return "kspace_mask";
  }
  return "unknown";
}

CorruptionKind parse_corruption_kind(const std::string& name) {
  if (name == "slice_mask") return CorruptionKind::kSliceMask;
  if (name == "region_mask") return CorruptionKind::kRegionMask;
  if (name == "kspace_mask") return CorruptionKind::kKspaceMask;
  throw InvalidArgument("unknown corruption kind '" + name + "'");
}

ObservationMask::ObservationMask(Tensor values) : values_(std::move(values)) {
  if (values_.shape().c != 1) throw InvalidArgument("observation mask must have one channel");
  for (double v : values_.values())
    if (v != 0.0 && v != 1.0) throw InvalidArgument("mask is not binary");
}

ObservationMask ObservationMask::ones(const Shape& shape) {
  return ObservationMask(Tensor({1, shape.d, shape.h, shape.w}, 1.0));
}

std::size_t ObservationMask::observed_count() const {
  std::size_t n = 0;
  for (double v : values_.values()) n += v != 0.0;
  return n;
}

CorruptionSpec CorruptionSpec::slice(int axis, int factor, int offset) {
  CorruptionSpec s;
  s.kind = CorruptionKind::kSliceMask;
  s.axis = axis;
  s.factor = factor;
  s.offset = offset;
  if (axis < 0 || axis > 2) throw InvalidArgument("slice axis must be 0, 1 or 2");
  if (factor < 1) throw InvalidArgument("slice factor k must be >= 1");
  if (offset < 0 || offset >= factor) throw InvalidArgument("slice offset must lie in [0, k)");
  return s;
}

CorruptionSpec CorruptionSpec::region(const ObservationMask& mask) {
  CorruptionSpec s;
  s.kind = CorruptionKind::kRegionMask;
  s.mask = mask.values();
  return s;
}

CorruptionSpec CorruptionSpec::kspace(const ObservationMask& keep) {
  CorruptionSpec s;
  s.kind = CorruptionKind::kKspaceMask;
  s.mask = keep.values();
  return s;
}

namespace {

bool same_grid(const Shape& a, const Shape& b) { return a.d == b.d && a.h == b.h && a.w == b.w; }

void check_binary(const Tensor& m) {
  for (double v : m.values())
    if (v != 0.0 && v != 1.0) throw InvalidArgument("mask is not binary");
}

}  // namespace

void CorruptionSpec::validate_for(const Shape& shape) const {
  switch (kind) {
    case CorruptionKind::kSliceMask: {
      if (axis < 0 || axis > 2) throw InvalidArgument("slice axis must be 0, 1 or 2");
      if (factor < 1) throw InvalidArgument("slice factor k must be >= 1");
      if (offset < 0 || offset >= factor) throw InvalidArgument("slice offset must lie in [0, k)");
      const int n = shape.extent(axis);
      if (factor > n)
        throw InvalidArgument("slice factor " + std::to_string(factor) + " exceeds axis length " +
                              std::to_string(n));
      return;
    }
    case CorruptionKind::kRegionMask:
    case CorruptionKind::kKspaceMask:
      if (mask.shape().c != 1 || !same_grid(mask.shape(), shape))
        throw InvalidArgument("mask shape " + to_string(mask.shape()) +
                              " does not match volume shape " + to_string(shape));
      check_binary(mask);
      return;
  }
  throw InvalidArgument("invalid corruption kind");
}

CorruptionSpec resolve(const CorruptionDescriptor& d, const std::filesystem::path& base_dir) {
  if (d.kind == CorruptionKind::kSliceMask) return CorruptionSpec::slice(d.axis, d.factor, d.offset);
  if (d.mask_path.empty())
    throw InvalidArgument("corruption '" + d.name + "' requires a mask_path");
  std::filesystem::path p(d.mask_path);
  if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
  const ObservationMask mask(load_volume(p).data);
  return d.kind == CorruptionKind::kRegionMask ? CorruptionSpec::region(mask)
                                               : CorruptionSpec::kspace(mask);
}

ObservationMask slice_observation_mask(const Shape& shape, int axis, int k, int offset) {
  const Shape grid{1, shape.d, shape.h, shape.w};
  CorruptionSpec::slice(axis, k, offset).validate_for(grid);
  Tensor m(grid);
  for (int z = 0; z < grid.d; ++z)
    for (int y = 0; y < grid.h; ++y)
      for (int x = 0; x < grid.w; ++x) {
        const int idx = axis == 0 ? z : axis == 1 ? y : x;
        m.at(0, z, y, x) = idx % k == offset ? 1.0 : 0.0;
      }
  return ObservationMask(std::move(m));
}

namespace {

Tensor multiply_mask(const Tensor& v, const Tensor& mask) {
  Tensor out(v.shape());
  const std::size_t spatial = v.shape().spatial();
  for (int c = 0; c < v.shape().c; ++c)
    for (std::size_t i = 0; i < spatial; ++i) out[c * spatial + i] = v[c * spatial + i] * mask[i];
  return out;
}

Tensor slice_apply(const Tensor& v, int axis, int k, int offset) {
  Tensor out = v;
  const Shape& s = v.shape();
  for (int c = 0; c < s.c; ++c)
    for (int z = 0; z < s.d; ++z)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          const int idx = axis == 0 ? z : axis == 1 ? y : x;
          if (idx % k != offset) out.at(c, z, y, x) = 0.0;
        }
  return out;
}

// Planning is not thread-safe in FFTW; execution with the new-array
// interface is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

Tensor kspace_apply(const Tensor& v, const Tensor& keep) {
  const Shape& s = v.shape();
  const std::size_t n = s.spatial();
  auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
  if (buf == nullptr) throw Error("fftw_malloc failed");
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    forward = fftw_plan_dft_3d(s.d, s.h, s.w, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    backward = fftw_plan_dft_3d(s.d, s.h, s.w, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  Tensor out(s);
  for (int c = 0; c < s.c; ++c) {
    const double* src = v.data() + c * n;
    for (std::size_t i = 0; i < n; ++i) {
      buf[i][0] = src[i];
      buf[i][1] = 0.0;
    }
    fftw_execute_dft(forward, buf, buf);
    for (std::size_t i = 0; i < n; ++i) {
      buf[i][0] *= keep[i];
      buf[i][1] *= keep[i];
    }
    fftw_execute_dft(backward, buf, buf);
    double* dst = out.data() + c * n;
    const double scale = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) dst[i] = buf[i][0] * scale;
  }
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(backward);
  }
  fftw_free(buf);
  return out;
}

}  // namespace

std::pair<Volume, ObservationMask> slice_mask(const Volume& v, int axis, int k, int offset) {
  ObservationMask mask = slice_observation_mask(v.shape(), axis, k, offset);
  Volume out(slice_apply(v.data, axis, k, offset), v.spacing, v.meta);
  return {std::move(out), std::move(mask)};
}

Volume region_mask(const Volume& v, const ObservationMask& mask) {
  const CorruptionSpec spec = CorruptionSpec::region(mask);
  spec.validate_for(v.shape());
  return Volume(multiply_mask(v.data, mask.values()), v.spacing, v.meta);
}

Volume kspace_undersample(const Volume& v, const ObservationMask& keep) {
  const CorruptionSpec spec = CorruptionSpec::kspace(keep);
  spec.validate_for(v.shape());
  return Volume(kspace_apply(v.data, keep.values()), v.spacing, v.meta);
}

Tensor apply(const CorruptionSpec& spec, const Tensor& v) {
  spec.validate_for(v.shape());
  switch (spec.kind) {
    case CorruptionKind::kSliceMask: return slice_apply(v, spec.axis, spec.factor, spec.offset);
    case CorruptionKind::kRegionMask: return multiply_mask(v, spec.mask);
    case CorruptionKind::kKspaceMask: return kspace_apply(v, spec.mask);
  }
  throw InvalidArgument("invalid corruption kind");
}

Volume apply(const CorruptionSpec& spec, const Volume& v) {
  return Volume(apply(spec, v.data), v.spacing, v.meta);
}

ObservationMask observation_mask(const CorruptionSpec& spec, const Shape& shape) {
  spec.validate_for(shape);
  switch (spec.kind) {
    case CorruptionKind::kSliceMask:
      return slice_observation_mask(shape, spec.axis, spec.factor, spec.offset);
    case CorruptionKind::kRegionMask: return ObservationMask(spec.mask);
    case CorruptionKind::kKspaceMask: break;
  }
  throw InvalidArgument("k-space corruption has no voxel-wise observation mask");
}

}  // namespace lisr
