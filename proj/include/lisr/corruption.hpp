#pragma once

#include <filesystem>
#include <string>
#include <utility>

#include "lisr/volume.hpp"

namespace lisr {

enum class CorruptionKind { kSliceMask, kRegionMask, kKspaceMask };

std::string to_string(CorruptionKind kind);
CorruptionKind parse_corruption_kind(const std::string& name);

/// Binary single-channel volume marking acquired voxels.
class ObservationMask {
 public:
  ObservationMask() = default;
  /// Throws InvalidArgument unless every value is exactly 0 or 1.
  explicit ObservationMask(Tensor values);
  static ObservationMask ones(const Shape& shape);

  const Tensor& values() const noexcept { return values_; }
  const Shape& shape() const noexcept { return values_.shape(); }
  std::size_t observed_count() const;

  friend bool operator==(const ObservationMask&, const ObservationMask&) = default;

 private:
  Tensor values_;
};

/// A fully resolved corruption operator f. Every kind is a linear map that
/// equals its own adjoint, so the pullback of a cotangent is apply() again.
struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::kSliceMask;
  int axis = 0;
  int factor = 1;
  int offset = 0;
  /// Region mask (kRegionMask) or frequency keep-mask (kKspaceMask), both in
  /// the volume's grid; k-space masks use unshifted FFT ordering.
  Tensor mask;

  static CorruptionSpec slice(int axis, int factor, int offset = 0);
  static CorruptionSpec region(const ObservationMask& mask);
  static CorruptionSpec kspace(const ObservationMask& keep);

  /// Throws InvalidArgument if the spec cannot act on volumes of `shape`.
  void validate_for(const Shape& shape) const;
};

/// Config-file form of a corruption; masks are referenced by path.
struct CorruptionDescriptor {
  std::string name;
  CorruptionKind kind = CorruptionKind::kSliceMask;
  int axis = 0;
  int factor = 1;
  int offset = 0;
  std::string mask_path;

  friend bool operator==(const CorruptionDescriptor&, const CorruptionDescriptor&) = default;
};

/// Loads any referenced mask (relative paths resolve against `base_dir`).
CorruptionSpec resolve(const CorruptionDescriptor& d, const std::filesystem::path& base_dir = {});

/// Keeps slices whose index along `axis` is congruent to `offset` mod k and
/// zeroes the rest.
std::pair<Volume, ObservationMask> slice_mask(const Volume& v, int axis, int k, int offset = 0);
ObservationMask slice_observation_mask(const Shape& shape, int axis, int k, int offset = 0);

/// Elementwise product with a binary mask.
Volume region_mask(const Volume& v, const ObservationMask& mask);

/// Re(IFFT(keep * FFT(v))).
Volume kspace_undersample(const Volume& v, const ObservationMask& keep);

Tensor apply(const CorruptionSpec& spec, const Tensor& v);
Volume apply(const CorruptionSpec& spec, const Volume& v);

/// Acquired-voxel mask of a slice or region spec. K-space specs have no
/// voxel-wise mask and raise InvalidArgument.
ObservationMask observation_mask(const CorruptionSpec& spec, const Shape& shape);

}  // namespace lisr
