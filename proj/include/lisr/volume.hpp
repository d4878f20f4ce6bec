#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lisr/tensor.hpp"

namespace lisr {

using Spacing = std::array<double, 3>;
using MetaData = std::map<std::string, std::string>;

/// Single-channel 3D intensity grid with physical voxel spacing (mm).
struct Volume {
  Tensor data;
  Spacing spacing{1.0, 1.0, 1.0};
  MetaData meta;

  Volume() = default;
  explicit Volume(Tensor values, Spacing spacing = {1.0, 1.0, 1.0}, MetaData meta = {});

  const Shape& shape() const noexcept { return data.shape(); }

  friend bool operator==(const Volume&, const Volume&) = default;
};

enum class LatentRole { kClean, kNoisy, kTerminal };

/// Latent-space array: z_0 (clean), z_t (noisy) or z_T (terminal noise).
struct Latent {
  Tensor data;
  LatentRole role = LatentRole::kClean;

  const Shape& shape() const noexcept { return data.shape(); }
  friend bool operator==(const Latent&, const Latent&) = default;
};

/// Scalar covariates injected into the denoiser; every entry lies in [0,1].
class Conditioning {
 public:
  Conditioning() = default;
  explicit Conditioning(std::vector<double> values);
  static Conditioning constant(int count, double value);

  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  friend bool operator==(const Conditioning&, const Conditioning&) = default;

 private:
  std::vector<double> values_;
};

/// Affine rescale onto [0,1]. Throws InvalidArgument("degenerate intensity
/// range") for constant or non-finite input.
Volume normalize_intensity(const Volume& v);

/// Synthetic multi-ellipsoid phantom parameters. An outer "head" ellipsoid
/// holds 2..N-1 inner ellipsoids; boundaries are Gaussian-smoothed.
struct PhantomSpec {
  std::array<int, 3> grid{32, 32, 32};
  int min_ellipsoids = 3;
  int max_ellipsoids = 8;
  /// Intensity band of the outer ellipsoid, bright inserts, and dark inserts.
  std::array<double, 2> outer_band{0.45, 0.65};
  std::array<double, 2> bright_band{0.75, 1.0};
  std::array<double, 2> dark_band{0.05, 0.25};
  double smoothing_sigma = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const PhantomSpec&, const PhantomSpec&) = default;
};

/// Phantom together with its covariates: ellipsoid-count fraction, a binary
/// elongation flag, dark-insert volume fraction, outer volume fraction.
struct Phantom {
  Volume volume;
  Conditioning covariates;
};

Phantom make_phantom_with_covariates(const PhantomSpec& spec);
Volume make_phantom(const PhantomSpec& spec);

/// On-disk element type for volume files.
enum class SampleType { kFloat32, kFloat64 };

/// Writes `path` (raw little-endian samples) and `path` + ".json" (header
/// with shape, spacing, meta). float64 round-trips any Volume bit-exactly;
/// float32 is exact only for float-representable data.
void save_volume(const Volume& v, const std::filesystem::path& path,
                 SampleType type = SampleType::kFloat64);
Volume load_volume(const std::filesystem::path& path);

/// Same format for multi-channel latents (header records the channel count).
void save_latent(const Latent& z, const std::filesystem::path& path);
Latent load_latent(const std::filesystem::path& path);

/// Writes `contents` to `path` via a temporary sibling and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

/// FNV-1a 64-bit digest, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace lisr
