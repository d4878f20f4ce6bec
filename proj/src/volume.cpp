#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "lisr/error.hpp"
#include "lisr/kernels.hpp"
#include "lisr/volume.hpp"

namespace lisr {

Volume::Volume(Tensor values, Spacing sp, MetaData m)
    : data(std::move(values)), spacing(sp), meta(std::move(m)) {
  if (data.shape().c != 1) throw InvalidArgument("volume must be single-channel");
  for (double s : spacing)
    if (!(s > 0.0)) throw InvalidArgument("volume spacing must be positive");
}

Conditioning::Conditioning(std::vector<double> values) : values_(std::move(values)) {
  for (double v : values_)
    if (!(v >= 0.0 && v <= 1.0))
      throw InvalidArgument("conditioning entries must lie in [0,1]");
}

Conditioning Conditioning::constant(int count, double value) {
  return Conditioning(std::vector<double>(count, value));
}

Volume normalize_intensity(const Volume& v) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double x : v.data.values()) {
    if (!std::isfinite(x)) throw InvalidArgument("degenerate intensity range");
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (!(hi > lo)) throw InvalidArgument("degenerate intensity range");
  Volume out = v;
  const double inv = 1.0 / (hi - lo);
  for (double& x : out.data.values()) x = (x - lo) * inv;
  // pin the extremes exactly; rounding can leave max at 1 - ulp
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    if (v.data[i] == lo) out.data[i] = 0.0;
    if (v.data[i] == hi) out.data[i] = 1.0;
  }
  return out;
}

void PhantomSpec::validate() const {
  for (int g : grid)
    if (g <= 0) throw InvalidArgument("phantom grid size must be positive");
  if (min_ellipsoids < 2 || max_ellipsoids < min_ellipsoids)
    throw InvalidArgument("phantom ellipsoid count range invalid");
  for (const auto* band : {&outer_band, &bright_band, &dark_band})
    if (!((*band)[0] >= 0.0 && (*band)[0] <= (*band)[1] && (*band)[1] <= 1.0))
      throw InvalidArgument("phantom intensity band must satisfy 0 <= lo <= hi <= 1");
  if (smoothing_sigma < 0.0) throw InvalidArgument("phantom smoothing sigma must be >= 0");
}

namespace {

struct Ellipsoid {
  std::array<double, 3> center;
  std::array<double, 3> radii;
  double angle;  // rotation about the first axis
  double intensity;

  bool contains(double z, double y, double x) const {
    const double dz = z - center[0];
    const double dy0 = y - center[1];
    const double dx0 = x - center[2];
    const double c = std::cos(angle), s = std::sin(angle);
    const double dy = c * dy0 + s * dx0;
    const double dx = -s * dy0 + c * dx0;
    const double r = (dz * dz) / (radii[0] * radii[0]) + (dy * dy) / (radii[1] * radii[1]) +
                     (dx * dx) / (radii[2] * radii[2]);
    return r <= 1.0;
  }
};

}  // namespace

Phantom make_phantom_with_covariates(const PhantomSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  auto uniform = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };

  const int count = std::uniform_int_distribution<int>(spec.min_ellipsoids, spec.max_ellipsoids)(rng);
  const bool elongated = uniform(0.0, 1.0) < 0.5;

  std::vector<Ellipsoid> shapes;
  const double base = uniform(0.6, 0.85);
  Ellipsoid outer{{uniform(-0.05, 0.05), uniform(-0.05, 0.05), uniform(-0.05, 0.05)},
                  {base * uniform(0.85, 1.0), base * (elongated ? 1.05 : 0.85),
                   base * (elongated ? 0.85 : 1.05)},
                  0.0,
                  uniform(spec.outer_band[0], spec.outer_band[1])};
  shapes.push_back(outer);

  std::vector<bool> dark(count, false);
  for (int i = 1; i < count; ++i) {
    dark[i] = uniform(0.0, 1.0) < 0.4;
    const auto& band = dark[i] ? spec.dark_band : spec.bright_band;
    Ellipsoid e;
    for (int a = 0; a < 3; ++a) {
      e.center[a] = outer.center[a] + 0.45 * outer.radii[a] * uniform(-1.0, 1.0);
      e.radii[a] = outer.radii[a] * uniform(0.12, 0.35);
    }
    e.angle = uniform(0.0, std::numbers::pi);
    e.intensity = uniform(band[0], band[1]);
    shapes.push_back(e);
  }

  const auto [nd, nh, nw] = spec.grid;
  Tensor hard({1, nd, nh, nw});
  std::size_t outer_voxels = 0, dark_voxels = 0;
  for (int z = 0; z < nd; ++z) {
    const double pz = (z + 0.5) / nd * 2.0 - 1.0;
    for (int y = 0; y < nh; ++y) {
      const double py = (y + 0.5) / nh * 2.0 - 1.0;
      for (int x = 0; x < nw; ++x) {
        const double px = (x + 0.5) / nw * 2.0 - 1.0;
        double value = 0.0;
        int owner = -1;
        for (int i = 0; i < count; ++i) {
          if (shapes[i].contains(pz, py, px)) {
            value = shapes[i].intensity;
            owner = i;
          }
        }
        if (owner >= 0) ++outer_voxels;
        if (owner > 0 && dark[owner]) ++dark_voxels;
        hard.at(0, z, y, x) = value;
      }
    }
  }

  Tensor smooth = hard;
  if (spec.smoothing_sigma > 0.0) {
    const int half = std::max(1, static_cast<int>(std::ceil(3.0 * spec.smoothing_sigma)));
    smooth = kernels::filter3_same(hard, kernels::gaussian_taps(2 * half + 1, spec.smoothing_sigma));
  }
  for (double& v : smooth.values()) v = std::clamp(v, 0.0, 1.0);

  const double total = static_cast<double>(hard.size());
  const double count_frac =
      spec.max_ellipsoids == spec.min_ellipsoids
          ? 0.5
          : static_cast<double>(count - spec.min_ellipsoids) /
                (spec.max_ellipsoids - spec.min_ellipsoids);
  const double dark_frac =
      outer_voxels ? std::min(1.0, 4.0 * static_cast<double>(dark_voxels) / outer_voxels) : 0.0;
  const double outer_frac = std::min(1.0, static_cast<double>(outer_voxels) / total / 0.4);

  Phantom p;
  p.covariates = Conditioning({count_frac, elongated ? 1.0 : 0.0, dark_frac, outer_frac});
  MetaData meta{{"source", "phantom"}, {"seed", std::to_string(spec.seed)}};
  p.volume = Volume(std::move(smooth), {1.0, 1.0, 1.0}, std::move(meta));
  return p;
}

Volume make_phantom(const PhantomSpec& spec) {
  return make_phantom_with_covariates(spec).volume;
}

}  // namespace lisr
