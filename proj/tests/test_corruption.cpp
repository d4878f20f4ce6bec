#include <doctest.h>

#include <complex>
#include <numbers>

#include "lisr/corruption.hpp"
#include "lisr/error.hpp"
#include "test_util.hpp"

using namespace lisr;
using lisr::testing::max_abs_diff;
using lisr::testing::uniform_tensor;

namespace {

/// Re(IDFT(keep * DFT(v))) by direct summation over every frequency.
Tensor brute_force_kspace(const Tensor& v, const Tensor& keep) {
  const Shape s = v.shape();
  const double two_pi = 2.0 * std::numbers::pi;
  const std::size_t n = s.size();
  std::vector<std::complex<double>> spec(n);
  for (int a = 0; a < s.d; ++a)
    for (int b = 0; b < s.h; ++b)
      for (int c = 0; c < s.w; ++c) {
        std::complex<double> acc = 0.0;
        for (int x = 0; x < s.d; ++x)
          for (int y = 0; y < s.h; ++y)
            for (int z = 0; z < s.w; ++z) {
              const double ph = -two_pi * (double(a) * x / s.d + double(b) * y / s.h + double(c) * z / s.w);
              acc += v.at(0, x, y, z) * std::polar(1.0, ph);
            }
        spec[(std::size_t(a) * s.h + b) * s.w + c] = acc * keep.at(0, a, b, c);
      }
  Tensor out(s);
  for (int x = 0; x < s.d; ++x)
    for (int y = 0; y < s.h; ++y)
      for (int z = 0; z < s.w; ++z) {
        std::complex<double> acc = 0.0;
        for (int a = 0; a < s.d; ++a)
          for (int b = 0; b < s.h; ++b)
            for (int c = 0; c < s.w; ++c) {
              const double ph = two_pi * (double(a) * x / s.d + double(b) * y / s.h + double(c) * z / s.w);
              acc += spec[(std::size_t(a) * s.h + b) * s.w + c] * std::polar(1.0, ph);
            }
        out.at(0, x, y, z) = acc.real() / static_cast<double>(n);
      }
  return out;
}

Tensor random_binary(const Shape& s, std::mt19937_64& rng, double p = 0.5) {
  std::bernoulli_distribution b(p);
  Tensor t(s);
  for (double& v : t.values()) v = b(rng) ? 1.0 : 0.0;
  return t;
}

}  // namespace

TEST_CASE("slice mask keeps exactly the slices congruent to the offset") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<int> ext(1, 9);
    const Shape s{1, ext(rng), ext(rng), ext(rng)};
    const int axis = trial % 3;
    const int len = axis == 0 ? s.d : axis == 1 ? s.h : s.w;
    std::uniform_int_distribution<int> kd(1, len);
    const int k = kd(rng);
    const int offset = std::uniform_int_distribution<int>(0, k - 1)(rng);
    const Volume v(uniform_tensor(s, rng, 0.1, 1.0));
    const auto [masked, mask] = slice_mask(v, axis, k, offset);
    std::size_t kept = 0;
    for (int d = 0; d < s.d; ++d)
      for (int h = 0; h < s.h; ++h)
        for (int w = 0; w < s.w; ++w) {
          const int idx = axis == 0 ? d : axis == 1 ? h : w;
          const bool keep = idx % k == offset;
          CHECK(masked.data.at(0, d, h, w) == (keep ? v.data.at(0, d, h, w) : 0.0));
          CHECK(mask.values().at(0, d, h, w) == (keep ? 1.0 : 0.0));
          kept += keep;
        }
    CHECK(mask.observed_count() == kept);
    // Idempotent.
    CHECK(slice_mask(masked, axis, k, offset).first == masked);
  }
}

TEST_CASE("slice mask with k = 1 is the identity") {
  std::mt19937_64 rng(2);
  const Volume v(uniform_tensor({1, 4, 5, 6}, rng));
  for (int axis = 0; axis < 3; ++axis) {
    const auto [masked, mask] = slice_mask(v, axis, 1);
    CHECK(masked == v);
    CHECK(mask.observed_count() == v.data.size());
  }
}

TEST_CASE("corruption arguments are validated") {
  const Volume v(Tensor({1, 4, 4, 4}));
  CHECK_THROWS_AS(slice_mask(v, 0, 0), InvalidArgument);
  CHECK_THROWS_AS(slice_mask(v, 3, 2), InvalidArgument);
  CHECK_THROWS_AS(slice_mask(v, 0, 2, 2), InvalidArgument);
  try {
    slice_mask(v, 1, 5);
    FAIL("expected an error");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("exceeds axis length") != std::string::npos);
  }
  CHECK_THROWS_AS(region_mask(v, ObservationMask::ones({1, 4, 4, 5})), InvalidArgument);
  Tensor half({1, 4, 4, 4}, 0.5);
  CHECK_THROWS_AS(ObservationMask{half}, InvalidArgument);
  CHECK_THROWS_AS(ObservationMask{Tensor({2, 4, 4, 4})}, InvalidArgument);
  CHECK_THROWS_AS(parse_corruption_kind("blur"), InvalidArgument);
  CHECK(parse_corruption_kind(to_string(CorruptionKind::kKspaceMask)) == CorruptionKind::kKspaceMask);
  const CorruptionSpec ks = CorruptionSpec::kspace(ObservationMask::ones({1, 4, 4, 4}));
  CHECK_THROWS_AS(observation_mask(ks, {1, 4, 4, 4}), InvalidArgument);
  CorruptionDescriptor d;
  d.kind = CorruptionKind::kRegionMask;
  CHECK_THROWS_AS(resolve(d), InvalidArgument);
}

TEST_CASE("region mask is an elementwise product") {
  std::mt19937_64 rng(3);
  const Shape s{1, 5, 4, 3};
  const Volume v(uniform_tensor(s, rng));
  const ObservationMask m(random_binary(s, rng));
  const Volume out = region_mask(v, m);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    CHECK(out.data[i] == v.data[i] * m.values()[i]);
  CHECK(region_mask(v, ObservationMask::ones(s)) == v);
  CHECK(region_mask(v, ObservationMask(Tensor(s))).data == Tensor(s));
}

TEST_CASE("k-space undersampling matches a direct DFT") {
  std::mt19937_64 rng(4);
  for (const Shape s : {Shape{1, 4, 3, 5}, Shape{1, 2, 6, 4}, Shape{1, 1, 1, 7}}) {
    const Tensor v = uniform_tensor(s, rng);
    const Tensor keep = random_binary(s, rng, 0.4);
    const Volume out = kspace_undersample(Volume(v), ObservationMask(keep));
    CHECK(max_abs_diff(out.data, brute_force_kspace(v, keep)) < 1e-12);
  }
}

TEST_CASE("k-space special masks") {
  std::mt19937_64 rng(5);
  const Shape s{1, 6, 4, 8};
  const Volume v(uniform_tensor(s, rng));
  // Keeping everything reproduces the input.
  CHECK(max_abs_diff(kspace_undersample(v, ObservationMask::ones(s)).data, v.data) < 1e-12);
  // Keeping only DC gives the mean everywhere.
  Tensor dc(s);
  dc.at(0, 0, 0, 0) = 1.0;
  const Volume mean_only = kspace_undersample(v, ObservationMask(dc));
  const double mean = sum(v.data) / static_cast<double>(v.data.size());
  for (double x : mean_only.data.values()) CHECK(x == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("every corruption is linear and self-adjoint") {
  std::mt19937_64 rng(6);
  const Shape s{1, 6, 5, 4};
  // Hermitian-symmetric keep masks make the k-space operator an orthogonal
  // projection; random masks still give a self-adjoint Re(.) operator.
  std::vector<CorruptionSpec> specs{CorruptionSpec::slice(0, 2), CorruptionSpec::slice(2, 3, 1),
                                    CorruptionSpec::region(ObservationMask(random_binary(s, rng))),
                                    CorruptionSpec::kspace(ObservationMask(random_binary(s, rng)))};
  for (const auto& f : specs) {
    for (int trial = 0; trial < 5; ++trial) {
      const Tensor a = uniform_tensor(s, rng);
      const Tensor b = uniform_tensor(s, rng);
      const double alpha = std::uniform_real_distribution<double>(-2, 2)(rng);
      const Tensor lhs = apply(f, a * alpha + b);
      const Tensor rhs = apply(f, a) * alpha + apply(f, b);
      CHECK(max_abs_diff(lhs, rhs) < 1e-12);
      CHECK(dot(apply(f, a), b) == doctest::Approx(dot(a, apply(f, b))).epsilon(1e-12));
    }
  }
}

TEST_CASE("k-space projection with a Hermitian-symmetric mask is idempotent") {
  std::mt19937_64 rng(7);
  const Shape s{1, 6, 4, 5};
  Tensor keep = random_binary(s, rng);
  for (int a = 0; a < s.d; ++a)
    for (int b = 0; b < s.h; ++b)
      for (int c = 0; c < s.w; ++c)
        keep.at(0, (s.d - a) % s.d, (s.h - b) % s.h, (s.w - c) % s.w) = keep.at(0, a, b, c);
  const ObservationMask m(keep);
  const Volume v(uniform_tensor(s, rng));
  const Volume once = kspace_undersample(v, m);
  CHECK(max_abs_diff(kspace_undersample(once, m).data, once.data) < 1e-12);
}

TEST_CASE("voxel masks agree with the operator") {
  std::mt19937_64 rng(8);
  const Shape s{1, 7, 4, 4};
  const CorruptionSpec f = CorruptionSpec::slice(0, 3, 2);
  const ObservationMask m = observation_mask(f, s);
  CHECK(m == slice_observation_mask(s, 0, 3, 2));
  const Tensor ones(s, 1.0);
  CHECK(apply(f, ones) == m.values());
}
