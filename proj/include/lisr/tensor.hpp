#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace lisr {

/// Channel-major 3D grid extent: c channels of d x h x w voxels.
struct Shape {
  int c = 1;
  int d = 1;
  int h = 1;
  int w = 1;

  std::size_t spatial() const noexcept {
    return static_cast<std::size_t>(d) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  std::size_t size() const noexcept {
    return static_cast<std::size_t>(c) * spatial();
  }
  bool valid() const noexcept { return c > 0 && d > 0 && h > 0 && w > 0; }
  int extent(int axis) const noexcept { return axis == 0 ? d : axis == 1 ? h : w; }

  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

/// Dense double-precision tensor with value semantics.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  std::size_t index(int c, int z, int y, int x) const noexcept {
    return ((static_cast<std::size_t>(c) * shape_.d + z) * shape_.h + y) *
               shape_.w +
           x;
  }
  double& at(int c, int z, int y, int x) noexcept { return data_[index(c, z, y, x)]; }
  double at(int c, int z, int y, int x) const noexcept { return data_[index(c, z, y, x)]; }

  std::span<double> channel(int c) noexcept {
    return std::span<double>(data_).subspan(c * shape_.spatial(), shape_.spatial());
  }
  std::span<const double> channel(int c) const noexcept {
    return std::span<const double>(data_).subspan(c * shape_.spatial(), shape_.spatial());
  }

  void fill(double v);

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_{0, 0, 0, 0};
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);
Tensor operator*(double s, Tensor a);

/// y += a * x, shapes must match.
void axpy(double a, const Tensor& x, Tensor& y);
double dot(const Tensor& a, const Tensor& b);
double sum(const Tensor& t);
double max_abs(const Tensor& t);

/// Throws InvalidArgument when shapes differ; `what` names the call site.
void require_same_shape(const Shape& a, const Shape& b, const char* what);

/// Standard-normal draw for every element, in storage order.
Tensor normal_tensor(Shape shape, std::mt19937_64& rng);

/// Deterministic 64-bit seed derived from a base seed and a stream index.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace lisr
