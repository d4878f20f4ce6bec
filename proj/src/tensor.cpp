#include "lisr/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "lisr/error.hpp"

namespace lisr {

std::string to_string(const Shape& s) {
  return std::to_string(s.c) + "x" + std::to_string(s.d) + "x" +
         std::to_string(s.h) + "x" + std::to_string(s.w);
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape) {
  if (!shape.valid()) throw InvalidArgument("tensor shape must be positive: " + to_string(shape));
  data_.assign(shape.size(), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(shape), data_(std::move(values)) {
  if (!shape.valid()) throw InvalidArgument("tensor shape must be positive: " + to_string(shape));
  if (data_.size() != shape.size())
    throw InvalidArgument("tensor value count " + std::to_string(data_.size()) +
                          " does not match shape " + to_string(shape));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(shape_, other.shape_, "tensor +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  require_same_shape(shape_, other.shape_, "tensor -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }
Tensor operator*(double s, Tensor a) { return a *= s; }

void axpy(double a, const Tensor& x, Tensor& y) {
  require_same_shape(x.shape(), y.shape(), "axpy");
  const double* xs = x.data();
  double* ys = y.data();
  for (std::size_t i = 0; i < y.size(); ++i) ys[i] += a * xs[i];
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a.shape(), b.shape(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double sum(const Tensor& t) {
  double acc = 0.0;
  for (double v : t.values()) acc += v;
  return acc;
}

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.values()) m = std::max(m, std::abs(v));
  return m;
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b))
    throw InvalidArgument(std::string(what) + ": shape mismatch " + to_string(a) +
                          " vs " + to_string(b));
}

Tensor normal_tensor(Shape shape, std::mt19937_64& rng) {
  Tensor t(shape);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : t.values()) v = normal(rng);
  return t;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  // splitmix64 over (base, stream)
  std::uint64_t x = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace lisr
