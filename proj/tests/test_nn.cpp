#include <doctest.h>

#include "lisr/error.hpp"
#include "lisr/nn.hpp"
#include "test_util.hpp"

using namespace lisr;
using lisr::testing::central_difference;
using lisr::testing::rel_err;
using lisr::testing::uniform_tensor;

TEST_CASE("SiLU and sigmoid derivatives match finite differences") {
  for (double x : {-4.0, -1.3, -0.2, 0.0, 0.7, 2.5}) {
    const double h = 1e-6;
    const double fd = (nn::silu(x + h) - nn::silu(x - h)) / (2 * h);
    CHECK(rel_err(nn::silu_derivative(x), fd, 1e-9) < 1e-7);
  }
  const Tensor x(Shape{1, 1, 1, 3}, {-2.0, 0.1, 3.0});
  const Tensor y = nn::sigmoid(x);
  const Tensor g = nn::sigmoid_backward(y, Tensor(x.shape(), 1.0));
  for (std::size_t i = 0; i < 3; ++i) {
    const double h = 1e-6;
    const double fd = (1 / (1 + std::exp(-(x[i] + h))) - 1 / (1 + std::exp(-(x[i] - h)))) / (2 * h);
    CHECK(rel_err(g[i], fd) < 1e-7);
  }
}

TEST_CASE("Conv3d layer gradients match finite differences") {
  std::mt19937_64 rng(21);
  nn::ParamLayout layout;
  const nn::Conv3d conv = nn::Conv3d::create(layout, 2, 3, 3, 2, 1);
  std::vector<double> params(layout.size());
  conv.initialize(params, rng);
  for (double& b : std::span(params).subspan(conv.bias_offset, 3)) b = 0.1;
  Tensor x = uniform_tensor({2, 5, 4, 6}, rng);
  const Tensor probe = uniform_tensor(conv.forward(params, x).shape(), rng);
  auto loss = [&] { return dot(conv.forward(params, x), probe); };

  std::vector<double> grads(params.size(), 0.0);
  const Tensor gx = conv.backward(params, x, probe, grads);
  for (std::size_t i = 0; i < params.size(); i += 7)
    CHECK(rel_err(grads[i], central_difference(loss, params[i], 1e-6), 1e-8) < 1e-6);
  for (std::size_t i = 0; i < x.size(); i += 11)
    CHECK(rel_err(gx[i], central_difference(loss, x[i], 1e-6), 1e-8) < 1e-6);
}

TEST_CASE("GroupNorm normalizes each group and picks a dividing group count") {
  nn::ParamLayout layout;
  CHECK(nn::GroupNorm::create(layout, 8).groups == 4);
  CHECK(nn::GroupNorm::create(layout, 6).groups == 3);
  CHECK(nn::GroupNorm::create(layout, 5).groups == 1);
  CHECK(nn::GroupNorm::create(layout, 2).groups == 2);

  std::mt19937_64 rng(23);
  nn::ParamLayout l2;
  const nn::GroupNorm norm = nn::GroupNorm::create(l2, 4, 2);
  std::vector<double> params(l2.size());
  norm.initialize(params);
  const Tensor x = uniform_tensor({4, 3, 2, 5}, rng, -2.0, 5.0);
  const Tensor y = norm.forward(params, x, nullptr);
  const std::size_t n = y.size() / 2;
  for (int g = 0; g < 2; ++g) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += y[g * n + i];
    m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) v += (y[g * n + i] - m) * (y[g * n + i] - m);
    v /= static_cast<double>(n);
    CHECK(std::abs(m) < 1e-12);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-4));
  }
  Tensor wrong({3, 3, 2, 5});
  CHECK_THROWS_AS(norm.forward(params, wrong, nullptr), InvalidArgument);
}

TEST_CASE("GroupNorm gradients match finite differences") {
  std::mt19937_64 rng(24);
  nn::ParamLayout layout;
  const nn::GroupNorm norm = nn::GroupNorm::create(layout, 6, 3);
  std::vector<double> params(layout.size());
  for (double& p : params) p = std::uniform_real_distribution<double>(-1.5, 1.5)(rng);
  Tensor x = uniform_tensor({6, 3, 4, 2}, rng);
  const Tensor probe = uniform_tensor(x.shape(), rng);
  auto loss = [&] { return dot(norm.forward(params, x, nullptr), probe); };

  nn::GroupNorm::Cache cache;
  norm.forward(params, x, &cache);
  std::vector<double> grads(params.size(), 0.0);
  const Tensor gx = norm.backward(params, cache, probe, grads);
  for (std::size_t i = 0; i < params.size(); ++i)
    CHECK(rel_err(grads[i], central_difference(loss, params[i], 1e-6), 1e-8) < 1e-6);
  for (std::size_t i = 0; i < x.size(); i += 5)
    CHECK(rel_err(gx[i], central_difference(loss, x[i], 1e-6), 1e-8) < 1e-6);
}

TEST_CASE("Dense layer gradients match finite differences") {
  std::mt19937_64 rng(22);
  nn::ParamLayout layout;
  const nn::Dense dense = nn::Dense::create(layout, 5, 4);
  std::vector<double> params(layout.size());
  dense.initialize(params, rng);
  std::vector<double> x{0.3, -1.2, 0.8, 2.0, -0.4};
  const std::vector<double> probe{1.0, -2.0, 0.5, 0.25};
  auto loss = [&] {
    const auto y = dense.forward(params, x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * probe[i];
    return s;
  };
  std::vector<double> grads(params.size(), 0.0);
  const auto gx = dense.backward(params, x, probe, grads);
  for (std::size_t i = 0; i < params.size(); ++i)
    CHECK(rel_err(grads[i], central_difference(loss, params[i], 1e-6), 1e-8) < 1e-6);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(rel_err(gx[i], central_difference(loss, x[i], 1e-6), 1e-8) < 1e-6);
}

TEST_CASE("channel bias helpers are adjoint") {
  std::mt19937_64 rng(23);
  Tensor x = uniform_tensor({3, 2, 2, 2}, rng);
  const Tensor base = x;
  const std::vector<double> bias{1.0, -2.0, 0.5};
  nn::add_channel_bias(x, bias);
  CHECK(x.at(1, 1, 0, 1) == base.at(1, 1, 0, 1) - 2.0);
  const Tensor gy = uniform_tensor(x.shape(), rng);
  const auto sums = nn::channel_sums(gy);
  double lhs = 0.0;
  for (int c = 0; c < 3; ++c) lhs += sums[c] * bias[c];
  CHECK(lhs == doctest::Approx(dot(x - base, gy)).epsilon(1e-12));
}

TEST_CASE("Adam matches the bias-corrected update formula") {
  const nn::AdamConfig cfg{0.07, 0.9, 0.999, 1e-8};
  nn::Adam adam(2, cfg);
  std::vector<double> p{1.0, -2.0};
  std::vector<double> m(2, 0.0), v(2, 0.0), q = p;
  const std::vector<std::vector<double>> grads{{0.5, -1.0}, {0.2, 3.0}, {-0.7, 0.0}};
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    adam.step(p, grads[t - 1]);
    for (int i = 0; i < 2; ++i) {
      const double g = grads[t - 1][i];
      m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g * g;
      const double mh = m[i] / (1 - std::pow(cfg.beta1, static_cast<double>(t)));
      const double vh = v[i] / (1 - std::pow(cfg.beta2, static_cast<double>(t)));
      q[i] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.epsilon);
      CHECK(p[i] == doctest::Approx(q[i]).epsilon(1e-14));
    }
  }
  CHECK(adam.steps() == 3);
  // First step moves every coordinate with a nonzero gradient by ~lr.
  nn::Adam fresh(1, cfg);
  std::vector<double> r{0.0};
  fresh.step(r, std::vector<double>{123.0});
  CHECK(r[0] == doctest::Approx(-0.07).epsilon(1e-9));
}

TEST_CASE("Adam validates its hyperparameters") {
  CHECK_THROWS_AS(nn::Adam(1, {0.0, 0.9, 0.999, 1e-8}), InvalidArgument);
  CHECK_THROWS_AS(nn::Adam(1, {0.1, 1.0, 0.999, 1e-8}), InvalidArgument);
  CHECK_THROWS_AS(nn::Adam(1, {0.1, 0.9, -0.1, 1e-8}), InvalidArgument);
  nn::Adam adam(2, {});
  std::vector<double> p(3);
  CHECK_THROWS_AS(adam.step(p, std::vector<double>(3)), InvalidArgument);
}
