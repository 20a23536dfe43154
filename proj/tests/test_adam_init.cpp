#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nnu/adam.hpp"
#include "nnu/init.hpp"
#include "nnu/rng.hpp"

using namespace nnu;

TEST_CASE("adam: first-step magnitude is ~alpha*sign(g)") {
  Rng rng(41);
  std::vector<Tensor<double>> params;
  params.emplace_back(Shape{10});
  auto& p = params[0];
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = rng.normal();
  auto before = p.clone();
  p.set_requires_grad(true);
  for (std::size_t i = 0; i < p.size(); ++i)
    p.grad()[i] = rng.normal(0.0, 2.0);
  auto grads = p.grad();
  AdamState<double> st;
  st.init(params);
  adam_step(params, st);
  CHECK(st.step == 1);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double delta = p[i] - before[i];
    CHECK(std::abs(delta) <= st.alpha * (1.0 + 1e-6));
    // bias-corrected first step: alpha * g / (|g| + eps')
    CHECK(delta * grads[i] < 0.0);  // moves against the gradient
    CHECK(std::abs(std::abs(delta) - st.alpha) < st.alpha * 1e-4);
  }
}

TEST_CASE("adam: zero grad forever leaves params unchanged") {
  std::vector<Tensor<double>> params;
  params.emplace_back(Shape{4});
  params[0][0] = 1.5;
  params[0][2] = -2.5;
  params[0].set_requires_grad(true);
  auto before = params[0].clone();
  AdamState<double> st;
  st.init(params);
  for (int i = 0; i < 50; ++i) adam_step(params, st);
  CHECK(st.step == 50);
  for (std::size_t i = 0; i < params[0].size(); ++i)
    CHECK(params[0][i] == before[i]);
}

TEST_CASE("adam: identical seeds give bit-identical trajectories") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Tensor<double>> params;
    params.emplace_back(Shape{6});
    for (std::size_t i = 0; i < 6; ++i) params[0][i] = rng.normal();
    params[0].set_requires_grad(true);
    AdamState<double> st;
    st.init(params);
    for (int step = 0; step < 25; ++step) {
      for (std::size_t i = 0; i < 6; ++i)
        params[0].grad()[i] = rng.normal() + params[0][i];
      adam_step(params, st);
      params[0].zero_grad();
    }
    return params[0].values();
  };
  auto a = run(7), b = run(7);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("adam: moment shapes must match params") {
  std::vector<Tensor<double>> params;
  params.emplace_back(Shape{4});
  AdamState<double> st;
  st.init(params);
  st.m[0] = Tensor<double>({5});
  params[0].set_requires_grad(true);
  CHECK_THROWS_AS(adam_step(params, st), DimensionError);
}

TEST_CASE("he_init: sample std within 2% of sqrt(2/fan_in)") {
  Rng rng(43);
  const std::size_t fan_in = 128;
  auto t = he_init<double>({100000}, fan_in, rng);
  double sum = 0, sq = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    sum += t[i];
    sq += t[i] * t[i];
  }
  const double mean = sum / double(t.size());
  const double std = std::sqrt(sq / double(t.size()) - mean * mean);
  const double expect = std::sqrt(2.0 / double(fan_in));
  CHECK(std::abs(std - expect) / expect < 0.02);
  CHECK(std::abs(mean) < 0.01);
}

TEST_CASE("glorot_init: bounds never exceeded") {
  Rng rng(44);
  const double limit = std::sqrt(6.0 / (40.0 + 30.0));
  auto t = glorot_init<double>({40, 30}, 40, 30, rng);
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(t[i] <= limit);
    CHECK(t[i] >= -limit);
  }
}

TEST_CASE("init: same seed gives identical tensors") {
  Rng a(45), b(45);
  auto ta = he_init<float>({64, 3}, 64, a);
  auto tb = he_init<float>({64, 3}, 64, b);
  for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta[i] == tb[i]);
  Rng c(46), d(46);
  auto tc = glorot_init<float>({8, 8}, 8, 8, c);
  auto td = glorot_init<float>({8, 8}, 8, 8, d);
  for (std::size_t i = 0; i < tc.size(); ++i) CHECK(tc[i] == td[i]);
}

TEST_CASE("init: zero fans rejected") {
  Rng rng(47);
  CHECK_THROWS_AS(he_init<double>({4}, 0, rng), UsageError);
  CHECK_THROWS_AS(glorot_init<double>({4}, 0, 4, rng), UsageError);
}
