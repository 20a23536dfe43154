#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nnu/ops.hpp"
#include "nnu/rng.hpp"
#include "oracles.hpp"

using namespace nnu;

namespace {

Tensor<double> randn(Shape shape, Rng& rng, double std = 1.0) {
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, std);
  return t;
}

}  // namespace

TEST_CASE("conv3d: same padding stride 1 preserves spatial dims") {
  Rng rng(1);
  // desk-size stand-in for the 64x64x32x1 -> 3x3x3@64 row: same rule, small dims
  auto x = randn({1, 8, 8, 6, 1}, rng);
  auto k = randn({3, 3, 3, 1, 4}, rng);
  auto b = randn({4}, rng);
  auto y = conv3d<double>(nullptr, x, k, b, Padding::Same, 1);
  CHECK(y.shape() == Shape{1, 8, 8, 6, 4});
}

TEST_CASE("conv3d: all-zero kernel annihilates any input") {
  Rng rng(2);
  auto x = randn({2, 5, 4, 6, 3}, rng);
  Tensor<double> k({3, 3, 3, 3, 2});
  Tensor<double> b({2});
  auto y = conv3d<double>(nullptr, x, k, b, Padding::Same, 1);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == 0.0);
}

TEST_CASE("conv3d: equals seven-nested-loop oracle, valid padding") {
  Rng rng(3);
  auto x = randn({1, 4, 4, 4, 2}, rng);
  auto k = randn({3, 3, 3, 2, 3}, rng);
  auto b = randn({3}, rng);
  auto y = conv3d<double>(nullptr, x, k, b, Padding::Valid, 1);
  auto ref = oracle::naive_conv3d_auto(x, k, b, /*same=*/false, 1);
  REQUIRE(y.shape() == ref.shape());
  for (std::size_t i = 0; i < y.size(); ++i)
    CHECK(std::abs(y[i] - ref[i]) < 1e-12);
}

TEST_CASE("conv3d: equals oracle on randomized shapes up to 6x6x6") {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng.uniform_int(2);
    const std::size_t d = 1 + rng.uniform_int(6), h = 1 + rng.uniform_int(6),
                      w = 1 + rng.uniform_int(6);
    const std::size_t cin = 1 + rng.uniform_int(3),
                      cout = 1 + rng.uniform_int(3);
    const std::size_t kx = 1 + rng.uniform_int(std::min<std::size_t>(3, d)),
                      ky = 1 + rng.uniform_int(std::min<std::size_t>(3, h)),
                      kz = 1 + rng.uniform_int(std::min<std::size_t>(3, w));
    const bool same = rng.uniform() < 0.5;
    const std::size_t stride = 1 + rng.uniform_int(2);
    auto x = randn({n, d, h, w, cin}, rng);
    auto k = randn({kx, ky, kz, cin, cout}, rng);
    auto b = randn({cout}, rng);
    auto y = conv3d<double>(nullptr, x, k, b,
                            same ? Padding::Same : Padding::Valid, stride);
    auto ref = oracle::naive_conv3d_auto(x, k, b, same, stride);
    REQUIRE(y.shape() == ref.shape());
    for (std::size_t i = 0; i < y.size(); ++i)
      CHECK(std::abs(y[i] - ref[i]) < 1e-12);
  }
}

TEST_CASE("conv3d: channel mismatch names both shapes") {
  Tensor<double> x({1, 4, 4, 4, 2});
  Tensor<double> k({3, 3, 3, 3, 2});
  Tensor<double> b({2});
  CHECK_THROWS_WITH_AS(conv3d<double>(nullptr, x, k, b),
                       doctest::Contains("[1,4,4,4,2]"), DimensionError);
  CHECK_THROWS_WITH_AS(conv3d<double>(nullptr, x, k, b),
                       doctest::Contains("[3,3,3,3,2]"), DimensionError);
}

TEST_CASE("conv3d: oversized kernel rejected for valid padding") {
  Tensor<double> x({1, 2, 2, 2, 1});
  Tensor<double> k({3, 3, 3, 1, 1});
  Tensor<double> b({1});
  CHECK_THROWS_AS(conv3d<double>(nullptr, x, k, b, Padding::Valid, 1),
                  DimensionError);
}

TEST_CASE("maxpool3d: halves dims, constant in constant out") {
  auto x = Tensor<double>::full({1, 4, 4, 2, 3}, 2.5);
  auto y = maxpool3d<double>(nullptr, x);
  CHECK(y.shape() == Shape{1, 2, 2, 1, 3});
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == 2.5);
}

TEST_CASE("maxpool3d: ascending block picks 7, gradient lands there") {
  Tensor<double> x({1, 2, 2, 2, 1});
  for (std::size_t i = 0; i < 8; ++i) x[i] = double(i);
  GradTape<double> tape;
  x.set_requires_grad(true);
  auto y = maxpool3d(&tape, x);
  REQUIRE(y.size() == 1);
  CHECK(y[0] == 7.0);
  auto s = reduce_sum(&tape, y);
  tape.backward(s);
  for (std::size_t i = 0; i < 7; ++i) CHECK(x.grad()[i] == 0.0);
  CHECK(x.grad()[7] == 1.0);
}

TEST_CASE("maxpool3d: ties route the gradient to the lowest linear index") {
  auto x = Tensor<double>::full({1, 2, 2, 2, 1}, 3.0);
  GradTape<double> tape;
  x.set_requires_grad(true);
  auto y = maxpool3d(&tape, x);
  auto s = reduce_sum(&tape, y);
  tape.backward(s);
  CHECK(x.grad()[0] == 1.0);
  for (std::size_t i = 1; i < 8; ++i) CHECK(x.grad()[i] == 0.0);
}

TEST_CASE("maxpool3d: odd dims rejected") {
  Tensor<double> x({1, 3, 4, 4, 1});
  CHECK_THROWS_AS(maxpool3d<double>(nullptr, x), DimensionError);
}

TEST_CASE("batchnorm: train mode normalizes per channel") {
  Rng rng(7);
  auto x = randn({4, 3, 3, 3, 5}, rng, 3.0);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += 11.0;  // offset
  auto gamma = Tensor<double>::full({5}, 1.0);
  Tensor<double> beta({5});
  Tensor<double> rm({5});
  auto rv = Tensor<double>::full({5}, 1.0);
  auto y = batchnorm<double>(nullptr, x, gamma, beta, rm, rv, BnMode::Train);
  const std::size_t c = 5, m = y.size() / c;
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < y.size(); i += c) mean += y[i + ch];
    mean /= double(m);
    for (std::size_t i = 0; i < y.size(); i += c) {
      const double d = y[i + ch] - mean;
      var += d * d;
    }
    var /= double(m);
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-4);
  }
}

TEST_CASE("batchnorm: gamma=2 beta=3 gives mean 3, std 2") {
  Rng rng(8);
  auto x = randn({4, 2, 2, 2, 3}, rng, 5.0);
  auto gamma = Tensor<double>::full({3}, 2.0);
  auto beta = Tensor<double>::full({3}, 3.0);
  Tensor<double> rm({3});
  auto rv = Tensor<double>::full({3}, 1.0);
  auto y = batchnorm<double>(nullptr, x, gamma, beta, rm, rv, BnMode::Train);
  const std::size_t c = 3, m = y.size() / c;
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < y.size(); i += c) mean += y[i + ch];
    mean /= double(m);
    for (std::size_t i = 0; i < y.size(); i += c) {
      const double d = y[i + ch] - mean;
      var += d * d;
    }
    var /= double(m);
    CHECK(std::abs(mean - 3.0) < 1e-6);
    CHECK(std::abs(std::sqrt(var) - 2.0) < 1e-4);
  }
}

TEST_CASE("batchnorm: batch of one rejected in train mode") {
  Tensor<double> x({1, 2, 2, 2, 3});
  Tensor<double> gamma({3}), beta({3}), rm({3}), rv({3});
  CHECK_THROWS_AS(
      batchnorm<double>(nullptr, x, gamma, beta, rm, rv, BnMode::Train),
      UsageError);
}

TEST_CASE("batchnorm: infer mode uses running stats") {
  auto x = Tensor<double>::full({1, 1, 1, 1, 2}, 10.0);
  auto gamma = Tensor<double>::full({2}, 1.0);
  Tensor<double> beta({2});
  auto rm = Tensor<double>::full({2}, 4.0);
  auto rv = Tensor<double>::full({2}, 9.0);
  auto y = batchnorm<double>(nullptr, x, gamma, beta, rm, rv, BnMode::Infer,
                             /*eps=*/0.0);
  CHECK(y[0] == doctest::Approx(2.0));  // (10-4)/3
}

TEST_CASE("dense: identity weights, zero bias, linear returns input") {
  Rng rng(9);
  auto x = randn({3, 4}, rng);
  Tensor<double> w({4, 4});
  for (std::size_t i = 0; i < 4; ++i) w[i * 4 + i] = 1.0;
  Tensor<double> b({4});
  auto y = dense<double>(nullptr, x, w, b, Activation::Linear);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(y[i] == doctest::Approx(x[i]));
}

TEST_CASE("dense: sigmoid(0) is 0.5, outputs stay in (0,1)") {
  Tensor<double> x({1, 2});
  Tensor<double> w({2, 3});
  Tensor<double> b({3});
  auto y = dense<double>(nullptr, x, w, b, Activation::Sigmoid);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == 0.5);
  Rng rng(10);
  auto x2 = randn({4, 2}, rng, 3.0);
  auto w2 = randn({2, 3}, rng, 3.0);
  auto y2 = dense<double>(nullptr, x2, w2, b, Activation::Sigmoid);
  for (std::size_t i = 0; i < y2.size(); ++i) {
    CHECK(y2[i] > 0.0);
    CHECK(y2[i] < 1.0);
  }
}

TEST_CASE("dense: feature mismatch rejected") {
  Tensor<double> x({2, 3}), w({4, 5}), b({5});
  CHECK_THROWS_AS(dense<double>(nullptr, x, w, b), DimensionError);
}

TEST_CASE("global_average_pool: shape and constant field") {
  Tensor<double> x({2, 4, 4, 2, 512});
  auto y = global_average_pool<double>(nullptr, x);
  CHECK(y.shape() == Shape{2, 512});
  auto xc = Tensor<double>::full({1, 3, 2, 2, 4}, 1.75);
  auto yc = global_average_pool<double>(nullptr, xc);
  for (std::size_t i = 0; i < yc.size(); ++i)
    CHECK(yc[i] == doctest::Approx(1.75));
}

TEST_CASE("lstm_cell: saturating gate biases freeze the memory cell") {
  Rng rng(11);
  const std::size_t h = 4, f = 2, n = 2;
  LstmCellParams<double> p;
  p.w_cand = randn({h + f, h}, rng, 0.1);
  p.w_update = randn({h + f, h}, rng, 0.1);
  p.w_forget = randn({h + f, h}, rng, 0.1);
  p.w_output = randn({h + f, h}, rng, 0.1);
  p.b_cand = Tensor<double>({h});
  p.b_update = Tensor<double>::full({h}, -50.0);  // update gate -> 0
  p.b_forget = Tensor<double>::full({h}, 50.0);   // forget gate -> 1
  p.b_output = Tensor<double>({h});
  auto x = randn({n, f}, rng);
  auto a_prev = randn({n, h}, rng);
  auto c_prev = randn({n, h}, rng);
  auto [a_t, c_t] = lstm_cell<double>(nullptr, x, a_prev, c_prev, p);
  for (std::size_t i = 0; i < c_t.size(); ++i)
    CHECK(std::abs(c_t[i] - c_prev[i]) < 1e-9);
}

TEST_CASE("lstm_cell: zero params give all gates 0.5 and C_t = C_prev/2") {
  const std::size_t h = 3, f = 1, n = 2;
  LstmCellParams<double> p;
  p.w_cand = Tensor<double>({h + f, h});
  p.w_update = Tensor<double>({h + f, h});
  p.w_forget = Tensor<double>({h + f, h});
  p.w_output = Tensor<double>({h + f, h});
  p.b_cand = Tensor<double>({h});
  p.b_update = Tensor<double>({h});
  p.b_forget = Tensor<double>({h});
  p.b_output = Tensor<double>({h});
  Rng rng(12);
  auto x = randn({n, f}, rng);
  auto a_prev = randn({n, h}, rng);
  auto c_prev = randn({n, h}, rng);
  auto [a_t, c_t] = lstm_cell<double>(nullptr, x, a_prev, c_prev, p);
  for (std::size_t i = 0; i < c_t.size(); ++i)
    CHECK(c_t[i] == doctest::Approx(0.5 * c_prev[i]));
  for (std::size_t i = 0; i < a_t.size(); ++i)
    CHECK(a_t[i] == doctest::Approx(0.5 * std::tanh(c_t[i])));
}

TEST_CASE("lstm_cell: hidden-size mismatch rejected") {
  const std::size_t h = 3, f = 1;
  LstmCellParams<double> p;
  p.w_cand = Tensor<double>({h + f + 1, h});
  p.w_update = Tensor<double>({h + f, h});
  p.w_forget = Tensor<double>({h + f, h});
  p.w_output = Tensor<double>({h + f, h});
  p.b_cand = Tensor<double>({h});
  p.b_update = Tensor<double>({h});
  p.b_forget = Tensor<double>({h});
  p.b_output = Tensor<double>({h});
  Tensor<double> x({2, f}), a({2, h}), c({2, h});
  CHECK_THROWS_WITH_AS(lstm_cell<double>(nullptr, x, a, c, p),
                       doctest::Contains("hidden-size mismatch"),
                       DimensionError);
}

TEST_CASE("tape: finite check names the offending op") {
  GradTape<double> tape;
  tape.check_finite = true;
  Tensor<double> x({1, 2}, {1e308, 1e308});
  x.set_requires_grad(true);
  Tensor<double> w({2, 1}, {1e308, 1e308});
  Tensor<double> b({1});
  CHECK_THROWS_WITH_AS(affine(&tape, x, w, b), doctest::Contains("affine"),
                       NumericError);
}
