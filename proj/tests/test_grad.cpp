#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "nnu/losses.hpp"
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

// All-entries FD check of `loss` against the autodiff grad already stored in
// `param.grad()`. Returns the max relative error over checked entries.
template <typename Fn>
double max_fd_err(Tensor<double>& param, Fn&& loss, double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double fd = oracle::fd_grad(param, i, loss, h);
    worst = std::max(worst, oracle::rel_err(param.grad()[i], fd));
  }
  return worst;
}

template <typename Fn>
double sampled_fd_err(Tensor<double>& param, Fn&& loss, Rng& rng,
                      std::size_t count, double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t s = 0; s < count; ++s) {
    const std::size_t i = rng.uniform_int(param.size());
    const double fd = oracle::fd_grad(param, i, loss, h);
    worst = std::max(worst, oracle::rel_err(param.grad()[i], fd));
  }
  return worst;
}

}  // namespace

TEST_CASE("conv3d backward: kernel entry (0,0,0,0,0) matches FD to 1e-6") {
  Rng rng(21);
  auto x = randn({1, 4, 4, 4, 2}, rng);
  auto k = randn({3, 3, 3, 2, 3}, rng);
  auto b = randn({3}, rng);
  k.set_requires_grad(true);
  GradTape<double> tape;
  auto out = conv3d(&tape, x, k, b, Padding::Valid, 1);
  auto loss = reduce_sum(&tape, out);
  tape.backward(loss);
  auto loss_fn = [&]() {
    auto o = conv3d<double>(nullptr, x, k, b, Padding::Valid, 1);
    double s = 0;
    for (std::size_t i = 0; i < o.size(); ++i) s += o[i];
    return s;
  };
  const double fd = oracle::fd_grad(k, 0, loss_fn, 1e-5);
  CHECK(std::abs(k.grad()[0] - fd) / std::max(std::abs(fd), 1e-12) < 1e-6);
}

TEST_CASE("conv3d backward: zero upstream gives all-zero parameter grads") {
  Rng rng(22);
  auto x = randn({1, 4, 4, 4, 2}, rng);
  auto k = randn({2, 2, 2, 2, 2}, rng);
  auto b = randn({2}, rng);
  x.set_requires_grad(true);
  k.set_requires_grad(true);
  b.set_requires_grad(true);
  GradTape<double> tape;
  auto out = conv3d(&tape, x, k, b, Padding::Same, 1);
  auto loss = scale(&tape, reduce_sum(&tape, out), 0.0);
  tape.backward(loss);
  for (std::size_t i = 0; i < k.size(); ++i) CHECK(k.grad()[i] == 0.0);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(b.grad()[i] == 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(x.grad()[i] == 0.0);
}

TEST_CASE("conv3d backward: 1x1x1 kernel grad is sum of input*upstream") {
  Rng rng(23);
  const std::size_t n = 2, d = 3, h = 3, w = 2, cin = 2, cout = 3;
  auto x = randn({n, d, h, w, cin}, rng);
  auto k = randn({1, 1, 1, cin, cout}, rng);
  Tensor<double> b({cout});
  auto r = randn({n, d, h, w, cout}, rng);  // fixed upstream weights
  k.set_requires_grad(true);
  GradTape<double> tape;
  auto out = conv3d(&tape, x, k, b, Padding::Valid, 1);
  auto loss = reduce_sum(&tape, mul(&tape, out, r));
  tape.backward(loss);
  for (std::size_t ci = 0; ci < cin; ++ci)
    for (std::size_t co = 0; co < cout; ++co) {
      double expect = 0;
      for (std::size_t bb = 0; bb < n; ++bb)
        for (std::size_t dd = 0; dd < d; ++dd)
          for (std::size_t hh = 0; hh < h; ++hh)
            for (std::size_t ww = 0; ww < w; ++ww)
              expect += x.at({bb, dd, hh, ww, ci}) * r.at({bb, dd, hh, ww, co});
      CHECK(oracle::rel_err(k.grad()[ci * cout + co], expect) < 1e-10);
    }
}

TEST_CASE("conv3d backward: all inputs match FD on a same-padded case") {
  Rng rng(24);
  auto x = randn({2, 3, 4, 3, 2}, rng);
  auto k = randn({3, 3, 3, 2, 2}, rng);
  auto b = randn({2}, rng);
  auto r = randn({2, 3, 4, 3, 2}, rng);
  x.set_requires_grad(true);
  k.set_requires_grad(true);
  b.set_requires_grad(true);
  GradTape<double> tape;
  auto out = conv3d(&tape, x, k, b, Padding::Same, 1);
  auto loss = reduce_sum(&tape, mul(&tape, out, r));
  tape.backward(loss);
  auto loss_fn = [&]() {
    auto o = conv3d<double>(nullptr, x, k, b, Padding::Same, 1);
    double s = 0;
    for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * r[i];
    return s;
  };
  CHECK(max_fd_err(k, loss_fn) < 1e-6);
  CHECK(max_fd_err(b, loss_fn) < 1e-6);
  CHECK(max_fd_err(x, loss_fn) < 1e-6);
}

TEST_CASE("batchnorm backward: FD on 2x4x4x4x3 input, rel err < 1e-5") {
  Rng rng(25);
  auto x = randn({2, 4, 4, 4, 3}, rng, 2.0);
  auto gamma = randn({3}, rng, 0.3);
  for (std::size_t i = 0; i < 3; ++i) gamma[i] += 1.0;
  auto beta = randn({3}, rng, 0.3);
  auto r = randn({2, 4, 4, 4, 3}, rng);
  x.set_requires_grad(true);
  gamma.set_requires_grad(true);
  beta.set_requires_grad(true);
  GradTape<double> tape;
  Tensor<double> rm({3});
  auto rv = Tensor<double>::full({3}, 1.0);
  auto out = batchnorm(&tape, x, gamma, beta, rm, rv, BnMode::Train);
  auto loss = reduce_sum(&tape, mul(&tape, out, r));
  tape.backward(loss);
  auto loss_fn = [&]() {
    Tensor<double> rm2({3});
    auto rv2 = Tensor<double>::full({3}, 1.0);
    auto o = batchnorm<double>(nullptr, x, gamma, beta, rm2, rv2, BnMode::Train);
    double s = 0;
    for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * r[i];
    return s;
  };
  CHECK(max_fd_err(gamma, loss_fn) < 1e-5);
  CHECK(max_fd_err(beta, loss_fn) < 1e-5);
  Rng pick(1);
  CHECK(sampled_fd_err(x, loss_fn, pick, 40) < 1e-5);
}

TEST_CASE("dense backward: 512->3 layer matches FD to 1e-6") {
  Rng rng(26);
  auto x = randn({2, 512}, rng, 0.2);
  auto w = randn({512, 3}, rng, 0.1);
  auto b = randn({3}, rng, 0.1);
  auto r = randn({2, 3}, rng);
  w.set_requires_grad(true);
  b.set_requires_grad(true);
  GradTape<double> tape;
  auto out = dense(&tape, x, w, b, Activation::Tanh);
  auto loss = reduce_sum(&tape, mul(&tape, out, r));
  tape.backward(loss);
  auto loss_fn = [&]() {
    auto o = dense<double>(nullptr, x, w, b, Activation::Tanh);
    double s = 0;
    for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * r[i];
    return s;
  };
  Rng pick(2);
  CHECK(sampled_fd_err(w, loss_fn, pick, 60, 1e-5) < 1e-6);
  CHECK(max_fd_err(b, loss_fn) < 1e-6);
}

TEST_CASE("global_average_pool backward: gradient is upstream/(D*H*W)") {
  Rng rng(27);
  auto x = randn({2, 3, 2, 2, 4}, rng);
  auto r = randn({2, 4}, rng);
  x.set_requires_grad(true);
  GradTape<double> tape;
  auto out = global_average_pool(&tape, x);
  auto loss = reduce_sum(&tape, mul(&tape, out, r));
  tape.backward(loss);
  const double spatial = 3.0 * 2.0 * 2.0;
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t s = 0; s < std::size_t(spatial); ++s)
      for (std::size_t c = 0; c < 4; ++c)
        CHECK(x.grad()[(b * std::size_t(spatial) + s) * 4 + c] ==
              doctest::Approx(r[b * 4 + c] / spatial));
  auto loss_fn = [&]() {
    auto o = global_average_pool<double>(nullptr, x);
    double s = 0;
    for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * r[i];
    return s;
  };
  CHECK(max_fd_err(x, loss_fn) < 1e-6);
}

TEST_CASE("lstm backward: BPTT over 5 steps matches FD on every parameter") {
  Rng rng(28);
  const std::size_t h = 3, f = 2, n = 2, steps = 5;
  LstmCellParams<double> p;
  p.w_cand = randn({h + f, h}, rng, 0.4);
  p.w_update = randn({h + f, h}, rng, 0.4);
  p.w_forget = randn({h + f, h}, rng, 0.4);
  p.w_output = randn({h + f, h}, rng, 0.4);
  p.b_cand = randn({h}, rng, 0.2);
  p.b_update = randn({h}, rng, 0.2);
  p.b_forget = randn({h}, rng, 0.2);
  p.b_output = randn({h}, rng, 0.2);
  std::vector<Tensor<double>> xs;
  for (std::size_t t = 0; t < steps; ++t) xs.push_back(randn({n, f}, rng));
  auto r = randn({n, h}, rng);

  std::vector<Tensor<double>*> params = {&p.w_cand,   &p.w_update, &p.w_forget,
                                         &p.w_output, &p.b_cand,   &p.b_update,
                                         &p.b_forget, &p.b_output};
  for (auto* t : params) t->set_requires_grad(true);

  auto run = [&](GradTape<double>* tape) {
    Tensor<double> a({n, h}), c({n, h});
    for (std::size_t t = 0; t < steps; ++t) {
      auto [a2, c2] = lstm_cell(tape, xs[t], a, c, p);
      a = a2;
      c = c2;
    }
    return a;
  };
  GradTape<double> tape;
  auto a_final = run(&tape);
  auto loss = reduce_sum(&tape, mul(&tape, a_final, r));
  tape.backward(loss);
  auto loss_fn = [&]() {
    auto a = run(nullptr);
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * r[i];
    return s;
  };
  for (auto* t : params) CHECK(max_fd_err(*t, loss_fn) < 1e-5);
}

TEST_CASE("bce backward: gradient w.r.t. logits matches FD to 1e-6") {
  Rng rng(29);
  auto logits = randn({4, 3}, rng);
  Tensor<double> target({4, 3});
  for (std::size_t i = 0; i < target.size(); ++i)
    target[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
  logits.set_requires_grad(true);
  GradTape<double> tape;
  auto pred = sigmoid(&tape, logits);
  auto loss = bce_loss(&tape, pred, target);
  tape.backward(loss);
  auto loss_fn = [&]() {
    auto p = sigmoid<double>(nullptr, logits);
    auto l = bce_loss<double>(nullptr, p, target);
    return l[0];
  };
  CHECK(max_fd_err(logits, loss_fn) < 1e-6);
}

TEST_CASE("masked_sq_loss backward: live units match FD, masked stay zero") {
  Rng rng(30);
  auto pred = randn({3, 9}, rng);
  auto target = randn({3, 9}, rng);
  Tensor<double> mask({3, 9});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 9; ++j)
      mask[i * 9 + j] = (j < 3 * (i + 1)) ? 1.0 : 0.0;
  pred.set_requires_grad(true);
  GradTape<double> tape;
  auto loss = masked_sq_loss(&tape, pred, target, mask);
  tape.backward(loss);
  auto loss_fn = [&]() {
    return masked_sq_loss<double>(nullptr, pred, target, mask)[0];
  };
  CHECK(max_fd_err(pred, loss_fn) < 1e-7);
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (mask[i] == 0.0) CHECK(pred.grad()[i] == 0.0);
}

TEST_CASE("property: autodiff matches FD on randomized ops, 100 trials") {
  Rng rng(31);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int which = int(rng.uniform_int(7));
    GradTape<double> tape;
    Tensor<double> param;
    std::function<double()> loss_fn;
    Tensor<double> loss;
    switch (which) {
      case 0: {  // conv3d
        const std::size_t cin = 1 + rng.uniform_int(2),
                          cout = 1 + rng.uniform_int(2);
        auto x = randn({1 + rng.uniform_int(2), 3, 4, 3, cin}, rng);
        auto k = randn({2, 2, 2, cin, cout}, rng);
        auto b = randn({cout}, rng);
        k.set_requires_grad(true);
        param = k;
        auto out = conv3d(&tape, x, k, b, Padding::Same, 1);
        loss = reduce_sum(&tape, mul(&tape, out, out));
        loss_fn = [x, k, b]() {
          auto o = conv3d<double>(nullptr, x, k, b, Padding::Same, 1);
          double s = 0;
          for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * o[i];
          return s;
        };
        break;
      }
      case 1: {  // maxpool (inputs jittered away from ties)
        auto x = randn({1, 4, 2, 2, 2}, rng, 3.0);
        x.set_requires_grad(true);
        param = x;
        auto out = maxpool3d(&tape, x);
        loss = reduce_sum(&tape, mul(&tape, out, out));
        loss_fn = [x]() {
          auto o = maxpool3d<double>(nullptr, x);
          double s = 0;
          for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * o[i];
          return s;
        };
        break;
      }
      case 2: {  // batchnorm gamma
        auto x = randn({3, 2, 2, 2, 2}, rng, 2.0);
        auto g = randn({2}, rng, 0.2);
        g[0] += 1.0;
        g[1] += 1.0;
        auto be = randn({2}, rng, 0.2);
        g.set_requires_grad(true);
        param = g;
        Tensor<double> rm({2});
        auto rv = Tensor<double>::full({2}, 1.0);
        auto out = batchnorm(&tape, x, g, be, rm, rv, BnMode::Train);
        loss = reduce_sum(&tape, mul(&tape, out, out));
        loss_fn = [x, g, be]() {
          Tensor<double> rm2({2});
          auto rv2 = Tensor<double>::full({2}, 1.0);
          auto o = batchnorm<double>(nullptr, x, g, be, rm2, rv2, BnMode::Train);
          double s = 0;
          for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * o[i];
          return s;
        };
        break;
      }
      case 3: {  // dense relu
        auto x = randn({3, 5}, rng);
        auto w = randn({5, 4}, rng);
        auto b = randn({4}, rng);
        w.set_requires_grad(true);
        param = w;
        auto out = dense(&tape, x, w, b, Activation::Relu);
        loss = reduce_sum(&tape, mul(&tape, out, out));
        loss_fn = [x, w, b]() {
          auto o = dense<double>(nullptr, x, w, b, Activation::Relu);
          double s = 0;
          for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * o[i];
          return s;
        };
        break;
      }
      case 4: {  // gap
        auto x = randn({2, 2, 2, 2, 3}, rng);
        x.set_requires_grad(true);
        param = x;
        auto out = global_average_pool(&tape, x);
        loss = reduce_sum(&tape, mul(&tape, out, out));
        loss_fn = [x]() {
          auto o = global_average_pool<double>(nullptr, x);
          double s = 0;
          for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * o[i];
          return s;
        };
        break;
      }
      case 5: {  // sigmoid/tanh chain
        auto x = randn({2, 6}, rng);
        x.set_requires_grad(true);
        param = x;
        auto out = tanh_act(&tape, sigmoid(&tape, x));
        loss = reduce_sum(&tape, mul(&tape, out, out));
        loss_fn = [x]() {
          auto o = tanh_act<double>(nullptr, sigmoid<double>(nullptr, x));
          double s = 0;
          for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * o[i];
          return s;
        };
        break;
      }
      default: {  // lstm cell single step
        const std::size_t h = 3, f = 2;
        LstmCellParams<double> p;
        p.w_cand = randn({h + f, h}, rng, 0.5);
        p.w_update = randn({h + f, h}, rng, 0.5);
        p.w_forget = randn({h + f, h}, rng, 0.5);
        p.w_output = randn({h + f, h}, rng, 0.5);
        p.b_cand = randn({h}, rng, 0.2);
        p.b_update = randn({h}, rng, 0.2);
        p.b_forget = randn({h}, rng, 0.2);
        p.b_output = randn({h}, rng, 0.2);
        auto x = randn({2, f}, rng);
        auto a = randn({2, h}, rng);
        auto c = randn({2, h}, rng);
        p.w_cand.set_requires_grad(true);
        param = p.w_cand;
        auto [a2, c2] = lstm_cell(&tape, x, a, c, p);
        loss = reduce_sum(&tape, mul(&tape, a2, a2));
        loss_fn = [x, a, c, p]() {
          auto [a2, c2] = lstm_cell<double>(nullptr, x, a, c, p);
          double s = 0;
          for (std::size_t i = 0; i < a2.size(); ++i) s += a2[i] * a2[i];
          return s;
        };
        break;
      }
    }
    tape.backward(loss);
    for (int s = 0; s < 4; ++s) {
      const std::size_t i = rng.uniform_int(param.size());
      const double fd = oracle::fd_grad(param, i, loss_fn, 1e-5);
      worst = std::max(worst, oracle::rel_err(param.grad()[i], fd));
    }
  }
  CHECK(worst < 1e-4);
}
