#include "nnu/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <functional>

#include "nnu/harness.hpp"
#include "nnu/losses.hpp"
#include "nnu/models.hpp"
#include "nnu/ops.hpp"

namespace nnu {

namespace {

using D = double;

Tensor<D> randn(Shape shape, Rng& rng, double std = 1.0) {
  Tensor<D> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, std);
  return t;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(a) + std::abs(b), 1e-3);
}

// Compares autodiff grads (already accumulated in param.grad()) against
// central finite differences of `loss` on sampled entries.
double fd_block(Tensor<D>& param, const std::function<double()>& loss,
                Rng& pick, std::size_t samples, double h = 1e-5) {
  double worst = 0.0;
  const std::size_t n = param.size();
  const std::size_t count = std::min(samples, n);
  for (std::size_t s = 0; s < count; ++s) {
    const std::size_t i = (count == n) ? s : pick.uniform_int(n);
    const double orig = param[i];
    param[i] = orig + h;
    const double lp = loss();
    param[i] = orig - h;
    const double lm = loss();
    param[i] = orig;
    const double fd = (lp - lm) / (2.0 * h);
    worst = std::max(worst, rel_err(param.grad()[i], fd));
  }
  return worst;
}

void check_isolated_ops(GradcheckReport& rep, std::uint64_t seed) {
  Rng rng(seed);
  Rng pick = rng.derive(1);
  auto add = [&](const std::string& name, double err) {
    rep.per_layer.push_back({name, err});
  };

  {  // conv3d (input, kernel, bias)
    auto x = randn({2, 4, 4, 4, 2}, rng);
    auto k = randn({3, 3, 3, 2, 3}, rng);
    auto b = randn({3}, rng);
    auto r = randn({2, 4, 4, 4, 3}, rng);
    for (auto* t : {&x, &k, &b}) t->set_requires_grad(true);
    GradTape<D> tape;
    auto out = conv3d(&tape, x, k, b, Padding::Same, 1);
    auto loss = reduce_sum(&tape, mul(&tape, out, r));
    tape.backward(loss);
    auto f = [&]() {
      auto o = conv3d<D>(nullptr, x, k, b, Padding::Same, 1);
      double s = 0;
      for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * r[i];
      return s;
    };
    add("conv3d.input", fd_block(x, f, pick, 24));
    add("conv3d.kernel", fd_block(k, f, pick, 24));
    add("conv3d.bias", fd_block(b, f, pick, 8));
  }
  {  // maxpool3d
    auto x = randn({2, 4, 4, 2, 2}, rng, 2.0);
    x.set_requires_grad(true);
    GradTape<D> tape;
    auto out = maxpool3d(&tape, x);
    auto loss = reduce_sum(&tape, mul(&tape, out, out));
    tape.backward(loss);
    auto f = [&]() {
      auto o = maxpool3d<D>(nullptr, x);
      double s = 0;
      for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * o[i];
      return s;
    };
    add("maxpool3d.input", fd_block(x, f, pick, 24));
  }
  {  // batchnorm
    auto x = randn({3, 3, 3, 3, 2}, rng, 2.0);
    auto g = Tensor<D>::full({2}, 1.2);
    auto be = randn({2}, rng, 0.2);
    auto r = randn({3, 3, 3, 3, 2}, rng);
    for (auto* t : {&x, &g, &be}) t->set_requires_grad(true);
    GradTape<D> tape;
    Tensor<D> rm({2});
    auto rv = Tensor<D>::full({2}, 1.0);
    auto out = batchnorm(&tape, x, g, be, rm, rv, BnMode::Train);
    auto loss = reduce_sum(&tape, mul(&tape, out, r));
    tape.backward(loss);
    auto f = [&]() {
      Tensor<D> rm2({2});
      auto rv2 = Tensor<D>::full({2}, 1.0);
      auto o = batchnorm<D>(nullptr, x, g, be, rm2, rv2, BnMode::Train);
      double s = 0;
      for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * r[i];
      return s;
    };
    add("batchnorm.input", fd_block(x, f, pick, 24));
    add("batchnorm.gamma", fd_block(g, f, pick, 2));
    add("batchnorm.beta", fd_block(be, f, pick, 2));
  }
  {  // dense with each activation
    auto x = randn({3, 6}, rng);
    auto w = randn({6, 4}, rng, 0.5);
    auto b = randn({4}, rng, 0.2);
    for (auto act : {Activation::Linear, Activation::Relu, Activation::Sigmoid,
                     Activation::Tanh}) {
      auto w2 = w.clone();
      auto b2 = b.clone();
      w2.set_requires_grad(true);
      b2.set_requires_grad(true);
      GradTape<D> tape;
      auto out = dense(&tape, x, w2, b2, act);
      auto loss = reduce_sum(&tape, mul(&tape, out, out));
      tape.backward(loss);
      auto f = [&]() {
        auto o = dense<D>(nullptr, x, w2, b2, act);
        double s = 0;
        for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * o[i];
        return s;
      };
      const char* names[] = {"linear", "relu", "sigmoid", "tanh"};
      const std::string tag = names[int(act)];
      add("dense." + tag + ".w", fd_block(w2, f, pick, 16));
      add("dense." + tag + ".b", fd_block(b2, f, pick, 4));
    }
  }
  {  // global average pool
    auto x = randn({2, 2, 2, 2, 3}, rng);
    x.set_requires_grad(true);
    GradTape<D> tape;
    auto out = global_average_pool(&tape, x);
    auto loss = reduce_sum(&tape, mul(&tape, out, out));
    tape.backward(loss);
    auto f = [&]() {
      auto o = global_average_pool<D>(nullptr, x);
      double s = 0;
      for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * o[i];
      return s;
    };
    add("global_average_pool.input", fd_block(x, f, pick, 24));
  }
  {  // lstm_cell, 5-step unroll over every parameter
    const std::size_t h = 3, f = 2, n = 2, steps = 5;
    LstmCellParams<D> p;
    p.w_cand = randn({h + f, h}, rng, 0.4);
    p.w_update = randn({h + f, h}, rng, 0.4);
    p.w_forget = randn({h + f, h}, rng, 0.4);
    p.w_output = randn({h + f, h}, rng, 0.4);
    p.b_cand = randn({h}, rng, 0.1);
    p.b_update = randn({h}, rng, 0.1);
    p.b_forget = randn({h}, rng, 0.1);
    p.b_output = randn({h}, rng, 0.1);
    std::vector<Tensor<D>> xs;
    for (std::size_t t = 0; t < steps; ++t) xs.push_back(randn({n, f}, rng));
    auto r = randn({n, h}, rng);
    std::vector<std::pair<std::string, Tensor<D>*>> blocks = {
        {"lstm_cell.w_cand", &p.w_cand},     {"lstm_cell.w_update", &p.w_update},
        {"lstm_cell.w_forget", &p.w_forget}, {"lstm_cell.w_output", &p.w_output},
        {"lstm_cell.b_cand", &p.b_cand},     {"lstm_cell.b_update", &p.b_update},
        {"lstm_cell.b_forget", &p.b_forget}, {"lstm_cell.b_output", &p.b_output}};
    for (auto& [name, t] : blocks) t->set_requires_grad(true);
    auto run = [&](GradTape<D>* tape) {
      Tensor<D> a({n, h}), c({n, h});
      for (std::size_t t = 0; t < steps; ++t) {
        auto [a2, c2] = lstm_cell(tape, xs[t], a, c, p);
        a = a2;
        c = c2;
      }
      return a;
    };
    GradTape<D> tape;
    auto a = run(&tape);
    auto loss = reduce_sum(&tape, mul(&tape, a, r));
    tape.backward(loss);
    auto f2 = [&]() {
      auto af = run(nullptr);
      double s = 0;
      for (std::size_t i = 0; i < af.size(); ++i) s += af[i] * r[i];
      return s;
    };
    for (auto& [name, t] : blocks) add(name, fd_block(*t, f2, pick, t->size()));
  }
  {  // losses through sigmoid logits
    auto logits = randn({3, 4}, rng);
    Tensor<D> target({3, 4});
    for (std::size_t i = 0; i < target.size(); ++i)
      target[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    logits.set_requires_grad(true);
    GradTape<D> tape;
    auto loss = bce_loss(&tape, sigmoid(&tape, logits), target);
    tape.backward(loss);
    auto f = [&]() {
      return bce_loss<D>(nullptr, sigmoid<D>(nullptr, logits), target)[0];
    };
    add("bce_loss.logits", fd_block(logits, f, pick, logits.size()));

    auto pred = randn({3, 9}, rng);
    auto truth = randn({3, 9}, rng);
    Tensor<D> mask({3, 9});
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 9; ++j)
        mask[i * 9 + j] = (j < 3 * (i + 1)) ? 1.0 : 0.0;
    pred.set_requires_grad(true);
    GradTape<D> tape2;
    auto l2 = masked_sq_loss(&tape2, pred, truth, mask);
    tape2.backward(l2);
    auto f2 = [&]() {
      return masked_sq_loss<D>(nullptr, pred, truth, mask)[0];
    };
    add("masked_sq_loss.pred", fd_block(pred, f2, pick, pred.size()));
  }
}

void check_cnn_end_to_end(GradcheckReport& rep, std::uint64_t seed) {
  Rng rng(seed + 1);
  Rng pick = rng.derive(2);
  CnnConfig cfg;
  cfg.width_scale = 8;
  // small spatial extent: a ReLU/maxpool kink inside the FD interval shows
  // up as noise proportional to the number of activation cells a parameter
  // touches, so the audit runs on a reduced volume with a small step
  cfg.input_d = cfg.input_h = cfg.input_w = 16;
  Cnn3dModel<D> model(cfg, rng);

  const std::size_t n = 2;
  auto input = randn({n, 16, 16, 16, 1}, rng, 0.5);
  Tensor<D> class_true({n, 3}, {1, 0, 0, 0, 1, 0});
  auto coord_true = randn({n, 9}, rng, 0.2);
  Tensor<D> mask({n, 9});
  for (std::size_t j = 0; j < 9; ++j) {
    mask[j] = j < 3 ? 1.0 : 0.0;
    mask[9 + j] = (j >= 3 && j < 6) ? 1.0 : 0.0;
  }

  model.set_trainable(true);
  GradTape<D> tape;
  auto out = model.forward(&tape, input, BnMode::Train);
  auto loss = multitask_loss(&tape, out.class_probs, class_true, out.coords,
                             coord_true, mask, 0.3, 0.7);
  tape.backward(loss);
  auto f = [&]() {
    auto o = model.forward(nullptr, input, BnMode::Train);
    auto l = multitask_loss<D>(nullptr, o.class_probs, class_true, o.coords,
                               coord_true, mask, 0.3, 0.7);
    return l[0];
  };
  for (auto& np : model.named_params())
    rep.end_to_end.push_back(
        {"cnn." + np.name, fd_block(np.tensor, f, pick, 5, 1e-6)});
}

void check_lstm_end_to_end(GradcheckReport& rep, std::uint64_t seed) {
  Rng rng(seed + 2);
  Rng pick = rng.derive(3);
  LstmConfig cfg;
  cfg.hidden = 8;
  cfg.seq_len = 20;
  LstmModel<D> model(cfg, rng);

  const std::size_t n = 3;
  auto input = randn({n, cfg.seq_len, 1}, rng);
  Tensor<D> label({n, 4});
  for (std::size_t i = 0; i < label.size(); ++i)
    label[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;

  model.set_trainable(true);
  GradTape<D> tape;
  auto out = model.forward(&tape, input);
  auto loss = bce_loss(&tape, out.class_probs, label);
  tape.backward(loss);
  auto f = [&]() {
    auto o = model.forward(nullptr, input);
    return bce_loss<D>(nullptr, o.class_probs, label)[0];
  };
  for (auto& np : model.named_params())
    rep.end_to_end.push_back(
        {"lstm." + np.name, fd_block(np.tensor, f, pick, 5)});
}

}  // namespace

GradcheckReport run_gradcheck(std::uint64_t seed) {
  GradcheckReport rep;
  check_isolated_ops(rep, seed);
  check_cnn_end_to_end(rep, seed);
  check_lstm_end_to_end(rep, seed);
  for (const auto& e : rep.per_layer)
    rep.worst_layer = std::max(rep.worst_layer, e.max_rel_err);
  for (const auto& e : rep.end_to_end)
    rep.worst_model = std::max(rep.worst_model, e.max_rel_err);
  rep.pass = rep.worst_layer < 1e-4 && rep.worst_model < 1e-3;
  return rep;
}

std::string GradcheckReport::text() const {
  std::string out;
  char buf[128];
  for (const auto& e : per_layer) {
    std::snprintf(buf, sizeof(buf), "layer  %-28s max rel err %.3e\n",
                  e.block.c_str(), e.max_rel_err);
    out += buf;
  }
  for (const auto& e : end_to_end) {
    std::snprintf(buf, sizeof(buf), "model  %-28s max rel err %.3e\n",
                  e.block.c_str(), e.max_rel_err);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf),
                "worst per-layer %.3e (limit 1e-4), worst end-to-end %.3e "
                "(limit 1e-3): %s\n",
                worst_layer, worst_model, pass ? "PASS" : "FAIL");
  out += buf;
  return out;
}

}  // namespace nnu
