#pragma once

#include <algorithm>
#include <cmath>
#include <memory>

#include "nnu/ops.hpp"
#include "nnu/tape.hpp"
#include "nnu/tensor.hpp"

namespace nnu {

namespace detail {
inline double clamp_prob(double p) {
  return std::min(1.0 - 1e-7, std::max(1e-7, p));
}
}  // namespace detail

// Mean binary cross-entropy over all N*P entries:
//   -(1/PN) sum [ y log yhat + (1-y) log(1-yhat) ]
// Predictions are clamped to [1e-7, 1-1e-7]; the gradient is evaluated at the
// clamped point so saturated units keep a bounded, nonzero pull.
template <typename T>
Tensor<T> bce_loss(GradTape<T>* tape, const Tensor<T>& pred,
                   const Tensor<T>& target) {
  if (pred.shape() != target.shape())
    throw DimensionError("bce_loss shape mismatch: " + shape_str(pred.shape()) +
                         " vs " + shape_str(target.shape()));
  const std::size_t total = pred.size();
  if (total == 0) throw UsageError("bce_loss on empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < total; ++i) {
    const double p = detail::clamp_prob(pred[i]);
    const double y = target[i];
    acc -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  Tensor<T> out({1});
  out[0] = static_cast<T>(acc / double(total));
  detail::finish_op(tape, out, "bce_loss");

  if (detail::taped(tape, pred.requires_grad())) {
    out.set_requires_grad(true);
    Tensor<T> pt = pred, tt = target, o = out;
    tape->record([pt, tt, o, total]() mutable {
      const double up = o.grad()[0];
      auto& gp = pt.grad();
      for (std::size_t i = 0; i < total; ++i) {
        const double p = detail::clamp_prob(pt[i]);
        const double y = tt[i];
        gp[i] += static_cast<T>(up * (-(y / p) + (1.0 - y) / (1.0 - p)) /
                                double(total));
      }
    });
  }
  return out;
}

// Per-sample masked mean squared error over coordinate units:
//   (1/N) sum_i (1/C_i) sum_c mask_ic (y_ic - yhat_ic)^2
// where C_i is the live-unit count of sample i. Samples with no live units
// contribute zero. Masked units carry no loss and no gradient.
template <typename T>
Tensor<T> masked_sq_loss(GradTape<T>* tape, const Tensor<T>& pred,
                         const Tensor<T>& target, const Tensor<T>& mask) {
  if (pred.shape() != target.shape() || pred.shape() != mask.shape())
    throw DimensionError("masked_sq_loss shape mismatch: " +
                         shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()) + " vs " +
                         shape_str(mask.shape()));
  if (pred.rank() != 2) throw DimensionError("masked_sq_loss expects [N,C]");
  const std::size_t n = pred.dim(0), c = pred.dim(1);
  auto live = std::make_shared<std::vector<double>>(n, 0.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double cnt = 0, s = 0;
    for (std::size_t j = 0; j < c; ++j) {
      if (mask[i * c + j] > T(0)) {
        const double d = double(target[i * c + j]) - double(pred[i * c + j]);
        s += d * d;
        cnt += 1;
      }
    }
    (*live)[i] = cnt;
    if (cnt > 0) acc += s / cnt;
  }
  Tensor<T> out({1});
  out[0] = static_cast<T>(acc / double(n));
  detail::finish_op(tape, out, "masked_sq_loss");

  if (detail::taped(tape, pred.requires_grad())) {
    out.set_requires_grad(true);
    Tensor<T> pt = pred, tt = target, mt = mask, o = out;
    tape->record([pt, tt, mt, o, live, n, c]() mutable {
      const double up = o.grad()[0];
      auto& gp = pt.grad();
      for (std::size_t i = 0; i < n; ++i) {
        if ((*live)[i] == 0) continue;
        const double scale = up * 2.0 / (double(n) * (*live)[i]);
        for (std::size_t j = 0; j < c; ++j) {
          if (mt[i * c + j] > T(0))
            gp[i * c + j] += static_cast<T>(
                scale * (double(pt[i * c + j]) - double(tt[i * c + j])));
        }
      }
    });
  }
  return out;
}

// Joint criterion: lambda1 * BCE + lambda2 * masked MSE, both already
// averaged per batch. Linear in (lambda1, lambda2) by construction.
template <typename T>
Tensor<T> multitask_loss(GradTape<T>* tape, const Tensor<T>& class_pred,
                         const Tensor<T>& class_true,
                         const Tensor<T>& coord_pred,
                         const Tensor<T>& coord_true,
                         const Tensor<T>& coord_mask, T lambda1, T lambda2) {
  if (lambda1 < T(0) || lambda2 < T(0))
    throw UsageError("multitask_loss weights must be nonnegative");
  Tensor<T> lc = bce_loss(tape, class_pred, class_true);
  Tensor<T> lr = masked_sq_loss(tape, coord_pred, coord_true, coord_mask);
  return weighted_sum(tape, lambda1, lc, lambda2, lr);
}

}  // namespace nnu
