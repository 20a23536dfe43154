#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "nnu/tensor.hpp"

namespace nnu {

// Adam with bias correction, defaults per the original recipe.
// Moment tensors shape-match their parameter; the step counter increases by
// exactly one per update.
template <typename T>
struct AdamState {
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor<T>> m, v;

  void init(const std::vector<Tensor<T>>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.shape());
      v.emplace_back(p.shape());
    }
    step = 0;
  }
};

template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& st) {
  if (st.m.size() != params.size() || st.v.size() != params.size())
    throw UsageError("adam_step: state not initialized for this param set");
  if (st.step == std::numeric_limits<std::uint64_t>::max())
    throw UsageError("adam_step counter overflow");
  ++st.step;
  const double b1t = 1.0 - std::pow(st.beta1, double(st.step));
  const double b2t = 1.0 - std::pow(st.beta2, double(st.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    if (st.m[k].shape() != p.shape())
      throw DimensionError("adam_step moment shape " +
                           shape_str(st.m[k].shape()) + " vs param " +
                           shape_str(p.shape()));
    const auto& g = p.grad();
    auto& m = st.m[k];
    auto& v = st.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = st.beta1 * double(m[i]) + (1.0 - st.beta1) * gi;
      const double vi = st.beta2 * double(v[i]) + (1.0 - st.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double mhat = mi / b1t;
      const double vhat = vi / b2t;
      p[i] = static_cast<T>(double(p[i]) -
                            st.alpha * mhat / (std::sqrt(vhat) + st.eps));
    }
  }
}

}  // namespace nnu
