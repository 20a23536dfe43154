#pragma once

#include <cmath>

#include "nnu/rng.hpp"
#include "nnu/tensor.hpp"

namespace nnu {

// Zero-mean normal with std sqrt(2 / fan_in).
template <typename T>
Tensor<T> he_init(Shape shape, std::size_t fan_in, Rng& rng) {
  if (fan_in == 0) throw UsageError("he_init needs positive fan_in");
  Tensor<T> t(std::move(shape));
  const double std = std::sqrt(2.0 / double(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<T>(rng.normal(0.0, std));
  return t;
}

// Uniform on +-sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> glorot_init(Shape shape, std::size_t fan_in, std::size_t fan_out,
                      Rng& rng) {
  if (fan_in == 0 || fan_out == 0)
    throw UsageError("glorot_init needs positive fans");
  Tensor<T> t(std::move(shape));
  const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<T>(rng.uniform(-limit, limit));
  return t;
}

}  // namespace nnu
