#pragma once

#include <functional>
#include <vector>

#include "nnu/tensor.hpp"

namespace nnu {

// Ordered record of executed ops. Each node is a backward closure capturing
// handles to the tensors it needs; replaying the nodes in reverse recorded
// order visits every node exactly once and accumulates into .grad() of every
// tensor that requires grad.
template <typename T>
class GradTape {
 public:
  void record(std::function<void()> backward) {
    nodes_.push_back(std::move(backward));
  }

  void backward(Tensor<T>& loss) {
    if (loss.size() != 1)
      throw UsageError("backward root must be a scalar, got shape " +
                       shape_str(loss.shape()));
    loss.grad()[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // When set, every op validates its output for NaN/Inf and throws
  // NumericError naming the op. Used to locate the first bad layer.
  bool check_finite = false;

 private:
  std::vector<std::function<void()>> nodes_;
};

}  // namespace nnu
