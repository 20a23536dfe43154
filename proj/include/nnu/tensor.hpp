#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nnu {

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

template <typename T>
struct Storage {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
};

}  // namespace detail

// Dense row-major tensor. A Tensor is a cheap handle onto shared storage;
// ops treat written tensors as immutable and allocate fresh outputs.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape) : s_(std::make_shared<detail::Storage<T>>()) {
    s_->shape = std::move(shape);
    s_->value.assign(numel(s_->shape), T(0));
  }

  Tensor(Shape shape, std::vector<T> data)
      : s_(std::make_shared<detail::Storage<T>>()) {
    if (numel(shape) != data.size()) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    }
    s_->shape = std::move(shape);
    s_->value = std::move(data);
  }

  static Tensor full(Shape shape, T v) {
    Tensor t(std::move(shape));
    for (auto& x : t.s_->value) x = v;
    return t;
  }

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t i) const { return s_->shape[i]; }
  std::size_t size() const { return s_->value.size(); }

  T* data() { return s_->value.data(); }
  const T* data() const { return s_->value.data(); }
  std::vector<T>& values() { return s_->value; }
  const std::vector<T>& values() const { return s_->value; }

  T& operator[](std::size_t i) { return s_->value[i]; }
  T operator[](std::size_t i) const { return s_->value[i]; }

  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    std::size_t off = 0;
    std::size_t axis = 0;
    for (auto i : idx) {
      off = off * s_->shape[axis] + i;
      ++axis;
    }
    return off;
  }

  T& at(std::initializer_list<std::size_t> idx) {
    return s_->value[offset(idx)];
  }
  T at(std::initializer_list<std::size_t> idx) const {
    return s_->value[offset(idx)];
  }

  bool requires_grad() const { return s_->requires_grad; }

  Tensor& set_requires_grad(bool b) {
    s_->requires_grad = b;
    if (b) ensure_grad();
    return *this;
  }

  std::vector<T>& grad() {
    ensure_grad();
    return s_->grad;
  }
  const std::vector<T>& grad() const {
    const_cast<Tensor*>(this)->ensure_grad();
    return s_->grad;
  }

  void zero_grad() {
    ensure_grad();
    std::fill(s_->grad.begin(), s_->grad.end(), T(0));
  }

  // Deep copy of the values; grad and requires_grad are not carried over.
  Tensor clone() const {
    Tensor t;
    t.s_ = std::make_shared<detail::Storage<T>>();
    t.s_->shape = s_->shape;
    t.s_->value = s_->value;
    return t;
  }

  bool same_storage(const Tensor& o) const { return s_ == o.s_; }

 private:
  void ensure_grad() {
    if (s_->grad.size() != s_->value.size())
      s_->grad.assign(s_->value.size(), T(0));
  }

  std::shared_ptr<detail::Storage<T>> s_;
};

template <typename T>
void throw_if_nonfinite(const Tensor<T>& t, const char* what) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(static_cast<double>(t[i]))) {
      throw NumericError(std::string("non-finite value in ") + what +
                         " at linear index " + std::to_string(i));
    }
  }
}

}  // namespace nnu
