// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors and a reverse-mode tape.
//
// A Tensor is a shared handle to a value buffer plus an optional gradient
// buffer. Ops in ops.hpp read their inputs, allocate a fresh output and, when
// any input requires a gradient, append a node to the Tape that owns the
// forward pass. Tape::backward walks those nodes once, newest first.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ramen {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
class Tape;

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return s_->values.size(); }

  /// Rows/cols of a rank-2 tensor; throws DimensionError otherwise.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const T> values() const { return s_->values; }
  /// Mutable view for leaves (parameters, inputs). Ops never call this on
  /// their inputs.
  std::span<T> data() { return s_->values; }
  T item() const;
  T operator[](std::size_t i) const { return s_->values[i]; }

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool on) { s_->requires_grad = on; }

  bool has_grad() const { return s_->has_grad; }
  std::span<const T> grad() const;
  /// Gradient buffer, allocated as zeros on first use.
  std::span<T> grad_buffer();
  void clear_grad();
  void zero_grad();

  bool on_tape() const { return s_ && s_->tape != nullptr; }
  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

  /// Deep copy without gradient or tape membership.
  Tensor clone() const;

 private:
  struct Storage {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    const Tape<T>* tape = nullptr;
  };
  std::shared_ptr<Storage> s_;

  friend class Tape<T>;
};

template <typename T>
class Tape {
 public:
  /// Receives the gradient of the node's output and accumulates into the
  /// gradients of its inputs.
  using Propagate = std::function<void(std::span<const T> grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  /// Registers `out` as the result of `op`. A node is recorded only when at
  /// least one input requires a gradient; otherwise `out` is a constant.
  Tensor<T> record(std::string_view op, Tensor<T> out,
                   std::vector<Tensor<T>> inputs, Propagate propagate);

  /// Populates gradients of every requires_grad tensor reachable from `loss`.
  /// Leaf gradients accumulate; intermediate gradients are reset first.
  void backward(const Tensor<T>& loss);

  void clear();
  std::size_t size() const { return nodes_.size(); }

  /// Debug guard: every recorded output is scanned for NaN/Inf.
  void set_check_finite(bool on) { check_finite_ = on; }
  bool check_finite() const { return check_finite_; }

  /// Op names in recording order.
  std::vector<std::string> op_names() const;

 private:
  struct Node {
    std::string op;
    Tensor<T> output;
    std::vector<Tensor<T>> inputs;
    Propagate propagate;
  };
  std::vector<Node> nodes_;
  bool check_finite_ = false;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace ramen
