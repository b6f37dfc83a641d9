// SPDX-License-Identifier: Apache-2.0

#include "ramen/tensor.hpp"

#include <cmath>
#include <sstream>

namespace ramen {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, bool requires_grad) : s_(std::make_shared<Storage>()) {
  s_->values.assign(shape_numel(shape), T(0));
  s_->shape = std::move(shape);
  s_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad)
    : s_(std::make_shared<Storage>()) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor: shape " + shape_string(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  s_->shape = std::move(shape);
  s_->values = std::move(values);
  s_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("tensor: axis " + std::to_string(axis) + " out of range for " +
                         shape_string(shape()));
  }
  return s_->shape[axis];
}

template <typename T>
std::size_t Tensor<T>::rows() const {
  if (rank() != 2) throw DimensionError("expected a matrix, got " + shape_string(shape()));
  return s_->shape[0];
}

template <typename T>
std::size_t Tensor<T>::cols() const {
  if (rank() != 2) throw DimensionError("expected a matrix, got " + shape_string(shape()));
  return s_->shape[1];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw DimensionError("item() on non-scalar tensor " + shape_string(shape()));
  }
  return s_->values[0];
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!s_->has_grad) return {};
  return s_->grad;
}

template <typename T>
std::span<T> Tensor<T>::grad_buffer() {
  if (!s_->has_grad) {
    s_->grad.assign(s_->values.size(), T(0));
    s_->has_grad = true;
  }
  return s_->grad;
}

template <typename T>
void Tensor<T>::clear_grad() {
  s_->grad.clear();
  s_->grad.shrink_to_fit();
  s_->has_grad = false;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (s_->has_grad) std::fill(s_->grad.begin(), s_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(s_->shape, s_->values, s_->requires_grad);
}

template <typename T>
Tape<T>::~Tape() {
  clear();
}

template <typename T>
Tensor<T> Tape<T>::record(std::string_view op, Tensor<T> out, std::vector<Tensor<T>> inputs,
                          Propagate propagate) {
  if (check_finite_) {
    for (T v : out.values()) {
      if (!std::isfinite(v)) {
        throw NumericError(std::string(op) + ": non-finite output value");
      }
    }
  }
  bool needs_grad = false;
  for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  if (!needs_grad) return out;

  out.s_->requires_grad = true;
  out.s_->tape = this;
  nodes_.push_back(Node{std::string(op), out, std::move(inputs), std::move(propagate)});
  return out;
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw DimensionError("backward: loss must be a scalar, got " +
                         (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  }
  if (loss.s_->tape != this) {
    throw std::logic_error("backward: loss was not recorded on this tape");
  }
  for (auto& node : nodes_) node.output.clear_grad();

  Tensor<T> root = loss;
  root.grad_buffer()[0] = T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->propagate(it->output.grad());
  }
}

template <typename T>
void Tape<T>::clear() {
  for (auto& node : nodes_) node.output.s_->tape = nullptr;
  nodes_.clear();
}

template <typename T>
std::vector<std::string> Tape<T>::op_names() const {
  std::vector<std::string> names;
  names.reserve(nodes_.size());
  for (const auto& n : nodes_) names.push_back(n.op);
  return names;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace ramen
