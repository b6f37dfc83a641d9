// SPDX-License-Identifier: Apache-2.0
//
// Differentiable ops. Every op takes the Tape it records on as its first
// argument; inputs are never modified.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ramen/tensor.hpp"

namespace ramen::ops {

/// [m x k] * [k x n] -> [m x n]
template <typename T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

/// [m x k] * [n x k]^T -> [m x n]; the shape used by linear layers.
template <typename T>
Tensor<T> matmul_nt(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T factor);

/// Adds a length-d bias to every row of a [rows x d] matrix (or to a
/// length-d vector). This is the only broadcasting op.
template <typename T>
Tensor<T> add_bias(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& bias);

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x);
template <typename T>
Tensor<T> tanh(Tape<T>& tape, const Tensor<T>& x);
/// x * sigmoid(x)
template <typename T>
Tensor<T> swish(Tape<T>& tape, const Tensor<T>& x);

/// Same values, new shape with equal element count.
template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, Shape shape);

template <typename T>
Tensor<T> concat(Tape<T>& tape, const std::vector<Tensor<T>>& parts, std::size_t axis);

/// Contiguous rows [begin, begin + count) of a matrix.
template <typename T>
Tensor<T> slice_rows(Tape<T>& tape, const Tensor<T>& x, std::size_t begin, std::size_t count);

/// Gathers rows by index (repeats allowed); the gradient scatter-adds back.
/// Works on matrices; embedding lookup is take_rows on the table.
template <typename T>
Tensor<T> take_rows(Tape<T>& tape, const Tensor<T>& x, std::span<const std::size_t> indices);

/// Row r of the result is a[r] when keep_a[r] is set, else b[r].
template <typename T>
Tensor<T> blend_rows(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b,
                     const std::vector<bool>& keep_a);

/// Mean over consecutive groups of `group` rows: [g*group x d] -> [g x d].
template <typename T>
Tensor<T> row_group_mean(Tape<T>& tape, const Tensor<T>& x, std::size_t group);

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x);
template <typename T>
Tensor<T> mean(Tape<T>& tape, const Tensor<T>& x);

/// Per-column standardization of a [rows x d] matrix using the batch
/// statistics (population variance), followed by gamma * xhat + beta.
/// The batch mean and variance are written to the optional outputs.
template <typename T>
Tensor<T> batch_norm_train(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma,
                           const Tensor<T>& beta, T eps, std::vector<T>* batch_mean = nullptr,
                           std::vector<T>* batch_var = nullptr);

/// Standardization with fixed statistics.
template <typename T>
Tensor<T> batch_norm_eval(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma,
                          const Tensor<T>& beta, std::span<const T> mean, std::span<const T> var,
                          T eps);

/// Mean softmax cross-entropy of [batch x classes] logits against class ids.
template <typename T>
Tensor<T> softmax_cross_entropy(Tape<T>& tape, const Tensor<T>& logits,
                                std::span<const std::size_t> targets);

/// Per-answer binary cross-entropy with logits, summed over classes and
/// averaged over the batch. `targets` has the logits' shape, values in [0,1].
template <typename T>
Tensor<T> sigmoid_bce(Tape<T>& tape, const Tensor<T>& logits, const Tensor<T>& targets);

}  // namespace ramen::ops
