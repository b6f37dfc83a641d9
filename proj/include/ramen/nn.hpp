// SPDX-License-Identifier: Apache-2.0
//
// Layer library: linear, batch normalization, embedding, GRU and the
// four-layer residual swish MLP.

#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "ramen/ops.hpp"
#include "ramen/random.hpp"
#include "ramen/tensor.hpp"

namespace ramen::nn {

enum class Phase { train, eval };

template <typename T>
using NamedTensors = std::vector<std::pair<std::string, Tensor<T>>>;

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng);

/// Square matrix with orthonormal rows, from the QR factorization of a
/// Gaussian matrix.
template <typename T>
Tensor<T> orthogonal(std::size_t n, Rng& rng);

template <typename T>
struct LinearLayer {
  Tensor<T> weight;  // [out x in]
  Tensor<T> bias;    // [out]

  static LinearLayer create(std::size_t in, std::size_t out, Rng& rng);

  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }

  /// x * weight^T + bias for x of shape [batch x in].
  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& x) const;
  void collect(const std::string& prefix, NamedTensors<T>& out) const;
};

template <typename T>
struct BatchNorm {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);
  Phase mode = Phase::train;
  bool update_running_stats = true;

  static BatchNorm create(std::size_t width);

  std::size_t width() const { return gamma.dim(0); }

  /// Train mode normalizes by batch statistics (needs >= 2 rows) and moves
  /// the running statistics by `momentum`; eval mode uses running statistics.
  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& x);
  void collect(const std::string& prefix, NamedTensors<T>& out) const;
  void collect_buffers(const std::string& prefix, NamedTensors<T>& out) const;
};

template <typename T>
struct Embedding {
  Tensor<T> table;  // [vocab x dim]

  static Embedding create(std::size_t vocab, std::size_t dim, Rng& rng);

  std::size_t vocab_size() const { return table.dim(0); }
  std::size_t dim() const { return table.dim(1); }

  Tensor<T> lookup(Tape<T>& tape, std::span<const std::size_t> ids) const;
  void collect(const std::string& prefix, NamedTensors<T>& out) const;
};

/// Reads a whitespace-separated vector file (token followed by `dim` reals
/// per line) and overwrites the rows of tokens present in `vocab`. Returns
/// the number of rows replaced; tokens absent from the file keep their
/// random initialization.
template <typename T>
std::size_t load_word_vectors(Embedding<T>& embedding, const std::vector<std::string>& vocab,
                              const std::string& path);

/// Reset-before-candidate GRU:
///   z  = sigmoid(W_z x + U_z h + b_z)
///   r  = sigmoid(W_r x + U_r h + b_r)
///   h~ = tanh(W_h x + U_h (r * h) + b_h)
///   h' = (1 - z) * h + z * h~
template <typename T>
struct GruCell {
  Tensor<T> w_z, w_r, w_h;  // [hidden x in]
  Tensor<T> u_z, u_r, u_h;  // [hidden x hidden]
  Tensor<T> b_z, b_r, b_h;  // [hidden]

  /// Input projections of a block of rows, biases included.
  struct Projected {
    Tensor<T> z, r, h;
  };

  static GruCell create(std::size_t in, std::size_t hidden, Rng& rng);

  std::size_t input_size() const { return w_z.dim(1); }
  std::size_t hidden_size() const { return w_z.dim(0); }

  Projected project(Tape<T>& tape, const Tensor<T>& x) const;
  Tensor<T> step(Tape<T>& tape, const Projected& x, const Tensor<T>& h_prev) const;

  void collect(const std::string& prefix, NamedTensors<T>& out) const;
};

/// Layout of a [batch*steps x in] sequence matrix.
enum class SequenceLayout {
  batch_major,  // row b*steps + t
  time_major,   // row t*batch + b
};

/// One GRU step; x is [in] or [batch x in], h_prev matches in rank.
template <typename T>
Tensor<T> gru_step(Tape<T>& tape, const GruCell<T>& cell, const Tensor<T>& x,
                   const Tensor<T>& h_prev);

/// Runs `cell` over a packed sequence from a zero state and returns the final
/// state [batch x hidden]. With `lengths`, item b stops updating after
/// lengths[b] steps so its state is the one at its true length.
template <typename T>
Tensor<T> gru_run(Tape<T>& tape, const GruCell<T>& cell, const Tensor<T>& inputs,
                  std::size_t batch, std::size_t steps, SequenceLayout layout, bool reverse,
                  const std::vector<std::size_t>* lengths = nullptr);

/// Forward cell left-to-right, backward cell right-to-left, both from zero;
/// returns concat(final forward, final backward). Elements of `seq` are
/// either all [in] vectors or all [batch x in] matrices.
template <typename T>
Tensor<T> bigru_final(Tape<T>& tape, const GruCell<T>& cell_fwd, const GruCell<T>& cell_bwd,
                      const std::vector<Tensor<T>>& seq);

/// Four swish layers of equal width with identity skips around layers 2-4.
template <typename T>
struct ResidualMlp {
  std::array<LinearLayer<T>, 4> layers;

  static ResidualMlp create(std::size_t in, std::size_t width, Rng& rng);

  std::size_t in_features() const { return layers[0].in_features(); }
  std::size_t width() const { return layers[0].out_features(); }

  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& c) const;
  void collect(const std::string& prefix, NamedTensors<T>& out) const;
};

}  // namespace ramen::nn
