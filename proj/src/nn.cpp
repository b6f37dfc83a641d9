// SPDX-License-Identifier: Apache-2.0

#include "ramen/nn.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace ramen::nn {

template <typename T>
Tensor<T> xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<T> v(rows * cols);
  for (auto& x : v) x = static_cast<T>(uniform(rng, -limit, limit));
  return Tensor<T>(Shape{rows, cols}, std::move(v), true);
}

template <typename T>
Tensor<T> orthogonal(std::size_t n, Rng& rng) {
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd& r = qr.matrixQR();
  for (Eigen::Index j = 0; j < q.cols(); ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  std::vector<T> v(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      v[i * n + j] = static_cast<T>(q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
  return Tensor<T>(Shape{n, n}, std::move(v), true);
}

// ---- LinearLayer ----------------------------------------------------------

template <typename T>
LinearLayer<T> LinearLayer<T>::create(std::size_t in, std::size_t out, Rng& rng) {
  return LinearLayer{xavier_uniform<T>(out, in, rng), Tensor<T>(Shape{out}, true)};
}

template <typename T>
Tensor<T> LinearLayer<T>::forward(Tape<T>& tape, const Tensor<T>& x) const {
  if (x.rank() != 2 || x.cols() != in_features()) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + " does not match weight " +
                         shape_string(weight.shape()));
  }
  return ops::add_bias(tape, ops::matmul_nt(tape, x, weight), bias);
}

template <typename T>
void LinearLayer<T>::collect(const std::string& prefix, NamedTensors<T>& out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

// ---- BatchNorm ------------------------------------------------------------

template <typename T>
BatchNorm<T> BatchNorm<T>::create(std::size_t width) {
  BatchNorm bn;
  bn.gamma = Tensor<T>(Shape{width}, std::vector<T>(width, T(1)), true);
  bn.beta = Tensor<T>(Shape{width}, true);
  bn.running_mean = Tensor<T>(Shape{width});
  bn.running_var = Tensor<T>(Shape{width}, std::vector<T>(width, T(1)));
  return bn;
}

template <typename T>
Tensor<T> BatchNorm<T>::forward(Tape<T>& tape, const Tensor<T>& x) {
  if (mode == Phase::eval) {
    return ops::batch_norm_eval(tape, x, gamma, beta, running_mean.values(), running_var.values(),
                                eps);
  }
  std::vector<T> mu, var;
  auto out = ops::batch_norm_train(tape, x, gamma, beta, eps, &mu, &var);
  if (update_running_stats) {
    const T n = static_cast<T>(x.rows());
    const T unbias = n / (n - T(1));
    auto rm = running_mean.data();
    auto rv = running_var.data();
    for (std::size_t j = 0; j < mu.size(); ++j) {
      rm[j] = (T(1) - momentum) * rm[j] + momentum * mu[j];
      rv[j] = (T(1) - momentum) * rv[j] + momentum * var[j] * unbias;
    }
  }
  return out;
}

template <typename T>
void BatchNorm<T>::collect(const std::string& prefix, NamedTensors<T>& out) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

template <typename T>
void BatchNorm<T>::collect_buffers(const std::string& prefix, NamedTensors<T>& out) const {
  out.emplace_back(prefix + ".running_mean", running_mean);
  out.emplace_back(prefix + ".running_var", running_var);
}

// ---- Embedding ------------------------------------------------------------

template <typename T>
Embedding<T> Embedding<T>::create(std::size_t vocab, std::size_t dim, Rng& rng) {
  std::vector<T> v(vocab * dim);
  for (auto& x : v) x = static_cast<T>(normal(rng));
  return Embedding{Tensor<T>(Shape{vocab, dim}, std::move(v), true)};
}

template <typename T>
Tensor<T> Embedding<T>::lookup(Tape<T>& tape, std::span<const std::size_t> ids) const {
  return ops::take_rows(tape, table, ids);
}

template <typename T>
void Embedding<T>::collect(const std::string& prefix, NamedTensors<T>& out) const {
  out.emplace_back(prefix + ".table", table);
}

template <typename T>
std::size_t load_word_vectors(Embedding<T>& embedding, const std::vector<std::string>& vocab,
                              const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open word vector file " + path);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < vocab.size() && i < embedding.vocab_size(); ++i) index[vocab[i]] = i;

  const std::size_t dim = embedding.dim();
  auto table = embedding.table.data();
  std::vector<bool> seen(embedding.vocab_size(), false);
  std::size_t replaced = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<double> vec;
    double x;
    while (fields >> x) vec.push_back(x);
    if (!fields.eof() || vec.size() != dim) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(dim) + " values after token '" + token + "'");
    }
    auto it = index.find(token);
    if (it == index.end()) continue;
    for (std::size_t j = 0; j < dim; ++j) table[it->second * dim + j] = static_cast<T>(vec[j]);
    if (!seen[it->second]) {
      seen[it->second] = true;
      ++replaced;
    }
  }
  return replaced;
}

// ---- GRU ------------------------------------------------------------------

template <typename T>
GruCell<T> GruCell<T>::create(std::size_t in, std::size_t hidden, Rng& rng) {
  GruCell c;
  c.w_z = xavier_uniform<T>(hidden, in, rng);
  c.w_r = xavier_uniform<T>(hidden, in, rng);
  c.w_h = xavier_uniform<T>(hidden, in, rng);
  c.u_z = orthogonal<T>(hidden, rng);
  c.u_r = orthogonal<T>(hidden, rng);
  c.u_h = orthogonal<T>(hidden, rng);
  c.b_z = Tensor<T>(Shape{hidden}, true);
  c.b_r = Tensor<T>(Shape{hidden}, true);
  c.b_h = Tensor<T>(Shape{hidden}, true);
  return c;
}

template <typename T>
typename GruCell<T>::Projected GruCell<T>::project(Tape<T>& tape, const Tensor<T>& x) const {
  if (x.rank() != 2 || x.cols() != input_size()) {
    throw DimensionError("gru: input " + shape_string(x.shape()) + " does not match input size " +
                         std::to_string(input_size()));
  }
  return Projected{ops::add_bias(tape, ops::matmul_nt(tape, x, w_z), b_z),
                   ops::add_bias(tape, ops::matmul_nt(tape, x, w_r), b_r),
                   ops::add_bias(tape, ops::matmul_nt(tape, x, w_h), b_h)};
}

template <typename T>
Tensor<T> GruCell<T>::step(Tape<T>& tape, const Projected& x, const Tensor<T>& h) const {
  if (h.rank() != 2 || h.cols() != hidden_size() || h.rows() != x.z.rows()) {
    throw DimensionError("gru: state " + shape_string(h.shape()) + " does not match " +
                         shape_string(x.z.shape()));
  }
  auto z = ops::sigmoid(tape, ops::add(tape, x.z, ops::matmul_nt(tape, h, u_z)));
  auto r = ops::sigmoid(tape, ops::add(tape, x.r, ops::matmul_nt(tape, h, u_r)));
  auto candidate =
      ops::tanh(tape, ops::add(tape, x.h, ops::matmul_nt(tape, ops::mul(tape, r, h), u_h)));
  return ops::add(tape, h, ops::mul(tape, z, ops::sub(tape, candidate, h)));
}

template <typename T>
void GruCell<T>::collect(const std::string& prefix, NamedTensors<T>& out) const {
  out.emplace_back(prefix + ".w_z", w_z);
  out.emplace_back(prefix + ".w_r", w_r);
  out.emplace_back(prefix + ".w_h", w_h);
  out.emplace_back(prefix + ".u_z", u_z);
  out.emplace_back(prefix + ".u_r", u_r);
  out.emplace_back(prefix + ".u_h", u_h);
  out.emplace_back(prefix + ".b_z", b_z);
  out.emplace_back(prefix + ".b_r", b_r);
  out.emplace_back(prefix + ".b_h", b_h);
}

template <typename T>
Tensor<T> gru_step(Tape<T>& tape, const GruCell<T>& cell, const Tensor<T>& x,
                   const Tensor<T>& h_prev) {
  if (x.rank() == 1 && h_prev.rank() == 1) {
    auto xm = ops::reshape(tape, x, Shape{1, x.numel()});
    auto hm = ops::reshape(tape, h_prev, Shape{1, h_prev.numel()});
    auto out = cell.step(tape, cell.project(tape, xm), hm);
    return ops::reshape(tape, out, Shape{cell.hidden_size()});
  }
  if (x.rank() != 2 || h_prev.rank() != 2) {
    throw DimensionError("gru_step: input " + shape_string(x.shape()) + " and state " +
                         shape_string(h_prev.shape()) + " must both be vectors or matrices");
  }
  return cell.step(tape, cell.project(tape, x), h_prev);
}

template <typename T>
Tensor<T> gru_run(Tape<T>& tape, const GruCell<T>& cell, const Tensor<T>& inputs,
                  std::size_t batch, std::size_t steps, SequenceLayout layout, bool reverse,
                  const std::vector<std::size_t>* lengths) {
  if (steps == 0 || batch == 0) throw DimensionError("gru_run: empty sequence");
  if (inputs.rank() != 2 || inputs.rows() != batch * steps) {
    throw DimensionError("gru_run: " + shape_string(inputs.shape()) + " is not " +
                         std::to_string(batch) + " sequences of " + std::to_string(steps) +
                         " steps");
  }
  if (lengths && lengths->size() != batch) {
    throw DimensionError("gru_run: lengths do not match batch size");
  }
  const auto all = cell.project(tape, inputs);
  Tensor<T> h(Shape{batch, cell.hidden_size()});

  std::vector<std::size_t> rows(batch);
  for (std::size_t i = 0; i < steps; ++i) {
    const std::size_t t = reverse ? steps - 1 - i : i;
    typename GruCell<T>::Projected xt;
    if (layout == SequenceLayout::time_major) {
      xt = {ops::slice_rows(tape, all.z, t * batch, batch),
            ops::slice_rows(tape, all.r, t * batch, batch),
            ops::slice_rows(tape, all.h, t * batch, batch)};
    } else {
      for (std::size_t b = 0; b < batch; ++b) rows[b] = b * steps + t;
      xt = {ops::take_rows<T>(tape, all.z, rows), ops::take_rows<T>(tape, all.r, rows),
            ops::take_rows<T>(tape, all.h, rows)};
    }
    auto next = cell.step(tape, xt, h);
    if (lengths) {
      std::vector<bool> active(batch);
      bool all_active = true;
      for (std::size_t b = 0; b < batch; ++b) {
        active[b] = t < (*lengths)[b];
        all_active = all_active && active[b];
      }
      if (!all_active) next = ops::blend_rows(tape, next, h, active);
    }
    h = next;
  }
  return h;
}

template <typename T>
Tensor<T> bigru_final(Tape<T>& tape, const GruCell<T>& cell_fwd, const GruCell<T>& cell_bwd,
                      const std::vector<Tensor<T>>& seq) {
  if (seq.empty()) throw DimensionError("bigru_final: empty sequence");
  const bool vectors = seq.front().rank() == 1;
  std::vector<Tensor<T>> rows;
  rows.reserve(seq.size());
  for (const auto& x : seq) {
    if ((x.rank() == 1) != vectors) {
      throw DimensionError("bigru_final: mixed vector and matrix steps");
    }
    rows.push_back(vectors ? ops::reshape(tape, x, Shape{1, x.numel()}) : x);
  }
  const std::size_t batch = rows.front().rows();
  auto packed = ops::concat(tape, rows, 0);
  auto fwd = gru_run(tape, cell_fwd, packed, batch, seq.size(), SequenceLayout::time_major, false);
  auto bwd = gru_run(tape, cell_bwd, packed, batch, seq.size(), SequenceLayout::time_major, true);
  auto both = ops::concat(tape, {fwd, bwd}, 1);
  if (vectors) return ops::reshape(tape, both, Shape{both.numel()});
  return both;
}

// ---- ResidualMlp ----------------------------------------------------------

template <typename T>
ResidualMlp<T> ResidualMlp<T>::create(std::size_t in, std::size_t width, Rng& rng) {
  ResidualMlp mlp;
  mlp.layers[0] = LinearLayer<T>::create(in, width, rng);
  for (std::size_t i = 1; i < 4; ++i) mlp.layers[i] = LinearLayer<T>::create(width, width, rng);
  return mlp;
}

template <typename T>
Tensor<T> ResidualMlp<T>::forward(Tape<T>& tape, const Tensor<T>& c) const {
  auto y = ops::swish(tape, layers[0].forward(tape, c));
  for (std::size_t i = 1; i < 4; ++i) {
    y = ops::add(tape, ops::swish(tape, layers[i].forward(tape, y)), y);
  }
  return y;
}

template <typename T>
void ResidualMlp<T>::collect(const std::string& prefix, NamedTensors<T>& out) const {
  for (std::size_t i = 0; i < 4; ++i) layers[i].collect(prefix + ".l" + std::to_string(i + 1), out);
}

#define RAMEN_INSTANTIATE_NN(T)                                                               \
  template Tensor<T> xavier_uniform<T>(std::size_t, std::size_t, Rng&);                       \
  template Tensor<T> orthogonal<T>(std::size_t, Rng&);                                        \
  template struct LinearLayer<T>;                                                             \
  template struct BatchNorm<T>;                                                               \
  template struct Embedding<T>;                                                               \
  template struct GruCell<T>;                                                                 \
  template struct ResidualMlp<T>;                                                             \
  template std::size_t load_word_vectors(Embedding<T>&, const std::vector<std::string>&,      \
                                         const std::string&);                                 \
  template Tensor<T> gru_step(Tape<T>&, const GruCell<T>&, const Tensor<T>&,                  \
                              const Tensor<T>&);                                              \
  template Tensor<T> gru_run(Tape<T>&, const GruCell<T>&, const Tensor<T>&, std::size_t,      \
                             std::size_t, SequenceLayout, bool,                               \
                             const std::vector<std::size_t>*);                                \
  template Tensor<T> bigru_final(Tape<T>&, const GruCell<T>&, const GruCell<T>&,              \
                                 const std::vector<Tensor<T>>&);

RAMEN_INSTANTIATE_NN(float)
RAMEN_INSTANTIATE_NN(double)

#undef RAMEN_INSTANTIATE_NN

}  // namespace ramen::nn
