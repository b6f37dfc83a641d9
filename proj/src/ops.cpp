// SPDX-License-Identifier: Apache-2.0

#include "ramen/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace ramen::ops {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

template <typename T>
ConstMap<T> as_matrix(std::span<const T> v, std::size_t rows, std::size_t cols) {
  return ConstMap<T>(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
MutMap<T> as_matrix(std::span<T> v, std::size_t rows, std::size_t cols) {
  return MutMap<T>(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

// Runs `fn(grad_buffer)` only for inputs that take part in differentiation.
template <typename T, typename Fn>
void accumulate(Tensor<T> t, Fn&& fn) {
  if (t.requires_grad()) fn(t.grad_buffer());
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

template <typename T>
void require_matrix(const char* op, const Tensor<T>& a) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
  }
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// Elementwise unary op with derivative expressed through input and output.
template <typename T, typename F, typename D>
Tensor<T> unary(Tape<T>& tape, const char* name, const Tensor<T>& x, F f, D dfdx) {
  Tensor<T> out(x.shape());
  auto xv = x.values();
  auto ov = out.data();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = f(xv[i]);
  Tensor<T> xin = x;
  Tensor<T> out_ref = out;
  return tape.record(name, out, {x}, [xin, out_ref, dfdx](std::span<const T> g) {
    accumulate(xin, [&](std::span<T> gx) {
      auto xv = xin.values();
      auto ov = out_ref.values();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * dfdx(xv[i], ov[i]);
    });
  });
}

}  // namespace

template <typename T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor<T> out(Shape{m, n});
  as_matrix(out.data(), m, n).noalias() = as_matrix(a.values(), m, k) * as_matrix(b.values(), k, n);
  return tape.record("matmul", out, {a, b}, [a, b, m, k, n](std::span<const T> g) {
    auto G = as_matrix(g, m, n);
    accumulate(a, [&](std::span<T> ga) {
      as_matrix(ga, m, k).noalias() += G * as_matrix(b.values(), k, n).transpose();
    });
    accumulate(b, [&](std::span<T> gb) {
      as_matrix(gb, k, n).noalias() += as_matrix(a.values(), m, k).transpose() * G;
    });
  });
}

template <typename T>
Tensor<T> matmul_nt(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix("matmul_nt", a);
  require_matrix("matmul_nt", b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_nt: inner dimensions disagree, " + shape_string(a.shape()) +
                         " x " + shape_string(b.shape()) + "^T");
  }
  Tensor<T> out(Shape{m, n});
  as_matrix(out.data(), m, n).noalias() =
      as_matrix(a.values(), m, k) * as_matrix(b.values(), n, k).transpose();
  return tape.record("matmul_nt", out, {a, b}, [a, b, m, k, n](std::span<const T> g) {
    auto G = as_matrix(g, m, n);
    accumulate(a, [&](std::span<T> ga) {
      as_matrix(ga, m, k).noalias() += G * as_matrix(b.values(), n, k);
    });
    accumulate(b, [&](std::span<T> gb) {
      as_matrix(gb, n, k).noalias() += G.transpose() * as_matrix(a.values(), m, k);
    });
  });
}

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a, b);
  Tensor<T> out(a.shape());
  auto o = out.data();
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
  return tape.record("add", out, {a, b}, [a, b](std::span<const T> g) {
    accumulate(a, [&](std::span<T> ga) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
    accumulate(b, [&](std::span<T> gb) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    });
  });
}

template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("sub", a, b);
  Tensor<T> out(a.shape());
  auto o = out.data();
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] - bv[i];
  return tape.record("sub", out, {a, b}, [a, b](std::span<const T> g) {
    accumulate(a, [&](std::span<T> ga) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
    accumulate(b, [&](std::span<T> gb) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    });
  });
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("mul", a, b);
  Tensor<T> out(a.shape());
  auto o = out.data();
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * bv[i];
  return tape.record("mul", out, {a, b}, [a, b](std::span<const T> g) {
    accumulate(a, [&](std::span<T> ga) {
      auto bv = b.values();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    });
    accumulate(b, [&](std::span<T> gb) {
      auto av = a.values();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    });
  });
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T factor) {
  Tensor<T> out(a.shape());
  auto o = out.data();
  auto av = a.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * factor;
  return tape.record("scale", out, {a}, [a, factor](std::span<const T> g) {
    accumulate(a, [&](std::span<T> ga) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
  });
}

template <typename T>
Tensor<T> add_bias(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& bias) {
  if (bias.rank() != 1 || x.rank() < 1 || x.rank() > 2 || x.shape().back() != bias.dim(0)) {
    throw DimensionError("add_bias: cannot add bias " + shape_string(bias.shape()) + " to " +
                         shape_string(x.shape()));
  }
  const std::size_t d = bias.dim(0);
  const std::size_t rows = x.numel() / std::max<std::size_t>(d, 1);
  Tensor<T> out(x.shape());
  auto o = out.data();
  auto xv = x.values(), bv = bias.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) o[r * d + j] = xv[r * d + j] + bv[j];
  return tape.record("add_bias", out, {x, bias}, [x, bias, rows, d](std::span<const T> g) {
    accumulate(x, [&](std::span<T> gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
    accumulate(bias, [&](std::span<T> gb) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
    });
  });
}

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x) {
  return unary<T>(
      tape, "sigmoid", x, [](T v) { return stable_sigmoid(v); },
      [](T, T s) { return s * (T(1) - s); });
}

template <typename T>
Tensor<T> tanh(Tape<T>& tape, const Tensor<T>& x) {
  return unary<T>(
      tape, "tanh", x, [](T v) { return std::tanh(v); }, [](T, T t) { return T(1) - t * t; });
}

template <typename T>
Tensor<T> swish(Tape<T>& tape, const Tensor<T>& x) {
  return unary<T>(
      tape, "swish", x, [](T v) { return v * stable_sigmoid(v); },
      [](T v, T) {
        const T s = stable_sigmoid(v);
        return s + v * s * (T(1) - s);
      });
}

template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                         shape_string(shape));
  }
  auto xv = x.values();
  Tensor<T> out(std::move(shape), std::vector<T>(xv.begin(), xv.end()));
  return tape.record("reshape", out, {x}, [x](std::span<const T> g) {
    accumulate(x, [&](std::span<T> gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  });
}

template <typename T>
Tensor<T> concat(Tape<T>& tape, const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: empty list of parts");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for " +
                         shape_string(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) {
      throw DimensionError("concat: incompatible shapes " + shape_string(first) + " and " +
                           shape_string(s) + " along axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];

  std::vector<std::size_t> widths;  // contiguous chunk per outer index
  for (const auto& p : parts) widths.push_back(p.dim(axis) * inner);
  const std::size_t row = out_shape[axis] * inner;

  Tensor<T> out(out_shape);
  auto o = out.data();
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto pv = parts[p].values();
    for (std::size_t r = 0; r < outer; ++r)
      std::copy_n(pv.begin() + r * widths[p], widths[p], o.begin() + r * row + offset);
    offset += widths[p];
  }
  return tape.record("concat", out, parts, [parts, widths, outer, row](std::span<const T> g) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      accumulate(parts[p], [&](std::span<T> gp) {
        for (std::size_t r = 0; r < outer; ++r)
          for (std::size_t j = 0; j < widths[p]; ++j) gp[r * widths[p] + j] += g[r * row + offset + j];
      });
      offset += widths[p];
    }
  });
}

template <typename T>
Tensor<T> slice_rows(Tape<T>& tape, const Tensor<T>& x, std::size_t begin, std::size_t count) {
  require_matrix("slice_rows", x);
  if (begin + count > x.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " +
                         shape_string(x.shape()));
  }
  const std::size_t d = x.cols();
  Tensor<T> out(Shape{count, d});
  auto xv = x.values();
  std::copy_n(xv.begin() + begin * d, count * d, out.data().begin());
  return tape.record("slice_rows", out, {x}, [x, begin, d](std::span<const T> g) {
    accumulate(x, [&](std::span<T> gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[begin * d + i] += g[i];
    });
  });
}

template <typename T>
Tensor<T> take_rows(Tape<T>& tape, const Tensor<T>& x, std::span<const std::size_t> indices) {
  require_matrix("take_rows", x);
  const std::size_t d = x.cols();
  const std::size_t n = x.rows();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  Tensor<T> out(Shape{idx.size(), d});
  auto xv = x.values();
  auto o = out.data();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= n) {
      throw DimensionError("take_rows: index " + std::to_string(idx[r]) + " out of range for " +
                           shape_string(x.shape()));
    }
    std::copy_n(xv.begin() + idx[r] * d, d, o.begin() + r * d);
  }
  return tape.record("take_rows", out, {x}, [x, idx, d](std::span<const T> g) {
    accumulate(x, [&](std::span<T> gx) {
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < d; ++j) gx[idx[r] * d + j] += g[r * d + j];
    });
  });
}

template <typename T>
Tensor<T> blend_rows(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b,
                     const std::vector<bool>& keep_a) {
  require_same_shape("blend_rows", a, b);
  require_matrix("blend_rows", a);
  if (keep_a.size() != a.rows()) {
    throw DimensionError("blend_rows: mask has " + std::to_string(keep_a.size()) +
                         " entries for " + shape_string(a.shape()));
  }
  const std::size_t d = a.cols();
  Tensor<T> out(a.shape());
  auto o = out.data();
  auto av = a.values(), bv = b.values();
  for (std::size_t r = 0; r < keep_a.size(); ++r) {
    const auto& src = keep_a[r] ? av : bv;
    std::copy_n(src.begin() + r * d, d, o.begin() + r * d);
  }
  return tape.record("blend_rows", out, {a, b}, [a, b, keep_a, d](std::span<const T> g) {
    accumulate(a, [&](std::span<T> ga) {
      for (std::size_t r = 0; r < keep_a.size(); ++r)
        if (keep_a[r])
          for (std::size_t j = 0; j < d; ++j) ga[r * d + j] += g[r * d + j];
    });
    accumulate(b, [&](std::span<T> gb) {
      for (std::size_t r = 0; r < keep_a.size(); ++r)
        if (!keep_a[r])
          for (std::size_t j = 0; j < d; ++j) gb[r * d + j] += g[r * d + j];
    });
  });
}

template <typename T>
Tensor<T> row_group_mean(Tape<T>& tape, const Tensor<T>& x, std::size_t group) {
  require_matrix("row_group_mean", x);
  if (group == 0 || x.rows() % group != 0) {
    throw DimensionError("row_group_mean: " + std::to_string(x.rows()) +
                         " rows do not split into groups of " + std::to_string(group));
  }
  const std::size_t groups = x.rows() / group, d = x.cols();
  Tensor<T> out(Shape{groups, d});
  auto o = out.data();
  auto xv = x.values();
  const T inv = T(1) / static_cast<T>(group);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    for (std::size_t r = 0; r < group; ++r)
      for (std::size_t j = 0; j < d; ++j) o[gi * d + j] += xv[(gi * group + r) * d + j];
    for (std::size_t j = 0; j < d; ++j) o[gi * d + j] *= inv;
  }
  return tape.record("row_group_mean", out, {x}, [x, groups, group, d, inv](std::span<const T> g) {
    accumulate(x, [&](std::span<T> gx) {
      for (std::size_t gi = 0; gi < groups; ++gi)
        for (std::size_t r = 0; r < group; ++r)
          for (std::size_t j = 0; j < d; ++j) gx[(gi * group + r) * d + j] += g[gi * d + j] * inv;
    });
  });
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x) {
  T total = 0;
  for (T v : x.values()) total += v;
  return tape.record("sum", Tensor<T>::scalar(total), {x}, [x](std::span<const T> g) {
    accumulate(x, [&](std::span<T> gx) {
      for (auto& v : gx) v += g[0];
    });
  });
}

template <typename T>
Tensor<T> mean(Tape<T>& tape, const Tensor<T>& x) {
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  T total = 0;
  for (T v : x.values()) total += v;
  const T inv = T(1) / static_cast<T>(x.numel());
  return tape.record("mean", Tensor<T>::scalar(total * inv), {x}, [x, inv](std::span<const T> g) {
    accumulate(x, [&](std::span<T> gx) {
      for (auto& v : gx) v += g[0] * inv;
    });
  });
}

template <typename T>
Tensor<T> batch_norm_train(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma,
                           const Tensor<T>& beta, T eps, std::vector<T>* batch_mean,
                           std::vector<T>* batch_var) {
  require_matrix("batch_norm", x);
  const std::size_t n = x.rows(), d = x.cols();
  if (n < 2) {
    throw DimensionError("batch_norm: train mode needs at least 2 rows, got " + std::to_string(n));
  }
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("batch_norm: affine parameters " + shape_string(gamma.shape()) + "/" +
                         shape_string(beta.shape()) + " do not match " + shape_string(x.shape()));
  }
  auto xv = x.values();
  std::vector<T> mu(d, T(0)), var(d, T(0)), inv_std(d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) mu[j] += xv[r * d + j];
  for (auto& m : mu) m /= static_cast<T>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) {
      const T c = xv[r * d + j] - mu[j];
      var[j] += c * c;
    }
  for (std::size_t j = 0; j < d; ++j) {
    var[j] /= static_cast<T>(n);
    inv_std[j] = T(1) / std::sqrt(var[j] + eps);
  }
  std::vector<T> xhat(n * d);
  Tensor<T> out(x.shape());
  auto o = out.data();
  auto gv = gamma.values(), bv = beta.values();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) {
      const std::size_t i = r * d + j;
      xhat[i] = (xv[i] - mu[j]) * inv_std[j];
      o[i] = gv[j] * xhat[i] + bv[j];
    }
  if (batch_mean) *batch_mean = mu;
  if (batch_var) *batch_var = var;

  return tape.record(
      "batch_norm", out, {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), n,
       d](std::span<const T> g) {
        accumulate(beta, [&](std::span<T> gb) {
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
        });
        accumulate(gamma, [&](std::span<T> gg) {
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * xhat[r * d + j];
        });
        accumulate(x, [&](std::span<T> gx) {
          auto gv = gamma.values();
          std::vector<T> sum_dx(d, T(0)), sum_dx_xhat(d, T(0));
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < d; ++j) {
              const T dxhat = g[r * d + j] * gv[j];
              sum_dx[j] += dxhat;
              sum_dx_xhat[j] += dxhat * xhat[r * d + j];
            }
          const T nn = static_cast<T>(n);
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < d; ++j) {
              const std::size_t i = r * d + j;
              const T dxhat = g[i] * gv[j];
              gx[i] += inv_std[j] / nn * (nn * dxhat - sum_dx[j] - xhat[i] * sum_dx_xhat[j]);
            }
        });
      });
}

template <typename T>
Tensor<T> batch_norm_eval(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma,
                          const Tensor<T>& beta, std::span<const T> mean, std::span<const T> var,
                          T eps) {
  require_matrix("batch_norm_eval", x);
  const std::size_t n = x.rows(), d = x.cols();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d} || mean.size() != d ||
      var.size() != d) {
    throw DimensionError("batch_norm_eval: statistics do not match " + shape_string(x.shape()));
  }
  std::vector<T> inv_std(d);
  for (std::size_t j = 0; j < d; ++j) inv_std[j] = T(1) / std::sqrt(var[j] + eps);
  std::vector<T> xhat(n * d);
  Tensor<T> out(x.shape());
  auto o = out.data();
  auto xv = x.values();
  auto gv = gamma.values(), bv = beta.values();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) {
      const std::size_t i = r * d + j;
      xhat[i] = (xv[i] - mean[j]) * inv_std[j];
      o[i] = gv[j] * xhat[i] + bv[j];
    }
  return tape.record(
      "batch_norm_eval", out, {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), n,
       d](std::span<const T> g) {
        accumulate(beta, [&](std::span<T> gb) {
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
        });
        accumulate(gamma, [&](std::span<T> gg) {
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * xhat[r * d + j];
        });
        accumulate(x, [&](std::span<T> gx) {
          auto gv = gamma.values();
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += g[r * d + j] * gv[j] * inv_std[j];
        });
      });
}

template <typename T>
Tensor<T> softmax_cross_entropy(Tape<T>& tape, const Tensor<T>& logits,
                                std::span<const std::size_t> targets) {
  require_matrix("softmax_cross_entropy", logits);
  const std::size_t b = logits.rows(), c = logits.cols();
  if (targets.size() != b) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + shape_string(logits.shape()));
  }
  auto z = logits.values();
  std::vector<T> probs(b * c);
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  T loss = 0;
  for (std::size_t r = 0; r < b; ++r) {
    if (tgt[r] >= c) {
      throw DimensionError("softmax_cross_entropy: target " + std::to_string(tgt[r]) +
                           " out of range for " + std::to_string(c) + " classes");
    }
    const T mx = *std::max_element(z.begin() + r * c, z.begin() + (r + 1) * c);
    T denom = 0;
    for (std::size_t j = 0; j < c; ++j) {
      probs[r * c + j] = std::exp(z[r * c + j] - mx);
      denom += probs[r * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) probs[r * c + j] /= denom;
    loss += std::log(denom) + mx - z[r * c + tgt[r]];
  }
  const T inv_b = T(1) / static_cast<T>(b);
  return tape.record("softmax_cross_entropy", Tensor<T>::scalar(loss * inv_b), {logits},
                     [logits, probs = std::move(probs), tgt = std::move(tgt), b, c,
                      inv_b](std::span<const T> g) {
                       accumulate(logits, [&](std::span<T> gl) {
                         for (std::size_t r = 0; r < b; ++r)
                           for (std::size_t j = 0; j < c; ++j) {
                             const T onehot = (j == tgt[r]) ? T(1) : T(0);
                             gl[r * c + j] += g[0] * inv_b * (probs[r * c + j] - onehot);
                           }
                       });
                     });
}

template <typename T>
Tensor<T> sigmoid_bce(Tape<T>& tape, const Tensor<T>& logits, const Tensor<T>& targets) {
  require_same_shape("sigmoid_bce", logits, targets);
  require_matrix("sigmoid_bce", logits);
  const std::size_t b = logits.rows();
  auto z = logits.values();
  auto y = targets.values();
  T loss = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    loss += std::max(z[i], T(0)) - z[i] * y[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  const T inv_b = T(1) / static_cast<T>(b);
  return tape.record("sigmoid_bce", Tensor<T>::scalar(loss * inv_b), {logits},
                     [logits, targets, inv_b](std::span<const T> g) {
                       accumulate(logits, [&](std::span<T> gl) {
                         auto z = logits.values();
                         auto y = targets.values();
                         for (std::size_t i = 0; i < gl.size(); ++i)
                           gl[i] += g[0] * inv_b * (stable_sigmoid(z[i]) - y[i]);
                       });
                     });
}

#define RAMEN_INSTANTIATE_OPS(T)                                                                \
  template Tensor<T> matmul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> matmul_nt(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> sub(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> mul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> scale(Tape<T>&, const Tensor<T>&, T);                                      \
  template Tensor<T> add_bias(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> sigmoid(Tape<T>&, const Tensor<T>&);                                       \
  template Tensor<T> tanh(Tape<T>&, const Tensor<T>&);                                          \
  template Tensor<T> swish(Tape<T>&, const Tensor<T>&);                                         \
  template Tensor<T> reshape(Tape<T>&, const Tensor<T>&, Shape);                                \
  template Tensor<T> concat(Tape<T>&, const std::vector<Tensor<T>>&, std::size_t);              \
  template Tensor<T> slice_rows(Tape<T>&, const Tensor<T>&, std::size_t, std::size_t);          \
  template Tensor<T> take_rows(Tape<T>&, const Tensor<T>&, std::span<const std::size_t>);       \
  template Tensor<T> blend_rows(Tape<T>&, const Tensor<T>&, const Tensor<T>&,                   \
                                const std::vector<bool>&);                                      \
  template Tensor<T> row_group_mean(Tape<T>&, const Tensor<T>&, std::size_t);                   \
  template Tensor<T> sum(Tape<T>&, const Tensor<T>&);                                           \
  template Tensor<T> mean(Tape<T>&, const Tensor<T>&);                                          \
  template Tensor<T> batch_norm_train(Tape<T>&, const Tensor<T>&, const Tensor<T>&,             \
                                      const Tensor<T>&, T, std::vector<T>*, std::vector<T>*);   \
  template Tensor<T> batch_norm_eval(Tape<T>&, const Tensor<T>&, const Tensor<T>&,              \
                                     const Tensor<T>&, std::span<const T>, std::span<const T>,  \
                                     T);                                                        \
  template Tensor<T> softmax_cross_entropy(Tape<T>&, const Tensor<T>&,                          \
                                           std::span<const std::size_t>);                       \
  template Tensor<T> sigmoid_bce(Tape<T>&, const Tensor<T>&, const Tensor<T>&);

RAMEN_INSTANTIATE_OPS(float)
RAMEN_INSTANTIATE_OPS(double)

#undef RAMEN_INSTANTIATE_OPS

}  // namespace ramen::ops
