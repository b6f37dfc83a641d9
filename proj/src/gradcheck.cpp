// SPDX-License-Identifier: Apache-2.0

#include "ramen/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "ramen/nn.hpp"
#include "ramen/ops.hpp"
#include "ramen/random.hpp"

namespace ramen::gradcheck {
namespace {

using TensorD = Tensor<double>;
using Inputs = std::vector<TensorD>;

TensorD random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  TensorD t(std::move(shape));
  for (auto& v : t.data()) v = scale * normal(rng);
  return t;
}

double scalar_loss(const LossFn& loss, const Inputs& inputs) {
  Tape<double> tape;
  return loss(tape, inputs).item();
}

// Ridders' extrapolation of central differences: steps shrink from h by a
// constant factor and the tableau entry with the smallest error estimate wins.
template <class F>
double ridders(F&& f, double h) {
  constexpr int kTab = 10;
  constexpr double kCon = 1.4, kCon2 = kCon * kCon, kSafe = 2.0;
  double a[kTab][kTab];
  double best = 0, err = std::numeric_limits<double>::infinity();
  a[0][0] = (f(h) - f(-h)) / (2 * h);
  for (int i = 1; i < kTab; ++i) {
    h /= kCon;
    a[0][i] = (f(h) - f(-h)) / (2 * h);
    double fac = kCon2;
    for (int j = 1; j <= i; ++j) {
      a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1);
      fac *= kCon2;
      const double e = std::max(std::abs(a[j][i] - a[j - 1][i]), std::abs(a[j][i] - a[j - 1][i - 1]));
      if (e <= err) {
        err = e;
        best = a[j][i];
      }
    }
    if (std::abs(a[i][i] - a[i - 1][i - 1]) >= kSafe * err) break;
  }
  return best;
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

CheckResult check_function(const std::string& name, const LossFn& loss, Inputs inputs,
                           double tolerance, double h) {
  CheckResult result{name, 0.0, 0, tolerance};
  for (auto& x : inputs) {
    x.set_requires_grad(true);
    x.clear_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape<double> tape;
    const auto l = loss(tape, inputs);
    tape.backward(l);
    for (const auto& x : inputs) {
      auto g = x.grad();
      analytic.emplace_back(g.begin(), g.end());
      if (analytic.back().empty()) analytic.back().assign(x.numel(), 0.0);
    }
  }
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto v = inputs[k].data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double saved = v[i];
      const double numeric = ridders([&](double offset) {
        v[i] = saved + offset;
        return scalar_loss(loss, inputs);
      }, h);
      v[i] = saved;
      result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic[k][i], numeric));
      ++result.checked;
    }
  }
  for (auto& x : inputs) x.clear_grad();
  return result;
}

TensorD weighted_sum(Tape<double>& tape, const TensorD& x, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x3e16ULL, x.numel()}));
  TensorD w(x.shape());
  for (auto& v : w.data()) v = uniform(rng, 0.5, 1.5) * (uniform01(rng) < 0.5 ? -1.0 : 1.0);
  return ops::sum(tape, ops::mul(tape, x, w));
}

std::vector<CheckResult> op_suite(std::uint64_t seed, double tol) {
  Rng rng(derive_seed(seed, {0x0b5ULL}));
  std::vector<CheckResult> out;
  auto check = [&](const std::string& name, auto&& body, Inputs inputs) {
    const LossFn fn = [&, body](Tape<double>& t, const Inputs& in) {
      return weighted_sum(t, body(t, in), seed);
    };
    out.push_back(check_function(name, fn, std::move(inputs), tol));
  };

  check("matmul", [](auto& t, const Inputs& in) { return ops::matmul(t, in[0], in[1]); },
        {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 2})});
  check("matmul_nt", [](auto& t, const Inputs& in) { return ops::matmul_nt(t, in[0], in[1]); },
        {random_tensor(rng, {3, 4}), random_tensor(rng, {5, 4})});
  check("add", [](auto& t, const Inputs& in) { return ops::add(t, in[0], in[1]); },
        {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})});
  check("sub", [](auto& t, const Inputs& in) { return ops::sub(t, in[0], in[1]); },
        {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})});
  check("mul", [](auto& t, const Inputs& in) { return ops::mul(t, in[0], in[1]); },
        {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})});
  check("scale", [](auto& t, const Inputs& in) { return ops::scale(t, in[0], -1.7); },
        {random_tensor(rng, {4})});
  check("add_bias", [](auto& t, const Inputs& in) { return ops::add_bias(t, in[0], in[1]); },
        {random_tensor(rng, {3, 4}), random_tensor(rng, {4})});
  check("sigmoid", [](auto& t, const Inputs& in) { return ops::sigmoid(t, in[0]); },
        {random_tensor(rng, {20}, 2.0)});
  check("tanh", [](auto& t, const Inputs& in) { return ops::tanh(t, in[0]); },
        {random_tensor(rng, {20}, 2.0)});
  check("swish", [](auto& t, const Inputs& in) { return ops::swish(t, in[0]); },
        {random_tensor(rng, {20}, 2.0)});
  check("reshape", [](auto& t, const Inputs& in) { return ops::reshape(t, in[0], {3, 2}); },
        {random_tensor(rng, {2, 3})});
  check("concat_axis0",
        [](auto& t, const Inputs& in) { return ops::concat(t, {in[0], in[1]}, 0); },
        {random_tensor(rng, {2, 3}), random_tensor(rng, {1, 3})});
  check("concat_axis1",
        [](auto& t, const Inputs& in) { return ops::concat(t, {in[0], in[1], in[2]}, 1); },
        {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 1}), random_tensor(rng, {2, 2})});
  check("slice_rows", [](auto& t, const Inputs& in) { return ops::slice_rows(t, in[0], 1, 2); },
        {random_tensor(rng, {4, 3})});
  check("take_rows",
        [](auto& t, const Inputs& in) {
          const std::size_t idx[] = {2, 0, 2, 1};
          return ops::take_rows(t, in[0], idx);
        },
        {random_tensor(rng, {3, 2})});
  check("blend_rows",
        [](auto& t, const Inputs& in) {
          return ops::blend_rows(t, in[0], in[1], std::vector<bool>{true, false, true});
        },
        {random_tensor(rng, {3, 2}), random_tensor(rng, {3, 2})});
  check("row_group_mean", [](auto& t, const Inputs& in) { return ops::row_group_mean(t, in[0], 3); },
        {random_tensor(rng, {6, 2})});
  check("sum", [](auto& t, const Inputs& in) { return ops::sum(t, in[0]); }, {random_tensor(rng, {5})});
  check("mean", [](auto& t, const Inputs& in) { return ops::mean(t, in[0]); },
        {random_tensor(rng, {2, 3})});
  check("batch_norm_train",
        [](auto& t, const Inputs& in) {
          return ops::batch_norm_train(t, in[0], in[1], in[2], 1e-5);
        },
        {random_tensor(rng, {5, 3}), random_tensor(rng, {3}), random_tensor(rng, {3})});
  {
    const std::vector<double> mu = {0.1, -0.2, 0.3}, var = {0.5, 1.5, 2.0};
    check("batch_norm_eval",
          [mu, var](auto& t, const Inputs& in) {
            return ops::batch_norm_eval<double>(t, in[0], in[1], in[2], mu, var, 1e-5);
          },
          {random_tensor(rng, {4, 3}), random_tensor(rng, {3}), random_tensor(rng, {3})});
  }
  {
    const LossFn ce = [](Tape<double>& t, const Inputs& in) {
      const std::size_t targets[] = {1, 0, 3};
      return ops::softmax_cross_entropy(t, in[0], targets);
    };
    out.push_back(check_function("softmax_cross_entropy", ce, {random_tensor(rng, {3, 4})}, tol));
    TensorD targets({3, 4});
    for (auto& v : targets.data()) v = uniform01(rng);
    const LossFn bce = [targets](Tape<double>& t, const Inputs& in) {
      return ops::sigmoid_bce(t, in[0], targets);
    };
    out.push_back(check_function("sigmoid_bce", bce, {random_tensor(rng, {3, 4})}, tol));
  }

  // Layers: parameters are the checked inputs.
  {
    auto layer = nn::LinearLayer<double>::create(4, 3, rng);
    check("linear",
          [](auto& t, const Inputs& in) {
            nn::LinearLayer<double> l{in[1], in[2]};
            return l.forward(t, in[0]);
          },
          {random_tensor(rng, {2, 4}), layer.weight.clone(), layer.bias.clone()});
  }
  {
    auto cell = nn::GruCell<double>::create(3, 4, rng);
    for (auto* b : {&cell.b_z, &cell.b_r, &cell.b_h})
      for (auto& v : b->data()) v = 0.3 * normal(rng);
    auto as_cell = [](const Inputs& in) {
      return nn::GruCell<double>{in[2], in[3], in[4], in[5], in[6], in[7], in[8], in[9], in[10]};
    };
    Inputs gru_inputs = {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 4}, 0.5),
                         cell.w_z.clone(), cell.w_r.clone(), cell.w_h.clone(),
                         cell.u_z.clone(), cell.u_r.clone(), cell.u_h.clone(),
                         cell.b_z.clone(), cell.b_r.clone(), cell.b_h.clone()};
    check("gru_step",
          [as_cell](auto& t, const Inputs& in) { return nn::gru_step(t, as_cell(in), in[0], in[1]); },
          gru_inputs);
    gru_inputs[0] = random_tensor(rng, {6, 3});  // 2 items x 3 steps, time-major
    check("gru_run_masked",
          [as_cell](auto& t, const Inputs& in) {
            const std::vector<std::size_t> lengths = {3, 2};
            return nn::gru_run(t, as_cell(in), in[0], 2, 3, nn::SequenceLayout::time_major, false,
                               &lengths);
          },
          gru_inputs);
    auto cell_b = nn::GruCell<double>::create(3, 4, rng);
    check("bigru_final",
          [as_cell, cell_b](auto& t, const Inputs& in) {
            const std::vector<TensorD> seq = {ops::slice_rows(t, in[0], 0, 2),
                                              ops::slice_rows(t, in[0], 2, 2),
                                              ops::slice_rows(t, in[0], 4, 2)};
            return nn::bigru_final(t, as_cell(in), cell_b, seq);
          },
          gru_inputs);
  }
  {
    auto mlp = nn::ResidualMlp<double>::create(3, 4, rng);
    Inputs in = {random_tensor(rng, {2, 3})};
    for (const auto& l : mlp.layers) {
      in.push_back(l.weight.clone());
      in.push_back(l.bias.clone());
    }
    check("residual_mlp",
          [](auto& t, const Inputs& in) {
            nn::ResidualMlp<double> m;
            for (std::size_t i = 0; i < 4; ++i) m.layers[i] = {in[1 + 2 * i], in[2 + 2 * i]};
            return m.forward(t, in[0]);
          },
          in);
  }
  return out;
}

RamenConfig toy_config(Ablation ablation) {
  RamenConfig c;
  c.vocab_size = 8;
  c.embedding_dim = 4;
  c.visual_dim = 3;
  c.spatial_dim = 8;
  c.question_dim = 4;
  c.projector_width = 5;
  c.aggregator_hidden = 3;
  c.pre_classifier_width = 6;
  c.num_answers = 5;
  c.ablation = ablation;
  return c;
}

std::vector<CheckResult> model_suite(const RamenConfig& config, std::uint64_t seed,
                                     std::size_t batch, double tol, double h) {
  constexpr std::size_t kRegions = 2;
  RamenModel<double> model(config, seed);
  model.set_update_running_stats(false);
  Rng rng(derive_seed(seed, {0x70cULL}));

  ModelInput<double> input;
  input.num_regions = kRegions;
  input.regions = random_tensor(rng, {batch * kRegions, config.region_dim()});
  std::vector<std::vector<std::size_t>> answers;
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<std::size_t> tokens;
    for (int k = 0; k < 3; ++k) tokens.push_back(1 + uniform_index(rng, config.vocab_size - 1));
    input.tokens.push_back(tokens);
    answers.push_back({uniform_index(rng, config.num_answers)});
  }

  auto params = model.parameters();
  Inputs tensors;
  for (const auto& [name, t] : params) tensors.push_back(t);

  std::vector<CheckResult> out;
  // The model owns its parameters, so the loss ignores `in` and the probe
  // perturbs the shared storage directly; each parameter is checked alone.
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (auto& t : tensors) t.set_requires_grad(false);
    const LossFn fn = [&](Tape<double>& tape, const Inputs&) {
      return model.answer_loss(tape, model.forward(tape, input), answers);
    };
    out.push_back(check_function(config.ablation == Ablation::full
                                     ? params[k].first
                                     : std::string(to_string(config.ablation)) + ":" + params[k].first,
                                 fn, {tensors[k]}, tol, h));
  }
  for (auto& t : tensors) t.set_requires_grad(true);
  return out;
}

TensorD corrupted_swish(Tape<double>& tape, const TensorD& x) {
  auto xv = x.values();
  TensorD out(x.shape());
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] / (1.0 + std::exp(-xv[i]));
  return tape.record("corrupted_swish", out, {x}, [x](std::span<const double> g) {
    if (!x.requires_grad()) return;
    TensorD xin = x;
    auto gx = xin.grad_buffer();
    auto v = xin.values();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] / (1.0 + std::exp(-v[i]));
  });
}

CheckResult corrupted_control(std::uint64_t seed, double tol) {
  Rng rng(derive_seed(seed, {0xbadULL}));
  const LossFn fn = [seed](Tape<double>& t, const Inputs& in) {
    return weighted_sum(t, corrupted_swish(t, in[0]), seed);
  };
  return check_function("corrupted_swish", fn, {random_tensor(rng, {10}, 2.0)}, tol);
}

std::string format_report(const std::vector<CheckResult>& results) {
  std::ostringstream os;
  char line[256];
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-40s max_rel_err=%.3e n=%zu tol=%.0e %s\n", r.name.c_str(),
                  r.max_rel_error, r.checked, r.tolerance, r.passed() ? "PASS" : "FAIL");
    os << line;
  }
  return os.str();
}

}  // namespace ramen::gradcheck
