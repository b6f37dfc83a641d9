// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference checks of recorded gradient rules, per op and
// end to end through the model, in double precision.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ramen/model.hpp"
#include "ramen/tensor.hpp"

namespace ramen::gradcheck {

struct CheckResult {
  std::string name;
  double max_rel_error = 0;
  std::size_t checked = 0;  // scalar entries compared
  double tolerance = 0;
  bool passed() const { return max_rel_error < tolerance; }
};

/// Builds a scalar loss from the inputs on the given tape.
using LossFn = std::function<Tensor<double>(Tape<double>&, const std::vector<Tensor<double>>&)>;

/// |a - n| / max(|a|, |n|, 1e-8).
double relative_error(double analytic, double numeric);

/// Compares backward() against Ridders-extrapolated central differences
/// starting from step h for every entry of every input. The inputs are perturbed in place and
/// restored.
CheckResult check_function(const std::string& name, const LossFn& loss,
                           std::vector<Tensor<double>> inputs, double tolerance = 1e-6,
                           double h = 1e-3);

/// sum(x * w) for a fixed pseudo-random weight tensor w, so every output
/// entry gets a distinct upstream gradient.
Tensor<double> weighted_sum(Tape<double>& tape, const Tensor<double>& x, std::uint64_t seed);

/// Every differentiable op and layer on random inputs.
std::vector<CheckResult> op_suite(std::uint64_t seed, double tolerance = 1e-6);

/// Tiny end-to-end model: two regions, three-token question, five answers.
RamenConfig toy_config(Ablation ablation = Ablation::full);

/// Gradient of the answer loss w.r.t. every model parameter (one result per
/// parameter tensor) over a batch of toy instances. BatchNorm running
/// statistics are frozen while probing.
std::vector<CheckResult> model_suite(const RamenConfig& config, std::uint64_t seed,
                                     std::size_t batch = 3, double tolerance = 1e-4,
                                     double h = 1e-3);

/// swish with a deliberately wrong gradient rule (the sigmoid-derivative
/// term is dropped); used as a negative control.
Tensor<double> corrupted_swish(Tape<double>& tape, const Tensor<double>& x);
CheckResult corrupted_control(std::uint64_t seed, double tolerance = 1e-6);

/// One line per check: name, max relative error, entries, PASS/FAIL.
std::string format_report(const std::vector<CheckResult>& results);

}  // namespace ramen::gradcheck
