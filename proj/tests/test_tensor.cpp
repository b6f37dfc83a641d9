// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "ramen/gradcheck.hpp"
#include "ramen/ops.hpp"
#include "ramen/random.hpp"
#include "ramen/tensor.hpp"

namespace ramen {
namespace {

using TD = Tensor<double>;

TD mat(std::size_t r, std::size_t c, std::vector<double> v, bool grad = false) {
  return TD({r, c}, std::move(v), grad);
}

std::vector<double> values_of(const TD& t) { return {t.values().begin(), t.values().end()}; }

TEST(Tensor, ShapeMatchesValueCount) {
  EXPECT_THROW(TD({2, 3}, std::vector<double>(5)), DimensionError);
  TD t({2, 3});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(shape_numel(t.shape()), t.numel());
  EXPECT_EQ(shape_string({2, 3}), "[2x3]");
}

TEST(Tensor, GradBufferHasValueShape) {
  TD t({4, 2}, true);
  EXPECT_FALSE(t.has_grad());
  EXPECT_EQ(t.grad_buffer().size(), t.numel());
  EXPECT_TRUE(t.has_grad());
  t.clear_grad();
  EXPECT_FALSE(t.has_grad());
}

TEST(Tensor, CloneIsDeep) {
  auto a = mat(1, 2, {1, 2});
  auto b = a.clone();
  b.data()[0] = 9;
  EXPECT_EQ(a[0], 1);
  EXPECT_FALSE(a.same_storage(b));
}

TEST(Tape, RecordsOnlyWhenAnInputNeedsGrad) {
  Tape<double> tape;
  auto a = mat(2, 2, {1, 2, 3, 4});
  auto b = mat(2, 2, {1, 0, 0, 1});
  ops::matmul(tape, a, b);
  EXPECT_EQ(tape.size(), 0u);
  a.set_requires_grad(true);
  ops::matmul(tape, a, b);
  EXPECT_EQ(tape.size(), 1u);
}

TEST(Tape, OpsAreRecordedInTopologicalOrder) {
  Tape<double> tape;
  auto x = mat(1, 3, {1, 2, 3}, true);
  auto y = ops::swish(tape, x);
  auto z = ops::mul(tape, y, y);
  ops::sum(tape, z);
  EXPECT_EQ(tape.op_names(), (std::vector<std::string>{"swish", "mul", "sum"}));
}

TEST(Tape, BackwardVisitsEachNodeOnce) {
  // y is used twice; a second visit of the swish node would double its gradient.
  Tape<double> tape;
  auto x = TD({1}, {0.7}, true);
  auto y = ops::swish(tape, x);
  auto l = ops::sum(tape, ops::add(tape, y, y));
  tape.backward(l);
  const double s = 1 / (1 + std::exp(-0.7));
  EXPECT_NEAR(x.grad()[0], 2 * (s + 0.7 * s * (1 - s)), 1e-15);
}

TEST(Tape, LeafGradientsAccumulate) {
  auto x = TD({2}, {1, 2}, true);
  for (int i = 0; i < 2; ++i) {
    Tape<double> tape;
    tape.backward(ops::sum(tape, x));
  }
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], 2.0);
}

TEST(Tape, CheckFiniteFlagsTheOp) {
  Tape<double> tape;
  tape.set_check_finite(true);
  auto x = TD({1}, {std::numeric_limits<double>::infinity()}, true);
  auto y = TD({1}, {0.0}, true);
  EXPECT_THROW(ops::mul(tape, x, y), NumericError);
}

TEST(Ops, MatmulIdentity) {
  Tape<double> tape;
  auto a = mat(2, 2, {1, 2, 3, 4});
  auto eye = mat(2, 2, {1, 0, 0, 1});
  EXPECT_EQ(values_of(ops::matmul(tape, eye, a)), values_of(a));
}

TEST(Ops, MatmulProjector) {
  Tape<double> tape;
  auto p = mat(2, 2, {1, 0, 0, 0});
  auto b = mat(2, 2, {5, 6, 7, 8});
  EXPECT_EQ(values_of(ops::matmul(tape, p, b)), (std::vector<double>{5, 6, 0, 0}));
}

TEST(Ops, MatmulShapeMismatchThrows) {
  Tape<double> tape;
  EXPECT_THROW(ops::matmul(tape, TD({2, 3}), TD({2, 3})), DimensionError);
}

TEST(Ops, ConcatWidths) {
  Tape<double> tape;
  auto r = ops::concat(tape, {TD({1, 2048}), TD({1, 512})}, 1);
  EXPECT_EQ(r.shape(), (Shape{1, 2560}));
  auto c = ops::concat(tape, {r, TD({1, 1024})}, 1);
  EXPECT_EQ(c.shape(), (Shape{1, 3584}));
  auto v = ops::concat(tape, {TD({2048}), TD({512})}, 0);
  EXPECT_EQ(v.shape(), (Shape{2560}));
}

TEST(Ops, ConcatSinglePartIsIdentity) {
  Tape<double> tape;
  auto x = mat(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(values_of(ops::concat(tape, {x}, 1)), values_of(x));
}

TEST(Ops, SwishAtZero) {
  Tape<double> tape;
  EXPECT_EQ(ops::swish(tape, TD({1}, std::vector<double>{0.0}))[0], 0.0);
}

TEST(Ops, SwishMatchesLongDoubleOracle) {
  Tape<double> tape;
  const std::vector<double> xs = {-2, -1, 1, 2};
  auto y = ops::swish(tape, TD({4}, xs));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const long double x = xs[i];
    const long double ref = x / (1.0L + std::exp(-x));
    EXPECT_NEAR(y[i], static_cast<double>(ref), 1e-15) << "x=" << xs[i];
  }
}

TEST(Ops, SumGradientIsOnes) {
  Tape<double> tape;
  auto x = TD({5}, {1, -2, 3, 0.5, 7}, true);
  tape.backward(ops::sum(tape, x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Ops, QuadraticGradient) {
  Tape<double> tape;
  auto x = TD({3}, {1, 2, 3}, true);
  tape.backward(ops::sum(tape, ops::mul(tape, x, x)));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{2, 4, 6}));
}

TEST(Ops, SoftmaxCrossEntropyIsStableForLargeLogits) {
  Tape<double> tape;
  const std::size_t target[] = {0};
  auto l = ops::softmax_cross_entropy(tape, mat(1, 2, {1000, 0}), target);
  EXPECT_NEAR(l.item(), 0.0, 1e-12);
}

TEST(GradCheck, RelativeErrorFloor) {
  EXPECT_DOUBLE_EQ(gradcheck::relative_error(1e-10, 0), 1e-10 / 1e-8);
  EXPECT_DOUBLE_EQ(gradcheck::relative_error(2, 1), 0.5);
}

class OpSuite : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(OpSuite, EveryOpMatchesFiniteDifferences) {
  for (const auto& r : gradcheck::op_suite(GetParam())) {
    EXPECT_TRUE(r.passed()) << r.name << " max_rel_err=" << r.max_rel_error;
    EXPECT_GT(r.checked, 0u) << r.name;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpSuite, ::testing::Values(0, 1, 2, 3, 4));

TEST(GradCheck, CorruptedRuleIsReportedByName) {
  const auto r = gradcheck::corrupted_control(0);
  EXPECT_FALSE(r.passed());
  EXPECT_EQ(r.name, "corrupted_swish");
  const auto report = gradcheck::format_report({r});
  EXPECT_NE(report.find("corrupted_swish"), std::string::npos);
  EXPECT_NE(report.find("FAIL"), std::string::npos);
}

}  // namespace
}  // namespace ramen
