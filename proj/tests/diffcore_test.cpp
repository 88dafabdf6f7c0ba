/* Copyright 2026 The TAB Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <cmath>

#include "tab/diffcore/grad_check.hpp"
#include "tab/diffcore/ops.hpp"
#include "tab/evalcli/checks.hpp"

namespace tab {
namespace {

using M = Tensor2D<double>;

M mat(Index r, Index c, std::initializer_list<double> v) {
  M m(r, c);
  Index i = 0;
  for (double x : v) m.data()[i++] = x;
  return m;
}

TEST(Ops, SoftmaxOfEqualLogitsIsUniform) {
  Graph<double> g;
  Var<double> s = ops::softmax(g.constant(mat(1, 2, {0, 0})));
  EXPECT_DOUBLE_EQ(s.value()(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(s.value()(0, 1), 0.5);
}

TEST(Ops, SoftmaxRowsSumToOne) {
  Graph<double> g;
  Var<double> s = ops::softmax(g.constant(mat(2, 3, {1, 2, 3, -5, 0, 40})));
  for (Index r = 0; r < 2; ++r) EXPECT_NEAR(s.value().row(r).sum(), 1.0, 1e-6);
}

TEST(Ops, LogSoftmaxRowsLogSumExpZero) {
  Graph<double> g;
  Var<double> s = ops::log_softmax(g.constant(mat(2, 3, {1, 2, 3, 1000, 0, -1000})));
  for (Index r = 0; r < 2; ++r) EXPECT_NEAR(std::log(s.value().row(r).array().exp().sum()), 0.0, 1e-12);
  EXPECT_TRUE(all_finite(s.value()));
}

TEST(Ops, LinearWithIdentityIsNoOp) {
  Graph<double> g;
  M x = mat(2, 3, {1, -2, 3, 0.5, 0, 7});
  Var<double> y = ops::linear(g.constant(x), g.constant(M::Identity(3, 3)), g.constant(M::Zero(1, 3)));
  EXPECT_EQ(y.value(), x);
}

TEST(Ops, ShapeMismatchNamesShapes) {
  Graph<double> g;
  try {
    ops::matmul(g.constant(M::Zero(2, 3)), g.constant(M::Zero(2, 3)));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
  }
  EXPECT_THROW(ops::add(g.constant(M::Zero(2, 3)), g.constant(M::Zero(3, 2))), ShapeError);
}

TEST(Ops, FramesUnfoldLength) {
  Graph<double> g;
  Var<double> u = ops::frames_unfold(g.constant(M::Ones(8, 2)), 3, 2, 1);
  EXPECT_EQ(u.rows(), 4);
  EXPECT_EQ(u.cols(), 6);
}

TEST(Ops, SegmentMeanAveragesRuns) {
  Graph<double> g;
  Var<double> s = ops::segment_mean(g.constant(mat(3, 1, {1, 3, 10})), {{0, 1}, {2, 2}});
  EXPECT_DOUBLE_EQ(s.value()(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(s.value()(1, 0), 10.0);
}

TEST(Ops, DropoutWithoutRngIsIdentity) {
  Graph<double> g;
  Var<double> x = g.constant(M::Ones(3, 3));
  Var<double> y = ops::dropout(x, 0.5, nullptr);
  EXPECT_EQ(y.value(), x.value());
}

TEST(Autodiff, LinearDerivativeIsOuterProduct) {
  ParamSet<double> ps(1);
  ps.add("W", mat(2, 3, {1, 2, 3, 4, 5, 6}));
  Graph<double> g;
  M x = mat(1, 2, {0.5, -2});
  Var<double> loss = ops::sum(ops::matmul(g.constant(x), g.param(ps.at("W"))));
  ps.zero_grad();
  g.backward(loss);
  const M& grad = ps.at("W").grad;
  for (Index i = 0; i < 2; ++i) {
    for (Index j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(grad(i, j), x(0, i));
  }
}

TEST(Autodiff, UnusedParameterGetsZeroGradient) {
  ParamSet<double> ps(1);
  ps.add("used", M::Ones(2, 2));
  ps.add("unused", M::Ones(2, 2));
  Graph<double> g;
  Var<double> loss = ops::sum(ops::mul(g.param(ps.at("used")), g.param(ps.at("used"))));
  ps.zero_grad();
  g.backward(loss);
  EXPECT_EQ(ps.at("unused").grad, M::Zero(2, 2));
  EXPECT_EQ(ps.at("used").grad, M::Constant(2, 2, 2.0));
}

TEST(Autodiff, BackwardRejectsNonScalarAndRepeatedCalls) {
  ParamSet<double> ps(1);
  ps.add("p", M::Ones(2, 2));
  Graph<double> g;
  Var<double> v = g.param(ps.at("p"));
  EXPECT_THROW(g.backward(v), GraphError);
  Var<double> s = ops::sum(v);
  g.backward(s);
  EXPECT_THROW(g.backward(s), GraphError);
}

TEST(Autodiff, RandomizedGraphMatchesFiniteDifferences) {
  Rng rng = make_rng(3, 0);
  ParamSet<double> ps(3);
  ps.add("x", random_matrix(rng, 5, 4));
  ps.add("w1", random_matrix(rng, 4, 6, 0.5));
  ps.add("b1", random_matrix(rng, 1, 6, 0.1));
  ps.add("gain", random_matrix(rng, 1, 6, 0.1));
  ps.add("bias", random_matrix(rng, 1, 6, 0.1));
  ps.add("table", random_matrix(rng, 3, 6));
  auto build = [&](Graph<double>& g) {
    Var<double> h = ops::linear(g.param(ps.at("x")), g.param(ps.at("w1")), g.param(ps.at("b1")));
    h = ops::layer_norm(h, g.param(ps.at("gain")), g.param(ps.at("bias")));
    h = ops::replace_rows(h, g.param(ps.at("table")), {1, 3}, {2, 0});
    Var<double> a = ops::attention(h, h, h, 2, true);
    Var<double> s = ops::segment_mean(ops::add(a, h), {{0, 1}, {2, 4}});
    Var<double> u = ops::frames_unfold(s, 3, 2, 1);
    Var<double> ent = ops::sum(ops::mul(ops::softmax(u), ops::log_softmax(u)));
    return ops::add(ent, ops::sum(ops::mean(ops::relu(ops::transpose(h)), ops::Axis::cols)));
  };
  const GradCheckReport r = grad_check<double>(build, ps, 1e-5, 1e-4);
  EXPECT_TRUE(r.passed) << r;
}

TEST(GradCheck, ThreeClassCrossEntropyPasses) {
  ParamSet<double> ps(1);
  ps.add("logits", mat(2, 3, {0.2, -1.0, 0.7, 1.5, 0.1, -0.3}));
  auto build = [&](Graph<double>& g) {
    Var<double> lp = ops::log_softmax(g.param(ps.at("logits")));
    return ops::scale(ops::sum(ops::mul(lp, g.constant(mat(2, 3, {1, 0, 0, 0, 0, 1})))), -1.0);
  };
  EXPECT_TRUE(grad_check<double>(build, ps, 1e-5, 1e-4).passed);
}

TEST(GradCheck, CorruptedGradientIsReported) {
  ParamSet<double> ps(1);
  ps.add("p", mat(1, 3, {0.3, -0.2, 1.1}));
  // Square whose recorded derivative is 3x instead of 2x.
  auto build = [&](Graph<double>& g) {
    Var<double> p = g.param(ps.at("p"));
    Var<double> sq = g.record(p.value().cwiseProduct(p.value()), {p}, [p](Graph<double>& g, int self) {
      g.accumulate(p, (3.0 * p.value()).cwiseProduct(g.grad(self)));
    });
    return ops::sum(sq);
  };
  const GradCheckReport r = grad_check<double>(build, ps, 1e-5, 1e-4);
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.worst(), 0.1);
}

TEST(GradCheck, NonDeterministicBuilderIsRejected) {
  ParamSet<double> ps(1);
  ps.add("p", M::Ones(1, 1));
  int calls = 0;
  auto build = [&](Graph<double>& g) { return ops::scale(ops::sum(g.param(ps.at("p"))), static_cast<double>(++calls)); };
  EXPECT_THROW(grad_check<double>(build, ps, 1e-5, 1e-4), NonDeterministicBuilder);
}

TEST(ParamSet, DuplicateNameAndMissingLookupFail) {
  ParamSet<float> ps(1);
  ps.add_zeros("a", 1, 1);
  EXPECT_THROW(ps.add_zeros("a", 1, 1), std::invalid_argument);
  EXPECT_THROW(ps.at("b"), std::out_of_range);
}

TEST(ParamSet, InitializationIsSeedDeterministic) {
  ParamSet<double> a(5), b(5), c(6);
  a.add_xavier("w", 4, 4);
  b.add_xavier("w", 4, 4);
  c.add_xavier("w", 4, 4);
  EXPECT_EQ(a.at("w").value, b.at("w").value);
  EXPECT_NE(a.at("w").value, c.at("w").value);
  EXPECT_LE(a.at("w").value.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 8.0));
}

}  // namespace
}  // namespace tab
