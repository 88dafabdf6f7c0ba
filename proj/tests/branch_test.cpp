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

#include "tab/branch/branch.hpp"
#include "tab/evalcli/checks.hpp"

namespace tab {
namespace {

using M = Tensor2D<double>;

constexpr int kC = 0;
constexpr int kD = 1;
constexpr int kBlank = 2;

AlignmentPath path_of(std::vector<int> labels) {
  AlignmentPath p;
  p.runs = runs_of(labels);
  p.labels = std::move(labels);
  return p;
}

TEST(Shrink, AveragesRepeatedFrames) {
  Graph<double> g;
  M h(4, 2);
  h << 1, 2, 3, 4, 5, 6, 7, 8;
  const ShrinkResult<double> s = shrink(g.constant(h), path_of({kC, kC, kBlank, kD}));
  ASSERT_EQ(s.o.rows(), 3);
  EXPECT_EQ(s.labels, (std::vector<int>{kC, kBlank, kD}));
  EXPECT_DOUBLE_EQ(s.o.value()(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(s.o.value()(0, 1), 3.0);
  EXPECT_EQ(s.o.value().row(1), h.row(2));
  EXPECT_EQ(s.o.value().row(2), h.row(3));
}

TEST(Shrink, DistinctLabelsAreIdentity) {
  Graph<double> g;
  Rng rng = make_rng(1, 0);
  const M h = random_matrix(rng, 3, 4);
  const ShrinkResult<double> s = shrink(g.constant(h), path_of({kC, kBlank, kD}));
  EXPECT_EQ(s.o.value(), h);
}

TEST(Shrink, RowCountAndSumConservation) {
  Rng rng = make_rng(2, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const int frames = static_cast<int>(uniform_int(rng, 1, 20));
    std::vector<int> labels(static_cast<std::size_t>(frames));
    for (auto& l : labels) l = static_cast<int>(uniform_int(rng, 0, 2));
    const AlignmentPath p = path_of(labels);
    Graph<double> g;
    const M h = random_matrix(rng, frames, 3);
    const ShrinkResult<double> s = shrink(g.constant(h), p);
    ASSERT_EQ(static_cast<std::size_t>(s.o.rows()), p.runs.size());
    Eigen::RowVectorXd weighted = Eigen::RowVectorXd::Zero(3);
    for (std::size_t k = 0; k < p.runs.size(); ++k) {
      weighted += s.o.value().row(static_cast<Index>(k)) * p.runs[k].length();
    }
    EXPECT_LT((weighted - h.colwise().sum()).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Shrink, LengthMismatchIsAnError) {
  Graph<double> g;
  EXPECT_THROW(shrink(g.constant(M::Zero(3, 2)), path_of({kC, kD})), std::invalid_argument);
}

class CopyReplaceTest : public ::testing::Test {
 protected:
  CopyReplaceTest() : rng_(make_rng(4, 0)) {
    o_ = g_.constant(random_matrix(rng_, 5, 3));
    table_ = g_.constant(random_matrix(rng_, 3, 3));
  }

  Graph<double> g_;
  Rng rng_;
  Var<double> o_;
  Var<double> table_;
  const std::vector<int> labels_ = {kC, kBlank, kD, kC, kBlank};
};

TEST_F(CopyReplaceTest, ZeroProbabilityCopiesExactly) {
  const BranchPair<double> bp = copy_replace(o_, labels_, table_, kBlank, 0.0, rng_);
  EXPECT_EQ(bp.a.value(), o_.value());
  EXPECT_EQ(bp.replaced(), 0u);
}

TEST_F(CopyReplaceTest, UnitProbabilityReplacesEveryNonBlank) {
  const BranchPair<double> bp = copy_replace(o_, labels_, table_, kBlank, 1.0, rng_);
  for (std::size_t k = 0; k < labels_.size(); ++k) {
    const Index r = static_cast<Index>(k);
    if (labels_[k] == kBlank) {
      EXPECT_FALSE(bp.replace_mask[k]);
      EXPECT_EQ(bp.a.value().row(r), o_.value().row(r));
    } else {
      EXPECT_TRUE(bp.replace_mask[k]);
      EXPECT_EQ(bp.a.value().row(r), table_.value().row(labels_[k]));
    }
  }
}

TEST_F(CopyReplaceTest, MaskLaws) {
  for (double p : {0.1, 0.5, 0.9}) {
    const BranchPair<double> bp = copy_replace(o_, labels_, table_, kBlank, p, rng_);
    for (std::size_t k = 0; k < labels_.size(); ++k) {
      const Index r = static_cast<Index>(k);
      if (labels_[k] == kBlank) {
        EXPECT_FALSE(bp.replace_mask[k]);
      }
      if (bp.replace_mask[k]) {
        EXPECT_EQ(bp.a.value().row(r), table_.value().row(labels_[k]));
      } else {
        EXPECT_EQ(bp.a.value().row(r), o_.value().row(r));
      }
    }
  }
}

TEST_F(CopyReplaceTest, ProbabilityOutsideUnitIntervalIsAnError) {
  EXPECT_THROW(copy_replace(o_, labels_, table_, kBlank, 1.5, rng_), std::invalid_argument);
  EXPECT_THROW(copy_replace(o_, labels_, table_, kBlank, -0.1, rng_), std::invalid_argument);
}

TEST(CopyReplace, ReplacementFractionWithinBinomialInterval) {
  const int n = 10000;
  Graph<double> g;
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % 2;  // no blanks
  Var<double> o = g.constant(M::Zero(n, 2));
  Var<double> table = g.constant(M::Ones(2, 2));
  Rng rng = make_rng(8, 0);
  const BranchPair<double> bp = copy_replace(o, labels, table, kBlank, 0.5, rng);
  const double frac = static_cast<double>(bp.replaced()) / n;
  const double half_width = 2.5758293035489004 * std::sqrt(0.25 / n);
  EXPECT_NEAR(frac, 0.5, half_width);
}

TEST(CopyReplace, GradientSkipsReplacedRowsOfTheCopy) {
  ParamSet<double> ps(1);
  ps.add("o", M::Ones(3, 2));
  ps.add("table", M::Ones(2, 2));
  Graph<double> g;
  Rng rng = make_rng(1, 0);
  const BranchPair<double> bp = copy_replace(g.param(ps.at("o")), {kC, kBlank, kD}, g.param(ps.at("table")), kBlank,
                                             1.0, rng);
  ps.zero_grad();
  g.backward(ops::sum(bp.a));
  EXPECT_EQ(ps.at("o").grad.row(0).sum(), 0.0);
  EXPECT_EQ(ps.at("o").grad.row(1).sum(), 2.0);
  EXPECT_EQ(ps.at("o").grad.row(2).sum(), 0.0);
  EXPECT_EQ(ps.at("table").grad.sum(), 4.0);
}

TEST(ResolvePStar, DynamicScalesUncertainty) {
  ReplacePolicy dyn;
  EXPECT_DOUBLE_EQ(resolve_p_star(dyn, 0.6), 0.3);
  EXPECT_DOUBLE_EQ(resolve_p_star(dyn, 0.0), 0.0);
  dyn.gamma = 3.0;
  EXPECT_DOUBLE_EQ(resolve_p_star(dyn, 0.5), 1.0);
  EXPECT_THROW(resolve_p_star(ReplacePolicy{}, std::nullopt), std::invalid_argument);
  EXPECT_THROW(resolve_p_star(ReplacePolicy{}, 1.2), std::invalid_argument);
}

TEST(ResolvePStar, FixedIgnoresUncertainty) {
  ReplacePolicy fixed{ReplaceMode::fixed, 0.2, 0.5};
  EXPECT_DOUBLE_EQ(resolve_p_star(fixed, 0.9), 0.2);
  EXPECT_DOUBLE_EQ(resolve_p_star(fixed, std::nullopt), 0.2);
}

}  // namespace
}  // namespace tab
