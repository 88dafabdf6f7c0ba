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
#include <limits>

#include "tab/ctc/ctc.hpp"
#include "tab/ctc/ctc_oracle.hpp"
#include "tab/evalcli/checks.hpp"

namespace tab {
namespace {

using M = Tensor2D<double>;

constexpr int kA = 0;
constexpr int kB = 1;
constexpr int kBlank = 2;

M log_probs(std::initializer_list<std::initializer_list<double>> rows) {
  M m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index r = 0;
  for (const auto& row : rows) {
    Index c = 0;
    for (double p : row) m(r, c++) = std::log(p);
    ++r;
  }
  return m;
}

TEST(CtcLoss, CertainSingleFrameIsZero) {
  const M lp = log_probs({{1.0, 1e-300, 1e-300}});
  EXPECT_NEAR(ctc_loss(lp, {kA}, kBlank), 0.0, 1e-12);
}

TEST(CtcLoss, TwoFramesUniformMatchesHandCount) {
  // Paths (a,a), (a,blank), (blank,a) out of four, each 1/4.
  const M lp = log_probs({{0.5, 0.5}, {0.5, 0.5}});
  EXPECT_NEAR(ctc_loss(lp, {0}, 1), 0.2876820724517809, 1e-12);
}

TEST(CtcLoss, RepeatedLabelNeedsSeparatingBlank) {
  EXPECT_EQ(ctc_min_frames({kA, kA}), 3);
  EXPECT_EQ(ctc_min_frames({kA, kB}), 2);
  const M two = log_probs({{0.4, 0.3, 0.3}, {0.4, 0.3, 0.3}});
  EXPECT_THROW(ctc_loss(two, {kA, kA}, kBlank), CtcInfeasible);
  const M three = log_probs({{0.4, 0.3, 0.3}, {0.4, 0.3, 0.3}, {0.4, 0.3, 0.3}});
  // Only a,blank,a collapses to [a,a].
  EXPECT_NEAR(ctc_loss(three, {kA, kA}, kBlank), -std::log(0.4 * 0.3 * 0.4), 1e-12);
}

TEST(CtcLoss, RejectsBlankInTargetAndOutOfRangeIds) {
  const M lp = log_probs({{0.4, 0.3, 0.3}, {0.4, 0.3, 0.3}});
  EXPECT_THROW(ctc_loss(lp, {kBlank}, kBlank), std::invalid_argument);
  EXPECT_THROW(ctc_loss(lp, {7}, kBlank), std::out_of_range);
}

TEST(CtcLoss, MatchesOracleOnRandomInstances) {
  const OracleCheckSummary s = ctc_oracle_check(250, 11);
  EXPECT_EQ(s.instances, 250);
  EXPECT_EQ(s.failures, 0);
  EXPECT_LT(s.max_abs_error, 1e-6);
}

TEST(CtcLoss, GradientIsNegativeOccupancy) {
  Rng rng = make_rng(5, 0);
  const M lp = ops::detail::log_softmax_rows(random_matrix(rng, 5, 3));
  const CtcResult<double> r = ctc_forward_backward(lp, {kA, kB}, kBlank);
  // Occupancies of each frame sum to one.
  for (Index t = 0; t < lp.rows(); ++t) EXPECT_NEAR(-r.grad.row(t).sum(), 1.0, 1e-9);
  EXPECT_LE(r.grad.maxCoeff(), 0.0);
}

TEST(CtcLoss, GradCheckFourFramesTwoLabels) {
  Rng rng = make_rng(9, 0);
  ParamSet<double> ps(9);
  ps.add("logits", random_matrix(rng, 4, 3));
  auto build = [&](Graph<double>& g) { return ctc_loss(ops::log_softmax(g.param(ps.at("logits"))), {kA, kB}, kBlank); };
  const GradCheckReport r = grad_check<double>(build, ps, 1e-5, 1e-4);
  EXPECT_TRUE(r.passed) << r;
}

TEST(CtcOracle, UnreachableTargetIsInfeasible) {
  const M lp = log_probs({{0.5, 0.25, 0.25}});
  const OracleResult r = ctc_loss_oracle(lp, {kA, kB}, kBlank);
  EXPECT_FALSE(r.feasible);
  EXPECT_EQ(r.loss, std::numeric_limits<double>::infinity());
}

TEST(CtcOracle, SingleFrameSinglePath) {
  const M lp = log_probs({{0.5, 0.5}});
  const OracleResult r = ctc_loss_oracle(lp, {0}, 1);
  EXPECT_EQ(r.paths, 1u);
  EXPECT_NEAR(r.loss, -std::log(0.5), 1e-12);
}

TEST(CtcOracle, RefusesLargeInstances) {
  EXPECT_THROW(ctc_loss_oracle(M(M::Zero(9, 3)), {0}, 2), std::invalid_argument);
  EXPECT_THROW(ctc_loss_oracle(M(M::Zero(3, 6)), {0}, 5), std::invalid_argument);
}

TEST(GreedyPath, PeakedRowsGivePeakLabels) {
  const M lp = log_probs({{0.8, 0.1, 0.1}, {0.1, 0.1, 0.8}, {0.1, 0.8, 0.1}});
  EXPECT_EQ(greedy_path(lp).labels, (std::vector<int>{kA, kBlank, kB}));
}

TEST(GreedyPath, TieGoesToSmallerId) {
  const M lp = log_probs({{0.2, 0.4, 0.4}});
  EXPECT_EQ(greedy_path(lp).labels, (std::vector<int>{kB}));
}

TEST(GreedyPath, RunsGroupConsecutiveLabels) {
  const int c = 0, d = 1, blank = 2;
  const std::vector<tab::Run> runs = runs_of({c, c, blank, d});
  ASSERT_EQ(runs.size(), 3u);
  EXPECT_EQ(runs[0], (tab::Run{c, 0, 1}));
  EXPECT_EQ(runs[1], (tab::Run{blank, 2, 2}));
  EXPECT_EQ(runs[2], (tab::Run{d, 3, 3}));
}

TEST(Collapse, MergesRepeatsThenDropsBlanks) {
  EXPECT_EQ(collapse_beta({kA, kA, kBlank, kB, kB}, kBlank), (std::vector<int>{kA, kB}));
  EXPECT_TRUE(collapse_beta({kBlank, kBlank}, kBlank).empty());
  EXPECT_EQ(collapse_beta({kA, kBlank, kA}, kBlank), (std::vector<int>{kA, kA}));
}

TEST(CtcHead, ZeroWeightsGiveUniformRows) {
  Graph<double> g;
  Var<double> lp = ctc_project(g.constant(M::Ones(3, 4)), g.constant(M::Zero(4, 5)), g.constant(M::Zero(1, 5)));
  for (Index i = 0; i < lp.value().size(); ++i) EXPECT_NEAR(lp.value().data()[i], std::log(1.0 / 5.0), 1e-12);
}

}  // namespace
}  // namespace tab
