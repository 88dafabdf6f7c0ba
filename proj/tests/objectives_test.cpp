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
#include <vector>

#include "tab/evalcli/checks.hpp"
#include "tab/objectives/objectives.hpp"

namespace tab {
namespace {

using M = Tensor2D<double>;

const std::vector<DivergenceKind> kKinds = {DivergenceKind::jsd, DivergenceKind::kl_orig_to_aux,
                                            DivergenceKind::kl_aux_to_orig, DivergenceKind::bi_kl};

M log_rows(std::initializer_list<std::initializer_list<double>> rows) {
  M m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index r = 0;
  for (const auto& row : rows) {
    Index c = 0;
    for (double p : row) m(r, c++) = std::log(p);
    ++r;
  }
  return m;
}

std::vector<double> random_simplex(Rng& rng, int v) {
  std::vector<double> p(static_cast<std::size_t>(v));
  double s = 0.0;
  for (auto& x : p) s += (x = std::exp(normal(rng, 0.0, 1.5)));
  for (auto& x : p) x /= s;
  return p;
}

TEST(CrossEntropy, CertainPredictionsGiveZero) {
  Graph<double> g;
  Var<double> lp = g.constant(log_rows({{1.0, 1e-300}, {1e-300, 1.0}}));
  EXPECT_NEAR(ce_label_smoothed(lp, {0, 1}, 0.0).scalar(), 0.0, 1e-12);
}

TEST(CrossEntropy, HalfProbabilityGivesLogTwo) {
  Graph<double> g;
  Var<double> lp = g.constant(log_rows({{0.5, 0.5}}));
  EXPECT_NEAR(ce_label_smoothed(lp, {1}, 0.0).scalar(), std::log(2.0), 1e-12);
}

TEST(CrossEntropy, UniformPredictionsGiveLogVForAnySmoothing) {
  Graph<double> g;
  Var<double> lp = g.constant(M::Constant(3, 5, -std::log(5.0)));
  for (double eps : {0.0, 0.1, 0.5, 0.9}) EXPECT_NEAR(ce_label_smoothed(lp, {0, 2, 4}, eps).scalar(), std::log(5.0), 1e-12);
}

TEST(CrossEntropy, MaskedRowsAreIgnored) {
  Graph<double> g;
  Var<double> lp = g.constant(log_rows({{0.5, 0.5}, {0.01, 0.99}}));
  const std::vector<bool> mask = {true, false};
  EXPECT_NEAR(ce_label_smoothed(lp, {0, 0}, 0.0, &mask).scalar(), std::log(2.0), 1e-12);
}

TEST(CrossEntropy, InvalidInputsAreErrors) {
  Graph<double> g;
  Var<double> lp = g.constant(log_rows({{0.5, 0.5}}));
  EXPECT_THROW(ce_label_smoothed(lp, {2}, 0.1), std::out_of_range);
  EXPECT_THROW(ce_label_smoothed(lp, {0, 1}, 0.1), ShapeError);
  EXPECT_THROW(ce_label_smoothed(lp, {0}, 1.0), std::invalid_argument);
}

TEST(Divergence, IdenticalDistributionsGiveZero) {
  const std::vector<double> p = {0.2, 0.3, 0.5};
  for (auto k : kKinds) EXPECT_NEAR(divergence(p, p, k), 0.0, 1e-15);
}

TEST(Divergence, TwoWordHandComputation) {
  const std::vector<double> p = {0.9, 0.1};
  const std::vector<double> q = {0.6, 0.4};
  const double kl_pq = 0.9 * std::log(0.9 / 0.6) + 0.1 * std::log(0.1 / 0.4);
  const double kl_qp = 0.6 * std::log(0.6 / 0.9) + 0.4 * std::log(0.4 / 0.1);
  EXPECT_NEAR(divergence(p, q, DivergenceKind::kl_orig_to_aux), 0.22628916118535888, 1e-12);
  EXPECT_NEAR(divergence(p, q, DivergenceKind::kl_aux_to_orig), 0.31123867958305756, 1e-12);
  EXPECT_NEAR(divergence(p, q, DivergenceKind::bi_kl), 0.2687639203842082, 1e-12);
  EXPECT_NEAR(divergence(p, q, DivergenceKind::bi_kl), 0.5 * (kl_pq + kl_qp), 1e-12);
  EXPECT_NEAR(divergence(p, q, DivergenceKind::jsd), 0.063287824418456, 1e-12);
}

TEST(Divergence, JsdBoundedByLogTwo) {
  const std::vector<double> p = {1.0, 0.0};
  const std::vector<double> q = {0.0, 1.0};
  EXPECT_NEAR(divergence(p, q, DivergenceKind::jsd), std::log(2.0), 1e-12);
  const std::vector<double> a = {1.0 - 1e-9, 1e-9};
  const std::vector<double> b = {1e-9, 1.0 - 1e-9};
  EXPECT_LT(divergence(a, b, DivergenceKind::jsd), std::log(2.0));
}

TEST(Divergence, NonNegativityAndSymmetryLaws) {
  Rng rng = make_rng(12, 0);
  for (int trial = 0; trial < 500; ++trial) {
    const int v = static_cast<int>(uniform_int(rng, 2, 8));
    const auto p = random_simplex(rng, v);
    const auto q = random_simplex(rng, v);
    for (auto k : kKinds) EXPECT_GE(divergence(p, q, k), 0.0);
    EXPECT_NEAR(divergence(p, q, DivergenceKind::jsd), divergence(q, p, DivergenceKind::jsd), 1e-12);
    EXPECT_NEAR(divergence(p, q, DivergenceKind::bi_kl), divergence(q, p, DivergenceKind::bi_kl), 1e-12);
    EXPECT_NEAR(divergence(p, q, DivergenceKind::kl_orig_to_aux), divergence(q, p, DivergenceKind::kl_aux_to_orig),
                1e-12);
    EXPECT_LE(divergence(p, q, DivergenceKind::jsd), std::log(2.0) + 1e-12);
  }
}

TEST(Divergence, UnnormalizedInputIsAnError) {
  const std::vector<double> p = {0.5, 0.6};
  const std::vector<double> q = {0.5, 0.5};
  EXPECT_THROW(divergence(p, q, DivergenceKind::bi_kl), std::invalid_argument);
}

TEST(ConsistencyLoss, IdenticalBranchesGiveZero) {
  Graph<double> g;
  Var<double> lp = g.constant(log_rows({{0.2, 0.8}, {0.6, 0.4}}));
  for (auto k : kKinds) EXPECT_NEAR(consistency_loss(lp, lp, k)->scalar(), 0.0, 1e-15);
}

TEST(ConsistencyLoss, NoneRecordsNothing) {
  Graph<double> g;
  Var<double> lp = g.constant(log_rows({{0.2, 0.8}}));
  const std::size_t before = g.size();
  EXPECT_FALSE(consistency_loss(lp, lp, DivergenceKind::none).has_value());
  EXPECT_EQ(g.size(), before);
}

TEST(ConsistencyLoss, SinglePositionMatchesDivergence) {
  Graph<double> g;
  const std::vector<double> p = {0.9, 0.1};
  const std::vector<double> q = {0.6, 0.4};
  Var<double> lp = g.constant(log_rows({{0.9, 0.1}}));
  Var<double> lq = g.constant(log_rows({{0.6, 0.4}}));
  for (auto k : kKinds) EXPECT_NEAR(consistency_loss(lp, lq, k)->scalar(), divergence(p, q, k), 1e-12);
}

TEST(ConsistencyLoss, StopFlowsBlockOneSide) {
  Rng rng = make_rng(2, 0);
  ParamSet<double> ps(2);
  ps.add("p", random_matrix(rng, 2, 3));
  ps.add("q", random_matrix(rng, 2, 3));
  for (auto flow : {ConsistencyFlow::stop_orig, ConsistencyFlow::stop_aux}) {
    Graph<double> g;
    auto loss = consistency_loss(ops::log_softmax(g.param(ps.at("p"))), ops::log_softmax(g.param(ps.at("q"))),
                                 DivergenceKind::bi_kl, nullptr, flow);
    ps.zero_grad();
    g.backward(*loss);
    const bool orig_stopped = flow == ConsistencyFlow::stop_orig;
    EXPECT_EQ(ps.at("p").grad.isZero(), orig_stopped);
    EXPECT_EQ(ps.at("q").grad.isZero(), !orig_stopped);
  }
}

TEST(ConsistencyLoss, GradCheckEveryKind) {
  for (const auto& c : run_grad_checks(3)) {
    if (c.name.rfind("consistency_", 0) == 0 || c.name == "ce_label_smoothed") {
      EXPECT_TRUE(c.report.passed) << c.name << '\n' << c.report;
    }
  }
}

TEST(NormalizedEntropy, UniformRowsGiveOne) {
  EXPECT_NEAR(normalized_entropy(M(M::Constant(4, 6, -std::log(6.0))), 6), 1.0, 1e-12);
}

TEST(NormalizedEntropy, OneHotRowsGiveZero) {
  EXPECT_NEAR(normalized_entropy(log_rows({{1.0, 1e-300, 1e-300}, {1e-300, 1e-300, 1.0}}), 3), 0.0, 1e-12);
}

TEST(NormalizedEntropy, TwoWordClosedForm) {
  const M lp = log_rows({{0.75, 0.25}, {0.75, 0.25}, {0.25, 0.75}});
  EXPECT_NEAR(normalized_entropy(lp, 2), 0.8112781244591328, 1e-12);
}

TEST(NormalizedEntropy, BoundedOnRandomRows) {
  Rng rng = make_rng(4, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const double u = normalized_entropy(ops::detail::log_softmax_rows(random_matrix(rng, 5, 7, 3.0)), 7);
    EXPECT_GE(u, 0.0);
    EXPECT_LE(u, 1.0);
  }
  EXPECT_THROW(normalized_entropy(M(M::Zero(1, 1)), 1), std::invalid_argument);
}

TEST(GoldTokenUncertainty, CertainGoldGivesZero) {
  EXPECT_NEAR(gold_token_uncertainty(log_rows({{1.0, 1e-300}}), {0}, 2), 0.0, 1e-12);
}

TEST(TotalLoss, Arithmetic) {
  const LossBreakdown b = total_loss(1.0, 1.0, 2.0, 0.5, 0.3, 1.0);
  EXPECT_NEAR(b.total, 3.1, 1e-12);
  EXPECT_EQ(total_loss(1.0, 1.0, 2.0, 0.5, 0.3, 0.0).total, total_loss(1.0, 1.0, 2.0, 9.0, 0.3, 0.0).total);
  EXPECT_THROW(total_loss(1.0, 1.0, 2.0, 0.5, -0.3, 1.0), std::invalid_argument);
}

TEST(TotalLoss, GraphFormMatchesScalarForm) {
  Graph<double> g;
  auto c = [&](double v) { return g.constant(M::Constant(1, 1, v)); };
  std::optional<Var<double>> ce_a = c(1.25), ctc = c(2.0), cons = c(0.5);
  EXPECT_NEAR(total_loss<double>(c(0.75), ce_a, ctc, cons, 0.3, 5.0).scalar(),
              total_loss(0.75, 1.25, 2.0, 0.5, 0.3, 5.0).total, 1e-15);
  EXPECT_NEAR(total_loss<double>(c(0.75), std::nullopt, std::nullopt, std::nullopt, 0.3, 5.0).scalar(), 0.75, 1e-15);
}

}  // namespace
}  // namespace tab
