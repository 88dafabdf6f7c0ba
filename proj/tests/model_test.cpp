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

#include "tab/evalcli/checks.hpp"
#include "tab/model/st_model.hpp"
#include "tab/model/tab_forward.hpp"

namespace tab {
namespace {

using M = Tensor2D<double>;

StModel<double> tiny_model(std::uint64_t seed = 1) { return make_model<double>(grad_check_model_config(), seed); }

TabOptions eval_options() {
  TabOptions opt;
  opt.dropout = false;
  return opt;
}

TEST(SpeechEncoder, DownsamplesByFour) {
  StModel<double> m = tiny_model();
  Graph<double> g;
  const Var<double> h = encode_speech(g, m, Tensor2D<float>::Ones(8, 4), ForwardContext{});
  EXPECT_EQ(h.rows(), 2);
  EXPECT_EQ(h.cols(), 8);
  const Var<double> h9 = encode_speech(g, m, Tensor2D<float>::Ones(9, 4), ForwardContext{});
  EXPECT_EQ(h9.rows(), 3);
  EXPECT_THROW(encode_speech(g, m, Tensor2D<float>::Ones(3, 4), ForwardContext{}), std::invalid_argument);
  EXPECT_THROW(encode_speech(g, m, Tensor2D<float>::Ones(8, 5), ForwardContext{}), ShapeError);
}

TEST(Model, InitializationIsSeedDeterministic) {
  const StModel<double> a = tiny_model(3);
  const StModel<double> b = tiny_model(3);
  const StModel<double> c = tiny_model(4);
  ASSERT_EQ(a.params.names(), b.params.names());
  bool any_diff = false;
  for (const auto& [name, p] : a.params) {
    EXPECT_EQ(p.value, b.params.at(name).value) << name;
    any_diff = any_diff || p.value != c.params.at(name).value;
  }
  EXPECT_TRUE(any_diff);
}

TEST(Model, ParameterGroupsPartitionTheModel) {
  const StModel<double> m = tiny_model();
  std::size_t total = 0;
  for (ParamGroup gr : {ParamGroup::speech, ParamGroup::ctc, ParamGroup::shared}) {
    total += extract_group(m.params, {gr}).size();
  }
  EXPECT_EQ(total, m.params.size());
  EXPECT_TRUE(m.params.contains("shared.src_embed"));
}

TEST(Decoder, RowsAreLogDistributions) {
  StModel<double> m = tiny_model();
  Graph<double> g;
  const Var<double> mem = encode_shared(g, m, embed_source(g, m, {0, 1, 2}), ForwardContext{});
  const Var<double> lp = decode(g, m, {ExtendedVocab::kBos, 3, 4}, mem, ForwardContext{});
  ASSERT_EQ(lp.rows(), 3);
  ASSERT_EQ(lp.cols(), 7);
  EXPECT_TRUE(all_finite(lp.value()));
  for (Index r = 0; r < lp.rows(); ++r) EXPECT_NEAR(std::log(lp.value().row(r).array().exp().sum()), 0.0, 1e-12);
}

TEST(Decoder, IsCausal) {
  StModel<double> m = tiny_model();
  Graph<double> g;
  const Var<double> mem = encode_shared(g, m, embed_source(g, m, {0, 1}), ForwardContext{});
  const Var<double> a = decode(g, m, {ExtendedVocab::kBos, 3, 4, 5}, mem, ForwardContext{});
  const Var<double> b = decode(g, m, {ExtendedVocab::kBos, 3, 6, 6}, mem, ForwardContext{});
  EXPECT_LT((a.value().topRows(2) - b.value().topRows(2)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GT((a.value().row(2) - b.value().row(2)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Decoder, InputAndTargetFraming) {
  EXPECT_EQ(decoder_input({5, 6}), (std::vector<int>{ExtendedVocab::kBos, 5, 6}));
  EXPECT_EQ(decoder_target({5, 6}), (std::vector<int>{5, 6, ExtendedVocab::kEos}));
}

TEST(Transfer, CopiesEveryTensorFromTheRightStage) {
  const StModel<double> asr = tiny_model(5);
  const StModel<double> mt = tiny_model(6);
  TransferReport rep;
  const StModel<double> st =
      init_from_pretrained(grad_check_model_config(), extract_group(asr.params, {ParamGroup::speech, ParamGroup::ctc}),
                           extract_group(mt.params, {ParamGroup::shared}), &rep);
  EXPECT_EQ(rep.tensors.size(), st.params.size());
  EXPECT_EQ(rep.from_mt, extract_group(mt.params, {ParamGroup::shared}).size());
  EXPECT_EQ(rep.from_asr + rep.from_mt, st.params.size());
  EXPECT_EQ(st.params.at("ctc.w").value, asr.params.at("ctc.w").value);
  EXPECT_EQ(st.params.at("shared.src_embed").value, mt.params.at("shared.src_embed").value);
}

TEST(Transfer, MissingTensorIsNamed) {
  const StModel<double> m = tiny_model();
  const ParamSet<double> no_shared = extract_group(m.params, {ParamGroup::speech, ParamGroup::ctc});
  try {
    init_from_pretrained(grad_check_model_config(), no_shared, no_shared);
    FAIL() << "expected TransferError";
  } catch (const TransferError& e) {
    EXPECT_NE(std::string(e.what()).find("shared."), std::string::npos);
  }
}

TEST(ForwardTab, OutputsAreFiniteAndComposed) {
  StModel<double> m = tiny_model();
  const Batch batch = grad_check_batch(2);
  Graph<double> g;
  const TabOutput<double> out = forward_tab(g, m, batch, eval_options(), 9);
  const LossBreakdown& b = out.breakdown;
  EXPECT_TRUE(std::isfinite(out.total.scalar()));
  EXPECT_NEAR(b.total, b.ce_o + b.ce_a + 0.3 * b.ctc + 1.0 * b.cons, 1e-12);
  EXPECT_NEAR(out.total.scalar(), b.total, 1e-12);
  EXPECT_GE(out.upsilon, 0.0);
  EXPECT_LE(out.upsilon, 1.0);
  EXPECT_DOUBLE_EQ(out.p_star, std::clamp(0.5 * out.upsilon, 0.0, 1.0));
  EXPECT_EQ(out.used.size(), 2u);
}

TEST(ForwardTab, ZeroReplacementWithoutDropoutMakesBranchesIdentical) {
  StModel<double> m = tiny_model();
  const Batch batch = grad_check_batch(2);
  TabOptions opt = eval_options();
  opt.policy = ReplacePolicy{ReplaceMode::fixed, 0.0, 0.5};
  Graph<double> g;
  const TabOutput<double> out = forward_tab(g, m, batch, opt, 9);
  ASSERT_EQ(out.logp_orig.size(), out.logp_aux.size());
  for (std::size_t i = 0; i < out.logp_orig.size(); ++i) EXPECT_EQ(out.logp_orig[i].value(), out.logp_aux[i].value());
  EXPECT_EQ(out.breakdown.cons, 0.0);
  EXPECT_EQ(out.breakdown.ce_o, out.breakdown.ce_a);
  EXPECT_EQ(out.replaced, 0u);
}

TEST(ForwardTab, ZeroAlphaIgnoresTheDivergence) {
  const Batch batch = grad_check_batch(2);
  std::vector<std::map<std::string, M>> grads;
  for (DivergenceKind kind : {DivergenceKind::bi_kl, DivergenceKind::jsd, DivergenceKind::none}) {
    StModel<double> m = tiny_model();
    TabOptions opt = eval_options();
    opt.alpha = 0.0;
    opt.divergence = kind;
    Graph<double> g;
    const TabOutput<double> out = forward_tab(g, m, batch, opt, 9);
    m.params.zero_grad();
    g.backward(out.total);
    std::map<std::string, M> gr;
    for (const auto& [name, p] : m.params) gr[name] = p.grad;
    grads.push_back(std::move(gr));
  }
  EXPECT_EQ(grads[0], grads[1]);
  EXPECT_EQ(grads[0], grads[2]);
}

TEST(ForwardTab, SingleBranchHasNoAuxiliaryTerms) {
  StModel<double> m = tiny_model();
  TabOptions opt = eval_options();
  opt.single_branch = true;
  Graph<double> g;
  const TabOutput<double> out = forward_tab(g, m, grad_check_batch(2), opt, 9);
  EXPECT_TRUE(out.logp_aux.empty());
  EXPECT_EQ(out.breakdown.ce_a, 0.0);
  EXPECT_EQ(out.breakdown.cons, 0.0);
  EXPECT_EQ(out.p_star, 0.0);
  EXPECT_NEAR(out.total.scalar(), out.breakdown.ce_o + 0.3 * out.breakdown.ctc, 1e-12);
}

TEST(ForwardTab, PaddingDoesNotChangeTheLoss) {
  CorpusConfig cc;
  cc.n_asr = 1;
  cc.n_mt = 1;
  cc.n_st_train = 3;
  cc.n_dev = 1;
  cc.n_test = 1;
  cc.min_len = 2;
  cc.max_len = 3;
  cc.n_source = 4;
  cc.n_target = 4;
  cc.speech.d_feat = 4;
  const CorpusBundle corpus = build_corpus(cc, 3);
  StModel<double> m = tiny_model();
  Graph<double> g;
  const double plain = forward_tab(g, m, make_batch(corpus.st_train, {0, 1, 2}), eval_options(), 4).total.scalar();
  const double padded = forward_tab(g, m, make_batch(corpus.st_train, {0, 1, 2}, 5), eval_options(), 4).total.scalar();
  EXPECT_EQ(plain, padded);
}

TEST(ForwardTab, SameSeedSameLossWithDropout) {
  const Batch batch = grad_check_batch(2);
  TabOptions opt;
  StModel<double> m = tiny_model();
  Graph<double> g1, g2, g3;
  const double a = forward_tab(g1, m, batch, opt, 17).total.scalar();
  const double b = forward_tab(g2, m, batch, opt, 17).total.scalar();
  const double c = forward_tab(g3, m, batch, opt, 18).total.scalar();
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(ForwardTab, GradCheckTinyModel) {
  for (const auto& c : run_grad_checks(5)) {
    if (c.name == "forward_tab") {
      EXPECT_TRUE(c.report.passed) << c.report;
    }
  }
}

TEST(Upsilon, SmoothingTracksRunningValue) {
  UpsilonTracker t;
  EXPECT_DOUBLE_EQ(t.update(0.8, 0.9), 0.8);
  EXPECT_DOUBLE_EQ(t.update(0.0, 0.9), 0.72);
  UpsilonTracker raw;
  raw.update(0.8, 0.0);
  EXPECT_DOUBLE_EQ(raw.update(0.1, 0.0), 0.1);
}

}  // namespace
}  // namespace tab
