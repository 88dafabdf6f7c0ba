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

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tab/ctc/ctc_oracle.hpp"
#include "tab/diffcore/grad_check.hpp"
#include "tab/model/tab_forward.hpp"
#include "tab/synthdata/corpus.hpp"

// Self-checks shared by the command line and the test suites.
namespace tab {

struct OracleCheckSummary {
  int instances = 0;
  int failures = 0;
  double max_abs_error = 0.0;
  bool passed() const { return instances > 0 && failures == 0; }
};

// Random feasible CTC instances (T <= max_frames, 1 <= |x| <= max_label_len,
// |V+| <= max_vocab) scored by the forward-backward recursion and by path
// enumeration.
inline OracleCheckSummary ctc_oracle_check(int instances, std::uint64_t seed, double tol = 1e-6, int max_frames = 6,
                                           int max_label_len = 3, int max_vocab = 4) {
  OracleCheckSummary s;
  Rng rng = make_rng(seed, 41);
  while (s.instances < instances) {
    const int v = static_cast<int>(uniform_int(rng, 2, max_vocab));
    const int blank = v - 1;
    const int frames = static_cast<int>(uniform_int(rng, 1, max_frames));
    const int len = static_cast<int>(uniform_int(rng, 1, max_label_len));
    std::vector<int> x(static_cast<std::size_t>(len));
    for (auto& id : x) id = static_cast<int>(uniform_int(rng, 0, v - 2));
    if (ctc_min_frames(x) > frames) continue;
    Tensor2D<double> logits(frames, v);
    for (Index i = 0; i < logits.size(); ++i) logits.data()[i] = normal(rng, 0.0, 2.0);
    const Tensor2D<double> logp = ops::detail::log_softmax_rows(logits);
    const double fb = ctc_loss(logp, x, blank);
    const OracleResult oracle = ctc_loss_oracle(logp, x, blank);
    const double err = std::abs(fb - oracle.loss);
    s.max_abs_error = std::max(s.max_abs_error, err);
    if (!(err < tol) || !oracle.feasible) ++s.failures;
    ++s.instances;
  }
  return s;
}

struct NamedGradCheck {
  std::string name;
  GradCheckReport report;
};

inline Tensor2D<double> random_matrix(Rng& rng, Index r, Index c, double sd = 1.0) {
  Tensor2D<double> m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng, 0.0, sd);
  return m;
}

// Tiny model used for the composite gradient check.
inline ModelConfig grad_check_model_config() {
  ModelConfig c;
  c.d_feat = 4;
  c.d_model = 8;
  c.speech_layers = 1;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.heads = 2;
  c.ffn_dim = 16;
  c.downsample = 4;
  c.n_source = 4;
  c.target_size = 7;
  return c;
}

// Two-utterance batch matching grad_check_model_config().
inline Batch grad_check_batch(std::uint64_t seed) {
  CorpusConfig cc;
  cc.n_asr = 1;
  cc.n_mt = 1;
  cc.n_st_train = 2;
  cc.n_dev = 1;
  cc.n_test = 1;
  cc.min_len = 2;
  cc.max_len = 3;
  cc.n_source = 4;
  cc.n_target = 4;
  cc.speech.d_feat = 4;
  const CorpusBundle b = build_corpus(cc, seed);
  return make_batch(b.st_train, {0, 1});
}

// Gradient checks in double precision: label-smoothed CE, every consistency
// divergence, CTC, and the full TAB objective of a tiny model without
// dropout.
inline std::vector<NamedGradCheck> run_grad_checks(std::uint64_t seed, double eps = 1e-5, double tol = 1e-4) {
  std::vector<NamedGradCheck> out;
  Rng rng = make_rng(seed, 42);
  GradCheckOptions opts;

  {
    ParamSet<double> ps(seed);
    ps.add("logits", random_matrix(rng, 5, 7));
    const std::vector<int> y = {0, 3, 6, 2, 2};
    const std::vector<bool> mask = {true, true, false, true, true};
    auto build = [&](Graph<double>& g) {
      return ce_label_smoothed(ops::log_softmax(g.param(ps.at("logits"))), y, 0.1, &mask);
    };
    out.push_back({"ce_label_smoothed", grad_check<double>(build, ps, eps, tol, opts)});
  }
  for (DivergenceKind kind : {DivergenceKind::jsd, DivergenceKind::kl_orig_to_aux, DivergenceKind::kl_aux_to_orig,
                              DivergenceKind::bi_kl}) {
    ParamSet<double> ps(seed);
    ps.add("orig", random_matrix(rng, 4, 6));
    ps.add("aux", random_matrix(rng, 4, 6));
    auto build = [&](Graph<double>& g) {
      return *consistency_loss(ops::log_softmax(g.param(ps.at("orig"))), ops::log_softmax(g.param(ps.at("aux"))),
                               kind);
    };
    out.push_back({"consistency_" + std::string(to_string(kind)), grad_check<double>(build, ps, eps, tol, opts)});
  }
  {
    ParamSet<double> ps(seed);
    ps.add("logits", random_matrix(rng, 7, 4));
    const std::vector<int> x = {0, 1, 1};
    auto build = [&](Graph<double>& g) { return ctc_loss(ops::log_softmax(g.param(ps.at("logits"))), x, 3); };
    out.push_back({"ctc", grad_check<double>(build, ps, eps, tol, opts)});
  }
  {
    StModel<double> m = make_model<double>(grad_check_model_config(), seed);
    const Batch batch = grad_check_batch(seed);
    TabOptions opt;
    opt.dropout = false;
    auto build = [&](Graph<double>& g) { return forward_tab(g, m, batch, opt, seed).total; };
    out.push_back({"forward_tab", grad_check<double>(build, m.params, eps, tol, opts)});
  }
  return out;
}

}  // namespace tab
