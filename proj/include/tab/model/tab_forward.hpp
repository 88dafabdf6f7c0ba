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

#include <optional>
#include <vector>

#include "tab/branch/branch.hpp"
#include "tab/ctc/ctc.hpp"
#include "tab/model/st_model.hpp"
#include "tab/objectives/objectives.hpp"
#include "tab/synthdata/corpus.hpp"

namespace tab {

struct TabOptions {
  double lambda = 0.3;
  double alpha = 1.0;
  double label_smoothing = 0.1;
  DivergenceKind divergence = DivergenceKind::bi_kl;
  ConsistencyFlow flow = ConsistencyFlow::both;
  ReplacePolicy policy;
  // Baseline mode: original branch only, no auxiliary CE or consistency.
  bool single_branch = false;
  // Use the gold-token uncertainty reading instead of the full entropy.
  bool gold_token_uncertainty = false;
  // Exponential smoothing of the uncertainty across steps; 0 uses the raw
  // same-step value.
  double upsilon_smoothing = 0.0;
  bool dropout = true;
};

// Running uncertainty state carried across training steps.
struct UpsilonTracker {
  std::optional<double> value;

  double update(double raw, double smoothing) {
    value = value.has_value() ? smoothing * *value + (1.0 - smoothing) * raw : raw;
    return *value;
  }
};

// RNG substreams consumed by one step. Each is derived from the step seed,
// so the two branch passes never share dropout masks.
struct TabStreams {
  Rng speech;
  Rng original;
  Rng auxiliary;
  Rng replace;

  explicit TabStreams(std::uint64_t step_seed)
      : speech(make_rng(step_seed, 11)),
        original(make_rng(step_seed, 12)),
        auxiliary(make_rng(step_seed, 13)),
        replace(make_rng(step_seed, 14)) {}
};

template <typename T>
struct TabOutput {
  Var<T> total;
  LossBreakdown breakdown;
  double upsilon = 0.0;
  double p_star = 0.0;
  std::vector<Var<T>> logp_orig;  // per utterance, |y|+1 rows
  std::vector<Var<T>> logp_aux;
  std::vector<BranchPair<T>> branches;
  std::vector<std::size_t> used;  // batch positions that were not skipped
  int skipped = 0;
  double acc_o = 0.0;
  double acc_a = 0.0;
  std::size_t tokens = 0;
  std::size_t replaced = 0;
  std::size_t replaceable = 0;
};

namespace detail {

template <typename T>
double token_accuracy(const Tensor2D<T>& logp, const std::vector<int>& target) {
  double hit = 0.0;
  for (Index j = 0; j < logp.rows(); ++j) {
    Index best = 0;
    for (Index w = 1; w < logp.cols(); ++w) {
      if (logp(j, w) > logp(j, best)) best = w;
    }
    hit += best == target[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
  }
  return hit;
}

}  // namespace detail

// One TAB training forward pass over a batch.
//   pass 1: speech -> h -> CTC path -> Shrink -> o -> shared transformer -> P
//   p* resolved from the uncertainty of P (dynamic) or the fixed value
//   pass 2: Copy & Replace -> a -> shared transformer -> Q
// Losses follow ce_o + ce_a + lambda * ctc + alpha * cons.
template <typename T>
TabOutput<T> forward_tab(Graph<T>& g, StModel<T>& m, const Batch& batch, const TabOptions& opt,
                         std::uint64_t step_seed, UpsilonTracker* tracker = nullptr) {
  TabStreams streams(step_seed);
  const double rate = opt.dropout ? m.config.dropout_finetune : 0.0;
  ForwardContext speech_ctx{opt.dropout ? &streams.speech : nullptr, rate};
  ForwardContext orig_ctx{opt.dropout ? &streams.original : nullptr, rate};
  ForwardContext aux_ctx{opt.dropout ? &streams.auxiliary : nullptr, rate};
  const int blank = m.config.blank();

  TabOutput<T> out;
  std::vector<Var<T>> ctc_terms;
  std::vector<ShrinkResult<T>> shrunk;
  std::vector<std::vector<int>> targets;
  double ctc_tokens = 0.0;

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::vector<int> x = batch.x_of(b);
    const Tensor2D<float> speech = batch.speech_of(b);
    Var<T> h = encode_speech(g, m, speech, speech_ctx);
    Var<T> lp = ctc_head(g, m, h);
    if (ctc_min_frames(x) > h.rows()) {
      ++out.skipped;
      continue;
    }
    ctc_terms.push_back(ctc_loss(lp, x, blank));
    ctc_tokens += static_cast<double>(x.size());
    const AlignmentPath path = greedy_path(lp.value());
    shrunk.push_back(shrink(h, path));
    Var<T> memory = encode_shared(g, m, shrunk.back().o, orig_ctx);
    const std::vector<int> y = batch.y_of(b);
    out.logp_orig.push_back(decode(g, m, decoder_input(y), memory, orig_ctx));
    targets.push_back(decoder_target(y));
    out.used.push_back(b);
  }
  if (out.used.empty()) throw std::invalid_argument("forward_tab: every utterance in the batch was skipped");

  std::vector<int> all_targets;
  for (const auto& t : targets) all_targets.insert(all_targets.end(), t.begin(), t.end());
  out.tokens = all_targets.size();

  Var<T> logp_o = ops::concat_rows(out.logp_orig);
  Var<T> ce_o = ce_label_smoothed(logp_o, all_targets, opt.label_smoothing);
  for (std::size_t i = 0; i < targets.size(); ++i) out.acc_o += detail::token_accuracy(out.logp_orig[i].value(), targets[i]);
  out.acc_o /= static_cast<double>(out.tokens);

  const Index vocab = m.config.target_size;
  const double raw_upsilon = opt.gold_token_uncertainty
                                 ? gold_token_uncertainty(logp_o.value(), all_targets, vocab)
                                 : normalized_entropy(logp_o.value(), vocab);
  out.upsilon = tracker != nullptr ? tracker->update(raw_upsilon, opt.upsilon_smoothing) : raw_upsilon;

  Var<T> ctc_sum = ops::sum(ops::concat_rows(ctc_terms));
  Var<T> ctc = ops::scale(ctc_sum, static_cast<T>(1.0 / ctc_tokens));

  std::optional<Var<T>> ce_a;
  std::optional<Var<T>> cons;
  if (!opt.single_branch) {
    out.p_star = resolve_p_star(opt.policy, out.upsilon);
    Var<T> table = source_embedding_table(g, m);
    for (std::size_t i = 0; i < shrunk.size(); ++i) {
      BranchPair<T> bp = copy_replace(shrunk[i].o, shrunk[i].labels, table, blank, out.p_star, streams.replace);
      out.replaced += bp.replaced();
      for (int l : bp.labels) out.replaceable += l != blank ? 1 : 0;
      Var<T> memory = encode_shared(g, m, bp.a, aux_ctx);
      const std::vector<int> y = batch.y_of(out.used[i]);
      out.logp_aux.push_back(decode(g, m, decoder_input(y), memory, aux_ctx));
      out.branches.push_back(std::move(bp));
    }
    Var<T> logp_a = ops::concat_rows(out.logp_aux);
    ce_a = ce_label_smoothed(logp_a, all_targets, opt.label_smoothing);
    cons = consistency_loss(logp_o, logp_a, opt.divergence, nullptr, opt.flow);
    for (std::size_t i = 0; i < targets.size(); ++i) out.acc_a += detail::token_accuracy(out.logp_aux[i].value(), targets[i]);
    out.acc_a /= static_cast<double>(out.tokens);
  } else {
    out.p_star = 0.0;
  }

  const double alpha = opt.divergence == DivergenceKind::none ? 0.0 : opt.alpha;
  out.total = total_loss<T>(ce_o, ce_a, ctc, cons, opt.lambda, alpha);
  out.breakdown = total_loss(static_cast<double>(ce_o.scalar()), ce_a ? static_cast<double>(ce_a->scalar()) : 0.0,
                             static_cast<double>(ctc.scalar()), cons ? static_cast<double>(cons->scalar()) : 0.0,
                             opt.lambda, alpha);
  return out;
}

}  // namespace tab
