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

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "tab/branch/branch.hpp"
#include "tab/model/st_model.hpp"

namespace tab {

struct Hypothesis {
  std::vector<int> tokens;  // without bos/eos
  double log_prob = 0.0;
  double score = 0.0;       // log_prob / (|tokens| + 1)
  bool truncated = false;   // max_len reached before eos
};

// Inference-time source encoding: speech -> CTC greedy path -> Shrink ->
// shared encoder. No dropout.
template <typename T>
Var<T> encode_for_decoding(Graph<T>& g, StModel<T>& m, const Tensor2D<float>& speech) {
  const ForwardContext ctx{nullptr, 0.0};
  Var<T> h = encode_speech(g, m, speech, ctx);
  Var<T> lp = ctc_head(g, m, h);
  const AlignmentPath path = greedy_path(lp.value());
  return encode_shared(g, m, shrink(h, path).o, ctx);
}

namespace detail {

template <typename T>
std::vector<double> next_log_probs(Graph<T>& g, StModel<T>& m, const std::vector<int>& prefix, const Var<T>& memory) {
  const ForwardContext ctx{nullptr, 0.0};
  Var<T> lp = decode(g, m, prefix, memory, ctx);
  const Index last = lp.rows() - 1;
  std::vector<double> out(static_cast<std::size_t>(lp.cols()));
  for (Index w = 0; w < lp.cols(); ++w) out[static_cast<std::size_t>(w)] = static_cast<double>(lp.value()(last, w));
  return out;
}

inline double normalized(double log_prob, std::size_t len) { return log_prob / static_cast<double>(len + 1); }

}  // namespace detail

template <typename T>
Hypothesis greedy_decode(StModel<T>& m, const Tensor2D<float>& speech, int max_len) {
  if (max_len < 1) throw std::invalid_argument("greedy_decode: max_len must be >= 1");
  Graph<T> g;
  g.set_grad_enabled(false);
  Var<T> memory = encode_for_decoding(g, m, speech);
  Hypothesis h;
  std::vector<int> prefix{ExtendedVocab::kBos};
  for (int step = 0; step < max_len; ++step) {
    const std::vector<double> lp = detail::next_log_probs(g, m, prefix, memory);
    int best = 0;
    for (int w = 1; w < static_cast<int>(lp.size()); ++w) {
      if (lp[static_cast<std::size_t>(w)] > lp[static_cast<std::size_t>(best)]) best = w;
    }
    h.log_prob += lp[static_cast<std::size_t>(best)];
    if (best == ExtendedVocab::kEos) {
      h.score = detail::normalized(h.log_prob, h.tokens.size());
      return h;
    }
    h.tokens.push_back(best);
    prefix.push_back(best);
  }
  h.truncated = true;
  h.score = detail::normalized(h.log_prob, h.tokens.size());
  return h;
}

// Beam search. Each step expands every live hypothesis by every token and
// keeps the `beam` best by accumulated log-probability (ties: earlier
// hypothesis, then smaller token id). Candidates ending in eos are set
// aside as finished. The result is the finished hypothesis with the best
// length-normalized score.
template <typename T>
Hypothesis beam_decode(StModel<T>& m, const Tensor2D<float>& speech, int beam, int max_len) {
  if (beam < 1) throw std::invalid_argument("beam_decode: beam must be >= 1");
  if (max_len < 1) throw std::invalid_argument("beam_decode: max_len must be >= 1");
  Graph<T> g;
  g.set_grad_enabled(false);
  Var<T> memory = encode_for_decoding(g, m, speech);

  struct Cand {
    double log_prob;
    std::size_t parent;
    int token;
  };
  std::vector<Hypothesis> live(1);
  std::vector<Hypothesis> finished;
  for (int step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < live.size(); ++i) {
      std::vector<int> prefix{ExtendedVocab::kBos};
      prefix.insert(prefix.end(), live[i].tokens.begin(), live[i].tokens.end());
      const std::vector<double> lp = detail::next_log_probs(g, m, prefix, memory);
      for (std::size_t w = 0; w < lp.size(); ++w) cands.push_back({live[i].log_prob + lp[w], i, static_cast<int>(w)});
    }
    const std::size_t keep = std::min(cands.size(), static_cast<std::size_t>(beam));
    std::partial_sort(cands.begin(), cands.begin() + static_cast<long>(keep), cands.end(),
                      [](const Cand& a, const Cand& b) {
                        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });
    std::vector<Hypothesis> next;
    for (std::size_t k = 0; k < keep; ++k) {
      Hypothesis h = live[cands[k].parent];
      h.log_prob = cands[k].log_prob;
      if (cands[k].token == ExtendedVocab::kEos) {
        h.score = detail::normalized(h.log_prob, h.tokens.size());
        finished.push_back(std::move(h));
      } else {
        h.tokens.push_back(cands[k].token);
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
    if (static_cast<int>(finished.size()) >= beam) break;
  }
  for (auto& h : live) {
    h.truncated = true;
    h.score = detail::normalized(h.log_prob, h.tokens.size());
    finished.push_back(std::move(h));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < finished.size(); ++i) {
    if (finished[i].score > finished[best].score) best = i;
  }
  return finished[best];
}

// Greedy CTC transcript of an utterance.
template <typename T>
std::vector<int> ctc_transcribe(StModel<T>& m, const Tensor2D<float>& speech) {
  Graph<T> g;
  g.set_grad_enabled(false);
  const ForwardContext ctx{nullptr, 0.0};
  Var<T> lp = ctc_head(g, m, encode_speech(g, m, speech, ctx));
  return collapse_beta(greedy_path(lp.value()).labels, m.config.blank());
}

}  // namespace tab
