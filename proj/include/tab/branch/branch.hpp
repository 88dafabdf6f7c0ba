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
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tab/ctc/ctc.hpp"
#include "tab/diffcore/ops.hpp"
#include "tab/rng.hpp"

namespace tab {

template <typename T>
struct ShrinkResult {
  Var<T> o;                 // one row per run of the path
  std::vector<int> labels;  // run label c for each row of o
};

// Averages the speech output over each maximal run of the CTC path. Blank
// runs are kept as one averaged position each.
template <typename T>
ShrinkResult<T> shrink(const Var<T>& h, const AlignmentPath& path) {
  if (static_cast<Index>(path.labels.size()) != h.rows()) {
    throw std::invalid_argument("shrink: path has " + std::to_string(path.labels.size()) +
                                " frames but speech output has " + std::to_string(h.rows()));
  }
  std::vector<std::pair<int, int>> segments;
  ShrinkResult<T> res;
  segments.reserve(path.runs.size());
  for (const Run& r : path.runs) {
    segments.emplace_back(r.start, r.end);
    res.labels.push_back(r.label);
  }
  res.o = ops::segment_mean(h, segments);
  return res;
}

template <typename T>
struct BranchPair {
  Var<T> o;
  Var<T> a;
  std::vector<int> labels;
  std::vector<bool> replace_mask;
  double p_star_used = 0.0;

  std::size_t replaced() const {
    return static_cast<std::size_t>(std::count(replace_mask.begin(), replace_mask.end(), true));
  }
};

// Copies o into a, then swaps each non-blank position for the embedding of
// its run label with probability p_star. Gradient reaches the embedding
// table at replaced rows; the label choice itself is not differentiated.
template <typename T>
BranchPair<T> copy_replace(const Var<T>& o, const std::vector<int>& labels, const Var<T>& embedding_table,
                           int blank, double p_star, Rng& rng) {
  if (!(p_star >= 0.0 && p_star <= 1.0)) {
    throw std::invalid_argument("copy_replace: p_star must lie in [0, 1], got " + std::to_string(p_star));
  }
  if (static_cast<Index>(labels.size()) != o.rows()) {
    throw std::invalid_argument("copy_replace: labels/positions length mismatch");
  }
  BranchPair<T> bp;
  bp.o = o;
  bp.labels = labels;
  bp.p_star_used = p_star;
  bp.replace_mask.assign(labels.size(), false);
  std::vector<int> positions;
  std::vector<int> ids;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] == blank) continue;
    if (labels[k] < 0 || labels[k] >= embedding_table.rows()) {
      throw std::out_of_range("copy_replace: label " + std::to_string(labels[k]) +
                              " not covered by the embedding table");
    }
    if (uniform01(rng) < p_star) {
      bp.replace_mask[k] = true;
      positions.push_back(static_cast<int>(k));
      ids.push_back(labels[k]);
    }
  }
  bp.a = positions.empty() ? o : ops::replace_rows(o, embedding_table, positions, ids);
  return bp;
}

enum class ReplaceMode { fixed, dynamic };

struct ReplacePolicy {
  ReplaceMode mode = ReplaceMode::dynamic;
  double fixed_p = 0.0;
  double gamma = 0.5;
};

// p* = fixed value, or clamp(gamma * upsilon, 0, 1) in dynamic mode.
inline double resolve_p_star(const ReplacePolicy& policy, std::optional<double> upsilon) {
  if (policy.mode == ReplaceMode::fixed) {
    if (!(policy.fixed_p >= 0.0 && policy.fixed_p <= 1.0)) {
      throw std::invalid_argument("resolve_p_star: fixed p* outside [0, 1]");
    }
    return policy.fixed_p;
  }
  if (!upsilon.has_value()) throw std::invalid_argument("resolve_p_star: dynamic mode needs an uncertainty value");
  if (!(*upsilon >= 0.0 && *upsilon <= 1.0)) {
    throw std::invalid_argument("resolve_p_star: uncertainty must lie in [0, 1]");
  }
  return std::clamp(policy.gamma * *upsilon, 0.0, 1.0);
}

}  // namespace tab
