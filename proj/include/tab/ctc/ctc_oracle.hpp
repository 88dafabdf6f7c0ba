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
#include <limits>
#include <stdexcept>
#include <vector>

#include "tab/ctc/ctc.hpp"

namespace tab {

struct OracleResult {
  double loss = std::numeric_limits<double>::infinity();
  bool feasible = false;
  std::size_t paths = 0;  // members of beta^-1(x)
};

// Exact CTC loss by enumerating all |V+|^T frame paths and keeping those that
// collapse to x. Only for tiny instances.
template <typename T>
OracleResult ctc_loss_oracle(const CtcPosterior<T>& logp, const std::vector<int>& x, int blank) {
  const int frames = static_cast<int>(logp.rows());
  const int v = static_cast<int>(logp.cols());
  if (frames > 8 || v > 5) {
    throw std::invalid_argument("ctc_loss_oracle: instance too large to enumerate (T <= 8, |V+| <= 5)");
  }
  std::vector<int> path(static_cast<std::size_t>(frames), 0);
  std::vector<double> terms;
  while (true) {
    if (collapse_beta(path, blank) == x) {
      double lp = 0.0;
      for (int t = 0; t < frames; ++t) lp += static_cast<double>(logp(t, path[static_cast<std::size_t>(t)]));
      terms.push_back(lp);
    }
    int t = frames - 1;
    while (t >= 0 && path[static_cast<std::size_t>(t)] == v - 1) path[static_cast<std::size_t>(t--)] = 0;
    if (t < 0) break;
    ++path[static_cast<std::size_t>(t)];
  }
  OracleResult r;
  r.paths = terms.size();
  if (terms.empty()) return r;
  double m = -std::numeric_limits<double>::infinity();
  for (double lp : terms) m = std::max(m, lp);
  double s = 0.0;
  for (double lp : terms) s += std::exp(lp - m);
  r.feasible = true;
  r.loss = -(m + std::log(s));
  return r;
}

}  // namespace tab
