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
#include <array>
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

namespace tab {

struct BleuStats {
  std::array<double, 4> matches{};
  std::array<double, 4> totals{};
  std::array<double, 4> ref_totals{};
  double hyp_len = 0.0;
  double ref_len = 0.0;

  double precision(int n) const { return totals[n] > 0 ? matches[n] / totals[n] : 0.0; }
};

namespace detail {

inline std::map<std::vector<int>, int> ngram_counts(const std::vector<int>& s, std::size_t n) {
  std::map<std::vector<int>, int> c;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++c[std::vector<int>(s.begin() + static_cast<long>(i), s.begin() + static_cast<long>(i + n))];
  return c;
}

}  // namespace detail

inline BleuStats bleu_stats(const std::vector<std::vector<int>>& hyps, const std::vector<std::vector<int>>& refs) {
  if (hyps.size() != refs.size()) throw std::invalid_argument("corpus_bleu: hypothesis and reference counts differ");
  if (refs.empty()) throw std::invalid_argument("corpus_bleu: empty corpus");
  BleuStats st;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    st.hyp_len += static_cast<double>(hyps[i].size());
    st.ref_len += static_cast<double>(refs[i].size());
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto hc = detail::ngram_counts(hyps[i], n);
      const auto rc = detail::ngram_counts(refs[i], n);
      for (const auto& [g, c] : rc) st.ref_totals[n - 1] += c;
      for (const auto& [g, c] : hc) {
        auto it = rc.find(g);
        if (it != rc.end()) st.matches[n - 1] += std::min(c, it->second);
        st.totals[n - 1] += c;
      }
    }
  }
  return st;
}

// Corpus BLEU-4 over token ids, 0..100: brevity penalty times the geometric
// mean of clipped n-gram precisions. Unsmoothed, so any zero precision
// gives 0. An order that neither side has any n-grams of (every sentence
// shorter than n) is left out of the mean.
inline double corpus_bleu(const std::vector<std::vector<int>>& hyps, const std::vector<std::vector<int>>& refs) {
  const BleuStats st = bleu_stats(hyps, refs);
  if (st.hyp_len == 0.0) return 0.0;
  double log_p = 0.0;
  int orders = 0;
  for (int n = 0; n < 4; ++n) {
    if (st.totals[n] == 0.0 && st.ref_totals[n] == 0.0) continue;
    if (st.matches[n] == 0.0) return 0.0;
    log_p += std::log(st.matches[n] / st.totals[n]);
    ++orders;
  }
  const double bp = st.hyp_len > st.ref_len ? 1.0 : std::exp(1.0 - st.ref_len / st.hyp_len);
  return 100.0 * bp * std::exp(log_p / orders);
}

}  // namespace tab
