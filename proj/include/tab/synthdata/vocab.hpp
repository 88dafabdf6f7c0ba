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
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "tab/rng.hpp"

namespace tab {

// Source and target vocabularies. Source ids are 0..n_source-1 and the CTC
// blank is appended as id n_source. Target ids start with the specials
// pad/bos/eos followed by n_target word ids.
struct ExtendedVocab {
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kNumSpecials = 3;

  int n_source = 0;
  int n_target = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> source_tokens;  // includes the blank as last entry
  std::vector<std::string> target_tokens;  // includes the specials
  std::vector<int> cipher;                 // source id -> target id
  std::vector<int> inverse_cipher;         // target id -> source id, -1 if none

  int blank() const { return n_source; }
  int ctc_size() const { return n_source + 1; }
  int target_size() const { return n_target + kNumSpecials; }
};

inline ExtendedVocab make_vocab(int n_source, int n_target, std::uint64_t seed) {
  if (n_source < 2 || n_target < 2) throw std::invalid_argument("make_vocab: vocabularies need at least 2 tokens");
  if (n_target < n_source) throw std::invalid_argument("make_vocab: the cipher needs n_target >= n_source");
  ExtendedVocab v;
  v.n_source = n_source;
  v.n_target = n_target;
  v.seed = seed;
  for (int i = 0; i < n_source; ++i) v.source_tokens.push_back("s" + std::to_string(i));
  v.source_tokens.emplace_back("<blank>");
  v.target_tokens = {"<pad>", "<s>", "</s>"};
  for (int i = 0; i < n_target; ++i) v.target_tokens.push_back("t" + std::to_string(i));

  std::vector<int> targets(static_cast<std::size_t>(n_target));
  std::iota(targets.begin(), targets.end(), ExtendedVocab::kNumSpecials);
  Rng rng = make_rng(seed, 0xC1F3);
  std::shuffle(targets.begin(), targets.end(), rng);
  v.cipher.assign(targets.begin(), targets.begin() + n_source);
  v.inverse_cipher.assign(static_cast<std::size_t>(v.target_size()), -1);
  for (int s = 0; s < n_source; ++s) v.inverse_cipher[static_cast<std::size_t>(v.cipher[static_cast<std::size_t>(s)])] = s;
  return v;
}

// Ground-truth translation: substitute every token through the cipher, then
// swap adjacent pairs (0<->1, 2<->3, ...). An odd tail stays in place.
inline std::vector<int> translate_reference(const std::vector<int>& x, const ExtendedVocab& vocab) {
  std::vector<int> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < 0 || x[i] >= vocab.n_source) throw std::out_of_range("translate_reference: source id out of range");
    y[i] = vocab.cipher[static_cast<std::size_t>(x[i])];
  }
  for (std::size_t i = 0; i + 1 < y.size(); i += 2) std::swap(y[i], y[i + 1]);
  return y;
}

inline std::vector<int> inverse_translate(const std::vector<int>& y, const ExtendedVocab& vocab) {
  std::vector<int> x(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const int s = y[i] >= 0 && y[i] < vocab.target_size() ? vocab.inverse_cipher[static_cast<std::size_t>(y[i])] : -1;
    if (s < 0) throw std::out_of_range("inverse_translate: target id has no source preimage");
    x[i] = s;
  }
  for (std::size_t i = 0; i + 1 < x.size(); i += 2) std::swap(x[i], x[i + 1]);
  return x;
}

}  // namespace tab
