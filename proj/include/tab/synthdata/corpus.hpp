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
#include <set>
#include <stdexcept>
#include <vector>

#include "tab/diffcore/tensor.hpp"
#include "tab/rng.hpp"
#include "tab/synthdata/vocab.hpp"

namespace tab {

struct SpeechOptions {
  int d_feat = 16;
  double noise_sigma = 0.8;
  double silence_prob = 0.3;
  int min_repeat = 2;
  int max_repeat = 4;
  // Raw frames emitted per acoustic step; matches the encoder's temporal
  // downsampling so that one encoder frame covers one step.
  int frame_hold = 4;
};

// One fixed random acoustic template per source token (rows), d_feat columns.
inline Tensor2D<float> make_templates(const ExtendedVocab& vocab, int d_feat, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0xAC05);
  Tensor2D<float> t(vocab.n_source, d_feat);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<float>(normal(rng));
  return t;
}

struct SynthSpeech {
  Tensor2D<float> frames;         // raw frames x d_feat
  std::vector<int> step_labels;   // per acoustic step: source id, or -1 for silence
  int token_steps = 0;            // steps carrying a token (excludes silence)
};

// Renders a transcript as noisy acoustic frames. Each token occupies
// r in [min_repeat, max_repeat] steps of its template; silence steps
// (noise around zero) separate tokens with probability silence_prob and
// always separate identical neighbours. A trailing silence step is added
// whenever needed so that steps >= 2|x| + 1.
inline SynthSpeech synthesize_speech(const std::vector<int>& x, const Tensor2D<float>& templates,
                                     const SpeechOptions& opt, Rng& rng) {
  if (x.empty()) throw std::invalid_argument("synthesize_speech: empty transcript");
  if (templates.cols() != opt.d_feat) throw std::invalid_argument("synthesize_speech: template width differs from d_feat");
  SynthSpeech out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < 0 || x[i] >= templates.rows()) throw std::out_of_range("synthesize_speech: token without template");
    if (i > 0) {
      const bool forced = x[i] == x[i - 1];
      if (forced || uniform01(rng) < opt.silence_prob) out.step_labels.push_back(-1);
    }
    const int r = opt.min_repeat == opt.max_repeat ? opt.min_repeat : uniform_int(rng, opt.min_repeat, opt.max_repeat);
    for (int k = 0; k < r; ++k) out.step_labels.push_back(x[i]);
    out.token_steps += r;
  }
  while (out.step_labels.size() < 2 * x.size() + 1) out.step_labels.push_back(-1);

  const Index steps = static_cast<Index>(out.step_labels.size());
  out.frames.resize(steps * opt.frame_hold, opt.d_feat);
  std::normal_distribution<float> noise(0.0F, static_cast<float>(opt.noise_sigma));
  for (Index s = 0; s < steps; ++s) {
    const int label = out.step_labels[static_cast<std::size_t>(s)];
    for (int h = 0; h < opt.frame_hold; ++h) {
      const Index row = s * opt.frame_hold + h;
      for (int c = 0; c < opt.d_feat; ++c) {
        const float base = label >= 0 ? templates(label, c) : 0.0F;
        out.frames(row, c) = base + (opt.noise_sigma > 0.0 ? noise(rng) : 0.0F);
      }
    }
  }
  return out;
}

struct Utterance {
  Tensor2D<float> speech;  // empty for text-only (MT) examples
  std::vector<int> x;      // transcript, source ids
  std::vector<int> y;      // translation, target word ids (no bos/eos)
};

struct CorpusConfig {
  int n_asr = 5000;
  int n_mt = 20000;
  int n_st_train = 1000;
  int n_dev = 200;
  int n_test = 200;
  int min_len = 3;
  int max_len = 12;
  int n_source = 40;
  int n_target = 40;
  SpeechOptions speech;
};

struct CorpusBundle {
  CorpusConfig config;
  std::uint64_t seed = 0;
  ExtendedVocab vocab;
  Tensor2D<float> templates;
  std::vector<Utterance> asr;       // speech + x
  std::vector<Utterance> mt;        // x + y
  std::vector<Utterance> st_train;  // speech + x + y
  std::vector<Utterance> st_dev;
  std::vector<Utterance> st_test;
};

namespace detail {

inline std::vector<int> random_transcript(const CorpusConfig& cfg, Rng& rng) {
  const int len = uniform_int(rng, cfg.min_len, cfg.max_len);
  std::vector<int> x(static_cast<std::size_t>(len));
  for (int& t : x) t = uniform_int(rng, 0, cfg.n_source - 1);
  return x;
}

}  // namespace detail

// Pure function of (config, seed). Dev and test transcripts are unique and
// never occur in any training split (ASR, MT or ST train).
inline CorpusBundle build_corpus(const CorpusConfig& cfg, std::uint64_t seed) {
  if (cfg.min_len < 1 || cfg.max_len < cfg.min_len) throw std::invalid_argument("build_corpus: bad length range");
  CorpusBundle b;
  b.config = cfg;
  b.seed = seed;
  b.vocab = make_vocab(cfg.n_source, cfg.n_target, derive_seed(seed, 1));
  b.templates = make_templates(b.vocab, cfg.speech.d_feat, derive_seed(seed, 2));

  Rng text_rng = make_rng(seed, 3);
  Rng speech_rng = make_rng(seed, 4);
  std::set<std::vector<int>> held_out;

  auto held_out_split = [&](int n, std::vector<Utterance>& dst) {
    while (static_cast<int>(dst.size()) < n) {
      auto x = detail::random_transcript(cfg, text_rng);
      if (!held_out.insert(x).second) continue;
      Utterance u;
      u.speech = synthesize_speech(x, b.templates, cfg.speech, speech_rng).frames;
      u.y = translate_reference(x, b.vocab);
      u.x = std::move(x);
      dst.push_back(std::move(u));
    }
  };
  held_out_split(cfg.n_dev, b.st_dev);
  held_out_split(cfg.n_test, b.st_test);

  auto train_transcript = [&]() {
    while (true) {
      auto x = detail::random_transcript(cfg, text_rng);
      if (held_out.count(x) == 0) return x;
    }
  };
  for (int i = 0; i < cfg.n_st_train; ++i) {
    Utterance u;
    u.x = train_transcript();
    u.speech = synthesize_speech(u.x, b.templates, cfg.speech, speech_rng).frames;
    u.y = translate_reference(u.x, b.vocab);
    b.st_train.push_back(std::move(u));
  }
  for (int i = 0; i < cfg.n_asr; ++i) {
    Utterance u;
    u.x = train_transcript();
    u.speech = synthesize_speech(u.x, b.templates, cfg.speech, speech_rng).frames;
    b.asr.push_back(std::move(u));
  }
  for (int i = 0; i < cfg.n_mt; ++i) {
    Utterance u;
    u.x = train_transcript();
    u.y = translate_reference(u.x, b.vocab);
    b.mt.push_back(std::move(u));
  }
  return b;
}

// Padded mini-batch. Per-sequence lengths are authoritative; rows beyond a
// sequence's length are padding and never reach a loss.
struct Batch {
  static constexpr int kSourcePad = -1;

  std::vector<std::size_t> indices;
  std::vector<Tensor2D<float>> speech;  // each padded to max_frames rows
  std::vector<int> frame_lengths;
  Eigen::MatrixXi x;  // batch x max |x|, padded with kSourcePad
  std::vector<int> x_lengths;
  Eigen::MatrixXi y;  // batch x max |y|, padded with ExtendedVocab::kPad
  std::vector<int> y_lengths;

  std::size_t size() const { return indices.size(); }

  Tensor2D<float> speech_of(std::size_t b) const {
    return speech[b].topRows(frame_lengths[b]);
  }
  std::vector<int> x_of(std::size_t b) const {
    std::vector<int> v(static_cast<std::size_t>(x_lengths[b]));
    for (int i = 0; i < x_lengths[b]; ++i) v[static_cast<std::size_t>(i)] = x(static_cast<Index>(b), i);
    return v;
  }
  std::vector<int> y_of(std::size_t b) const {
    std::vector<int> v(static_cast<std::size_t>(y_lengths[b]));
    for (int i = 0; i < y_lengths[b]; ++i) v[static_cast<std::size_t>(i)] = y(static_cast<Index>(b), i);
    return v;
  }
  // Row-validity mask of the padded target matrix for sequence b.
  std::vector<bool> y_mask(std::size_t b) const {
    std::vector<bool> m(static_cast<std::size_t>(y.cols()), false);
    for (int i = 0; i < y_lengths[b]; ++i) m[static_cast<std::size_t>(i)] = true;
    return m;
  }
};

// Builds one batch from `indices` of `split`; `extra_pad` appends that many
// additional padding rows/columns beyond the longest sequence.
inline Batch make_batch(const std::vector<Utterance>& split, const std::vector<std::size_t>& indices,
                        int extra_pad = 0) {
  Batch b;
  b.indices = indices;
  int max_frames = 0, max_x = 0, max_y = 0;
  int d_feat = 0;
  for (auto i : indices) {
    const Utterance& u = split.at(i);
    max_frames = std::max(max_frames, static_cast<int>(u.speech.rows()));
    max_x = std::max(max_x, static_cast<int>(u.x.size()));
    max_y = std::max(max_y, static_cast<int>(u.y.size()));
    d_feat = std::max(d_feat, static_cast<int>(u.speech.cols()));
  }
  max_frames += extra_pad;
  max_x += extra_pad;
  max_y += extra_pad;
  b.x = Eigen::MatrixXi::Constant(static_cast<Index>(indices.size()), max_x, Batch::kSourcePad);
  b.y = Eigen::MatrixXi::Constant(static_cast<Index>(indices.size()), max_y, ExtendedVocab::kPad);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const Utterance& u = split[indices[k]];
    Tensor2D<float> s = Tensor2D<float>::Zero(max_frames, d_feat);
    if (u.speech.rows() > 0) s.topRows(u.speech.rows()) = u.speech;
    b.speech.push_back(std::move(s));
    b.frame_lengths.push_back(static_cast<int>(u.speech.rows()));
    for (std::size_t i = 0; i < u.x.size(); ++i) b.x(static_cast<Index>(k), static_cast<Index>(i)) = u.x[i];
    for (std::size_t i = 0; i < u.y.size(); ++i) b.y(static_cast<Index>(k), static_cast<Index>(i)) = u.y[i];
    b.x_lengths.push_back(static_cast<int>(u.x.size()));
    b.y_lengths.push_back(static_cast<int>(u.y.size()));
  }
  return b;
}

// Splits `order` into consecutive batches of at most batch_size.
inline std::vector<Batch> make_batches(const std::vector<Utterance>& split, const std::vector<std::size_t>& order,
                                       int batch_size, int extra_pad = 0) {
  if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be >= 1");
  std::vector<Batch> out;
  for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(batch_size)) {
    const std::size_t e = std::min(order.size(), s + static_cast<std::size_t>(batch_size));
    out.push_back(make_batch(split, std::vector<std::size_t>(order.begin() + static_cast<long>(s),
                                                             order.begin() + static_cast<long>(e)),
                             extra_pad));
  }
  return out;
}

inline std::vector<Batch> batch(const std::vector<Utterance>& split, int batch_size, int extra_pad = 0) {
  std::vector<std::size_t> order(split.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  return make_batches(split, order, batch_size, extra_pad);
}

}  // namespace tab
