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

#include <filesystem>
#include <set>

#include "tab/synthdata/corpus.hpp"
#include "tab/synthdata/corpus_io.hpp"

namespace tab {
namespace {

CorpusConfig tiny_config() {
  CorpusConfig c;
  c.n_asr = 30;
  c.n_mt = 40;
  c.n_st_train = 20;
  c.n_dev = 8;
  c.n_test = 8;
  c.min_len = 2;
  c.max_len = 5;
  c.n_source = 6;
  c.n_target = 8;
  c.speech.d_feat = 4;
  return c;
}

TEST(Vocab, SizesAndSpecials) {
  const ExtendedVocab v = make_vocab(40, 40, 1);
  EXPECT_EQ(v.blank(), 40);
  EXPECT_EQ(v.ctc_size(), 41);
  EXPECT_EQ(v.target_size(), 43);
  EXPECT_EQ(v.source_tokens.back(), "<blank>");
  EXPECT_EQ(v.target_tokens[ExtendedVocab::kEos], "</s>");
  std::set<int> image(v.cipher.begin(), v.cipher.end());
  EXPECT_EQ(image.size(), 40u);
  EXPECT_GE(*image.begin(), ExtendedVocab::kNumSpecials);
}

TEST(Vocab, BadSizesAreErrors) {
  EXPECT_THROW(make_vocab(1, 5, 0), std::invalid_argument);
  EXPECT_THROW(make_vocab(6, 5, 0), std::invalid_argument);
}

TEST(Vocab, CipherDependsOnSeedOnly) {
  EXPECT_EQ(make_vocab(10, 12, 3).cipher, make_vocab(10, 12, 3).cipher);
  EXPECT_NE(make_vocab(10, 12, 3).cipher, make_vocab(10, 12, 4).cipher);
}

TEST(Translate, SubstitutesThenSwapsPairs) {
  const ExtendedVocab v = make_vocab(5, 5, 2);
  auto c = [&](int s) { return v.cipher[static_cast<std::size_t>(s)]; };
  EXPECT_EQ(translate_reference({0, 1, 2}, v), (std::vector<int>{c(1), c(0), c(2)}));
  EXPECT_EQ(translate_reference({4, 3, 2, 1}, v), (std::vector<int>{c(3), c(4), c(1), c(2)}));
  EXPECT_THROW(translate_reference({5}, v), std::out_of_range);
}

TEST(Translate, InverseRoundTrips) {
  const ExtendedVocab v = make_vocab(9, 11, 5);
  Rng rng = make_rng(5, 0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> x(static_cast<std::size_t>(uniform_int(rng, 1, 9)));
    for (auto& t : x) t = uniform_int(rng, 0, 8);
    EXPECT_EQ(inverse_translate(translate_reference(x, v), v), x);
  }
  EXPECT_THROW(inverse_translate({ExtendedVocab::kBos}, v), std::out_of_range);
}

TEST(Speech, NoiselessFramesEqualTemplates) {
  const ExtendedVocab v = make_vocab(4, 4, 1);
  SpeechOptions opt;
  opt.d_feat = 3;
  opt.noise_sigma = 0.0;
  const Tensor2D<float> t = make_templates(v, opt.d_feat, 9);
  Rng rng = make_rng(1, 0);
  const SynthSpeech s = synthesize_speech({2, 2, 0}, t, opt, rng);
  ASSERT_EQ(s.frames.rows(), static_cast<Index>(s.step_labels.size()) * opt.frame_hold);
  for (std::size_t k = 0; k < s.step_labels.size(); ++k) {
    const int l = s.step_labels[k];
    for (int h = 0; h < opt.frame_hold; ++h) {
      const Index row = static_cast<Index>(k) * opt.frame_hold + h;
      if (l >= 0) {
        EXPECT_EQ(s.frames.row(row), t.row(l));
      } else {
        EXPECT_TRUE(s.frames.row(row).isZero());
      }
    }
  }
}

TEST(Speech, RepeatedTokensAreSeparatedBySilence) {
  const ExtendedVocab v = make_vocab(4, 4, 1);
  SpeechOptions opt;
  opt.silence_prob = 0.0;
  const Tensor2D<float> t = make_templates(v, opt.d_feat, 9);
  Rng rng = make_rng(2, 0);
  const SynthSpeech s = synthesize_speech({1, 1}, t, opt, rng);
  std::vector<int> collapsed;
  for (int l : s.step_labels) {
    if (collapsed.empty() || collapsed.back() != l) collapsed.push_back(l);
  }
  EXPECT_EQ(collapsed[0], 1);
  EXPECT_EQ(collapsed[1], -1);
  EXPECT_EQ(collapsed[2], 1);
}

TEST(Speech, TokenStepsWithinRepeatRange) {
  const ExtendedVocab v = make_vocab(6, 6, 1);
  SpeechOptions opt;
  const Tensor2D<float> t = make_templates(v, opt.d_feat, 3);
  Rng rng = make_rng(3, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const SynthSpeech s = synthesize_speech({0, 3, 5}, t, opt, rng);
    EXPECT_GE(s.token_steps, 6);
    EXPECT_LE(s.token_steps, 12);
    EXPECT_GE(s.step_labels.size(), 7u);
  }
}

TEST(Speech, EmptyTranscriptIsAnError) {
  const ExtendedVocab v = make_vocab(4, 4, 1);
  SpeechOptions opt;
  const Tensor2D<float> t = make_templates(v, opt.d_feat, 3);
  Rng rng = make_rng(3, 0);
  EXPECT_THROW(synthesize_speech({}, t, opt, rng), std::invalid_argument);
  EXPECT_THROW(synthesize_speech({4}, t, opt, rng), std::out_of_range);
}

TEST(Corpus, DefaultSplitSizes) {
  const CorpusConfig c;
  EXPECT_EQ(c.n_asr, 5000);
  EXPECT_EQ(c.n_mt, 20000);
  EXPECT_EQ(c.n_st_train, 1000);
  EXPECT_EQ(c.n_dev, 200);
  EXPECT_EQ(c.n_test, 200);
}

TEST(Corpus, SplitsHaveRequestedSizesAndFields) {
  const CorpusBundle b = build_corpus(tiny_config(), 7);
  EXPECT_EQ(b.asr.size(), 30u);
  EXPECT_EQ(b.mt.size(), 40u);
  EXPECT_EQ(b.st_train.size(), 20u);
  EXPECT_EQ(b.st_dev.size(), 8u);
  EXPECT_EQ(b.st_test.size(), 8u);
  for (const auto& u : b.asr) EXPECT_TRUE(u.y.empty());
  for (const auto& u : b.mt) EXPECT_EQ(u.speech.size(), 0);
  for (const auto& u : b.st_train) {
    EXPECT_EQ(u.y, translate_reference(u.x, b.vocab));
    EXPECT_GE(u.x.size(), 2u);
    EXPECT_LE(u.x.size(), 5u);
  }
}

TEST(Corpus, HeldOutTranscriptsAreUniqueAndUnseen) {
  const CorpusBundle b = build_corpus(tiny_config(), 8);
  std::set<std::vector<int>> train;
  for (const auto* s : {&b.asr, &b.mt, &b.st_train}) {
    for (const auto& u : *s) train.insert(u.x);
  }
  std::set<std::vector<int>> held;
  for (const auto* s : {&b.st_dev, &b.st_test}) {
    for (const auto& u : *s) {
      EXPECT_TRUE(held.insert(u.x).second);
      EXPECT_EQ(train.count(u.x), 0u);
    }
  }
}

TEST(Corpus, SameSeedSameCorpus) {
  const CorpusBundle a = build_corpus(tiny_config(), 9);
  const CorpusBundle b = build_corpus(tiny_config(), 9);
  ASSERT_EQ(a.st_train.size(), b.st_train.size());
  for (std::size_t i = 0; i < a.st_train.size(); ++i) {
    EXPECT_EQ(a.st_train[i].x, b.st_train[i].x);
    EXPECT_EQ(a.st_train[i].speech, b.st_train[i].speech);
  }
}

TEST(Batching, PaddingAndMasks) {
  const CorpusBundle b = build_corpus(tiny_config(), 10);
  const Batch plain = make_batch(b.st_train, {0, 1, 2});
  const Batch padded = make_batch(b.st_train, {0, 1, 2}, 3);
  EXPECT_EQ(padded.x.cols(), plain.x.cols() + 3);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(plain.x_of(k), padded.x_of(k));
    EXPECT_EQ(plain.y_of(k), padded.y_of(k));
    EXPECT_EQ(plain.speech_of(k), padded.speech_of(k));
    const auto mask = padded.y_mask(k);
    for (std::size_t j = 0; j < mask.size(); ++j) {
      EXPECT_EQ(mask[j], static_cast<int>(j) < padded.y_lengths[k]);
      if (!mask[j]) {
        EXPECT_EQ(padded.y(static_cast<Index>(k), static_cast<Index>(j)), ExtendedVocab::kPad);
      }
    }
    for (Index j = padded.x_lengths[k]; j < padded.x.cols(); ++j) {
      EXPECT_EQ(padded.x(static_cast<Index>(k), j), Batch::kSourcePad);
    }
  }
}

TEST(Batching, BatchesCoverSplitInOrder) {
  const CorpusBundle b = build_corpus(tiny_config(), 10);
  const auto batches = batch(b.st_train, 6);
  ASSERT_EQ(batches.size(), 4u);
  EXPECT_EQ(batches.back().size(), 2u);
  EXPECT_EQ(batches[1].indices.front(), 6u);
  EXPECT_THROW(batch(b.st_train, 0), std::invalid_argument);
}

TEST(CorpusIo, RoundTripIsExact) {
  const CorpusBundle b = build_corpus(tiny_config(), 11);
  const auto dir = std::filesystem::temp_directory_path() / "tab_corpus_io_test";
  std::filesystem::remove_all(dir);
  write_corpus(b, dir);
  const CorpusBundle r = read_corpus(dir);
  EXPECT_EQ(r.seed, 11u);
  EXPECT_EQ(r.config.n_mt, 40);
  EXPECT_EQ(r.vocab.cipher, b.vocab.cipher);
  EXPECT_EQ(r.templates, b.templates);
  ASSERT_EQ(r.st_dev.size(), b.st_dev.size());
  for (std::size_t i = 0; i < b.st_dev.size(); ++i) {
    EXPECT_EQ(r.st_dev[i].x, b.st_dev[i].x);
    EXPECT_EQ(r.st_dev[i].y, b.st_dev[i].y);
    EXPECT_EQ(r.st_dev[i].speech, b.st_dev[i].speech);
  }
  std::filesystem::remove_all(dir);
}

TEST(CorpusIo, MissingManifestKeyIsAnError) {
  const CorpusBundle b = build_corpus(tiny_config(), 12);
  const auto dir = std::filesystem::temp_directory_path() / "tab_corpus_io_missing";
  std::filesystem::remove_all(dir);
  write_corpus(b, dir);
  {
    std::ofstream out(dir / "corpus.manifest");
    out << "seed = 12\n";
  }
  EXPECT_THROW(read_corpus(dir), io::FormatError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace tab
