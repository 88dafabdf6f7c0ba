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

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "tab/kv.hpp"
#include "tab/synthdata/corpus.hpp"

// On-disk corpus layout, one directory:
//   corpus.manifest          key = value generation config and seed
//   <split>.txt              one utterance per line: "x ids<TAB>y ids"
//   <split>.speech.bin       uint32 n_utts, uint32 d_feat, n_utts x uint32
//                            frame counts, then float32 frames row-major
namespace tab {

inline io::KeyValues corpus_config_kv(const CorpusConfig& c, const std::string& prefix = "") {
  return {
      {prefix + "n_asr", std::to_string(c.n_asr)},
      {prefix + "n_mt", std::to_string(c.n_mt)},
      {prefix + "n_st_train", std::to_string(c.n_st_train)},
      {prefix + "n_dev", std::to_string(c.n_dev)},
      {prefix + "n_test", std::to_string(c.n_test)},
      {prefix + "min_len", std::to_string(c.min_len)},
      {prefix + "max_len", std::to_string(c.max_len)},
      {prefix + "n_source", std::to_string(c.n_source)},
      {prefix + "n_target", std::to_string(c.n_target)},
      {prefix + "d_feat", std::to_string(c.speech.d_feat)},
      {prefix + "noise_sigma", io::format_double(c.speech.noise_sigma)},
      {prefix + "silence_prob", io::format_double(c.speech.silence_prob)},
      {prefix + "min_repeat", std::to_string(c.speech.min_repeat)},
      {prefix + "max_repeat", std::to_string(c.speech.max_repeat)},
      {prefix + "frame_hold", std::to_string(c.speech.frame_hold)},
  };
}

// Reads the fields present in `kv`; absent keys keep their current value.
inline void update_corpus_config(CorpusConfig& c, const std::map<std::string, std::string>& kv,
                                 const std::string& prefix = "") {
  auto i = [&](const char* k, int& dst) {
    if (auto it = kv.find(prefix + k); it != kv.end()) dst = static_cast<int>(io::parse_int(it->second, prefix + k));
  };
  auto d = [&](const char* k, double& dst) {
    if (auto it = kv.find(prefix + k); it != kv.end()) dst = io::parse_double(it->second, prefix + k);
  };
  i("n_asr", c.n_asr);
  i("n_mt", c.n_mt);
  i("n_st_train", c.n_st_train);
  i("n_dev", c.n_dev);
  i("n_test", c.n_test);
  i("min_len", c.min_len);
  i("max_len", c.max_len);
  i("n_source", c.n_source);
  i("n_target", c.n_target);
  i("d_feat", c.speech.d_feat);
  d("noise_sigma", c.speech.noise_sigma);
  d("silence_prob", c.speech.silence_prob);
  i("min_repeat", c.speech.min_repeat);
  i("max_repeat", c.speech.max_repeat);
  i("frame_hold", c.speech.frame_hold);
}

inline void write_split_text(const std::filesystem::path& path, const std::vector<Utterance>& split) {
  std::ofstream out(path);
  if (!out) throw io::FormatError("cannot write " + path.string());
  for (const auto& u : split) out << io::join_ints(u.x) << '\t' << io::join_ints(u.y) << '\n';
}

inline void write_split_speech(const std::filesystem::path& path, const std::vector<Utterance>& split, int d_feat) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io::FormatError("cannot write " + path.string());
  io::write_pod(out, static_cast<std::uint32_t>(split.size()));
  io::write_pod(out, static_cast<std::uint32_t>(d_feat));
  for (const auto& u : split) io::write_pod(out, static_cast<std::uint32_t>(u.speech.rows()));
  for (const auto& u : split) {
    out.write(reinterpret_cast<const char*>(u.speech.data()),
              static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(u.speech.size())));
  }
}

inline std::vector<Utterance> read_split_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io::FormatError("cannot open " + path.string());
  std::vector<Utterance> split;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab_pos = line.find('\t');
    if (tab_pos == std::string::npos) throw io::FormatError(path.string() + ": record without a tab separator");
    Utterance u;
    u.x = io::split_ints(line.substr(0, tab_pos));
    u.y = io::split_ints(line.substr(tab_pos + 1));
    split.push_back(std::move(u));
  }
  return split;
}

inline void read_split_speech(const std::filesystem::path& path, std::vector<Utterance>& split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io::FormatError("cannot open " + path.string());
  const auto n = io::read_pod<std::uint32_t>(in);
  const auto d = io::read_pod<std::uint32_t>(in);
  if (n != split.size()) throw io::FormatError(path.string() + ": utterance count differs from the text file");
  std::vector<std::uint32_t> frames(n);
  for (auto& f : frames) f = io::read_pod<std::uint32_t>(in);
  for (std::size_t i = 0; i < n; ++i) {
    split[i].speech.resize(frames[i], d);
    in.read(reinterpret_cast<char*>(split[i].speech.data()),
            static_cast<std::streamsize>(sizeof(float) * frames[i] * d));
    if (!in) throw io::FormatError(path.string() + ": truncated speech payload");
  }
}

inline void write_corpus(const CorpusBundle& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "corpus.manifest");
    if (!out) throw io::FormatError("cannot write " + (dir / "corpus.manifest").string());
    out << "seed = " << b.seed << '\n';
    io::write_key_values(out, corpus_config_kv(b.config));
  }
  const std::vector<std::pair<std::string, const std::vector<Utterance>*>> splits = {
      {"asr", &b.asr}, {"mt", &b.mt}, {"st_train", &b.st_train}, {"st_dev", &b.st_dev}, {"st_test", &b.st_test}};
  for (const auto& [name, split] : splits) {
    write_split_text(dir / (name + ".txt"), *split);
    if (name != "mt") write_split_speech(dir / (name + ".speech.bin"), *split, b.config.speech.d_feat);
  }
}

inline CorpusBundle read_corpus(const std::filesystem::path& dir) {
  std::map<std::string, std::string> kv;
  for (auto& [k, v] : io::read_key_values((dir / "corpus.manifest").string())) kv[k] = v;
  auto get = [&](const std::string& k) {
    auto it = kv.find(k);
    if (it == kv.end()) throw io::FormatError("corpus.manifest: missing key " + k);
    return it->second;
  };
  for (const auto& [k, v] : corpus_config_kv(CorpusConfig{})) get(k);
  CorpusBundle b;
  b.seed = io::parse_u64(get("seed"), "seed");
  CorpusConfig& c = b.config;
  update_corpus_config(c, kv);
  b.vocab = make_vocab(c.n_source, c.n_target, derive_seed(b.seed, 1));
  b.templates = make_templates(b.vocab, c.speech.d_feat, derive_seed(b.seed, 2));
  b.asr = read_split_text(dir / "asr.txt");
  b.mt = read_split_text(dir / "mt.txt");
  b.st_train = read_split_text(dir / "st_train.txt");
  b.st_dev = read_split_text(dir / "st_dev.txt");
  b.st_test = read_split_text(dir / "st_test.txt");
  read_split_speech(dir / "asr.speech.bin", b.asr);
  read_split_speech(dir / "st_train.speech.bin", b.st_train);
  read_split_speech(dir / "st_dev.speech.bin", b.st_dev);
  read_split_speech(dir / "st_test.speech.bin", b.st_test);
  return b;
}

}  // namespace tab
