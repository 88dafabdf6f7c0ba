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

#include <map>
#include <stdexcept>
#include <string>

#include "tab/kv.hpp"
#include "tab/synthdata/vocab.hpp"

namespace tab {

struct ModelConfig {
  int d_feat = 16;
  int d_model = 64;
  int speech_layers = 2;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int heads = 4;
  int ffn_dim = 128;
  double dropout_pretrain = 0.1;
  double dropout_finetune = 0.15;
  int downsample = 4;  // product of the stride-2 convolutions
  int n_source = 40;   // source words; the CTC head adds one blank
  int target_size = 43;

  int ctc_size() const { return n_source + 1; }
  int blank() const { return n_source; }

  int conv_layers() const {
    int n = 0;
    for (int f = downsample; f > 1; f /= 2) ++n;
    return n;
  }

  void validate() const {
    if (d_model <= 0 || heads <= 0 || d_model % heads != 0) {
      throw std::invalid_argument("ModelConfig: d_model must be a positive multiple of heads");
    }
    if (!(dropout_pretrain >= 0.0 && dropout_pretrain < 1.0) || !(dropout_finetune >= 0.0 && dropout_finetune < 1.0)) {
      throw std::invalid_argument("ModelConfig: dropout must lie in [0, 1)");
    }
    if (downsample < 1 || (downsample & (downsample - 1)) != 0) {
      throw std::invalid_argument("ModelConfig: downsample must be a power of two");
    }
    if (n_source < 2 || target_size < 4 || d_feat < 1 || ffn_dim < 1) {
      throw std::invalid_argument("ModelConfig: invalid vocabulary or feature sizes");
    }
  }

  static ModelConfig for_vocab(const ExtendedVocab& v, int d_feat) {
    ModelConfig c;
    c.n_source = v.n_source;
    c.target_size = v.target_size();
    c.d_feat = d_feat;
    return c;
  }

  io::KeyValues to_kv(const std::string& prefix = "model.") const {
    return {
        {prefix + "d_feat", std::to_string(d_feat)},
        {prefix + "d_model", std::to_string(d_model)},
        {prefix + "speech_layers", std::to_string(speech_layers)},
        {prefix + "encoder_layers", std::to_string(encoder_layers)},
        {prefix + "decoder_layers", std::to_string(decoder_layers)},
        {prefix + "heads", std::to_string(heads)},
        {prefix + "ffn_dim", std::to_string(ffn_dim)},
        {prefix + "dropout_pretrain", io::format_double(dropout_pretrain)},
        {prefix + "dropout_finetune", io::format_double(dropout_finetune)},
        {prefix + "downsample", std::to_string(downsample)},
        {prefix + "n_source", std::to_string(n_source)},
        {prefix + "target_size", std::to_string(target_size)},
    };
  }

  // Reads the fields present in `kv`; absent keys keep their current value.
  void update_from(const std::map<std::string, std::string>& kv, const std::string& prefix = "model.") {
    auto i = [&](const char* k, int& dst) {
      if (auto it = kv.find(prefix + k); it != kv.end()) dst = static_cast<int>(io::parse_int(it->second, prefix + k));
    };
    auto d = [&](const char* k, double& dst) {
      if (auto it = kv.find(prefix + k); it != kv.end()) dst = io::parse_double(it->second, prefix + k);
    };
    i("d_feat", d_feat);
    i("d_model", d_model);
    i("speech_layers", speech_layers);
    i("encoder_layers", encoder_layers);
    i("decoder_layers", decoder_layers);
    i("heads", heads);
    i("ffn_dim", ffn_dim);
    d("dropout_pretrain", dropout_pretrain);
    d("dropout_finetune", dropout_finetune);
    i("downsample", downsample);
    i("n_source", n_source);
    i("target_size", target_size);
  }

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace tab
