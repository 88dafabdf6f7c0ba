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
#include <stdexcept>
#include <string>
#include <vector>

#include "tab/ctc/ctc.hpp"
#include "tab/diffcore/ops.hpp"
#include "tab/model/config.hpp"
#include "tab/synthdata/vocab.hpp"

// Parameter layout (names are stable; checkpoints depend on them):
//   speech.*   convolutional downsampler + self-attention stack  (ASR)
//   ctc.*      projection onto the extended source vocabulary    (ASR)
//   shared.*   source/target embeddings, text encoder, decoder   (MT)
namespace tab {

enum class ParamGroup { speech, ctc, shared };

inline const char* group_prefix(ParamGroup g) {
  switch (g) {
    case ParamGroup::speech: return "speech.";
    case ParamGroup::ctc: return "ctc.";
    case ParamGroup::shared: return "shared.";
  }
  return "";
}

inline bool in_group(const std::string& name, ParamGroup g) {
  return name.rfind(group_prefix(g), 0) == 0;
}

// Dropout stream and rate for one forward pass. A null stream means eval mode.
struct ForwardContext {
  Rng* rng = nullptr;
  double dropout = 0.0;

  double keep() const { return rng == nullptr ? 1.0 : 1.0 - dropout; }
};

template <typename T>
struct StModel {
  ModelConfig config;
  ParamSet<T> params;
};

namespace detail {

template <typename T>
void add_layer_norm(ParamSet<T>& ps, const std::string& p, int d) {
  ps.add_constant(p + ".g", 1, d, T(1));
  ps.add_zeros(p + ".b", 1, d);
}

template <typename T>
void add_attention(ParamSet<T>& ps, const std::string& p, int d) {
  for (const char* m : {"q", "k", "v", "o"}) {
    ps.add_xavier(p + ".w" + m, d, d);
    ps.add_zeros(p + ".b" + m, 1, d);
  }
}

template <typename T>
void add_ffn(ParamSet<T>& ps, const std::string& p, int d, int ffn) {
  ps.add_xavier(p + ".w1", d, ffn);
  ps.add_zeros(p + ".b1", 1, ffn);
  ps.add_xavier(p + ".w2", ffn, d);
  ps.add_zeros(p + ".b2", 1, d);
}

}  // namespace detail

template <typename T>
void init_speech_params(ParamSet<T>& ps, const ModelConfig& c) {
  int in = c.d_feat;
  for (int i = 0; i < c.conv_layers(); ++i) {
    const std::string p = "speech.conv" + std::to_string(i);
    ps.add_xavier(p + ".w", 3 * in, c.d_model);
    ps.add_zeros(p + ".b", 1, c.d_model);
    in = c.d_model;
  }
  if (c.conv_layers() == 0) {
    ps.add_xavier("speech.input.w", c.d_feat, c.d_model);
    ps.add_zeros("speech.input.b", 1, c.d_model);
  }
  for (int l = 0; l < c.speech_layers; ++l) {
    const std::string p = "speech.layer" + std::to_string(l);
    detail::add_layer_norm(ps, p + ".ln1", c.d_model);
    detail::add_attention(ps, p + ".attn", c.d_model);
    detail::add_layer_norm(ps, p + ".ln2", c.d_model);
    detail::add_ffn(ps, p + ".ffn", c.d_model, c.ffn_dim);
  }
  detail::add_layer_norm(ps, "speech.ln_f", c.d_model);
}

template <typename T>
void init_ctc_params(ParamSet<T>& ps, const ModelConfig& c) {
  ps.add_xavier("ctc.w", c.d_model, c.ctc_size());
  ps.add_zeros("ctc.b", 1, c.ctc_size());
}

template <typename T>
void init_shared_params(ParamSet<T>& ps, const ModelConfig& c) {
  ps.add_normal("shared.src_embed", c.n_source, c.d_model, 1.0);
  ps.add_normal("shared.tgt_embed", c.target_size, c.d_model, 1.0);
  for (int l = 0; l < c.encoder_layers; ++l) {
    const std::string p = "shared.enc.layer" + std::to_string(l);
    detail::add_layer_norm(ps, p + ".ln1", c.d_model);
    detail::add_attention(ps, p + ".attn", c.d_model);
    detail::add_layer_norm(ps, p + ".ln2", c.d_model);
    detail::add_ffn(ps, p + ".ffn", c.d_model, c.ffn_dim);
  }
  detail::add_layer_norm(ps, "shared.enc.ln_f", c.d_model);
  for (int l = 0; l < c.decoder_layers; ++l) {
    const std::string p = "shared.dec.layer" + std::to_string(l);
    detail::add_layer_norm(ps, p + ".ln1", c.d_model);
    detail::add_attention(ps, p + ".self", c.d_model);
    detail::add_layer_norm(ps, p + ".ln2", c.d_model);
    detail::add_attention(ps, p + ".cross", c.d_model);
    detail::add_layer_norm(ps, p + ".ln3", c.d_model);
    detail::add_ffn(ps, p + ".ffn", c.d_model, c.ffn_dim);
  }
  detail::add_layer_norm(ps, "shared.dec.ln_f", c.d_model);
  ps.add_xavier("shared.out.w", c.d_model, c.target_size);
  ps.add_zeros("shared.out.b", 1, c.target_size);
}

// Fresh model with every group initialized from `seed`.
template <typename T>
StModel<T> make_model(const ModelConfig& c, std::uint64_t seed) {
  c.validate();
  StModel<T> m{c, ParamSet<T>(seed)};
  init_speech_params(m.params, c);
  init_ctc_params(m.params, c);
  init_shared_params(m.params, c);
  return m;
}

template <typename T>
Tensor2D<T> positional_encoding(Index n, Index d) {
  Tensor2D<T> pe(n, d);
  for (Index pos = 0; pos < n; ++pos) {
    for (Index i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double a = static_cast<double>(pos) * rate;
      pe(pos, i) = static_cast<T>(i % 2 == 0 ? std::sin(a) : std::cos(a));
    }
  }
  return pe;
}

namespace detail {

template <typename T>
Var<T> p(Graph<T>& g, ParamSet<T>& ps, const std::string& name) {
  return g.param(ps.at(name));
}

template <typename T>
Var<T> layer_norm(Graph<T>& g, ParamSet<T>& ps, const std::string& pre, const Var<T>& x) {
  return ops::layer_norm(x, p(g, ps, pre + ".g"), p(g, ps, pre + ".b"));
}

template <typename T>
Var<T> attention(Graph<T>& g, ParamSet<T>& ps, const std::string& pre, const Var<T>& query, const Var<T>& kv,
                 int heads, bool causal) {
  Var<T> q = ops::linear(query, p(g, ps, pre + ".wq"), p(g, ps, pre + ".bq"));
  Var<T> k = ops::linear(kv, p(g, ps, pre + ".wk"), p(g, ps, pre + ".bk"));
  Var<T> v = ops::linear(kv, p(g, ps, pre + ".wv"), p(g, ps, pre + ".bv"));
  Var<T> a = ops::attention(q, k, v, heads, causal);
  return ops::linear(a, p(g, ps, pre + ".wo"), p(g, ps, pre + ".bo"));
}

template <typename T>
Var<T> ffn(Graph<T>& g, ParamSet<T>& ps, const std::string& pre, const Var<T>& x, const ForwardContext& ctx) {
  Var<T> h = ops::relu(ops::linear(x, p(g, ps, pre + ".w1"), p(g, ps, pre + ".b1")));
  h = ops::dropout(h, ctx.keep(), ctx.rng);
  return ops::linear(h, p(g, ps, pre + ".w2"), p(g, ps, pre + ".b2"));
}

// Pre-norm encoder block.
template <typename T>
Var<T> encoder_layer(Graph<T>& g, ParamSet<T>& ps, const std::string& pre, Var<T> x, int heads,
                     const ForwardContext& ctx) {
  Var<T> h = layer_norm(g, ps, pre + ".ln1", x);
  h = attention(g, ps, pre + ".attn", h, h, heads, false);
  x = ops::add(x, ops::dropout(h, ctx.keep(), ctx.rng));
  h = ffn(g, ps, pre + ".ffn", layer_norm(g, ps, pre + ".ln2", x), ctx);
  return ops::add(x, ops::dropout(h, ctx.keep(), ctx.rng));
}

template <typename T>
Var<T> decoder_layer(Graph<T>& g, ParamSet<T>& ps, const std::string& pre, Var<T> x, const Var<T>& memory,
                     int heads, const ForwardContext& ctx) {
  Var<T> h = layer_norm(g, ps, pre + ".ln1", x);
  h = attention(g, ps, pre + ".self", h, h, heads, true);
  x = ops::add(x, ops::dropout(h, ctx.keep(), ctx.rng));
  h = attention(g, ps, pre + ".cross", layer_norm(g, ps, pre + ".ln2", x), memory, heads, false);
  x = ops::add(x, ops::dropout(h, ctx.keep(), ctx.rng));
  h = ffn(g, ps, pre + ".ffn", layer_norm(g, ps, pre + ".ln3", x), ctx);
  return ops::add(x, ops::dropout(h, ctx.keep(), ctx.rng));
}

template <typename T>
Var<T> add_positions(Graph<T>& g, const Var<T>& x) {
  return ops::add(x, g.constant(positional_encoding<T>(x.rows(), x.cols())));
}

}  // namespace detail

// Speech encoder: stride-2 convolutions (kernel 3) then self-attention
// layers. Output has ceil(T / downsample) rows of width d_model.
template <typename T>
Var<T> encode_speech(Graph<T>& g, StModel<T>& m, const Tensor2D<float>& speech, const ForwardContext& ctx) {
  const ModelConfig& c = m.config;
  if (speech.rows() < c.downsample) {
    throw std::invalid_argument("encode_speech: need at least " + std::to_string(c.downsample) + " frames, got " +
                                std::to_string(speech.rows()));
  }
  if (speech.cols() != c.d_feat) throw_shape("encode_speech", shape_str(speech), "d_feat=" + std::to_string(c.d_feat));
  auto& ps = m.params;
  Var<T> x = g.constant(speech.template cast<T>());
  for (int i = 0; i < c.conv_layers(); ++i) {
    const std::string pre = "speech.conv" + std::to_string(i);
    x = ops::frames_unfold(x, 3, 2, 1);
    x = ops::relu(ops::linear(x, detail::p(g, ps, pre + ".w"), detail::p(g, ps, pre + ".b")));
  }
  if (c.conv_layers() == 0) {
    x = ops::linear(x, detail::p(g, ps, std::string("speech.input.w")), detail::p(g, ps, std::string("speech.input.b")));
  }
  x = ops::dropout(detail::add_positions(g, x), ctx.keep(), ctx.rng);
  for (int l = 0; l < c.speech_layers; ++l) {
    x = detail::encoder_layer(g, ps, "speech.layer" + std::to_string(l), x, c.heads, ctx);
  }
  return detail::layer_norm(g, ps, std::string("speech.ln_f"), x);
}

template <typename T>
Var<T> ctc_head(Graph<T>& g, StModel<T>& m, const Var<T>& h) {
  return ctc_project(h, g.param(m.params.at("ctc.w")), g.param(m.params.at("ctc.b")));
}

template <typename T>
Var<T> source_embedding_table(Graph<T>& g, StModel<T>& m) {
  return g.param(m.params.at("shared.src_embed"));
}

template <typename T>
Var<T> embed_source(Graph<T>& g, StModel<T>& m, const std::vector<int>& x) {
  if (x.empty()) throw std::invalid_argument("embed_source: empty transcript");
  return ops::embedding(source_embedding_table(g, m), x);
}

// Text encoder of the shared transformer. Accepts the shrunk speech branch,
// the auxiliary branch or embedded text.
template <typename T>
Var<T> encode_shared(Graph<T>& g, StModel<T>& m, const Var<T>& seq, const ForwardContext& ctx) {
  const ModelConfig& c = m.config;
  if (seq.cols() != c.d_model || seq.rows() == 0) throw_shape("encode_shared", shape_str(seq.value()), "d_model");
  Var<T> x = ops::dropout(detail::add_positions(g, seq), ctx.keep(), ctx.rng);
  for (int l = 0; l < c.encoder_layers; ++l) {
    x = detail::encoder_layer(g, m.params, "shared.enc.layer" + std::to_string(l), x, c.heads, ctx);
  }
  return detail::layer_norm(g, m.params, std::string("shared.enc.ln_f"), x);
}

// Teacher-forced decoder: row j is log p(. | prefix[0..j], memory).
template <typename T>
Var<T> decode(Graph<T>& g, StModel<T>& m, const std::vector<int>& prefix, const Var<T>& memory,
              const ForwardContext& ctx) {
  if (prefix.empty()) throw std::invalid_argument("decode: empty target prefix");
  const ModelConfig& c = m.config;
  auto& ps = m.params;
  Var<T> x = ops::embedding(g.param(ps.at("shared.tgt_embed")), prefix);
  x = ops::dropout(detail::add_positions(g, x), ctx.keep(), ctx.rng);
  for (int l = 0; l < c.decoder_layers; ++l) {
    x = detail::decoder_layer(g, ps, "shared.dec.layer" + std::to_string(l), x, memory, c.heads, ctx);
  }
  x = detail::layer_norm(g, ps, std::string("shared.dec.ln_f"), x);
  return ops::log_softmax(ops::linear(x, g.param(ps.at("shared.out.w")), g.param(ps.at("shared.out.b"))));
}

// Decoder input/output for a target y: [bos] + y and y + [eos].
inline std::vector<int> decoder_input(const std::vector<int>& y) {
  std::vector<int> in;
  in.reserve(y.size() + 1);
  in.push_back(ExtendedVocab::kBos);
  in.insert(in.end(), y.begin(), y.end());
  return in;
}

inline std::vector<int> decoder_target(const std::vector<int>& y) {
  std::vector<int> out(y.begin(), y.end());
  out.push_back(ExtendedVocab::kEos);
  return out;
}

struct TransferReport {
  std::vector<std::string> tensors;  // every tensor copied into the new model
  std::size_t from_asr = 0;
  std::size_t from_mt = 0;
};

struct TransferError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Builds the ST model: speech.* and ctc.* from the ASR parameters, shared.*
// (including the embedding used by Copy & Replace) from the MT parameters.
template <typename T>
StModel<T> init_from_pretrained(const ModelConfig& c, const ParamSet<T>& asr, const ParamSet<T>& mt,
                                TransferReport* report = nullptr, std::uint64_t seed = 0) {
  StModel<T> fresh = make_model<T>(c, seed);
  StModel<T> out{c, ParamSet<T>(seed)};
  TransferReport rep;
  for (const auto& [name, param] : fresh.params) {
    const bool from_mt = in_group(name, ParamGroup::shared);
    const ParamSet<T>& src = from_mt ? mt : asr;
    if (!src.contains(name)) {
      throw TransferError("init_from_pretrained: " + std::string(from_mt ? "MT" : "ASR") +
                          " parameters lack tensor '" + name + "'");
    }
    const auto& v = src.at(name).value;
    if (v.rows() != param.value.rows() || v.cols() != param.value.cols()) {
      throw TransferError("init_from_pretrained: tensor '" + name + "' has shape " + shape_str(v) + ", expected " +
                          shape_str(param.value));
    }
    out.params.add(name, v);
    rep.tensors.push_back(name);
    (from_mt ? rep.from_mt : rep.from_asr) += 1;
  }
  if (report != nullptr) *report = std::move(rep);
  return out;
}

// Parameters of one group only (what a pre-training stage produces).
template <typename T>
ParamSet<T> extract_group(const ParamSet<T>& ps, std::initializer_list<ParamGroup> groups) {
  ParamSet<T> out(ps.seed());
  for (const auto& [name, p] : ps) {
    for (ParamGroup gr : groups) {
      if (in_group(name, gr)) {
        out.add(name, p.value);
        break;
      }
    }
  }
  return out;
}

}  // namespace tab
