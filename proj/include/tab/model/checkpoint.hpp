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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tab/diffcore/param_set.hpp"
#include "tab/kv.hpp"
#include "tab/model/config.hpp"

// Checkpoint file: a text manifest terminated by a line "end_manifest",
// followed by the raw little-endian payload of every tensor in manifest
// order.
//
//   format = tab-checkpoint-1
//   seed = 17
//   model.d_model = 64
//   ...
//   meta.<key> = <value>
//   tensor = <name> <rows> <cols> <f32|f64>
//   end_manifest
namespace tab {

enum class DType { f32, f64 };

inline const char* dtype_name(DType d) { return d == DType::f32 ? "f32" : "f64"; }

inline DType parse_dtype(const std::string& s) {
  if (s == "f32") return DType::f32;
  if (s == "f64") return DType::f64;
  throw io::FormatError("unknown dtype '" + s + "'");
}

struct TensorEntry {
  std::string name;
  Index rows = 0;
  Index cols = 0;
  DType dtype = DType::f32;
  bool operator==(const TensorEntry&) const = default;
};

template <typename T>
struct Checkpoint {
  ModelConfig config;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> meta;
  ParamSet<T> params;

  std::vector<TensorEntry> manifest(DType dtype) const {
    std::vector<TensorEntry> m;
    for (const auto& [name, p] : params) m.push_back({name, p.value.rows(), p.value.cols(), dtype});
    return m;
  }
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Checkpoint<T>& ck, DType dtype = DType::f32) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io::FormatError("cannot write checkpoint " + path.string());
  out << "format = tab-checkpoint-1\n";
  out << "seed = " << ck.seed << '\n';
  io::write_key_values(out, ck.config.to_kv());
  for (const auto& [k, v] : ck.meta) out << "meta." << k << " = " << v << '\n';
  for (const auto& e : ck.manifest(dtype)) {
    out << "tensor = " << e.name << ' ' << e.rows << ' ' << e.cols << ' ' << dtype_name(e.dtype) << '\n';
  }
  out << "end_manifest\n";
  for (const auto& [name, p] : ck.params) {
    for (Index i = 0; i < p.value.size(); ++i) {
      if (dtype == DType::f32) {
        io::write_pod(out, static_cast<float>(p.value.data()[i]));
      } else {
        io::write_pod(out, static_cast<double>(p.value.data()[i]));
      }
    }
  }
  if (!out) throw io::FormatError("failed writing checkpoint " + path.string());
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io::FormatError("cannot open checkpoint " + path.string());
  const io::KeyValues kv = io::parse_key_values(in, path.string(), "end_manifest");
  std::map<std::string, std::string> fields;
  std::vector<TensorEntry> entries;
  Checkpoint<T> ck;
  for (const auto& [k, v] : kv) {
    if (k == "tensor") {
      std::istringstream is(v);
      TensorEntry e;
      std::string dt;
      if (!(is >> e.name >> e.rows >> e.cols >> dt)) throw io::FormatError(path.string() + ": malformed tensor line");
      e.dtype = parse_dtype(dt);
      entries.push_back(e);
    } else if (k.rfind("meta.", 0) == 0) {
      ck.meta[k.substr(5)] = v;
    } else {
      fields[k] = v;
    }
  }
  if (fields["format"] != "tab-checkpoint-1") throw io::FormatError(path.string() + ": not a tab checkpoint");
  if (!fields.count("seed")) throw io::FormatError(path.string() + ": missing seed");
  ck.seed = io::parse_u64(fields.at("seed"), "seed");
  ck.config.update_from(fields);
  ck.params = ParamSet<T>(ck.seed);
  for (const auto& e : entries) {
    Tensor2D<T> m(e.rows, e.cols);
    for (Index i = 0; i < m.size(); ++i) {
      m.data()[i] = e.dtype == DType::f32 ? static_cast<T>(io::read_pod<float>(in))
                                          : static_cast<T>(io::read_pod<double>(in));
    }
    ck.params.add(e.name, std::move(m));
  }
  return ck;
}

struct ManifestMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Element-wise mean of every tensor. All inputs must share names and shapes.
template <typename T>
ParamSet<T> average_params(const std::vector<const ParamSet<T>*>& sets) {
  if (sets.empty()) throw std::invalid_argument("average_checkpoints: nothing to average");
  const ParamSet<T>& first = *sets.front();
  for (const auto* s : sets) {
    if (s->names() != first.names()) throw ManifestMismatch("average_checkpoints: tensor names differ");
    for (const auto& [name, p] : *s) {
      const auto& f = first.at(name).value;
      if (p.value.rows() != f.rows() || p.value.cols() != f.cols()) {
        throw ManifestMismatch("average_checkpoints: tensor '" + name + "' has different shapes");
      }
    }
  }
  ParamSet<T> out(first.seed());
  for (const auto& [name, p] : first) {
    Tensor2D<T> acc = Tensor2D<T>::Zero(p.value.rows(), p.value.cols());
    for (const auto* s : sets) acc += s->at(name).value;
    acc /= static_cast<T>(sets.size());
    out.add(name, std::move(acc));
  }
  return out;
}

template <typename T>
Checkpoint<T> average_checkpoints(const std::vector<Checkpoint<T>>& cks) {
  if (cks.empty()) throw std::invalid_argument("average_checkpoints: nothing to average");
  std::vector<const ParamSet<T>*> sets;
  for (const auto& c : cks) {
    if (!(c.config == cks.front().config)) throw ManifestMismatch("average_checkpoints: model configs differ");
    sets.push_back(&c.params);
  }
  Checkpoint<T> out;
  out.config = cks.front().config;
  out.seed = cks.front().seed;
  out.meta = cks.front().meta;
  out.meta["averaged"] = std::to_string(cks.size());
  out.params = average_params(sets);
  return out;
}

}  // namespace tab
