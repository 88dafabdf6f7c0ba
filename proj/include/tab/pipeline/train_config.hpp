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
#include <type_traits>

#include "tab/branch/branch.hpp"
#include "tab/kv.hpp"
#include "tab/objectives/objectives.hpp"
#include "tab/pipeline/optim.hpp"

namespace tab {

enum class Stage { asr, mt, st };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::asr: return "asr";
    case Stage::mt: return "mt";
    case Stage::st: return "st";
  }
  return "st";
}

inline Stage parse_stage(const std::string& s) {
  if (s == "asr") return Stage::asr;
  if (s == "mt") return Stage::mt;
  if (s == "st") return Stage::st;
  throw std::invalid_argument("unknown stage '" + s + "'");
}

inline const char* to_string(Schedule s) { return s == Schedule::constant ? "constant" : "inverse_sqrt"; }

inline Schedule parse_schedule(const std::string& s) {
  if (s == "inverse_sqrt") return Schedule::inverse_sqrt;
  if (s == "constant") return Schedule::constant;
  throw std::invalid_argument("unknown schedule '" + s + "'");
}

inline const char* to_string(ConsistencyFlow f) {
  switch (f) {
    case ConsistencyFlow::both: return "both";
    case ConsistencyFlow::stop_orig: return "stop_orig";
    case ConsistencyFlow::stop_aux: return "stop_aux";
  }
  return "both";
}

inline ConsistencyFlow parse_flow(const std::string& s) {
  if (s == "both") return ConsistencyFlow::both;
  if (s == "stop_orig") return ConsistencyFlow::stop_orig;
  if (s == "stop_aux") return ConsistencyFlow::stop_aux;
  throw std::invalid_argument("unknown consistency flow '" + s + "'");
}

// "dynamic" or a fixed probability.
inline std::string format_p_star(const ReplacePolicy& p) {
  return p.mode == ReplaceMode::dynamic ? std::string("dynamic") : io::format_double(p.fixed_p);
}

inline void parse_p_star(const std::string& s, ReplacePolicy& p) {
  if (s == "dynamic") {
    p.mode = ReplaceMode::dynamic;
    return;
  }
  p.mode = ReplaceMode::fixed;
  p.fixed_p = io::parse_double(s, "p_star");
}

struct TrainConfig {
  Stage stage = Stage::st;
  AdamConfig adam;
  double peak_lr = 1e-3;
  long warmup = 400;
  Schedule schedule = Schedule::inverse_sqrt;
  double lambda = 0.3;
  double alpha = 1.0;
  ReplacePolicy policy;
  DivergenceKind divergence = DivergenceKind::bi_kl;
  ConsistencyFlow flow = ConsistencyFlow::both;
  double label_smoothing = 0.1;
  int patience = 10;
  int max_epochs = 60;
  int batch_size = 32;
  bool single_branch = false;
  bool gold_token_uncertainty = false;
  double upsilon_smoothing = 0.0;
  int average_best = 3;
  // Dev utterances scored per epoch; 0 uses the whole split.
  int dev_limit = 0;
  int beam = 5;

  static TrainConfig defaults(Stage s) {
    TrainConfig c;
    c.stage = s;
    c.adam.beta2 = s == Stage::mt ? 0.997 : 0.98;
    // Desk-scale epoch caps; both pre-training stages plateau well before.
    if (s == Stage::asr) c.max_epochs = 15;
    if (s == Stage::mt) c.max_epochs = 10;
    if (s == Stage::st) {
      c.peak_lr = 2e-3;
      c.warmup = 100;
      c.max_epochs = 100;
    }
    return c;
  }

  // Full-scale values: lr 7e-4, warmup 4000, patience 20, best 10 averaged.
  static TrainConfig full_scale(Stage s) {
    TrainConfig c = defaults(s);
    c.peak_lr = 7e-4;
    c.warmup = 4000;
    c.patience = 20;
    c.average_best = 10;
    return c;
  }

  void validate() const {
    if (warmup < 1) throw std::invalid_argument("TrainConfig: warmup must be >= 1");
    if (patience < 1) throw std::invalid_argument("TrainConfig: patience must be >= 1");
    if (!(alpha >= 0.0)) throw std::invalid_argument("TrainConfig: alpha must be >= 0");
    if (!(lambda >= 0.0)) throw std::invalid_argument("TrainConfig: lambda must be >= 0");
    if (!(peak_lr > 0.0)) throw std::invalid_argument("TrainConfig: peak_lr must be > 0");
    if (max_epochs < 1 || batch_size < 1 || average_best < 1 || beam < 1 || dev_limit < 0) {
      throw std::invalid_argument("TrainConfig: max_epochs, batch_size, average_best and beam must be >= 1");
    }
    if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
      throw std::invalid_argument("TrainConfig: label_smoothing must lie in [0, 1)");
    }
    if (!(upsilon_smoothing >= 0.0 && upsilon_smoothing < 1.0)) {
      throw std::invalid_argument("TrainConfig: upsilon_smoothing must lie in [0, 1)");
    }
    if (policy.mode == ReplaceMode::fixed && !(policy.fixed_p >= 0.0 && policy.fixed_p <= 1.0)) {
      throw std::invalid_argument("TrainConfig: p_star must lie in [0, 1]");
    }
    if (!(policy.gamma >= 0.0)) throw std::invalid_argument("TrainConfig: gamma must be >= 0");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 && adam.eps > 0.0)) {
      throw std::invalid_argument("TrainConfig: invalid Adam hyperparameters");
    }
  }

  io::KeyValues to_kv(const std::string& prefix) const {
    return {
        {prefix + "beta1", io::format_double(adam.beta1)},
        {prefix + "beta2", io::format_double(adam.beta2)},
        {prefix + "adam_eps", io::format_double(adam.eps)},
        {prefix + "peak_lr", io::format_double(peak_lr)},
        {prefix + "warmup", std::to_string(warmup)},
        {prefix + "schedule", to_string(schedule)},
        {prefix + "lambda", io::format_double(lambda)},
        {prefix + "alpha", io::format_double(alpha)},
        {prefix + "p_star", format_p_star(policy)},
        {prefix + "gamma", io::format_double(policy.gamma)},
        {prefix + "divergence", std::string(to_string(divergence))},
        {prefix + "consistency_flow", to_string(flow)},
        {prefix + "label_smoothing", io::format_double(label_smoothing)},
        {prefix + "patience", std::to_string(patience)},
        {prefix + "max_epochs", std::to_string(max_epochs)},
        {prefix + "batch_size", std::to_string(batch_size)},
        {prefix + "single_branch", single_branch ? "true" : "false"},
        {prefix + "uncertainty", gold_token_uncertainty ? "gold_token" : "entropy"},
        {prefix + "upsilon_smoothing", io::format_double(upsilon_smoothing)},
        {prefix + "average_best", std::to_string(average_best)},
        {prefix + "dev_limit", std::to_string(dev_limit)},
        {prefix + "beam", std::to_string(beam)},
    };
  }

  // Reads the fields present in `kv`; absent keys keep their current value.
  void update_from(const std::map<std::string, std::string>& kv, const std::string& prefix) {
    auto get = [&](const char* k) -> const std::string* {
      auto it = kv.find(prefix + k);
      return it == kv.end() ? nullptr : &it->second;
    };
    auto d = [&](const char* k, double& dst) {
      if (auto* v = get(k)) dst = io::parse_double(*v, prefix + k);
    };
    auto i = [&](const char* k, auto& dst) {
      if (auto* v = get(k)) dst = static_cast<std::remove_reference_t<decltype(dst)>>(io::parse_int(*v, prefix + k));
    };
    d("beta1", adam.beta1);
    d("beta2", adam.beta2);
    d("adam_eps", adam.eps);
    d("peak_lr", peak_lr);
    i("warmup", warmup);
    if (auto* v = get("schedule")) schedule = parse_schedule(*v);
    d("lambda", lambda);
    d("alpha", alpha);
    if (auto* v = get("p_star")) parse_p_star(*v, policy);
    d("gamma", policy.gamma);
    if (auto* v = get("divergence")) divergence = parse_divergence(*v);
    if (auto* v = get("consistency_flow")) flow = parse_flow(*v);
    d("label_smoothing", label_smoothing);
    i("patience", patience);
    i("max_epochs", max_epochs);
    i("batch_size", batch_size);
    if (auto* v = get("single_branch")) single_branch = io::parse_bool(*v, prefix + "single_branch");
    if (auto* v = get("uncertainty")) {
      if (*v != "entropy" && *v != "gold_token") throw std::invalid_argument(prefix + "uncertainty: expected entropy or gold_token");
      gold_token_uncertainty = *v == "gold_token";
    }
    d("upsilon_smoothing", upsilon_smoothing);
    i("average_best", average_best);
    i("dev_limit", dev_limit);
    i("beam", beam);
  }
};

}  // namespace tab
