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
#include <map>
#include <stdexcept>
#include <string>

#include "tab/diffcore/param_set.hpp"

namespace tab {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  struct Moments {
    Tensor2D<T> m;
    Tensor2D<T> v;
  };
  std::map<std::string, Moments> moments;
  long step = 0;
};

enum class StepStatus { ok, non_finite_gradient };

// Adam with bias correction, reading the gradients accumulated in `params`.
// A non-finite gradient aborts the step and leaves parameters and state
// untouched.
template <typename T>
StepStatus adam_step(ParamSet<T>& params, AdamState<T>& state, const AdamConfig& cfg, double lr) {
  for (const auto& [name, p] : params) {
    if (!p.grad.allFinite()) return StepStatus::non_finite_gradient;
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T step_size = static_cast<T>(lr / bc1);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);
  const T eps = static_cast<T>(cfg.eps);
  for (auto& [name, p] : params) {
    auto it = state.moments.find(name);
    if (it == state.moments.end()) {
      it = state.moments
               .emplace(name, typename AdamState<T>::Moments{Tensor2D<T>::Zero(p.value.rows(), p.value.cols()),
                                                            Tensor2D<T>::Zero(p.value.rows(), p.value.cols())})
               .first;
    }
    auto& mo = it->second;
    if (mo.m.rows() != p.value.rows() || mo.m.cols() != p.value.cols()) {
      throw std::invalid_argument("adam_step: optimizer state shape differs for '" + name + "'");
    }
    mo.m = b1 * mo.m + (T(1) - b1) * p.grad;
    mo.v = b2 * mo.v + (T(1) - b2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= step_size * mo.m.array() / ((mo.v.array() * inv_bc2).sqrt() + eps);
  }
  return StepStatus::ok;
}

enum class Schedule { inverse_sqrt, constant };

// Linear warmup to `peak` at step `warmup`, then peak * sqrt(warmup / step)
// (or flat for Schedule::constant). Steps count from 1.
inline double lr_at(long step, double peak, long warmup, Schedule schedule = Schedule::inverse_sqrt) {
  if (step < 1) throw std::invalid_argument("lr_at: step must be >= 1");
  if (warmup < 1) throw std::invalid_argument("lr_at: warmup must be >= 1");
  if (step <= warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  if (schedule == Schedule::constant) return peak;
  return peak * std::sqrt(static_cast<double>(warmup) / static_cast<double>(step));
}

}  // namespace tab
