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
#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "tab/diffcore/graph.hpp"
#include "tab/rng.hpp"

namespace tab {

struct ParamCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double tol = 0.0;
  bool passed = true;

  double worst() const {
    double w = 0.0;
    for (const auto& p : params) w = std::max(w, p.max_rel_error);
    return w;
  }
};

inline std::ostream& operator<<(std::ostream& os, const GradCheckReport& r) {
  for (const auto& p : r.params) {
    os << "  " << p.name << ": max_rel_error=" << p.max_rel_error << " (" << p.checked << " entries)\n";
  }
  os << (r.passed ? "PASS" : "FAIL") << " tol=" << r.tol << " worst=" << r.worst() << '\n';
  return os;
}

struct NonDeterministicBuilder : std::logic_error {
  using std::logic_error::logic_error;
};

struct GradCheckOptions {
  // Entries checked per parameter; 0 checks all of them.
  std::size_t max_entries_per_param = 0;
  // Relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  std::uint64_t sample_seed = 7;
};

// Compares the analytic gradient of `builder`'s scalar output with central
// finite differences. The builder must construct the whole loss from scratch
// on the graph it is given and be deterministic (dropout streams re-seeded
// on every call).
template <typename T>
GradCheckReport grad_check(const std::function<Var<T>(Graph<T>&)>& builder, ParamSet<T>& params,
                           double eps, double tol, const GradCheckOptions& opts = {}) {
  auto evaluate = [&]() {
    Graph<T> g;
    g.set_grad_enabled(false);
    return static_cast<double>(builder(g).scalar());
  };

  params.zero_grad();
  {
    Graph<T> g;
    Var<T> loss = builder(g);
    Graph<T> g2;
    Var<T> loss2 = builder(g2);
    if (loss.scalar() != loss2.scalar()) {
      throw NonDeterministicBuilder("grad_check: two forward passes of the builder differ");
    }
    g.backward(loss);
  }

  GradCheckReport report;
  report.tol = tol;
  Rng pick(opts.sample_seed);
  for (auto& [name, p] : params) {
    ParamCheck pc;
    pc.name = name;
    std::vector<Index> entries(static_cast<std::size_t>(p.value.size()));
    for (Index i = 0; i < p.value.size(); ++i) entries[static_cast<std::size_t>(i)] = i;
    if (opts.max_entries_per_param != 0 && entries.size() > opts.max_entries_per_param) {
      std::shuffle(entries.begin(), entries.end(), pick);
      entries.resize(opts.max_entries_per_param);
    }
    for (Index i : entries) {
      const T orig = p.value.data()[i];
      p.value.data()[i] = orig + static_cast<T>(eps);
      const double up = evaluate();
      p.value.data()[i] = orig - static_cast<T>(eps);
      const double down = evaluate();
      p.value.data()[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = static_cast<double>(p.grad.data()[i]);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), opts.floor});
      pc.max_rel_error = std::max(pc.max_rel_error, std::abs(analytic - numeric) / denom);
      ++pc.checked;
    }
    if (!(pc.max_rel_error < tol)) report.passed = false;
    report.params.push_back(std::move(pc));
  }
  return report;
}

}  // namespace tab
