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
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "tab/diffcore/ops.hpp"

namespace tab {

// T x |V+| frame log-probabilities; every row is a normalized
// log-distribution over the extended vocabulary.
template <typename T>
using CtcPosterior = Tensor2D<T>;

// Maximal run of one label in a frame path, [start, end] inclusive.
struct Run {
  int label = 0;
  int start = 0;
  int end = 0;
  int length() const { return end - start + 1; }
  bool operator==(const Run&) const = default;
};

struct AlignmentPath {
  std::vector<int> labels;
  std::vector<Run> runs;
};

struct CtcInfeasible : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline std::vector<Run> runs_of(const std::vector<int>& labels) {
  std::vector<Run> runs;
  for (int t = 0; t < static_cast<int>(labels.size()); ++t) {
    if (runs.empty() || runs.back().label != labels[static_cast<std::size_t>(t)]) {
      runs.push_back({labels[static_cast<std::size_t>(t)], t, t});
    } else {
      runs.back().end = t;
    }
  }
  return runs;
}

// Merge repeats, then drop blanks.
inline std::vector<int> collapse_beta(const std::vector<int>& path, int blank) {
  std::vector<int> out;
  int prev = -1;
  for (int l : path) {
    if (l != prev && l != blank) out.push_back(l);
    prev = l;
  }
  return out;
}

// Frames needed to emit x: one per label plus one separating blank for every
// adjacent repeat.
inline int ctc_min_frames(const std::vector<int>& x) {
  int need = static_cast<int>(x.size());
  for (std::size_t i = 1; i < x.size(); ++i) need += x[i] == x[i - 1] ? 1 : 0;
  return need;
}

template <typename T>
AlignmentPath greedy_path(const CtcPosterior<T>& post) {
  AlignmentPath path;
  path.labels.resize(static_cast<std::size_t>(post.rows()));
  for (Index t = 0; t < post.rows(); ++t) {
    Index best = 0;
    for (Index k = 1; k < post.cols(); ++k) {
      if (post(t, k) > post(t, best)) best = k;  // strict: ties keep the smaller id
    }
    path.labels[static_cast<std::size_t>(t)] = static_cast<int>(best);
  }
  path.runs = runs_of(path.labels);
  return path;
}

template <typename T>
struct CtcResult {
  double loss = 0.0;
  // d loss / d log p(k | h_t), same shape as the posterior.
  Tensor2D<T> grad;
};

namespace detail {

inline double log_add(double a, double b) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace detail

// Negative log-likelihood of x summed over every alignment in beta^-1(x),
// via log-space forward-backward over the blank-interleaved target.
template <typename T>
CtcResult<T> ctc_forward_backward(const CtcPosterior<T>& logp, const std::vector<int>& x, int blank) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  const int frames = static_cast<int>(logp.rows());
  for (int l : x) {
    if (l == blank) throw std::invalid_argument("ctc_loss: target contains the blank id");
    if (l < 0 || l >= logp.cols()) throw std::out_of_range("ctc_loss: target id outside vocabulary");
  }
  if (blank < 0 || blank >= logp.cols()) throw std::out_of_range("ctc_loss: blank id outside vocabulary");
  if (ctc_min_frames(x) > frames || frames == 0) {
    std::ostringstream os;
    os << "ctc_loss: infeasible pair, T=" << frames << " frames cannot emit |x|=" << x.size()
       << " labels (needs " << ctc_min_frames(x) << ")";
    throw CtcInfeasible(os.str());
  }
  const int s_len = 2 * static_cast<int>(x.size()) + 1;
  std::vector<int> ext(static_cast<std::size_t>(s_len), blank);
  for (std::size_t i = 0; i < x.size(); ++i) ext[2 * i + 1] = x[i];
  auto can_skip = [&](int s) { return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]; };

  std::vector<double> alpha(static_cast<std::size_t>(frames * s_len), kNegInf);
  std::vector<double> beta(static_cast<std::size_t>(frames * s_len), kNegInf);
  auto A = [&](int t, int s) -> double& { return alpha[static_cast<std::size_t>(t * s_len + s)]; };
  auto B = [&](int t, int s) -> double& { return beta[static_cast<std::size_t>(t * s_len + s)]; };
  auto lp = [&](int t, int s) { return static_cast<double>(logp(t, ext[static_cast<std::size_t>(s)])); };

  A(0, 0) = lp(0, 0);
  if (s_len > 1) A(0, 1) = lp(0, 1);
  for (int t = 1; t < frames; ++t) {
    for (int s = 0; s < s_len; ++s) {
      double acc = A(t - 1, s);
      if (s >= 1) acc = detail::log_add(acc, A(t - 1, s - 1));
      if (can_skip(s)) acc = detail::log_add(acc, A(t - 1, s - 2));
      A(t, s) = acc == kNegInf ? kNegInf : acc + lp(t, s);
    }
  }
  B(frames - 1, s_len - 1) = lp(frames - 1, s_len - 1);
  if (s_len > 1) B(frames - 1, s_len - 2) = lp(frames - 1, s_len - 2);
  for (int t = frames - 2; t >= 0; --t) {
    for (int s = 0; s < s_len; ++s) {
      double acc = B(t + 1, s);
      if (s + 1 < s_len) acc = detail::log_add(acc, B(t + 1, s + 1));
      if (s + 2 < s_len && can_skip(s + 2)) acc = detail::log_add(acc, B(t + 1, s + 2));
      B(t, s) = acc == kNegInf ? kNegInf : acc + lp(t, s);
    }
  }
  double log_z = A(frames - 1, s_len - 1);
  if (s_len > 1) log_z = detail::log_add(log_z, A(frames - 1, s_len - 2));

  CtcResult<T> res;
  res.loss = -log_z;
  res.grad = Tensor2D<T>::Zero(logp.rows(), logp.cols());
  for (int t = 0; t < frames; ++t) {
    for (int s = 0; s < s_len; ++s) {
      const double a = A(t, s);
      const double b = B(t, s);
      if (a == kNegInf || b == kNegInf) continue;
      const double occ = std::exp(a + b - lp(t, s) - log_z);
      res.grad(t, ext[static_cast<std::size_t>(s)]) -= static_cast<T>(occ);
    }
  }
  return res;
}

template <typename T>
double ctc_loss(const CtcPosterior<T>& logp, const std::vector<int>& x, int blank) {
  return ctc_forward_backward(logp, x, blank).loss;
}

// Graph node: scalar CTC loss of a log-probability node. The backward uses
// the forward-backward occupancies directly.
template <typename T>
Var<T> ctc_loss(const Var<T>& logp, const std::vector<int>& x, int blank) {
  Graph<T>& g = *logp.graph();
  auto res = std::make_shared<CtcResult<T>>(ctc_forward_backward(logp.value(), x, blank));
  Tensor2D<T> out(1, 1);
  out(0, 0) = static_cast<T>(res->loss);
  return g.record(std::move(out), {logp}, [logp, res](Graph<T>& g, int self) {
    g.accumulate(logp, res->grad * g.grad(self)(0, 0));
  });
}

// CTC head: log Softmax(h W + b) over the extended vocabulary.
template <typename T>
Var<T> ctc_project(const Var<T>& h, const Var<T>& w, const Var<T>& b) {
  if (h.cols() != w.rows()) throw_shape("ctc_project", shape_str(h.value()), shape_str(w.value()));
  return ops::log_softmax(ops::linear(h, w, b));
}

}  // namespace tab
