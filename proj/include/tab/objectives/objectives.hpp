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
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tab/diffcore/ops.hpp"

namespace tab {

enum class DivergenceKind { none, jsd, kl_orig_to_aux, kl_aux_to_orig, bi_kl };

inline std::string_view to_string(DivergenceKind k) {
  switch (k) {
    case DivergenceKind::none: return "none";
    case DivergenceKind::jsd: return "jsd";
    case DivergenceKind::kl_orig_to_aux: return "kl_orig_to_aux";
    case DivergenceKind::kl_aux_to_orig: return "kl_aux_to_orig";
    case DivergenceKind::bi_kl: return "bi_kl";
  }
  return "none";
}

inline DivergenceKind parse_divergence(std::string_view s) {
  if (s == "none") return DivergenceKind::none;
  if (s == "jsd") return DivergenceKind::jsd;
  if (s == "kl_orig_to_aux" || s == "kl_fwd") return DivergenceKind::kl_orig_to_aux;
  if (s == "kl_aux_to_orig" || s == "kl_rev") return DivergenceKind::kl_aux_to_orig;
  if (s == "bi_kl" || s == "bikl") return DivergenceKind::bi_kl;
  throw std::invalid_argument("unknown divergence kind '" + std::string(s) + "'");
}

// Which side of the consistency term receives gradient.
enum class ConsistencyFlow { both, stop_orig, stop_aux };

namespace detail {

inline void check_normalized(std::span<const double> p, const char* what) {
  double s = 0.0;
  for (double v : p) {
    if (v < 0.0) throw std::invalid_argument(std::string(what) + ": negative probability");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-6) throw std::invalid_argument(std::string(what) + ": distribution does not sum to 1");
}

inline double kl(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t w = 0; w < p.size(); ++w) {
    if (p[w] > 0.0) s += p[w] * (std::log(p[w]) - std::log(q[w]));
  }
  return s;
}

}  // namespace detail

// Divergence between two probability vectors.
//   kl_orig_to_aux = KL(P||Q), kl_aux_to_orig = KL(Q||P),
//   bi_kl = (KL(P||Q) + KL(Q||P)) / 2, jsd = (KL(P||M) + KL(Q||M)) / 2.
inline double divergence(std::span<const double> p, std::span<const double> q, DivergenceKind kind) {
  if (p.size() != q.size()) throw std::invalid_argument("divergence: size mismatch");
  detail::check_normalized(p, "divergence(P)");
  detail::check_normalized(q, "divergence(Q)");
  switch (kind) {
    case DivergenceKind::none: return 0.0;
    case DivergenceKind::kl_orig_to_aux: return detail::kl(p, q);
    case DivergenceKind::kl_aux_to_orig: return detail::kl(q, p);
    case DivergenceKind::bi_kl: return 0.5 * (detail::kl(p, q) + detail::kl(q, p));
    case DivergenceKind::jsd: {
      std::vector<double> m(p.size());
      for (std::size_t w = 0; w < p.size(); ++w) m[w] = 0.5 * (p[w] + q[w]);
      return 0.5 * (detail::kl(p, m) + detail::kl(q, m));
    }
  }
  return 0.0;
}

namespace detail {

inline bool row_valid(const std::vector<bool>* mask, Index j) {
  return mask == nullptr || (*mask)[static_cast<std::size_t>(j)];
}

template <typename T>
Index count_valid(Index rows, const std::vector<bool>* mask) {
  if (mask != nullptr && static_cast<Index>(mask->size()) != rows) {
    throw std::invalid_argument("objective: mask length does not match positions");
  }
  Index n = 0;
  for (Index j = 0; j < rows; ++j) n += row_valid(mask, j) ? 1 : 0;
  return n;
}

template <typename T>
void check_log_rows(const Tensor2D<T>& lp, const char* what) {
  for (Index r = 0; r < lp.rows(); ++r) {
    const double s = lp.row(r).template cast<double>().array().exp().sum();
    if (std::abs(s - 1.0) > 1e-4) throw std::invalid_argument(std::string(what) + ": rows are not normalized");
  }
}

}  // namespace detail

// Label-smoothed cross-entropy averaged over unmasked positions:
//   (1 - eps) * -log p(y_j) + eps * mean_w(-log p(w)).
template <typename T>
Var<T> ce_label_smoothed(const Var<T>& logp, const std::vector<int>& y, double eps,
                         const std::vector<bool>* mask = nullptr) {
  if (static_cast<Index>(y.size()) != logp.rows()) {
    throw_shape("ce_label_smoothed", shape_str(logp.value()), "|y|=" + std::to_string(y.size()));
  }
  if (!(eps >= 0.0 && eps < 1.0)) throw std::invalid_argument("ce_label_smoothed: smoothing must be in [0, 1)");
  const Index v = logp.cols();
  for (int id : y) {
    if (id < 0 || id >= v) throw std::out_of_range("ce_label_smoothed: target id " + std::to_string(id) + " out of range");
  }
  const Index n = detail::count_valid<T>(logp.rows(), mask);
  if (n == 0) throw std::invalid_argument("ce_label_smoothed: no unmasked positions");
  const auto& lp = logp.value();
  double total = 0.0;
  for (Index j = 0; j < lp.rows(); ++j) {
    if (!detail::row_valid(mask, j)) continue;
    const double nll = -static_cast<double>(lp(j, y[static_cast<std::size_t>(j)]));
    const double smooth = -static_cast<double>(lp.row(j).template cast<double>().mean());
    total += (1.0 - eps) * nll + eps * smooth;
  }
  Tensor2D<T> out(1, 1);
  out(0, 0) = static_cast<T>(total / static_cast<double>(n));
  std::vector<bool> valid(static_cast<std::size_t>(lp.rows()));
  for (Index j = 0; j < lp.rows(); ++j) valid[static_cast<std::size_t>(j)] = detail::row_valid(mask, j);
  Graph<T>& g = *logp.graph();
  return g.record(std::move(out), {logp}, [logp, y, eps, n, v, valid](Graph<T>& g, int self) {
    const T scale = g.grad(self)(0, 0) / static_cast<T>(n);
    Tensor2D<T> d = Tensor2D<T>::Zero(logp.rows(), v);
    for (Index j = 0; j < logp.rows(); ++j) {
      if (!valid[static_cast<std::size_t>(j)]) continue;
      d.row(j).setConstant(static_cast<T>(-eps / static_cast<double>(v)) * scale);
      d(j, y[static_cast<std::size_t>(j)]) -= static_cast<T>(1.0 - eps) * scale;
    }
    g.accumulate(logp, d);
  });
}

// Mean over unmasked positions of D(P_j, Q_j), taking per-row
// log-distributions. Returns nothing (and records nothing) for kind none.
template <typename T>
std::optional<Var<T>> consistency_loss(const Var<T>& logp, const Var<T>& logq, DivergenceKind kind,
                                       const std::vector<bool>* mask = nullptr,
                                       ConsistencyFlow flow = ConsistencyFlow::both) {
  if (logp.rows() != logq.rows() || logp.cols() != logq.cols()) {
    throw_shape("consistency_loss", shape_str(logp.value()), shape_str(logq.value()));
  }
  if (kind == DivergenceKind::none) return std::nullopt;
  detail::check_log_rows(logp.value(), "consistency_loss(P)");
  detail::check_log_rows(logq.value(), "consistency_loss(Q)");
  const Index n = detail::count_valid<T>(logp.rows(), mask);
  if (n == 0) throw std::invalid_argument("consistency_loss: no unmasked positions");
  const Index rows = logp.rows();
  const Index v = logp.cols();
  auto dp = std::make_shared<Tensor2D<T>>(Tensor2D<T>::Zero(rows, v));
  auto dq = std::make_shared<Tensor2D<T>>(Tensor2D<T>::Zero(rows, v));
  double total = 0.0;
  const auto& lp = logp.value();
  const auto& lq = logq.value();
  for (Index j = 0; j < rows; ++j) {
    if (!detail::row_valid(mask, j)) continue;
    for (Index w = 0; w < v; ++w) {
      const double a = static_cast<double>(lp(j, w));
      const double b = static_cast<double>(lq(j, w));
      const double p = std::exp(a);
      const double q = std::exp(b);
      double val = 0.0, ga = 0.0, gb = 0.0;
      switch (kind) {
        case DivergenceKind::kl_orig_to_aux:
          val = p * (a - b);
          ga = p * (a - b) + p;
          gb = -p;
          break;
        case DivergenceKind::kl_aux_to_orig:
          val = q * (b - a);
          ga = -q;
          gb = q * (b - a) + q;
          break;
        case DivergenceKind::bi_kl:
          val = 0.5 * (p * (a - b) + q * (b - a));
          ga = 0.5 * (p * (a - b) + p - q);
          gb = 0.5 * (q * (b - a) + q - p);
          break;
        case DivergenceKind::jsd: {
          const double lm = std::log(0.5 * (p + q));
          val = 0.5 * (p * (a - lm) + q * (b - lm));
          ga = 0.5 * p * (a - lm);
          gb = 0.5 * q * (b - lm);
          break;
        }
        case DivergenceKind::none:
          break;
      }
      total += val;
      (*dp)(j, w) = static_cast<T>(ga);
      (*dq)(j, w) = static_cast<T>(gb);
    }
  }
  Tensor2D<T> out(1, 1);
  out(0, 0) = static_cast<T>(total / static_cast<double>(n));
  Graph<T>& g = *logp.graph();
  return g.record(std::move(out), {logp, logq}, [logp, logq, dp, dq, n, flow](Graph<T>& g, int self) {
    const T scale = g.grad(self)(0, 0) / static_cast<T>(n);
    if (flow != ConsistencyFlow::stop_orig) g.accumulate(logp, *dp * scale);
    if (flow != ConsistencyFlow::stop_aux) g.accumulate(logq, *dq * scale);
  });
}

// Mean normalized entropy of the per-position distributions, in [0, 1]:
//   (1 / log V) * (1 / |y|) * sum_j H(P_j).
template <typename T>
double normalized_entropy(const Tensor2D<T>& logp, Index vocab_size, const std::vector<bool>* mask = nullptr) {
  if (vocab_size < 2) throw std::invalid_argument("normalized_entropy: vocabulary size must be >= 2");
  const Index n = detail::count_valid<T>(logp.rows(), mask);
  if (n == 0) return 0.0;
  double total = 0.0;
  for (Index j = 0; j < logp.rows(); ++j) {
    if (!detail::row_valid(mask, j)) continue;
    double h = 0.0;
    for (Index w = 0; w < logp.cols(); ++w) {
      const double a = static_cast<double>(logp(j, w));
      const double p = std::exp(a);
      if (p > 0.0) h -= p * a;
    }
    total += h;
  }
  const double u = total / (static_cast<double>(n) * std::log(static_cast<double>(vocab_size)));
  return std::clamp(u, 0.0, 1.0);
}

// The literal gold-token reading: -(1 / log V) * mean_j P_j(y_j) log P_j(y_j).
template <typename T>
double gold_token_uncertainty(const Tensor2D<T>& logp, const std::vector<int>& y, Index vocab_size,
                              const std::vector<bool>* mask = nullptr) {
  if (vocab_size < 2) throw std::invalid_argument("gold_token_uncertainty: vocabulary size must be >= 2");
  const Index n = detail::count_valid<T>(logp.rows(), mask);
  if (n == 0) return 0.0;
  double total = 0.0;
  for (Index j = 0; j < logp.rows(); ++j) {
    if (!detail::row_valid(mask, j)) continue;
    const double a = static_cast<double>(logp(j, y[static_cast<std::size_t>(j)]));
    total -= std::exp(a) * a;
  }
  return total / (static_cast<double>(n) * std::log(static_cast<double>(vocab_size)));
}

struct LossBreakdown {
  double ce_o = 0.0;
  double ce_a = 0.0;
  double ctc = 0.0;
  double cons = 0.0;
  double lambda = 0.0;
  double alpha = 0.0;
  double total = 0.0;
};

// total = ce_o + ce_a + lambda * ctc + alpha * cons
inline LossBreakdown total_loss(double ce_o, double ce_a, double ctc, double cons, double lambda, double alpha) {
  if (lambda < 0.0 || alpha < 0.0) throw std::invalid_argument("total_loss: weights must be non-negative");
  LossBreakdown b{ce_o, ce_a, ctc, cons, lambda, alpha, 0.0};
  b.total = ce_o + ce_a + lambda * ctc + alpha * cons;
  return b;
}

// Graph form of the composite objective. Absent terms contribute nothing.
template <typename T>
Var<T> total_loss(const Var<T>& ce_o, const std::optional<Var<T>>& ce_a, const std::optional<Var<T>>& ctc,
                  const std::optional<Var<T>>& cons, double lambda, double alpha) {
  if (lambda < 0.0 || alpha < 0.0) throw std::invalid_argument("total_loss: weights must be non-negative");
  Var<T> acc = ce_o;
  if (ce_a) acc = ops::add(acc, *ce_a);
  if (ctc && lambda != 0.0) acc = ops::add(acc, ops::scale(*ctc, static_cast<T>(lambda)));
  if (cons && alpha != 0.0) acc = ops::add(acc, ops::scale(*cons, static_cast<T>(alpha)));
  return acc;
}

}  // namespace tab
