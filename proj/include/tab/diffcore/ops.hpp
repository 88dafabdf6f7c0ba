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
#include <memory>
#include <utility>
#include <vector>

#include "tab/diffcore/graph.hpp"
#include "tab/rng.hpp"

// Differentiable primitives. Each op computes its value eagerly and records
// a closure that maps the output gradient to input gradients.
namespace tab::ops {

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  if (a.cols() != b.rows()) throw_shape("matmul", shape_str(a.value()), shape_str(b.value()));
  Graph<T>& g = *a.graph();
  Tensor2D<T> out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  return g.record(std::move(out), {a, b}, [a, b](Graph<T>& g, int self) {
    const auto& gy = g.grad(self);
    if (g.requires_grad(a)) g.accumulate(a, gy * b.value().transpose());
    if (g.requires_grad(b)) g.accumulate(b, a.value().transpose() * gy);
  });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  Graph<T>& g = *a.graph();
  Tensor2D<T> out = a.value().transpose();
  return g.record(std::move(out), {a}, [a](Graph<T>& g, int self) {
    g.accumulate(a, g.grad(self).transpose());
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw_shape("add", shape_str(a.value()), shape_str(b.value()));
  }
  Graph<T>& g = *a.graph();
  Tensor2D<T> out = a.value() + b.value();
  return g.record(std::move(out), {a, b}, [a, b](Graph<T>& g, int self) {
    g.accumulate(a, g.grad(self));
    g.accumulate(b, g.grad(self));
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw_shape("sub", shape_str(a.value()), shape_str(b.value()));
  }
  Graph<T>& g = *a.graph();
  Tensor2D<T> out = a.value() - b.value();
  return g.record(std::move(out), {a, b}, [a, b](Graph<T>& g, int self) {
    g.accumulate(a, g.grad(self));
    g.accumulate(b, -g.grad(self));
  });
}

// Element-wise product.
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw_shape("mul", shape_str(a.value()), shape_str(b.value()));
  }
  Graph<T>& g = *a.graph();
  Tensor2D<T> out = a.value().cwiseProduct(b.value());
  return g.record(std::move(out), {a, b}, [a, b](Graph<T>& g, int self) {
    g.accumulate(a, g.grad(self).cwiseProduct(b.value()));
    g.accumulate(b, g.grad(self).cwiseProduct(a.value()));
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Graph<T>& g = *a.graph();
  Tensor2D<T> out = a.value() * s;
  return g.record(std::move(out), {a}, [a, s](Graph<T>& g, int self) {
    g.accumulate(a, g.grad(self) * s);
  });
}

// Adds a 1 x cols row vector to every row.
template <typename T>
Var<T> add_row(const Var<T>& a, const Var<T>& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw_shape("add_row", shape_str(a.value()), shape_str(row.value()));
  }
  Graph<T>& g = *a.graph();
  Tensor2D<T> out = a.value().rowwise() + row.value().row(0);
  return g.record(std::move(out), {a, row}, [a, row](Graph<T>& g, int self) {
    g.accumulate(a, g.grad(self));
    if (g.requires_grad(row)) g.accumulate(row, g.grad(self).colwise().sum());
  });
}

// x * W + b with W of shape in x out and b of shape 1 x out.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
    throw_shape("linear", shape_str(x.value()),
                shape_str(w.value()) + " + " + shape_str(b.value()));
  }
  Graph<T>& g = *x.graph();
  Tensor2D<T> out(x.rows(), w.cols());
  out.noalias() = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return g.record(std::move(out), {x, w, b}, [x, w, b](Graph<T>& g, int self) {
    const auto& gy = g.grad(self);
    if (g.requires_grad(x)) g.accumulate(x, gy * w.value().transpose());
    if (g.requires_grad(w)) g.accumulate(w, x.value().transpose() * gy);
    if (g.requires_grad(b)) g.accumulate(b, gy.colwise().sum());
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Graph<T>& g = *a.graph();
  Tensor2D<T> out = a.value().cwiseMax(T(0));
  return g.record(std::move(out), {a}, [a](Graph<T>& g, int self) {
    g.accumulate(a, g.grad(self).cwiseProduct((a.value().array() > T(0)).template cast<T>().matrix()));
  });
}

namespace detail {

template <typename T>
Tensor2D<T> log_softmax_rows(const Tensor2D<T>& x) {
  Tensor2D<T> out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const T m = x.row(r).maxCoeff();
    const T lse = m + std::log((x.row(r).array() - m).exp().sum());
    out.row(r) = x.row(r).array() - lse;
  }
  return out;
}

}  // namespace detail

template <typename T>
Var<T> softmax(const Var<T>& a) {
  Graph<T>& g = *a.graph();
  Tensor2D<T> out = detail::log_softmax_rows(a.value()).array().exp().matrix();
  return g.record(std::move(out), {a}, [a](Graph<T>& g, int self) {
    const auto& y = g.value(self);
    const auto& gy = g.grad(self);
    Tensor2D<T> dot = gy.cwiseProduct(y).rowwise().sum();
    Tensor2D<T> dx = y.cwiseProduct(gy - dot.replicate(1, y.cols()));
    g.accumulate(a, dx);
  });
}

template <typename T>
Var<T> log_softmax(const Var<T>& a) {
  Graph<T>& g = *a.graph();
  Tensor2D<T> out = detail::log_softmax_rows(a.value());
  return g.record(std::move(out), {a}, [a](Graph<T>& g, int self) {
    const auto& y = g.value(self);
    const auto& gy = g.grad(self);
    Tensor2D<T> total = gy.rowwise().sum();
    Tensor2D<T> dx = gy - y.array().exp().matrix().cwiseProduct(total.replicate(1, y.cols()));
    g.accumulate(a, dx);
  });
}

// Row-wise layer normalization with learned gain and bias (both 1 x cols).
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps = T(1e-5)) {
  const Index n = x.rows();
  const Index d = x.cols();
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d) {
    throw_shape("layer_norm", shape_str(x.value()),
                shape_str(gain.value()) + " + " + shape_str(bias.value()));
  }
  Graph<T>& g = *x.graph();
  auto xhat = std::make_shared<Tensor2D<T>>(n, d);
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(n));
  for (Index r = 0; r < n; ++r) {
    const T mu = x.value().row(r).mean();
    const T var = (x.value().row(r).array() - mu).square().mean();
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[static_cast<std::size_t>(r)] = is;
    xhat->row(r) = (x.value().row(r).array() - mu) * is;
  }
  Tensor2D<T> out = xhat->array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  return g.record(std::move(out), {x, gain, bias},
                  [x, gain, bias, xhat, inv_std, n, d](Graph<T>& g, int self) {
    const auto& gy = g.grad(self);
    if (g.requires_grad(gain)) g.accumulate(gain, gy.cwiseProduct(*xhat).colwise().sum());
    if (g.requires_grad(bias)) g.accumulate(bias, gy.colwise().sum());
    if (g.requires_grad(x)) {
      Tensor2D<T> dx(n, d);
      for (Index r = 0; r < n; ++r) {
        auto dxhat = (gy.row(r).array() * gain.value().row(0).array()).eval();
        const T m1 = dxhat.mean();
        const T m2 = (dxhat * xhat->row(r).array()).mean();
        dx.row(r) = (*inv_std)[static_cast<std::size_t>(r)] *
                    (dxhat - m1 - xhat->row(r).array() * m2);
      }
      g.accumulate(x, dx);
    }
  });
}

// Inverted dropout: kept entries are scaled by 1/keep. A null stream or
// keep == 1 is the identity and records no node.
template <typename T>
Var<T> dropout(const Var<T>& x, double keep, Rng* rng) {
  if (rng == nullptr || keep >= 1.0) return x;
  if (keep <= 0.0) throw std::invalid_argument("dropout: keep probability must be in (0, 1]");
  Graph<T>& g = *x.graph();
  auto mask = std::make_shared<Tensor2D<T>>(x.rows(), x.cols());
  const T s = static_cast<T>(1.0 / keep);
  for (Index i = 0; i < mask->size(); ++i) {
    mask->data()[i] = uniform01(*rng) < keep ? s : T(0);
  }
  Tensor2D<T> out = x.value().cwiseProduct(*mask);
  return g.record(std::move(out), {x}, [x, mask](Graph<T>& g, int self) {
    g.accumulate(x, g.grad(self).cwiseProduct(*mask));
  });
}

// Gathers rows of `table` by id.
template <typename T>
Var<T> embedding(const Var<T>& table, const std::vector<int>& ids) {
  Graph<T>& g = *table.graph();
  Tensor2D<T> out(static_cast<Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) {
      throw std::out_of_range("embedding: id " + std::to_string(ids[i]) + " outside table " +
                              shape_str(table.value()));
    }
    out.row(static_cast<Index>(i)) = table.value().row(ids[i]);
  }
  return g.record(std::move(out), {table}, [table, ids](Graph<T>& g, int self) {
    Tensor2D<T>* dt = g.grad_buffer(table);
    if (dt == nullptr) return;
    const auto& gy = g.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i) dt->row(ids[i]) += gy.row(static_cast<Index>(i));
  });
}

enum class Axis { rows, cols };

// Mean over an axis: Axis::rows averages over rows (1 x cols result),
// Axis::cols averages over columns (rows x 1 result).
template <typename T>
Var<T> mean(const Var<T>& x, Axis axis) {
  Graph<T>& g = *x.graph();
  if (x.rows() == 0 || x.cols() == 0) throw_shape("mean", shape_str(x.value()), "non-empty");
  if (axis == Axis::rows) {
    Tensor2D<T> out = x.value().colwise().mean();
    const T inv = T(1) / static_cast<T>(x.rows());
    return g.record(std::move(out), {x}, [x, inv](Graph<T>& g, int self) {
      g.accumulate(x, (g.grad(self) * inv).replicate(x.rows(), 1));
    });
  }
  Tensor2D<T> out = x.value().rowwise().mean();
  const T inv = T(1) / static_cast<T>(x.cols());
  return g.record(std::move(out), {x}, [x, inv](Graph<T>& g, int self) {
    g.accumulate(x, (g.grad(self) * inv).replicate(1, x.cols()));
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  Graph<T>& g = *x.graph();
  Tensor2D<T> out(1, 1);
  out(0, 0) = x.value().sum();
  return g.record(std::move(out), {x}, [x](Graph<T>& g, int self) {
    g.accumulate(x, Tensor2D<T>::Constant(x.rows(), x.cols(), g.grad(self)(0, 0)));
  });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Graph<T>& g = *parts.front().graph();
  Index rows = 0;
  const Index cols = parts.front().cols();
  for (const auto& p : parts) {
    if (p.cols() != cols) throw_shape("concat_rows", shape_str(parts.front().value()), shape_str(p.value()));
    rows += p.rows();
  }
  Tensor2D<T> out(rows, cols);
  Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return g.record_range(std::move(out), parts, [parts](Graph<T>& g, int self) {
    Index r = 0;
    for (const auto& p : parts) {
      if (g.requires_grad(p)) g.accumulate(p, g.grad(self).middleRows(r, p.rows()));
      r += p.rows();
    }
  });
}

template <typename T>
Var<T> slice_rows(const Var<T>& x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.rows()) {
    throw_shape("slice_rows", shape_str(x.value()),
                "rows [" + std::to_string(start) + ", " + std::to_string(start + count) + ")");
  }
  Graph<T>& g = *x.graph();
  Tensor2D<T> out = x.value().middleRows(start, count);
  return g.record(std::move(out), {x}, [x, start, count](Graph<T>& g, int self) {
    Tensor2D<T>* dx = g.grad_buffer(x);
    if (dx != nullptr) dx->middleRows(start, count) += g.grad(self);
  });
}

// Stacks `kernel` consecutive rows (zero-padded by `pad` on both ends) into
// one row per output step: the im2col layout of a 1-D convolution.
template <typename T>
Var<T> frames_unfold(const Var<T>& x, int kernel, int stride, int pad) {
  const Index t_in = x.rows();
  const Index d = x.cols();
  const Index span = t_in + 2 * pad - kernel;
  if (kernel < 1 || stride < 1 || span < 0) {
    throw_shape("frames_unfold", shape_str(x.value()),
                "kernel " + std::to_string(kernel) + " stride " + std::to_string(stride));
  }
  const Index t_out = span / stride + 1;
  Graph<T>& g = *x.graph();
  Tensor2D<T> out = Tensor2D<T>::Zero(t_out, kernel * d);
  for (Index t = 0; t < t_out; ++t) {
    for (int k = 0; k < kernel; ++k) {
      const Index src = t * stride - pad + k;
      if (src >= 0 && src < t_in) out.block(t, k * d, 1, d) = x.value().row(src);
    }
  }
  return g.record(std::move(out), {x}, [x, kernel, stride, pad, t_in, t_out, d](Graph<T>& g, int self) {
    Tensor2D<T>* dx = g.grad_buffer(x);
    if (dx == nullptr) return;
    const auto& gy = g.grad(self);
    for (Index t = 0; t < t_out; ++t) {
      for (int k = 0; k < kernel; ++k) {
        const Index src = t * stride - pad + k;
        if (src >= 0 && src < t_in) dx->row(src) += gy.block(t, k * d, 1, d);
      }
    }
  });
}

// Averages the rows of each [start, end] segment (inclusive) into one row.
template <typename T>
Var<T> segment_mean(const Var<T>& x, const std::vector<std::pair<int, int>>& segments) {
  Graph<T>& g = *x.graph();
  Tensor2D<T> out(static_cast<Index>(segments.size()), x.cols());
  for (std::size_t k = 0; k < segments.size(); ++k) {
    const auto [s, e] = segments[k];
    if (s < 0 || e < s || e >= x.rows()) {
      throw_shape("segment_mean", shape_str(x.value()),
                  "segment [" + std::to_string(s) + ", " + std::to_string(e) + "]");
    }
    out.row(static_cast<Index>(k)) = x.value().middleRows(s, e - s + 1).colwise().mean();
  }
  return g.record(std::move(out), {x}, [x, segments](Graph<T>& g, int self) {
    Tensor2D<T>* dx = g.grad_buffer(x);
    if (dx == nullptr) return;
    const auto& gy = g.grad(self);
    for (std::size_t k = 0; k < segments.size(); ++k) {
      const auto [s, e] = segments[k];
      const T inv = T(1) / static_cast<T>(e - s + 1);
      for (int r = s; r <= e; ++r) dx->row(r) += gy.row(static_cast<Index>(k)) * inv;
    }
  });
}

// Copy of `base` with row positions[i] overwritten by table row ids[i].
// Gradient reaches `base` only at untouched rows and `table` only at the
// rows that were copied in.
template <typename T>
Var<T> replace_rows(const Var<T>& base, const Var<T>& table, const std::vector<int>& positions,
                    const std::vector<int>& ids) {
  if (positions.size() != ids.size() || base.cols() != table.cols()) {
    throw_shape("replace_rows", shape_str(base.value()), shape_str(table.value()));
  }
  Graph<T>& g = *base.graph();
  Tensor2D<T> out = base.value();
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (positions[i] < 0 || positions[i] >= base.rows() || ids[i] < 0 || ids[i] >= table.rows()) {
      throw std::out_of_range("replace_rows: position or id out of range");
    }
    out.row(positions[i]) = table.value().row(ids[i]);
  }
  return g.record(std::move(out), {base, table}, [base, table, positions, ids](Graph<T>& g, int self) {
    const auto& gy = g.grad(self);
    if (g.requires_grad(base)) {
      Tensor2D<T> db = gy;
      for (int p : positions) db.row(p).setZero();
      g.accumulate(base, db);
    }
    if (Tensor2D<T>* dt = g.grad_buffer(table)) {
      for (std::size_t i = 0; i < positions.size(); ++i) dt->row(ids[i]) += gy.row(positions[i]);
    }
  });
}

// Multi-head scaled dot-product attention over already-projected q (n x d),
// k and v (m x d). With `causal`, query i attends to keys 0..i only.
template <typename T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, int heads, bool causal) {
  const Index n = q.rows();
  const Index m = k.rows();
  const Index d = q.cols();
  if (k.cols() != d || v.cols() != d || v.rows() != m || heads < 1 || d % heads != 0) {
    throw_shape("attention", shape_str(q.value()), shape_str(k.value()) + "/" + shape_str(v.value()));
  }
  if (causal && n != m) throw_shape("attention(causal)", shape_str(q.value()), shape_str(k.value()));
  const Index dh = d / heads;
  const T s = T(1) / std::sqrt(static_cast<T>(dh));
  Graph<T>& g = *q.graph();
  auto probs = std::make_shared<std::vector<Tensor2D<T>>>(static_cast<std::size_t>(heads));
  Tensor2D<T> out(n, d);
  for (int h = 0; h < heads; ++h) {
    Tensor2D<T> scores(n, m);
    scores.noalias() = q.value().middleCols(h * dh, dh) * k.value().middleCols(h * dh, dh).transpose();
    scores *= s;
    for (Index i = 0; i < n; ++i) {
      const Index limit = causal ? i + 1 : m;
      const T mx = scores.row(i).head(limit).maxCoeff();
      T z = 0;
      for (Index j = 0; j < m; ++j) {
        if (j < limit) {
          scores(i, j) = std::exp(scores(i, j) - mx);
          z += scores(i, j);
        } else {
          scores(i, j) = 0;
        }
      }
      scores.row(i) /= z;
    }
    out.middleCols(h * dh, dh).noalias() = scores * v.value().middleCols(h * dh, dh);
    (*probs)[static_cast<std::size_t>(h)] = std::move(scores);
  }
  return g.record(std::move(out), {q, k, v}, [q, k, v, probs, heads, dh, s, n, m, d](Graph<T>& g, int self) {
    const auto& gy = g.grad(self);
    Tensor2D<T> dq(n, d), dk(m, d), dv(m, d);
    for (int h = 0; h < heads; ++h) {
      const auto& a = (*probs)[static_cast<std::size_t>(h)];
      auto gyh = gy.middleCols(h * dh, dh);
      dv.middleCols(h * dh, dh).noalias() = a.transpose() * gyh;
      Tensor2D<T> da(n, m);
      da.noalias() = gyh * v.value().middleCols(h * dh, dh).transpose();
      Tensor2D<T> rs = da.cwiseProduct(a).rowwise().sum();
      Tensor2D<T> ds = a.cwiseProduct(da - rs.replicate(1, m)) * s;
      dq.middleCols(h * dh, dh).noalias() = ds * k.value().middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh).noalias() = ds.transpose() * q.value().middleCols(h * dh, dh);
    }
    g.accumulate(q, dq);
    g.accumulate(k, dk);
    g.accumulate(v, dv);
  });
}

}  // namespace tab::ops
