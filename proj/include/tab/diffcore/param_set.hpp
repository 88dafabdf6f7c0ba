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
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tab/diffcore/tensor.hpp"
#include "tab/rng.hpp"

namespace tab {

template <typename T>
struct Parameter {
  Tensor2D<T> value;
  Tensor2D<T> grad;
};

// Named trainable tensors, each with a gradient buffer of the same shape.
// Iteration order is lexicographic by name, which keeps checkpoints and
// optimizer state deterministic.
template <typename T>
class ParamSet {
 public:
  using Map = std::map<std::string, Parameter<T>>;

  explicit ParamSet(std::uint64_t seed = 0) : seed_(seed), init_rng_(derive_seed(seed, 0x1417)) {}

  Parameter<T>& add(const std::string& name, Tensor2D<T> value) {
    if (params_.count(name) != 0) {
      throw std::invalid_argument("ParamSet: duplicate parameter name '" + name + "'");
    }
    Parameter<T> p;
    p.grad = Tensor2D<T>::Zero(value.rows(), value.cols());
    p.value = std::move(value);
    return params_.emplace(name, std::move(p)).first->second;
  }

  Parameter<T>& add_zeros(const std::string& name, Index rows, Index cols) {
    return add(name, Tensor2D<T>::Zero(rows, cols));
  }

  Parameter<T>& add_constant(const std::string& name, Index rows, Index cols, T v) {
    return add(name, Tensor2D<T>::Constant(rows, cols, v));
  }

  // Glorot-uniform, the default for projection matrices.
  Parameter<T>& add_xavier(const std::string& name, Index rows, Index cols) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Tensor2D<T> m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) {
      m.data()[i] = static_cast<T>((2.0 * uniform01(init_rng_) - 1.0) * limit);
    }
    return add(name, std::move(m));
  }

  Parameter<T>& add_normal(const std::string& name, Index rows, Index cols, double stddev) {
    Tensor2D<T> m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) {
      m.data()[i] = static_cast<T>(normal(init_rng_, 0.0, stddev));
    }
    return add(name, std::move(m));
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  Parameter<T>& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) {
      throw std::out_of_range("ParamSet: no parameter named '" + name + "'");
    }
    return it->second;
  }

  const Parameter<T>& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) {
      throw std::out_of_range("ParamSet: no parameter named '" + name + "'");
    }
    return it->second;
  }

  void zero_grad() {
    for (auto& [name, p] : params_) p.grad.setZero();
  }

  std::size_t size() const { return params_.size(); }

  std::size_t num_elements() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [name, p] : params_) out.push_back(name);
    return out;
  }

  std::uint64_t seed() const { return seed_; }

  typename Map::iterator begin() { return params_.begin(); }
  typename Map::iterator end() { return params_.end(); }
  typename Map::const_iterator begin() const { return params_.begin(); }
  typename Map::const_iterator end() const { return params_.end(); }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out(seed_);
    for (const auto& [name, p] : params_) out.add(name, p.value.template cast<U>());
    return out;
  }

 private:
  std::uint64_t seed_;
  Rng init_rng_;
  Map params_;
};

}  // namespace tab
