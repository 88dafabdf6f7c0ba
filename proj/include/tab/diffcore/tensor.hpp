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

#include <Eigen/Dense>

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tab {

// Dense row-major matrix. Every 2-D quantity in the library (speech
// features, hidden states, embeddings, logits) is one of these.
template <typename T>
using Tensor2D = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = Eigen::Index;

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct GraphError : std::logic_error {
  using std::logic_error::logic_error;
};

inline std::string shape_str(Index rows, Index cols) {
  std::ostringstream os;
  os << '[' << rows << 'x' << cols << ']';
  return os.str();
}

template <typename T>
std::string shape_str(const Tensor2D<T>& m) {
  return shape_str(m.rows(), m.cols());
}

[[noreturn]] inline void throw_shape(std::string_view op, const std::string& a,
                                     const std::string& b) {
  std::ostringstream os;
  os << op << ": shape mismatch " << a << " vs " << b;
  throw ShapeError(os.str());
}

template <typename T>
bool all_finite(const Tensor2D<T>& m) {
  return m.allFinite();
}

// Element-wise cast between precisions.
template <typename To, typename From>
Tensor2D<To> cast(const Tensor2D<From>& m) {
  return m.template cast<To>();
}

}  // namespace tab
