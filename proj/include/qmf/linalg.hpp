// Copyright 2026 The QMF Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "qmf/core.hpp"

namespace qmf {

/// Product of leg dimensions, checked against `max_dim`.
inline std::size_t joint_dim(std::span<const int> dims, std::size_t max_dim,
                             const std::string& what = "operator") {
  std::size_t d = 1;
  for (int x : dims) {
    if (d > max_dim / static_cast<std::size_t>(x)) {
      throw ResourceError("joint dimension of " + what + " exceeds MAX_DIM=" +
                          std::to_string(max_dim));
    }
    d *= static_cast<std::size_t>(x);
  }
  if (d > max_dim) {
    throw ResourceError("joint dimension " + std::to_string(d) + " of " + what +
                        " exceeds MAX_DIM=" + std::to_string(max_dim));
  }
  return d;
}

/// Row-major strides of a multi-leg index.
inline std::vector<std::size_t> leg_strides(std::span<const int> dims) {
  std::vector<std::size_t> s(dims.size(), 1);
  for (std::size_t i = dims.size(); i-- > 1;) s[i - 1] = s[i] * static_cast<std::size_t>(dims[i]);
  return s;
}

/// For every multi-index over the selected legs (in the given order), the
/// flat offset it contributes in the full index. Offsets of disjoint leg
/// groups add up to the full flat index.
inline std::vector<std::size_t> leg_offsets(std::span<const int> dims,
                                            std::span<const std::size_t> legs) {
  const auto strides = leg_strides(dims);
  std::size_t count = 1;
  for (auto l : legs) count *= static_cast<std::size_t>(dims[l]);
  std::vector<std::size_t> out(count, 0);
  std::vector<int> digit(legs.size(), 0);
  for (std::size_t k = 0; k < count; ++k) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < legs.size(); ++i) off += strides[legs[i]] * digit[i];
    out[k] = off;
    for (std::size_t i = legs.size(); i-- > 0;) {
      if (++digit[i] < dims[legs[i]]) break;
      digit[i] = 0;
    }
  }
  return out;
}

/// Reorders tensor legs: leg k of the result is leg `order[k]` of `m`.
inline Matrix permute_legs(const Matrix& m, std::span<const int> dims,
                           std::span<const std::size_t> order) {
  bool identity = true;
  for (std::size_t k = 0; k < order.size(); ++k) identity &= order[k] == k;
  if (identity) return m;
  const auto map = leg_offsets(dims, order);
  const auto n = static_cast<Eigen::Index>(map.size());
  Matrix out(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i)
      out(i, j) = m(static_cast<Eigen::Index>(map[i]), static_cast<Eigen::Index>(map[j]));
  return out;
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Row-major vectorization: v[i*cols + j] = m(i, j).
inline Vector vec(const Matrix& m) {
  Vector v(m.size());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) v(i * m.cols() + j) = m(i, j);
  return v;
}

inline Matrix unvec(const Vector& v, Eigen::Index n) {
  Matrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = v(i * n + j);
  return m;
}

inline double hermiticity_residual(const Matrix& m) { return (m - m.adjoint()).norm(); }

/// Smallest eigenvalue of the Hermitian part of `m`.
inline double min_hermitian_eigenvalue(const Matrix& m) {
  if (m.size() == 0) return std::numeric_limits<double>::infinity();
  Matrix h = (m + m.adjoint()) / 2.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// f(h) for Hermitian h via its eigendecomposition.
template <class F>
Matrix hermitian_function(const Matrix& h, F f) {
  Eigen::SelfAdjointEigenSolver<Matrix> es((h + h.adjoint()) / 2.0);
  Eigen::VectorXd v = es.eigenvalues().unaryExpr(f);
  return es.eigenvectors() * v.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
}

inline Matrix hermitian_sqrt(const Matrix& h) {
  return hermitian_function(h, [](double x) { return x > 0 ? std::sqrt(x) : 0.0; });
}

inline Matrix hermitian_inv_sqrt(const Matrix& h) {
  return hermitian_function(h, [](double x) { return 1.0 / std::sqrt(x); });
}

}  // namespace qmf
