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

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qmf/graph.hpp"
#include "qmf/linalg.hpp"

namespace qmf {

/// Matrix-algebra dimension per site: a default plus per-vertex overrides.
class SiteDims {
 public:
  explicit SiteDims(int default_dim = 2, std::map<VertexId, int> overrides = {})
      : default_dim_(default_dim), overrides_(std::move(overrides)) {
    if (default_dim_ < 2) throw ValidationError("site dimension must be >= 2");
    for (const auto& [v, d] : overrides_) {
      if (d < 2) throw ValidationError("site dimension must be >= 2 at " + std::to_string(v.value));
    }
  }

  [[nodiscard]] int default_dim() const { return default_dim_; }
  [[nodiscard]] const std::map<VertexId, int>& overrides() const { return overrides_; }

  [[nodiscard]] int operator()(VertexId v) const {
    auto it = overrides_.find(v);
    return it == overrides_.end() ? default_dim_ : it->second;
  }

  [[nodiscard]] std::vector<int> of(const Region& r) const {
    std::vector<int> out;
    out.reserve(r.size());
    for (VertexId v : r) out.push_back((*this)(v));
    return out;
  }

 private:
  int default_dim_;
  std::map<VertexId, int> overrides_;
};

/// Operator in A_Lambda: a square matrix whose tensor legs follow the
/// canonical order of its support.
class LocalOperator {
 public:
  LocalOperator() : matrix_(Matrix::Identity(1, 1)) {}

  LocalOperator(Region support, std::vector<int> dims, Matrix matrix)
      : support_(std::move(support)), dims_(std::move(dims)), matrix_(std::move(matrix)) {
    if (dims_.size() != support_.size()) throw std::invalid_argument("one dimension per site");
    std::size_t d = 1;
    for (int x : dims_) d *= static_cast<std::size_t>(x);
    if (matrix_.rows() != static_cast<Eigen::Index>(d) || matrix_.cols() != matrix_.rows()) {
      throw std::invalid_argument("matrix shape does not match support dimensions");
    }
  }

  static LocalOperator scalar(Complex c) {
    LocalOperator op;
    op.matrix_(0, 0) = c;
    return op;
  }

  static LocalOperator identity(const Region& support, const SiteDims& dims,
                                std::size_t max_dim = kDefaultMaxDim) {
    auto ds = dims.of(support);
    const auto d = static_cast<Eigen::Index>(joint_dim(ds, max_dim));
    return {support, std::move(ds), Matrix::Identity(d, d)};
  }

  [[nodiscard]] const Region& support() const { return support_; }
  [[nodiscard]] const std::vector<int>& dims() const { return dims_; }
  [[nodiscard]] const Matrix& matrix() const { return matrix_; }
  [[nodiscard]] Eigen::Index dim() const { return matrix_.rows(); }

  [[nodiscard]] int dim_of(VertexId v) const { return dims_[support_.index_of(v)]; }

  /// Legs of `sub` (a subset of the support) as positions into dims().
  [[nodiscard]] std::vector<std::size_t> positions(const Region& sub) const {
    std::vector<std::size_t> out;
    out.reserve(sub.size());
    for (VertexId v : sub) out.push_back(support_.index_of(v));
    return out;
  }

  [[nodiscard]] std::vector<int> dims_of(const Region& sub) const {
    std::vector<int> out;
    for (VertexId v : sub) out.push_back(dim_of(v));
    return out;
  }

  [[nodiscard]] LocalOperator adjoint() const { return {support_, dims_, matrix_.adjoint()}; }

  friend LocalOperator operator*(const LocalOperator& a, const LocalOperator& b) {
    if (a.support_ != b.support_) throw std::invalid_argument("product needs equal supports");
    return {a.support_, a.dims_, a.matrix_ * b.matrix_};
  }

 private:
  Region support_;
  std::vector<int> dims_;
  Matrix matrix_;
};

namespace detail {

/// Dimension lookup that prefers the operator's own legs, then `dims`.
inline std::vector<int> merged_dims(const Region& target, const LocalOperator& a,
                                    const SiteDims& dims) {
  std::vector<int> out;
  for (VertexId v : target) out.push_back(a.support().contains(v) ? a.dim_of(v) : dims(v));
  return out;
}

}  // namespace detail

/// a tensor id on target minus support, with legs in canonical order of target.
inline LocalOperator embed(const LocalOperator& a, const Region& target, const SiteDims& dims,
                           std::size_t max_dim = kDefaultMaxDim) {
  if (!is_subset(a.support(), target)) throw std::domain_error("embed: support not inside target");
  if (a.support() == target) return a;
  const Region rest = subtract(target, a.support());
  auto rest_dims = dims.of(rest);
  auto tdims = detail::merged_dims(target, a, dims);
  joint_dim(tdims, max_dim, "embedding target");
  const auto dr = static_cast<Eigen::Index>(joint_dim(rest_dims, max_dim));
  Matrix m = kron(a.matrix(), Matrix::Identity(dr, dr));
  // Legs of m are (support..., rest...); move each to its slot in target.
  std::vector<int> cur_dims = a.dims();
  cur_dims.insert(cur_dims.end(), rest_dims.begin(), rest_dims.end());
  std::vector<std::size_t> order;
  for (VertexId v : target) {
    order.push_back(a.support().contains(v) ? a.support().index_of(v)
                                            : a.support().size() + rest.index_of(v));
  }
  return {target, std::move(tdims), permute_legs(m, cur_dims, order)};
}

/// a tensor b on the union of two disjoint supports.
inline LocalOperator tensor(const LocalOperator& a, const LocalOperator& b,
                            std::size_t max_dim = kDefaultMaxDim) {
  if (!disjoint(a.support(), b.support())) throw std::domain_error("tensor: overlapping supports");
  const Region target = unite(a.support(), b.support());
  std::vector<int> cur_dims = a.dims();
  cur_dims.insert(cur_dims.end(), b.dims().begin(), b.dims().end());
  joint_dim(cur_dims, max_dim, "tensor product");
  Matrix m = kron(a.matrix(), b.matrix());
  std::vector<std::size_t> order;
  std::vector<int> tdims;
  for (VertexId v : target) {
    if (a.support().contains(v)) {
      order.push_back(a.support().index_of(v));
      tdims.push_back(a.dim_of(v));
    } else {
      order.push_back(a.support().size() + b.support().index_of(v));
      tdims.push_back(b.dim_of(v));
    }
  }
  return {target, std::move(tdims), permute_legs(m, cur_dims, order)};
}

/// Contracts the legs `out` of `a` against `weights` (one matrix per leg, in
/// canonical order of `out`): result = tr_out((id ⊗ w_1 ⊗ ... ) a).
/// With identity weights this is the partial trace.
inline LocalOperator contract_legs(const LocalOperator& a, const Region& out,
                                   const std::vector<Matrix>& weights) {
  if (!is_subset(out, a.support())) throw std::domain_error("partial trace: sites not in support");
  if (out.empty()) return a;
  const Region keep = subtract(a.support(), out);
  const auto keep_legs = a.positions(keep);
  const auto out_legs = a.positions(out);
  const auto keep_off = leg_offsets(a.dims(), keep_legs);
  const auto out_off = leg_offsets(a.dims(), out_legs);
  // Dense weight over the traced legs, row-major in canonical order of `out`.
  Matrix w = Matrix::Identity(1, 1);
  for (const auto& m : weights) w = kron(w, m);
  const auto nk = static_cast<Eigen::Index>(keep_off.size());
  const auto no = static_cast<Eigen::Index>(out_off.size());
  Matrix res = Matrix::Zero(nk, nk);
  const Matrix& am = a.matrix();
  for (Eigen::Index j = 0; j < nk; ++j) {
    for (Eigen::Index i = 0; i < nk; ++i) {
      Complex s = 0;
      for (Eigen::Index q = 0; q < no; ++q) {
        const auto col = static_cast<Eigen::Index>(keep_off[j] + out_off[q]);
        for (Eigen::Index p = 0; p < no; ++p) {
          const Complex wv = w(q, p);
          if (wv == Complex(0)) continue;
          s += wv * am(static_cast<Eigen::Index>(keep_off[i] + out_off[p]), col);
        }
      }
      res(i, j) = s;
    }
  }
  return {keep, a.dims_of(keep), std::move(res)};
}

inline LocalOperator partial_trace(const LocalOperator& a, const Region& out) {
  std::vector<Matrix> ids;
  for (VertexId v : out) {
    if (!a.support().contains(v)) throw std::domain_error("partial trace: sites not in support");
    ids.push_back(Matrix::Identity(a.dim_of(v), a.dim_of(v)));
  }
  return contract_legs(a, out, ids);
}

struct LocalizationResult {
  bool pass = false;
  double residual = 0.0;
};

/// Tests a = b ⊗ id with b supported in `region`; b is the normalized
/// partial trace of a over the legs outside `region`.
inline LocalizationResult is_localized_in(const LocalOperator& a, const Region& region, double tol) {
  const Region outside = subtract(a.support(), region);
  if (outside.empty()) return {true, 0.0};
  auto b = partial_trace(a, outside);
  double d = 1.0;
  for (VertexId v : outside) d *= a.dim_of(v);
  Matrix bm = b.matrix() / d;
  std::map<VertexId, int> od;
  for (VertexId v : a.support()) od[v] = a.dim_of(v);
  SiteDims dims(2, od);
  auto back = embed(LocalOperator(b.support(), b.dims(), bm), a.support(), dims,
                    static_cast<std::size_t>(a.dim()));
  const double r = (a.matrix() - back.matrix()).norm();
  return {r <= tol, r};
}

/// Product of single-site density matrices: a default for sites of the
/// default dimension plus per-vertex overrides.
class ProductState {
 public:
  ProductState(SiteDims dims, std::optional<Matrix> default_density,
               std::map<VertexId, Matrix> overrides = {}, const Tolerances& tol = {})
      : dims_(std::move(dims)),
        default_(std::move(default_density)),
        overrides_(std::move(overrides)) {
    if (default_) validate(*default_, dims_.default_dim(), "default density", tol);
    for (const auto& [v, rho] : overrides_) {
      validate(rho, dims_(v), "density at vertex " + std::to_string(v.value), tol);
    }
  }

  /// Maximally mixed state on every site.
  static ProductState maximally_mixed(const SiteDims& dims) {
    const int d = dims.default_dim();
    std::map<VertexId, Matrix> ov;
    for (const auto& [v, dv] : dims.overrides()) ov[v] = Matrix::Identity(dv, dv) / double(dv);
    return {dims, Matrix(Matrix::Identity(d, d) / double(d)), std::move(ov)};
  }

  [[nodiscard]] const SiteDims& dims() const { return dims_; }

  [[nodiscard]] bool has_density(VertexId v) const {
    return overrides_.contains(v) || (default_ && dims_(v) == dims_.default_dim());
  }

  [[nodiscard]] const Matrix& density(VertexId v) const {
    if (auto it = overrides_.find(v); it != overrides_.end()) return it->second;
    if (default_ && dims_(v) == dims_.default_dim()) return *default_;
    throw std::domain_error("no density for vertex " + std::to_string(v.value));
  }

  /// Dense product density over `r`, legs in canonical order.
  [[nodiscard]] Matrix density(const Region& r) const {
    Matrix m = Matrix::Identity(1, 1);
    for (VertexId v : r) m = kron(m, density(v));
    return m;
  }

  static void validate(const Matrix& rho, int d, const std::string& what, const Tolerances& tol) {
    if (rho.rows() != d || rho.cols() != d)
      throw ValidationError(what + ": expected " + std::to_string(d) + "x" + std::to_string(d));
    if (hermiticity_residual(rho) > tol.hermitian) throw ValidationError(what + " is not Hermitian");
    if (std::abs(rho.trace() - Complex(1.0)) > tol.trace) throw ValidationError(what + " has trace != 1");
    if (min_hermitian_eigenvalue(rho) < -tol.psd) throw ValidationError(what + " is not positive semidefinite");
  }

 private:
  SiteDims dims_;
  std::optional<Matrix> default_;
  std::map<VertexId, Matrix> overrides_;
};

/// Traces out the sites `out` of `a` against the product state.
inline LocalOperator partial_expectation(const ProductState& phi, const LocalOperator& a,
                                         const Region& out) {
  std::vector<Matrix> ws;
  for (VertexId v : out) ws.push_back(phi.density(v));
  return contract_legs(a, out, ws);
}

/// phi(a) = tr((⊗ rho_x) a) over the support of a.
inline Complex eval_state(const ProductState& phi, const LocalOperator& a) {
  LocalOperator cur = a;
  // One leg at a time keeps the work at O(dim^2) per leg.
  while (!cur.support().empty()) {
    const VertexId v = cur.support()[cur.support().size() - 1];
    cur = partial_expectation(phi, cur, Region{v});
  }
  return cur.matrix()(0, 0);
}

/// Standard single-qubit operators "I", "X", "Y", "Z"; "I" works for any d.
inline Matrix named_operator(const std::string& name, int d) {
  if (name == "I") return Matrix::Identity(d, d);
  if (d != 2) throw std::domain_error("operator " + name + " is defined for qubits only");
  Matrix m(2, 2);
  if (name == "X") {
    m << 0, 1, 1, 0;
  } else if (name == "Y") {
    m << 0, Complex(0, -1), Complex(0, 1), 0;
  } else if (name == "Z") {
    m << 1, 0, 0, -1;
  } else {
    throw std::domain_error("unknown operator name " + name);
  }
  return m;
}

}  // namespace qmf
