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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "qmf/local_algebra.hpp"
#include "qmf/random.hpp"

namespace qmf {

/// E(a) = sum_i K_i^dagger a K_i, each K_i of shape dim(domain) x dim(codomain).
struct KrausForm {
  std::vector<Matrix> ops;
};

/// Matrix acting on row-major vec of domain operators, producing row-major
/// vec of codomain operators.
struct MapForm {
  Matrix matrix;
};

/// Where a plaquette map lives: its site, the plaquette {y} and N_y, and the
/// previous/successor neighbor sets.
struct PlaquetteShape {
  VertexId site;
  Region domain;
  Region previous;
  Region successors;
};

class TransitionExpectation {
 public:
  static TransitionExpectation from_kraus(PlaquetteShape shape, std::vector<int> domain_dims,
                                          std::vector<Matrix> ops, double unital_tol = 1e-10) {
    TransitionExpectation e(std::move(shape), std::move(domain_dims));
    if (ops.empty()) throw ValidationError("Kraus family is empty");
    Matrix sum = Matrix::Zero(e.dim_codomain(), e.dim_codomain());
    for (const auto& k : ops) {
      if (k.rows() != e.dim_domain() || k.cols() != e.dim_codomain()) {
        throw ValidationError("Kraus operator at " + std::to_string(e.site().value) + " has shape " +
                              std::to_string(k.rows()) + "x" + std::to_string(k.cols()) + ", expected " +
                              std::to_string(e.dim_domain()) + "x" + std::to_string(e.dim_codomain()));
      }
      sum += k.adjoint() * k;
    }
    const double r = (sum - Matrix::Identity(e.dim_codomain(), e.dim_codomain())).norm();
    if (r > unital_tol) {
      throw ValidationError("Kraus family at " + std::to_string(e.site().value) +
                            " is not identity preserving (residual " + format_number(r) + ")");
    }
    e.form_ = KrausForm{std::move(ops)};
    return e;
  }

  static TransitionExpectation from_map(PlaquetteShape shape, std::vector<int> domain_dims, Matrix m) {
    TransitionExpectation e(std::move(shape), std::move(domain_dims));
    const auto dd = e.dim_domain(), dc = e.dim_codomain();
    if (m.rows() != dc * dc || m.cols() != dd * dd) {
      throw ValidationError("map matrix at " + std::to_string(e.site().value) + " must be " +
                            std::to_string(dc * dc) + "x" + std::to_string(dd * dd));
    }
    e.form_ = MapForm{std::move(m)};
    return e;
  }

  [[nodiscard]] VertexId site() const { return shape_.site; }
  [[nodiscard]] const PlaquetteShape& shape() const { return shape_; }
  [[nodiscard]] const Region& domain() const { return shape_.domain; }
  [[nodiscard]] const Region& codomain() const { return shape_.successors; }
  [[nodiscard]] const Region& previous() const { return shape_.previous; }
  [[nodiscard]] const std::vector<int>& domain_dims() const { return dims_; }
  [[nodiscard]] std::vector<int> dims_of(const Region& sub) const {
    std::vector<int> out;
    for (VertexId v : sub) out.push_back(dims_[shape_.domain.index_of(v)]);
    return out;
  }
  [[nodiscard]] std::vector<int> codomain_dims() const { return dims_of(codomain()); }
  [[nodiscard]] Eigen::Index dim_domain() const { return dim_domain_; }
  [[nodiscard]] Eigen::Index dim_codomain() const { return dim_codomain_; }

  [[nodiscard]] bool is_kraus() const { return std::holds_alternative<KrausForm>(form_); }
  [[nodiscard]] const std::vector<Matrix>& kraus() const { return std::get<KrausForm>(form_).ops; }
  [[nodiscard]] const Matrix& map_matrix() const { return std::get<MapForm>(form_).matrix; }

 private:
  TransitionExpectation(PlaquetteShape shape, std::vector<int> dims)
      : shape_(std::move(shape)), dims_(std::move(dims)) {
    if (dims_.size() != shape_.domain.size()) throw ValidationError("one dimension per domain site");
    if (!shape_.domain.contains(shape_.site)) throw ValidationError("domain must contain the site");
    if (!is_subset(shape_.successors, shape_.domain)) throw ValidationError("codomain must lie inside the domain");
    if (!is_subset(shape_.previous, shape_.domain)) throw ValidationError("previous set must lie inside the domain");
    for (int d : dims_)
      if (d < 1) throw ValidationError("site dimensions must be positive");
    dim_domain_ = static_cast<Eigen::Index>(joint_dim(dims_, SIZE_MAX / 2));
    dim_codomain_ = static_cast<Eigen::Index>(joint_dim(codomain_dims(), SIZE_MAX / 2));
  }

  PlaquetteShape shape_;
  std::vector<int> dims_;
  Eigen::Index dim_domain_ = 1;
  Eigen::Index dim_codomain_ = 1;
  std::variant<KrausForm, MapForm> form_;
};

namespace detail {

inline std::vector<std::size_t> positions_in(const Region& whole, const Region& sub) {
  std::vector<std::size_t> out;
  for (VertexId v : sub) out.push_back(whole.index_of(v));
  return out;
}

/// Leg order that takes the concatenation (first..., second...) of two
/// disjoint regions to the canonical order of their union.
inline std::vector<std::size_t> merge_order(const Region& first, const Region& second) {
  std::vector<std::size_t> order;
  for (VertexId v : unite(first, second)) {
    order.push_back(first.contains(v) ? first.index_of(v) : first.size() + second.index_of(v));
  }
  return order;
}

/// Rows of `m` reordered from leg order `from` to the canonical order of the
/// same vertex set.
inline Matrix canonical_rows(const Matrix& m, const std::vector<VertexId>& from,
                             const std::vector<int>& from_dims) {
  const Region target(from);
  std::vector<std::size_t> order;
  for (VertexId v : target) {
    order.push_back(static_cast<std::size_t>(std::find(from.begin(), from.end(), v) - from.begin()));
  }
  const auto map = leg_offsets(from_dims, order);
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < map.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(map[i]));
  }
  return out;
}

}  // namespace detail

/// E tensor id applied to `x`. The result is supported on the support of x
/// outside the domain together with the codomain.
inline LocalOperator apply(const TransitionExpectation& e, const LocalOperator& x,
                           std::size_t max_dim = kDefaultMaxDim) {
  const Region& dom = e.domain();
  const Region& cod = e.codomain();
  const Region in = intersect(x.support(), dom);
  const Region rest = subtract(x.support(), dom);
  const Region out = unite(rest, cod);
  for (VertexId v : in) {
    if (x.dim_of(v) != e.dims_of(Region{v})[0])
      throw ValidationError("dimension mismatch at vertex " + std::to_string(v.value));
  }
  std::vector<int> cur_dims = x.dims_of(rest);
  const auto cdims = e.codomain_dims();
  cur_dims.insert(cur_dims.end(), cdims.begin(), cdims.end());
  joint_dim(cur_dims, max_dim, "result of E at site " + std::to_string(e.site().value));

  // Input legs as (rest, in).
  std::vector<std::size_t> order = x.positions(rest);
  for (auto p : x.positions(in)) order.push_back(p);
  const Matrix xp = permute_legs(x.matrix(), x.dims(), order);

  const auto off_in = leg_offsets(e.domain_dims(), detail::positions_in(dom, in));
  const auto off_id = leg_offsets(e.domain_dims(), detail::positions_in(dom, subtract(dom, in)));
  const auto dr = static_cast<Eigen::Index>(x.dim() / static_cast<Eigen::Index>(off_in.size()));
  const auto di = static_cast<Eigen::Index>(off_in.size());
  const Eigen::Index dc = e.dim_codomain();
  Matrix y = Matrix::Zero(dr * dc, dr * dc);

  if (e.is_kraus()) {
    Matrix kt(di, dc);
    Matrix t(dr * di, dr * dc);
    for (const auto& k : e.kraus()) {
      for (auto ot : off_id) {
        for (Eigen::Index i = 0; i < di; ++i)
          kt.row(i) = k.row(static_cast<Eigen::Index>(off_in[static_cast<std::size_t>(i)] + ot));
        for (Eigen::Index r = 0; r < dr; ++r) t.middleCols(r * dc, dc).noalias() = xp.middleCols(r * di, di) * kt;
        for (Eigen::Index r = 0; r < dr; ++r)
          y.middleRows(r * dc, dc).noalias() += kt.adjoint() * t.middleRows(r * di, di);
      }
    }
  } else {
    const Matrix& m = e.map_matrix();
    const Eigen::Index dd = e.dim_domain();
    Matrix f = Matrix::Zero(dc * dc, di * di);
    for (Eigen::Index i = 0; i < di; ++i)
      for (Eigen::Index j = 0; j < di; ++j)
        for (auto ot : off_id) {
          const auto row = static_cast<Eigen::Index>(off_in[static_cast<std::size_t>(i)] + ot);
          const auto col = static_cast<Eigen::Index>(off_in[static_cast<std::size_t>(j)] + ot);
          f.col(i * di + j) += m.col(row * dd + col);
        }
    for (Eigen::Index r = 0; r < dr; ++r)
      for (Eigen::Index s = 0; s < dr; ++s) {
        const Vector v = f * vec(xp.block(r * di, s * di, di, di));
        y.block(r * dc, s * dc, dc, dc) = unvec(v, dc);
      }
  }
  std::vector<int> out_dims;
  for (VertexId v : out) out_dims.push_back(cod.contains(v) ? e.dims_of(Region{v})[0] : x.dim_of(v));
  return {out, std::move(out_dims), permute_legs(y, cur_dims, detail::merge_order(rest, cod))};
}

/// Choi matrix sum_kl E*(e_kl) (x) e_kl, legs (domain, codomain), with e_kl
/// the row-major codomain matrix units and E* the Hilbert-Schmidt adjoint.
inline Matrix choi(const TransitionExpectation& e, std::size_t max_dim = kDefaultMaxDim) {
  const Eigen::Index dd = e.dim_domain(), dc = e.dim_codomain();
  if (static_cast<std::size_t>(dd * dc) > max_dim)
    throw ResourceError("Choi matrix at site " + std::to_string(e.site().value) + " exceeds MAX_DIM");
  Matrix c = Matrix::Zero(dd * dc, dd * dc);
  if (e.is_kraus()) {
    for (const auto& k : e.kraus()) {
      const Vector v = vec(k);
      c.noalias() += v * v.adjoint();
    }
    return c;
  }
  const Matrix adj = e.map_matrix().adjoint();
  for (Eigen::Index k = 0; k < dc; ++k)
    for (Eigen::Index l = 0; l < dc; ++l) {
      const Matrix b = unvec(adj.col(k * dc + l), dd);
      for (Eigen::Index d = 0; d < dd; ++d)
        for (Eigen::Index f = 0; f < dd; ++f) c(d * dc + k, f * dc + l) = b(d, f);
    }
  return c;
}

struct CpUnitalReport {
  bool cp = false;
  double min_choi_eig = 0.0;
  double choi_hermiticity = 0.0;
  bool unital = false;
  double unital_residual = 0.0;
};

inline CpUnitalReport is_cp_unital(const TransitionExpectation& e, double tol,
                                   std::size_t max_dim = kDefaultMaxDim) {
  CpUnitalReport rep;
  const Matrix c = choi(e, max_dim);
  rep.choi_hermiticity = hermiticity_residual(c);
  rep.min_choi_eig = min_hermitian_eigenvalue(c);
  rep.cp = rep.min_choi_eig >= -tol && rep.choi_hermiticity <= tol;
  LocalOperator id(e.domain(), e.domain_dims(), Matrix::Identity(e.dim_domain(), e.dim_domain()));
  const auto img = apply(e, id, max_dim);
  rep.unital_residual = (img.matrix() - Matrix::Identity(img.dim(), img.dim())).norm();
  rep.unital = rep.unital_residual <= tol;
  return rep;
}

/// Regions (A, B, C) of a Markov triplet; B and C lie inside A.
struct MarkovTriplet {
  Region a;
  Region b;
  Region c;
};

struct CheckResult {
  bool pass = false;
  double residual = 0.0;
};

/// Applies E to every matrix unit localized in A minus C and tests that the
/// image is localized in B minus C.
inline CheckResult is_markov_te(const TransitionExpectation& e, const MarkovTriplet& t, double tol,
                                std::size_t max_dim = kDefaultMaxDim) {
  if (!is_subset(t.b, t.a) || !is_subset(t.c, t.a))
    throw std::domain_error("Markov triplet needs B and C inside A");
  if (t.a != e.domain()) throw std::domain_error("Markov triplet region A must be the domain");
  const Region free = subtract(t.a, t.c);
  const Region target = subtract(t.b, t.c);
  const std::vector<int> dims = e.dims_of(free);
  const auto d = static_cast<Eigen::Index>(joint_dim(dims, max_dim, "Markov test basis"));
  CheckResult res{true, 0.0};
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) {
      Matrix u = Matrix::Zero(d, d);
      u(i, j) = 1.0;
      const auto img = apply(e, LocalOperator(free, dims, u), max_dim);
      const auto loc = is_localized_in(img, target, tol);
      res.residual = std::max(res.residual, loc.residual);
    }
  res.pass = res.residual <= tol;
  return res;
}

enum class OperatorBasis { kMatrixUnits, kGellMann };

/// Generalized Gell-Mann matrices with the identity first: d^2 Hermitian
/// matrices spanning M_d.
inline std::vector<Matrix> gell_mann(int d) {
  std::vector<Matrix> out{Matrix::Identity(d, d)};
  for (int j = 0; j < d; ++j)
    for (int k = j + 1; k < d; ++k) {
      Matrix s = Matrix::Zero(d, d), a = Matrix::Zero(d, d);
      s(j, k) = s(k, j) = 1.0;
      a(j, k) = Complex(0, -1);
      a(k, j) = Complex(0, 1);
      out.push_back(s);
      out.push_back(a);
    }
  for (int l = 1; l < d; ++l) {
    Matrix h = Matrix::Zero(d, d);
    const double c = std::sqrt(2.0 / (l * (l + 1.0)));
    for (int j = 0; j < l; ++j) h(j, j) = c;
    h(l, l) = -c * l;
    out.push_back(h);
  }
  return out;
}

/// A spanning set of operators on a product of sites.
inline std::vector<Matrix> operator_basis(const std::vector<int>& dims, OperatorBasis kind) {
  std::vector<Matrix> out{Matrix::Identity(1, 1)};
  for (int d : dims) {
    std::vector<Matrix> site;
    if (kind == OperatorBasis::kGellMann) {
      site = gell_mann(d);
    } else {
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
          Matrix u = Matrix::Zero(d, d);
          u(i, j) = 1.0;
          site.push_back(u);
        }
    }
    std::vector<Matrix> next;
    for (const auto& a : out)
      for (const auto& b : site) next.push_back(kron(a, b));
    out = std::move(next);
  }
  return out;
}

struct CompatibilityReport {
  bool pass = false;
  double max_deviation = 0.0;
  /// Root of the summed squared deviations; for an orthonormal basis this is
  /// the Frobenius norm of the defect and does not depend on the basis.
  double defect_norm = 0.0;
};

/// max |phi0(E(a (x) id)) - phi0(a)| over a basis of operators a on the
/// previous set, each normalized to Frobenius norm 1.
inline CompatibilityReport check_compatibility(const TransitionExpectation& e, const ProductState& phi0, double tol,
                                       OperatorBasis basis = OperatorBasis::kMatrixUnits,
                                       std::size_t max_dim = kDefaultMaxDim) {
  const Region& p = e.previous();
  const auto dims = e.dims_of(p);
  joint_dim(dims, max_dim, "compatibility basis");
  CompatibilityReport res;
  double sum = 0.0;
  for (const auto& m : operator_basis(dims, basis)) {
    LocalOperator a(p, dims, m / m.norm());
    const Complex lhs = eval_state(phi0, apply(e, a, max_dim));
    const Complex rhs = eval_state(phi0, a);
    const double dev = std::abs(lhs - rhs);
    res.max_deviation = std::max(res.max_deviation, dev);
    sum += dev * dev;
  }
  res.defect_norm = std::sqrt(sum);
  res.pass = res.max_deviation <= tol;
  return res;
}

/// E(a_p (x) b_y (x) c_s) = phi0(a_p) phi0(b_y) c_s. Sites of the domain
/// outside the codomain are all contracted against phi0.
inline TransitionExpectation make_product_te(const PlaquetteShape& shape, const SiteDims& dims,
                                             const ProductState& phi0) {
  const Region traced = subtract(shape.domain, shape.successors);
  // Per-site eigendecompositions give the purification of the product density.
  Matrix vecs = Matrix::Identity(1, 1);
  Eigen::VectorXd vals = Eigen::VectorXd::Ones(1);
  for (VertexId v : traced) {
    const Matrix& rho = phi0.density(v);
    ProductState::validate(rho, dims(v), "density at vertex " + std::to_string(v.value), {});
    Eigen::SelfAdjointEigenSolver<Matrix> es((rho + rho.adjoint()) / 2.0);
    vecs = kron(vecs, es.eigenvectors());
    Eigen::VectorXd nv(vals.size() * es.eigenvalues().size());
    for (Eigen::Index i = 0; i < vals.size(); ++i)
      for (Eigen::Index j = 0; j < es.eigenvalues().size(); ++j)
        nv(i * es.eigenvalues().size() + j) = vals(i) * std::max(0.0, es.eigenvalues()(j));
    vals = nv;
  }
  const auto cdims = dims.of(shape.successors);
  const auto dc = static_cast<Eigen::Index>(joint_dim(cdims, SIZE_MAX / 2));
  std::vector<VertexId> from = traced.vertices();
  from.insert(from.end(), shape.successors.begin(), shape.successors.end());
  std::vector<int> from_dims = dims.of(traced);
  from_dims.insert(from_dims.end(), cdims.begin(), cdims.end());
  const Matrix id = Matrix::Identity(dc, dc);
  std::vector<Matrix> ops;
  for (Eigen::Index m = 0; m < vals.size(); ++m) {
    if (vals(m) <= 0.0) continue;
    Matrix k = kron(Matrix(vecs.col(m)), id) * std::sqrt(vals(m));
    ops.push_back(detail::canonical_rows(k, from, from_dims));
  }
  return TransitionExpectation::from_kraus(shape, dims.of(shape.domain), std::move(ops));
}

struct IsometryOptions {
  bool repair = true;
  int max_iterations = 10000;
  double target = 1e-13;
};

namespace detail {

inline Matrix pinv_sqrt(const Matrix& h) {
  Eigen::SelfAdjointEigenSolver<Matrix> es((h + h.adjoint()) / 2.0);
  const double cut = 1e-15 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  Eigen::VectorXd v = es.eigenvalues().unaryExpr([cut](double x) { return x > cut ? 1.0 / std::sqrt(x) : 0.0; });
  return es.eigenvectors() * v.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
}

/// Rows of b grouped (p, q): applies l (x) id_q from the left.
inline void left_multiply(Matrix& b, const Matrix& l, Eigen::Index dq) {
  const Eigen::Index dp = l.rows();
  Matrix blk(dp, b.cols());
  for (Eigen::Index q = 0; q < dq; ++q) {
    for (Eigen::Index p = 0; p < dp; ++p) blk.row(p) = b.row(p * dq + q);
    blk = l * blk;
    for (Eigen::Index p = 0; p < dp; ++p) b.row(p * dq + q) = blk.row(p);
  }
}

/// tr_q(w w^dagger) for rows grouped (p, q).
inline Matrix left_marginal(const Matrix& w, Eigen::Index dp, Eigen::Index dq) {
  Matrix m = Matrix::Zero(dp, dp);
  Matrix blk(dp, w.cols());
  for (Eigen::Index q = 0; q < dq; ++q) {
    for (Eigen::Index p = 0; p < dp; ++p) blk.row(p) = w.row(p * dq + q);
    m.noalias() += blk * blk.adjoint();
  }
  return m;
}

}  // namespace detail

/// Single Kraus operator V: a Haar isometry from the codomain into the
/// plaquette. With repair on, V is rescaled by alternating left/right
/// marginal corrections (operator Sinkhorn scaling) until
/// tr_Q(V sigma V^dagger) = rho_p, sigma the reference density on the
/// codomain and Q the domain outside the previous set; that identity is the
/// compatibility condition for a single isometric Kraus operator.
inline TransitionExpectation make_isometry_te(std::uint64_t seed, const PlaquetteShape& shape,
                                              const SiteDims& dims, const ProductState& phi0,
                                              const IsometryOptions& opt = {}) {
  const auto ddims = dims.of(shape.domain);
  const auto dd = static_cast<Eigen::Index>(joint_dim(ddims, SIZE_MAX / 2));
  const auto dc = static_cast<Eigen::Index>(joint_dim(dims.of(shape.successors), SIZE_MAX / 2));
  Rng rng(seed);
  const Matrix v0 = haar_isometry(rng, dd, dc);
  if (!opt.repair || shape.previous.empty()) {
    return TransitionExpectation::from_kraus(shape, ddims, {v0});
  }
  const Region q = subtract(shape.domain, shape.previous);
  const auto pos_p = detail::positions_in(shape.domain, shape.previous);
  const auto pos_q = detail::positions_in(shape.domain, q);
  const auto off_p = leg_offsets(ddims, pos_p);
  const auto off_q = leg_offsets(ddims, pos_q);
  const auto dp = static_cast<Eigen::Index>(off_p.size());
  const auto dq = static_cast<Eigen::Index>(off_q.size());
  Matrix vpq(dd, dc);
  for (Eigen::Index p = 0; p < dp; ++p)
    for (Eigen::Index j = 0; j < dq; ++j)
      vpq.row(p * dq + j) =
          v0.row(static_cast<Eigen::Index>(off_p[static_cast<std::size_t>(p)] + off_q[static_cast<std::size_t>(j)]));

  const Matrix rho_p = phi0.density(shape.previous);
  const Matrix sigma = phi0.density(shape.successors);
  Eigen::SelfAdjointEigenSolver<Matrix> es((sigma + sigma.adjoint()) / 2.0);
  const Matrix u = es.eigenvectors();
  const Eigen::VectorXd lam = es.eigenvalues();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < dc; ++i)
    if (lam(i) > 1e-14 * lam.maxCoeff()) keep.push_back(i);
  const auto k = static_cast<Eigen::Index>(keep.size());
  Matrix b(dd, k);
  Eigen::VectorXd sq(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    b.col(c) = vpq * u.col(keep[static_cast<std::size_t>(c)]);
    sq(c) = std::sqrt(lam(keep[static_cast<std::size_t>(c)]));
  }
  const Matrix rh = hermitian_sqrt(rho_p);
  bool converged = false;
  for (int it = 0; it <= opt.max_iterations; ++it) {
    const Matrix w = b * sq.cast<Complex>().asDiagonal();
    const Matrix m = detail::left_marginal(w, dp, dq);
    if ((m - rho_p).cwiseAbs().maxCoeff() <= opt.target) {
      converged = true;
      break;
    }
    if (it == opt.max_iterations) break;
    detail::left_multiply(b, rh * detail::pinv_sqrt(m), dq);
    const Matrix wd = b * sq.cast<Complex>().asDiagonal();
    b = wd * detail::pinv_sqrt(wd.adjoint() * wd);
  }
  if (!converged || !b.allFinite()) {
    throw ValidationError("no compatible TE found for seed " + std::to_string(seed) + " at site " +
                          std::to_string(shape.site.value));
  }
  // Kernel directions of sigma carry no weight: complete them from the
  // original isometry, orthogonal to the repaired columns.
  Matrix full(dd, dc);
  Matrix basis = b;
  for (Eigen::Index i = 0; i < dc; ++i) {
    auto it = std::find(keep.begin(), keep.end(), i);
    if (it != keep.end()) {
      full.col(i) = b.col(it - keep.begin());
      continue;
    }
    Vector c = vpq * u.col(i);
    for (int pass = 0; pass < 2; ++pass) c -= basis * (basis.adjoint() * c);
    c.normalize();
    basis.conservativeResize(Eigen::NoChange, basis.cols() + 1);
    basis.col(basis.cols() - 1) = c;
    full.col(i) = c;
  }
  const Matrix vfix = full * u.adjoint();
  Matrix v(dd, dc);
  for (Eigen::Index p = 0; p < dp; ++p)
    for (Eigen::Index j = 0; j < dq; ++j)
      v.row(static_cast<Eigen::Index>(off_p[static_cast<std::size_t>(p)] + off_q[static_cast<std::size_t>(j)])) =
          vfix.row(p * dq + j);
  return TransitionExpectation::from_kraus(shape, ddims, {v});
}

/// E(a) = (<0_T| a |0_T>)^T with T the domain outside the codomain: identity
/// preserving but not completely positive.
inline TransitionExpectation make_transpose_te(const PlaquetteShape& shape, const SiteDims& dims) {
  const auto ddims = dims.of(shape.domain);
  const auto dd = static_cast<Eigen::Index>(joint_dim(ddims, SIZE_MAX / 2));
  const auto off_c = leg_offsets(ddims, detail::positions_in(shape.domain, shape.successors));
  const auto dc = static_cast<Eigen::Index>(off_c.size());
  Matrix m = Matrix::Zero(dc * dc, dd * dd);
  for (Eigen::Index i = 0; i < dc; ++i)
    for (Eigen::Index j = 0; j < dc; ++j) {
      const auto row = static_cast<Eigen::Index>(off_c[static_cast<std::size_t>(i)]);
      const auto col = static_cast<Eigen::Index>(off_c[static_cast<std::size_t>(j)]);
      m(j * dc + i, row * dd + col) = 1.0;
    }
  return TransitionExpectation::from_map(shape, ddims, std::move(m));
}

}  // namespace qmf
