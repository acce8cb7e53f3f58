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
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qmf/local_algebra.hpp"
#include "qmf/tessellation.hpp"
#include "qmf/transition.hpp"

namespace qmf {

/// The tessellation does not satisfy the standing conditions.
class ConditionError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Plaquette shape of a classified site (the root included).
inline PlaquetteShape shape_of(const Tessellation& t, VertexId y) {
  auto lv = t.level_of(y);
  if (!lv) throw std::domain_error("vertex " + t.graph().label(y) + " is not a classified site");
  auto c = t.classify(*lv, y);
  return {y, t.plaquette(y), c.previous, c.successors};
}

/// Sites whose maps make up level n: the root for n = 0, else the
/// enumerated out-boundary of V_n.
inline std::vector<VertexId> level_sites(const Tessellation& t, int n) {
  if (n == 0) return {t.root()};
  if (n < 0 || n > t.classified_depth()) throw std::domain_error("no level map at level " + std::to_string(n));
  return t.level(n).enumeration;
}

inline std::string describe(const Graph& g, const Region& r) {
  std::string s = "{";
  for (std::size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + g.label(r[i]);
  return s + "}";
}

/// Reference state plus one transition expectation per classified site.
class FieldSpec {
 public:
  using Generator = std::function<TransitionExpectation(const PlaquetteShape&)>;

  FieldSpec(Tessellation t, SiteDims dims, ProductState phi0, std::map<VertexId, TransitionExpectation> tes,
            std::size_t max_dim = kDefaultMaxDim, Tolerances tol = {})
      : t_(std::move(t)),
        dims_(std::move(dims)),
        phi0_(std::move(phi0)),
        tes_(std::move(tes)),
        max_dim_(max_dim),
        tol_(tol) {
    if (t_.depth() < 2) throw std::domain_error("field needs depth >= 2");
    auto rep = check_conditions(t_);
    if (!rep.all_pass()) {
      std::string why;
      if (!rep.n0_empty()) why += " N0 nonempty;";
      if (!rep.s_disjoint()) why += " successor sets overlap;";
      if (!rep.edge_bipartition()) why += " edge bipartition broken;";
      throw ConditionError("tessellation conditions fail:" + why);
    }
    for (int n = 0; n <= t_.classified_depth(); ++n) {
      for (VertexId y : level_sites(t_, n)) {
        auto it = tes_.find(y);
        if (it == tes_.end()) throw ValidationError("no transition expectation for site " + t_.graph().label(y));
        const auto want = shape_of(t_, y);
        const auto& e = it->second;
        if (e.domain() != want.domain || e.codomain() != want.successors || e.previous() != want.previous)
          throw ValidationError("transition expectation at " + t_.graph().label(y) +
                                " does not match the plaquette classification");
        if (e.domain_dims() != dims_.of(want.domain))
          throw ValidationError("transition expectation at " + t_.graph().label(y) + " has wrong site dimensions");
        for (VertexId v : e.domain())
          if (!phi0_.has_density(v))
            throw ValidationError("reference state has no density at " + t_.graph().label(v));
        Cached c;
        c.cp = is_cp_unital(e, tol_.psd, std::numeric_limits<std::size_t>::max());
        c.compat = check_compatibility(e, phi0_, tol_.compatibility, OperatorBasis::kMatrixUnits,
                                       std::numeric_limits<std::size_t>::max());
        cache_.emplace(y, c);
      }
    }
  }

  /// Builds every map from one generator.
  static std::map<VertexId, TransitionExpectation> generate(const Tessellation& t, const Generator& gen) {
    std::map<VertexId, TransitionExpectation> out;
    for (int n = 0; n <= t.classified_depth(); ++n)
      for (VertexId y : level_sites(t, n)) out.emplace(y, gen(shape_of(t, y)));
    return out;
  }

  [[nodiscard]] const Tessellation& tessellation() const { return t_; }
  [[nodiscard]] const Graph& graph() const { return t_.graph(); }
  [[nodiscard]] const SiteDims& dims() const { return dims_; }
  [[nodiscard]] const ProductState& reference() const { return phi0_; }
  [[nodiscard]] std::size_t max_dim() const { return max_dim_; }
  [[nodiscard]] const Tolerances& tolerances() const { return tol_; }
  [[nodiscard]] int depth() const { return t_.depth(); }
  /// Highest n for which phi_n is defined.
  [[nodiscard]] int max_level() const { return t_.classified_depth(); }
  [[nodiscard]] const std::map<VertexId, TransitionExpectation>& transitions() const { return tes_; }

  [[nodiscard]] const TransitionExpectation& te(VertexId y) const {
    auto it = tes_.find(y);
    if (it == tes_.end()) throw std::domain_error("no transition expectation at " + t_.graph().label(y));
    return it->second;
  }
  [[nodiscard]] const CpUnitalReport& cp_report(VertexId y) const { return cache_.at(y).cp; }
  [[nodiscard]] const CompatibilityReport& compatibility(VertexId y) const { return cache_.at(y).compat; }
  [[nodiscard]] bool unital(VertexId y) const { return cache_.at(y).cp.unital; }

  [[nodiscard]] bool all_compatible() const {
    return std::all_of(cache_.begin(), cache_.end(), [](const auto& kv) { return kv.second.compat.pass; });
  }

  /// Maps of levels 0..n in composition order.
  [[nodiscard]] std::vector<VertexId> schedule(int n) const {
    std::vector<VertexId> s;
    for (int m = 0; m <= n; ++m) {
      auto lv = level_sites(t_, m);
      s.insert(s.end(), lv.begin(), lv.end());
    }
    return s;
  }

 private:
  struct Cached {
    CpUnitalReport cp;
    CompatibilityReport compat;
  };

  Tessellation t_;
  SiteDims dims_;
  ProductState phi0_;
  std::map<VertexId, TransitionExpectation> tes_;
  std::size_t max_dim_;
  Tolerances tol_;
  std::map<VertexId, Cached> cache_;
};

struct EngineStats {
  std::size_t applied = 0;
  std::size_t skipped = 0;
  std::size_t contracted = 0;
  std::size_t peak_dim = 1;
};

namespace detail {

/// Applies the maps of `schedule` (composition order: first entry acts
/// first) to x while keeping supports minimal. A map may move ahead of
/// earlier pending maps only when their domains are disjoint, so the result
/// equals the literal composition. Ready identity-preserving maps that miss
/// the current support are dropped, and with `contract` set every leg that
/// no pending map touches is traced against the reference state.
inline LocalOperator run_maps(const FieldSpec& spec, const std::vector<VertexId>& schedule, LocalOperator x,
                              bool contract, EngineStats* stats) {
  EngineStats local;
  EngineStats& st = stats ? *stats : local;
  struct Pending {
    const TransitionExpectation* e;
    bool unital;
  };
  std::vector<Pending> pending;
  std::map<VertexId, int> cover;
  for (VertexId y : schedule) {
    pending.push_back({&spec.te(y), spec.unital(y)});
    for (VertexId v : spec.te(y).domain()) ++cover[v];
  }
  auto contract_free = [&] {
    if (!contract) return;
    std::vector<VertexId> free;
    for (VertexId v : x.support()) {
      auto it = cover.find(v);
      if (it == cover.end() || it->second == 0) free.push_back(v);
    }
    if (free.empty()) return;
    x = partial_expectation(spec.reference(), x, Region(free));
    st.contracted += free.size();
  };
  auto retire = [&](std::size_t j) {
    for (VertexId v : pending[j].e->domain()) --cover[v];
    pending.erase(pending.begin() + static_cast<std::ptrdiff_t>(j));
  };
  st.peak_dim = std::max(st.peak_dim, static_cast<std::size_t>(x.dim()));
  contract_free();
  while (!pending.empty()) {
    std::set<VertexId> blocked;
    std::optional<std::size_t> best;
    std::size_t best_dim = std::numeric_limits<std::size_t>::max();
    std::optional<std::size_t> drop;
    for (std::size_t j = 0; j < pending.size(); ++j) {
      const auto& e = *pending[j].e;
      bool ready = true;
      for (VertexId v : e.domain()) {
        if (blocked.contains(v)) ready = false;
      }
      for (VertexId v : e.domain()) blocked.insert(v);
      if (!ready) continue;
      const bool touches = !disjoint(e.domain(), x.support());
      if (!touches && pending[j].unital) {
        drop = j;
        break;
      }
      std::size_t od = static_cast<std::size_t>(e.dim_codomain());
      for (VertexId v : subtract(x.support(), e.domain())) od *= static_cast<std::size_t>(x.dim_of(v));
      if (od < best_dim) {
        best_dim = od;
        best = j;
      }
    }
    if (drop) {
      retire(*drop);
      ++st.skipped;
      contract_free();
      continue;
    }
    const auto& e = *pending[*best].e;
    const Region out = unite(subtract(x.support(), e.domain()), e.codomain());
    if (best_dim > spec.max_dim()) {
      throw ResourceError("joint support " + describe(spec.graph(), out) + " at site " +
                          spec.graph().label(e.site()) + " exceeds MAX_DIM=" + std::to_string(spec.max_dim()));
    }
    x = apply(e, x, spec.max_dim());
    ++st.applied;
    st.peak_dim = std::max(st.peak_dim, static_cast<std::size_t>(x.dim()));
    retire(*best);
    contract_free();
  }
  return x;
}

inline void check_support_dims(const FieldSpec& spec, const LocalOperator& a) {
  for (VertexId v : a.support()) {
    if (!spec.graph().is_vertex(v)) throw std::domain_error("observable support leaves the graph");
    if (a.dim_of(v) != spec.dims()(v))
      throw ValidationError("observable dimension mismatch at " + spec.graph().label(v));
  }
}

}  // namespace detail

/// E_{n,n+1}(a): the level-n maps in enumeration order (level 0 is the root map).
inline LocalOperator level_map_apply(const FieldSpec& spec, int n, const LocalOperator& a,
                                     EngineStats* stats = nullptr) {
  detail::check_support_dims(spec, a);
  return detail::run_maps(spec, level_sites(spec.tessellation(), n), a, false, stats);
}

/// E_{n,n+1} o ... o E_{0,1}(a).
inline LocalOperator full_map_apply(const FieldSpec& spec, int n, const LocalOperator& a,
                                    EngineStats* stats = nullptr) {
  detail::check_support_dims(spec, a);
  if (n < 0 || n > spec.max_level()) throw std::domain_error("level " + std::to_string(n) + " out of range");
  return detail::run_maps(spec, spec.schedule(n), a, false, stats);
}

/// phi_n(a): the reference state evaluated on full_map_apply(n, a).
inline Complex phi_n(const FieldSpec& spec, int n, const LocalOperator& a, EngineStats* stats = nullptr) {
  detail::check_support_dims(spec, a);
  if (n < 0 || n > spec.max_level()) throw std::domain_error("level " + std::to_string(n) + " out of range");
  auto r = detail::run_maps(spec, spec.schedule(n), a, true, stats);
  return eval_state(spec.reference(), r);
}

/// Dense evaluation of phi_n: every intermediate lives on all of V_{n+1}
/// (together with the support of a) and the maps run in literal order.
inline Complex oracle_eval(const FieldSpec& spec, int n, const LocalOperator& a) {
  detail::check_support_dims(spec, a);
  if (n < 0 || n > spec.max_level()) throw std::domain_error("level " + std::to_string(n) + " out of range");
  const Region omega = unite(spec.tessellation().level(n + 1).closure, a.support());
  const auto odims = spec.dims().of(omega);
  const auto total = static_cast<Eigen::Index>(joint_dim(odims, spec.max_dim(), "oracle region"));
  Matrix x = embed(a, omega, spec.dims(), spec.max_dim()).matrix();
  for (VertexId y : spec.schedule(n)) {
    const auto& e = spec.te(y);
    const Eigen::Index dd = e.dim_domain(), dc = e.dim_codomain();
    // Superoperator columns: vec(E(e_ij)) for the domain matrix units.
    Matrix s;
    if (e.is_kraus()) {
      s = Matrix::Zero(dc * dc, dd * dd);
      for (const auto& k : e.kraus())
        for (Eigen::Index i = 0; i < dd; ++i)
          for (Eigen::Index j = 0; j < dd; ++j) s.col(i * dd + j) += vec(k.row(i).adjoint() * k.row(j));
    } else {
      s = e.map_matrix();
    }
    std::vector<std::size_t> dom_legs, cod_legs, rest_legs, fill_legs;
    for (VertexId v : e.domain()) dom_legs.push_back(omega.index_of(v));
    for (VertexId v : e.codomain()) cod_legs.push_back(omega.index_of(v));
    for (VertexId v : subtract(omega, e.domain())) rest_legs.push_back(omega.index_of(v));
    for (VertexId v : subtract(e.domain(), e.codomain())) fill_legs.push_back(omega.index_of(v));
    const auto od = leg_offsets(odims, dom_legs);
    const auto oc = leg_offsets(odims, cod_legs);
    const auto orr = leg_offsets(odims, rest_legs);
    const auto of = leg_offsets(odims, fill_legs);
    Matrix z = Matrix::Zero(total, total);
    Vector blk(dd * dd);
    for (auto r1 : orr) {
      for (auto r2 : orr) {
        for (Eigen::Index i = 0; i < dd; ++i)
          for (Eigen::Index j = 0; j < dd; ++j)
            blk(i * dd + j) = x(static_cast<Eigen::Index>(r1 + od[static_cast<std::size_t>(i)]),
                                static_cast<Eigen::Index>(r2 + od[static_cast<std::size_t>(j)]));
        const Vector img = s * blk;
        // Identity on the domain legs outside the codomain.
        for (Eigen::Index c1 = 0; c1 < dc; ++c1)
          for (Eigen::Index c2 = 0; c2 < dc; ++c2) {
            const Complex val = img(c1 * dc + c2);
            if (val == Complex(0)) continue;
            for (auto f : of)
              z(static_cast<Eigen::Index>(r1 + oc[static_cast<std::size_t>(c1)] + f),
                static_cast<Eigen::Index>(r2 + oc[static_cast<std::size_t>(c2)] + f)) = val;
          }
      }
    }
    x = std::move(z);
  }
  return eval_state(spec.reference(), LocalOperator(omega, odims, std::move(x)));
}

/// Delta_j = D_j minus (D_1 u ... u D_{j-1}).
inline std::vector<Region> delta_decomposition(const std::vector<Region>& sets) {
  std::vector<Region> out;
  Region seen;
  for (const auto& d : sets) {
    out.push_back(subtract(d, seen));
    seen = unite(seen, d);
  }
  return out;
}

struct ProjectivityResult {
  bool pass = false;
  double residual = 0.0;
  /// Largest |E_y(id) - id| over the sites whose Delta_j carries no factor.
  double trivial_factor_deviation = 0.0;
};

namespace detail {

/// Frobenius distance between lhs and rnt (x) F_1 (x) F_2 (x) ..., where the
/// factors F_j sit on pairwise disjoint supports outside rnt. When lhs lives
/// on the support of rnt, the identity legs of lhs over the F_j are handled
/// through running moments of the product rather than materialized.
inline double tensor_distance(const LocalOperator& lhs, const LocalOperator& rnt,
                              const std::vector<LocalOperator>& factors, const SiteDims& dims,
                              std::size_t max_dim) {
  if (!is_subset(lhs.support(), rnt.support())) {
    LocalOperator rhs = rnt;
    for (const auto& f : factors) rhs = tensor(rhs, f, max_dim);
    const Region all = unite(lhs.support(), rhs.support());
    return (embed(lhs, all, dims, max_dim).matrix() - embed(rhs, all, dims, max_dim).matrix()).norm();
  }
  // P is the product of the factors and I the identity of the same size:
  // e2 = |I-P|^2, g = <I-P,P>, h = tr(I-P), p2 = |P|^2, ptrace = tr P.
  double e2 = 0.0, dim = 1.0, p2 = 1.0;
  Complex g = 0.0, h = 0.0, ptrace = 1.0;
  for (const auto& fo : factors) {
    const Matrix& f = fo.matrix();
    const Matrix dm = Matrix::Identity(f.rows(), f.cols()) - f;
    const Complex trf = f.trace();
    const Complex trd = dm.trace();
    e2 = e2 * static_cast<double>(f.rows()) + p2 * dm.squaredNorm() + 2.0 * (g * trd).real();
    g = g * trf + p2 * (dm.adjoint() * f).trace();
    h = h * static_cast<double>(f.rows()) + ptrace * trd;
    p2 *= f.squaredNorm();
    ptrace *= trf;
    dim *= static_cast<double>(f.rows());
  }
  // lhs (x) I - rnt (x) P = A (x) I + rnt (x) (I - P) with A = lhs - rnt.
  const Matrix a = embed(lhs, rnt.support(), dims, max_dim).matrix() - rnt.matrix();
  const Complex ar = (a.adjoint() * rnt.matrix()).trace();
  const double total = a.squaredNorm() * dim + rnt.matrix().squaredNorm() * e2 + 2.0 * (ar * h).real();
  return std::sqrt(std::max(0.0, total));
}

}  // namespace detail

/// Compares E_{n,n+1}(b) with the tensor product over the level-n sites of
/// E_{y_j}(b restricted to Delta_j), for b a product of single-site
/// operators on the internal boundary of V_n (identity where absent).
inline ProjectivityResult verify_projectivity(const FieldSpec& spec, int n, const std::map<VertexId, Matrix>& b,
                                              double tol) {
  const auto& t = spec.tessellation();
  if (n < 1 || n > spec.max_level()) throw std::domain_error("projectivity needs 1 <= n <= depth-1");
  const Region& shell = t.level(n).in_boundary;
  LocalOperator prod = LocalOperator::scalar(1.0);
  for (const auto& [v, m] : b) {
    if (!shell.contains(v)) throw std::domain_error("factor outside the internal boundary at " + t.graph().label(v));
    prod = tensor(prod, LocalOperator(Region{v}, {static_cast<int>(m.rows())}, m), spec.max_dim());
  }
  const LocalOperator lhs = level_map_apply(spec, n, prod);

  const auto sites = level_sites(t, n);
  std::vector<Region> prev;
  for (VertexId y : sites) prev.push_back(spec.te(y).previous());
  const auto deltas = delta_decomposition(prev);
  LocalOperator rnt = LocalOperator::scalar(1.0);
  std::vector<LocalOperator> trivial;
  ProjectivityResult res;
  for (std::size_t j = 0; j < sites.size(); ++j) {
    LocalOperator bj = LocalOperator::scalar(1.0);
    for (VertexId v : deltas[j]) {
      auto it = b.find(v);
      if (it != b.end()) bj = tensor(bj, LocalOperator(Region{v}, {static_cast<int>(it->second.rows())}, it->second));
    }
    LocalOperator img = apply(spec.te(sites[j]), bj, spec.max_dim());
    if (bj.support().empty()) {
      // Identity factors are compared locally; the Frobenius norm of a
      // tensor product with a large identity would scale their rounding
      // error by the square root of its dimension.
      const double dev = (img.matrix() - Matrix::Identity(img.dim(), img.dim())).norm();
      res.trivial_factor_deviation = std::max(res.trivial_factor_deviation, dev);
      if (dev > tol) trivial.push_back(std::move(img));
    } else {
      rnt = tensor(rnt, img, spec.max_dim());
    }
  }
  res.residual = detail::tensor_distance(lhs, rnt, trivial, spec.dims(), spec.max_dim());
  res.pass = res.residual <= tol && res.trivial_factor_deviation <= tol;
  return res;
}

enum class Verdict { kStabilized, kNotStabilized, kPhaseTransitionSuspected };

inline const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::kStabilized:
      return "stabilized";
    case Verdict::kNotStabilized:
      return "not-stabilized";
    case Verdict::kPhaseTransitionSuspected:
      return "phase-transition-suspected";
  }
  return "";
}

struct ConvergenceReport {
  std::string observable;
  int first_level = 0;  // covering level n0 of the observable's support
  std::vector<double> values;
  double max_imaginary = 0.0;
  std::vector<double> deviations;  // |phi_{n+1}(a) - phi_n(a)|
  double max_successive_deviation = 0.0;
  std::optional<int> stabilization_index;
  Verdict verdict = Verdict::kNotStabilized;
  bool all_compatible = false;
  std::vector<std::string> warnings;
};

namespace detail {

/// Splits values into clusters separated by gaps larger than `gap` and
/// reports whether the sequence returns to a cluster after leaving it.
inline bool revisits_cluster(const std::vector<double>& v, double gap) {
  std::vector<double> s = v;
  std::sort(s.begin(), s.end());
  std::vector<double> cuts;
  for (std::size_t i = 1; i < s.size(); ++i)
    if (s[i] - s[i - 1] > gap) cuts.push_back((s[i] + s[i - 1]) / 2);
  if (cuts.empty()) return false;
  auto label = [&](double x) { return std::upper_bound(cuts.begin(), cuts.end(), x) - cuts.begin(); };
  std::set<std::ptrdiff_t> left;
  std::ptrdiff_t cur = label(v[0]);
  for (std::size_t i = 1; i < v.size(); ++i) {
    const auto l = label(v[i]);
    if (l == cur) continue;
    left.insert(cur);
    if (left.contains(l)) return true;
    cur = l;
  }
  return false;
}

}  // namespace detail

/// phi_n(a) for n from the covering level of a up to depth-1, with a verdict.
inline ConvergenceReport convergence_report(const FieldSpec& spec, const LocalOperator& a, double tol,
                                            std::string name = "") {
  ConvergenceReport rep;
  rep.observable = std::move(name);
  rep.all_compatible = spec.all_compatible();
  auto n0 = spec.tessellation().covering_level(a.support().empty() ? Region{spec.tessellation().root()}
                                                                    : a.support());
  if (!n0) throw std::domain_error("observable support is not covered by V_depth");
  rep.first_level = *n0;
  if (spec.max_level() - *n0 + 1 < 2) {
    throw std::domain_error("depth too small: observable covered at level " + std::to_string(*n0) +
                            " needs depth >= " + std::to_string(*n0 + 2));
  }
  if (hermiticity_residual(a.matrix()) > spec.tolerances().hermitian) rep.warnings.push_back("observable is not Hermitian");
  for (int n = *n0; n <= spec.max_level(); ++n) {
    const Complex v = phi_n(spec, n, a);
    rep.values.push_back(v.real());
    rep.max_imaginary = std::max(rep.max_imaginary, std::abs(v.imag()));
  }
  for (std::size_t i = 1; i < rep.values.size(); ++i) {
    rep.deviations.push_back(std::abs(rep.values[i] - rep.values[i - 1]));
    rep.max_successive_deviation = std::max(rep.max_successive_deviation, rep.deviations.back());
  }
  const std::size_t last = rep.values.size() - 1;
  for (std::size_t m = 0; m < last; ++m) {
    bool ok = true;
    for (std::size_t k = m + 1; k <= last; ++k) ok = ok && std::abs(rep.values[k] - rep.values[m]) <= tol;
    if (ok) {
      rep.stabilization_index = *n0 + static_cast<int>(m);
      break;
    }
  }
  if (rep.stabilization_index == *n0) {
    rep.verdict = Verdict::kStabilized;
  } else if (!rep.all_compatible && detail::revisits_cluster(rep.values, 10 * tol)) {
    rep.verdict = Verdict::kPhaseTransitionSuspected;
  } else {
    rep.verdict = Verdict::kNotStabilized;
  }
  return rep;
}

}  // namespace qmf
