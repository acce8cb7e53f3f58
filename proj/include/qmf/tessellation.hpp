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

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qmf/graph.hpp"
#include "qmf/random.hpp"

namespace qmf {

/// Neighbors of an out-boundary vertex split by shell: previous shell,
/// successor shell, and neither.
struct Classification {
  Region previous;
  Region successors;
  Region orphans;
};

/// One level n of the root-based tessellation.
struct Level {
  Region core;          // V_{0,n}
  Region closure;       // V_n
  Region out_boundary;  // external boundary of V_n
  Region in_boundary;   // internal boundary of V_n
  Region interior;      // V_n minus its internal boundary
  /// Order in which the plaquette maps of this level are composed.
  std::vector<VertexId> enumeration;
};

class Tessellation {
 public:
  /// Builds levels 1..depth from `root`. Out-boundaries are enumerated in
  /// canonical order unless `enumeration_seed` requests a seeded shuffle.
  static Tessellation build(const Graph& g, VertexId root, int depth,
                            std::optional<std::uint64_t> enumeration_seed = std::nullopt) {
    if (depth < 1) throw std::domain_error("tessellation depth must be >= 1");
    if (!g.is_vertex(root)) throw std::domain_error("unknown root vertex " + g.label(root));
    Tessellation t(g, root, depth);
    Region core{root};
    for (int n = 1; n <= depth; ++n) {
      Level lv;
      lv.core = core;
      auto cb = boundaries(g, core);
      lv.closure = cb.closure;
      auto b = boundaries(g, lv.closure);
      lv.in_boundary = b.internal;
      lv.interior = b.interior;
      lv.out_boundary = b.external;
      lv.enumeration = lv.out_boundary.vertices();
      if (enumeration_seed) {
        Rng rng(derive_seed(*enumeration_seed, static_cast<std::uint64_t>(n)));
        rng.shuffle(lv.enumeration);
      }
      core = unite(core, lv.out_boundary);
      t.levels_.push_back(std::move(lv));
    }
    t.enumeration_seed_ = enumeration_seed;
    for (int n = 1; n < depth; ++n) {
      const Level& lv = t.level(n);
      const Level& next = t.level(n + 1);
      for (VertexId y : lv.out_boundary) {
        Region nbrs = g.neighbors(y);
        Classification c;
        c.previous = intersect(nbrs, lv.in_boundary);
        c.successors = intersect(nbrs, next.in_boundary);
        c.orphans = subtract(nbrs, unite(c.previous, c.successors));
        t.classes_.emplace(y, std::make_pair(n, std::move(c)));
      }
    }
    return t;
  }

  [[nodiscard]] const Graph& graph() const { return graph_; }
  [[nodiscard]] VertexId root() const { return root_; }
  [[nodiscard]] int depth() const { return depth_; }
  [[nodiscard]] std::optional<std::uint64_t> enumeration_seed() const { return enumeration_seed_; }

  /// Level n, 1 <= n <= depth.
  [[nodiscard]] const Level& level(int n) const {
    if (n < 1 || n > depth_) throw std::out_of_range("level " + std::to_string(n));
    return levels_[static_cast<std::size_t>(n - 1)];
  }

  /// Highest level whose out-boundary vertices carry a classification.
  [[nodiscard]] int classified_depth() const { return depth_ - 1; }

  /// Prefix of V_infinity materialized by this build.
  [[nodiscard]] const Region& v_infinity_prefix() const { return level(depth_).core; }

  /// Neighbor split for `y` at level `n`. The root takes no previous
  /// neighbors and all its neighbors as successors.
  [[nodiscard]] Classification classify(int n, VertexId y) const {
    if (y == root_) return Classification{{}, graph_.neighbors(root_), {}};
    auto it = classes_.find(y);
    if (it == classes_.end() || it->second.first != n) {
      throw std::domain_error("vertex " + graph_.label(y) +
                              " is not a classified out-boundary vertex at level " +
                              std::to_string(n));
    }
    return it->second.second;
  }

  /// Level at which `y` sits on an out-boundary (0 for the root).
  [[nodiscard]] std::optional<int> level_of(VertexId y) const {
    if (y == root_) return 0;
    auto it = classes_.find(y);
    if (it == classes_.end()) return std::nullopt;
    return it->second.first;
  }

  /// Plaquette {y} together with N_y.
  [[nodiscard]] Region plaquette(VertexId y) const {
    return unite(Region{y}, graph_.neighbors(y));
  }

  /// Smallest n with region contained in V_n.
  [[nodiscard]] std::optional<int> covering_level(const Region& region) const {
    for (int n = 1; n <= depth_; ++n) {
      if (is_subset(region, level(n).closure)) return n;
    }
    return std::nullopt;
  }

 private:
  Tessellation(Graph g, VertexId root, int depth) : graph_(std::move(g)), root_(root), depth_(depth) {}

  Graph graph_;
  VertexId root_;
  int depth_;
  std::optional<std::uint64_t> enumeration_seed_;
  std::vector<Level> levels_;
  std::map<VertexId, std::pair<int, Classification>> classes_;
};

struct OrphanWitness {
  int level;
  VertexId vertex;
  VertexId neighbor;
};

struct OverlapWitness {
  int level;
  VertexId first;
  VertexId second;
  VertexId common;
};

struct EdgeWitness {
  VertexId a;
  VertexId b;
};

/// Outcome of the three standing conditions. Every failure lists all
/// witnesses found, in canonical order of discovery.
struct ConditionReport {
  std::vector<OrphanWitness> orphans;
  std::vector<OverlapWitness> overlaps;
  std::vector<EdgeWitness> bad_edges;
  int checked_depth = 0;

  [[nodiscard]] bool n0_empty() const { return orphans.empty(); }
  [[nodiscard]] bool s_disjoint() const { return overlaps.empty(); }
  [[nodiscard]] bool edge_bipartition() const { return bad_edges.empty(); }
  [[nodiscard]] bool all_pass() const { return n0_empty() && s_disjoint() && edge_bipartition(); }
};

/// Exhaustive check of the empty-orphan condition, pairwise disjointness of
/// successor sets, and the V_infinity edge bipartition, up to the built depth.
inline ConditionReport check_conditions(const Tessellation& t) {
  if (t.depth() < 2) throw std::domain_error("condition check needs depth >= 2");
  ConditionReport rep;
  rep.checked_depth = t.depth();
  for (int n = 1; n <= t.classified_depth(); ++n) {
    std::map<VertexId, VertexId> owner;
    for (VertexId y : t.level(n).out_boundary) {
      auto c = t.classify(n, y);
      for (VertexId o : c.orphans) rep.orphans.push_back({n, y, o});
      for (VertexId s : c.successors) {
        auto [it, fresh] = owner.emplace(s, y);
        if (!fresh) rep.overlaps.push_back({n, it->second, y, s});
      }
    }
  }
  const Region& vd = t.level(t.depth()).closure;
  const Region& vinf = t.v_infinity_prefix();
  for (VertexId x : vd) {
    for (VertexId y : t.graph().neighbors(x)) {
      if (y < x || !vd.contains(y)) continue;
      if (vinf.contains(x) == vinf.contains(y)) rep.bad_edges.push_back({x, y});
    }
  }
  return rep;
}

struct PartitionCheck {
  bool successors_ok = false;
  bool previous_ok = false;
  Region successors_diff;
  Region previous_diff;

  [[nodiscard]] bool pass() const { return successors_ok && previous_ok; }
};

/// Checks that the internal boundary of V_{n+1} is the union of successor
/// sets and the internal boundary of V_n is the union of previous sets, over
/// the out-boundary of V_n. Failures carry the symmetric difference.
inline PartitionCheck verify_partition(const Tessellation& t, int n) {
  if (n < 1 || n + 1 > t.depth()) throw std::domain_error("partition check needs n+1 <= depth");
  std::vector<VertexId> sv, pv;
  for (VertexId y : t.level(n).out_boundary) {
    auto c = t.classify(n, y);
    sv.insert(sv.end(), c.successors.begin(), c.successors.end());
    pv.insert(pv.end(), c.previous.begin(), c.previous.end());
  }
  const Region succ(std::move(sv)), prev(std::move(pv));
  PartitionCheck pc;
  pc.successors_diff = symmetric_difference(t.level(n + 1).in_boundary, succ);
  pc.previous_diff = symmetric_difference(t.level(n).in_boundary, prev);
  pc.successors_ok = pc.successors_diff.empty();
  pc.previous_ok = pc.previous_diff.empty();
  return pc;
}

struct ExhaustiveCheck {
  bool pass = false;
  std::optional<int> covering_level;
  std::optional<VertexId> uncovered;
  std::optional<int> disconnected_level;
};

/// Confirms `probe` lies in some V_n and that every materialized V_n is
/// connected (hence finite and connected as a subgraph).
inline ExhaustiveCheck verify_exhaustive(const Tessellation& t, const Region& probe) {
  ExhaustiveCheck ec;
  for (int n = 1; n <= t.depth(); ++n) {
    if (!is_connected(t.graph(), t.level(n).closure)) {
      ec.disconnected_level = n;
      break;
    }
  }
  ec.covering_level = t.covering_level(probe);
  if (!ec.covering_level) {
    const Region& top = t.level(t.depth()).closure;
    for (VertexId v : probe) {
      if (!top.contains(v)) {
        ec.uncovered = v;
        break;
      }
    }
  }
  ec.pass = ec.covering_level.has_value() && !ec.disconnected_level;
  return ec;
}

/// Structural invariants of a build; returns a description per violation.
inline std::vector<std::string> check_invariants(const Tessellation& t) {
  std::vector<std::string> bad;
  const Graph& g = t.graph();
  auto fail = [&](int n, const std::string& what) {
    bad.push_back("level " + std::to_string(n) + ": " + what);
  };
  if (t.level(1).core != Region{t.root()}) fail(1, "V_{0,1} is not {root}");
  if (t.level(1).closure != t.plaquette(t.root())) fail(1, "V_1 is not the root plaquette");
  for (int n = 1; n <= t.depth(); ++n) {
    const Level& lv = t.level(n);
    std::vector<VertexId> cv;
    for (VertexId y : lv.core) {
      const Region p = t.plaquette(y);
      cv.insert(cv.end(), p.begin(), p.end());
    }
    if (Region(std::move(cv)) != lv.closure) fail(n, "V_n differs from the union of plaquettes over V_{0,n}");
    if (unite(lv.interior, lv.in_boundary) != lv.closure || !disjoint(lv.interior, lv.in_boundary))
      fail(n, "interior and internal boundary do not partition V_n");
    if (!disjoint(lv.out_boundary, lv.closure)) fail(n, "out-boundary meets V_n");
    if (n < t.depth()) {
      const Level& next = t.level(n + 1);
      if (next.core != unite(lv.core, lv.out_boundary)) fail(n, "V_{0,n+1} recurrence broken");
      if (!is_subset(lv.core, next.core)) fail(n, "V_{0,n} not monotone");
      if (!is_subset(lv.closure, next.closure)) fail(n, "V_n not monotone");
      if (!g.is_finite() && next.closure.size() <= lv.closure.size())
        fail(n, "V_n not strictly increasing");
      if (!disjoint(lv.in_boundary, next.in_boundary))
        fail(n, "consecutive internal boundaries intersect");
      for (VertexId y : lv.out_boundary) {
        auto c = t.classify(n, y);
        if (!is_subset(c.successors, next.in_boundary)) fail(n, "successors escape next shell");
        if (!is_subset(c.previous, lv.in_boundary)) fail(n, "previous escape current shell");
        if (unite(unite(c.previous, c.successors), c.orphans) != g.neighbors(y) ||
            !disjoint(c.previous, c.successors))
          fail(n, "classification does not partition N_y for " + g.label(y));
      }
    }
  }
  return bad;
}

}  // namespace qmf
