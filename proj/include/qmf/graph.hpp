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
#include <compare>
#include <cstdint>
#include <deque>
#include <initializer_list>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qmf/core.hpp"

namespace qmf {

/// Vertex identifier. The integer value carries the canonical total order.
struct VertexId {
  std::int64_t value = 0;

  friend constexpr auto operator<=>(VertexId, VertexId) = default;
};

/// Finite set of vertices kept sorted in canonical order.
class Region {
 public:
  using const_iterator = std::vector<VertexId>::const_iterator;

  Region() = default;
  Region(std::initializer_list<VertexId> vs) : Region(std::vector<VertexId>(vs)) {}
  explicit Region(std::vector<VertexId> vs) : vs_(std::move(vs)) {
    std::sort(vs_.begin(), vs_.end());
    vs_.erase(std::unique(vs_.begin(), vs_.end()), vs_.end());
  }

  static Region of_ids(std::initializer_list<std::int64_t> ids) {
    std::vector<VertexId> vs;
    for (auto i : ids) vs.push_back(VertexId{i});
    return Region(std::move(vs));
  }

  [[nodiscard]] std::size_t size() const { return vs_.size(); }
  [[nodiscard]] bool empty() const { return vs_.empty(); }
  [[nodiscard]] const_iterator begin() const { return vs_.begin(); }
  [[nodiscard]] const_iterator end() const { return vs_.end(); }
  [[nodiscard]] VertexId operator[](std::size_t i) const { return vs_[i]; }
  [[nodiscard]] VertexId front() const { return vs_.front(); }
  [[nodiscard]] const std::vector<VertexId>& vertices() const { return vs_; }

  [[nodiscard]] bool contains(VertexId v) const {
    return std::binary_search(vs_.begin(), vs_.end(), v);
  }
  /// Position of `v` in canonical order; the vertex must be present.
  [[nodiscard]] std::size_t index_of(VertexId v) const {
    auto it = std::lower_bound(vs_.begin(), vs_.end(), v);
    if (it == vs_.end() || *it != v) throw std::out_of_range("vertex not in region");
    return static_cast<std::size_t>(it - vs_.begin());
  }

  friend bool operator==(const Region&, const Region&) = default;

 private:
  std::vector<VertexId> vs_;
};

inline Region unite(const Region& a, const Region& b) {
  std::vector<VertexId> out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return Region(std::move(out));
}

inline Region intersect(const Region& a, const Region& b) {
  std::vector<VertexId> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return Region(std::move(out));
}

inline Region subtract(const Region& a, const Region& b) {
  std::vector<VertexId> out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return Region(std::move(out));
}

inline Region symmetric_difference(const Region& a, const Region& b) {
  std::vector<VertexId> out;
  std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(),
                                std::back_inserter(out));
  return Region(std::move(out));
}

inline bool is_subset(const Region& a, const Region& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

inline bool disjoint(const Region& a, const Region& b) { return intersect(a, b).empty(); }

enum class GraphKind { kPath, kCycle, kRegularTree, kLattice, kEdgeList };

/// Declarative description of a graph family member.
struct GraphSpec {
  GraphKind kind = GraphKind::kPath;
  /// Path: number of vertices (absent = one-sided infinite). Cycle: required.
  std::optional<std::int64_t> length;
  /// Regular tree coordination number k >= 2.
  int coordination = 3;
  /// Lattice dimension, 1 <= d <= 4.
  int dim = 2;
  /// Undirected edge list over integer labels.
  std::vector<std::pair<std::int64_t, std::int64_t>> edges;
  /// Optional adjacency form; validated for symmetry.
  std::map<std::int64_t, std::vector<std::int64_t>> adjacency;
};

/// Infinite (or finite) locally finite graph behind a lazy neighbor oracle.
///
/// Vertex identifiers per family:
///  - path: 1, 2, 3, ... (1 is the end vertex)
///  - cycle: 0 .. length-1
///  - regular tree: breadth-first index from the origin 0
///  - lattice: coordinates packed into fixed-width fields, so integer order
///    equals lexicographic coordinate order
///  - edge list: the integer labels given
class Graph {
 public:
  explicit Graph(GraphSpec spec) : spec_(std::move(spec)) {}

  [[nodiscard]] const GraphSpec& spec() const { return spec_; }
  [[nodiscard]] GraphKind kind() const { return spec_.kind; }

  [[nodiscard]] bool is_finite() const {
    switch (spec_.kind) {
      case GraphKind::kPath: return spec_.length.has_value();
      case GraphKind::kCycle:
      case GraphKind::kEdgeList: return true;
      default: return false;
    }
  }

  [[nodiscard]] bool is_vertex(VertexId v) const {
    switch (spec_.kind) {
      case GraphKind::kPath:
        return v.value >= 1 && (!spec_.length || v.value <= *spec_.length);
      case GraphKind::kCycle: return v.value >= 0 && v.value < *spec_.length;
      case GraphKind::kRegularTree: return v.value >= 0 && v.value < kTreeLimit;
      case GraphKind::kLattice: return v.value >= 0;
      case GraphKind::kEdgeList: return adjacency_->contains(v);
    }
    return false;
  }

  /// N_y in canonical order.
  [[nodiscard]] Region neighbors(VertexId y) const {
    if (!is_vertex(y)) throw std::domain_error("unknown vertex " + label(y));
    std::vector<VertexId> out;
    const auto v = y.value;
    switch (spec_.kind) {
      case GraphKind::kPath:
        if (v > 1) out.push_back({v - 1});
        if (!spec_.length || v < *spec_.length) out.push_back({v + 1});
        break;
      case GraphKind::kCycle: {
        const auto n = *spec_.length;
        out.push_back({(v + n - 1) % n});
        out.push_back({(v + 1) % n});
        break;
      }
      case GraphKind::kRegularTree: {
        const std::int64_t k = spec_.coordination;
        if (v == 0) {
          for (std::int64_t c = 1; c <= k; ++c) out.push_back({c});
          break;
        }
        out.push_back({v <= k ? 0 : (v - 1 - k) / (k - 1) + 1});
        const std::int64_t first = 1 + k + (v - 1) * (k - 1);
        if (first + k - 1 >= kTreeLimit) throw ResourceError("tree index overflow");
        for (std::int64_t c = 0; c < k - 1; ++c) out.push_back({first + c});
        break;
      }
      case GraphKind::kLattice: {
        auto c = coordinates(y);
        for (std::size_t i = 0; i < c.size(); ++i) {
          for (std::int64_t s : {-1, 1}) {
            auto d = c;
            d[i] += s;
            out.push_back(vertex_at(d));
          }
        }
        break;
      }
      case GraphKind::kEdgeList: return adjacency_->at(y);
    }
    return Region(std::move(out));
  }

  /// Lattice coordinates of `v`; other families return the single label.
  [[nodiscard]] std::vector<std::int64_t> coordinates(VertexId v) const {
    if (spec_.kind != GraphKind::kLattice) return {v.value};
    const int d = spec_.dim;
    const int bits = lattice_bits();
    const std::int64_t mask = (std::int64_t{1} << bits) - 1;
    const std::int64_t offset = std::int64_t{1} << (bits - 1);
    std::vector<std::int64_t> c(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
      const int shift = bits * (d - 1 - i);
      c[static_cast<std::size_t>(i)] = ((v.value >> shift) & mask) - offset;
    }
    return c;
  }

  /// Inverse of coordinates().
  [[nodiscard]] VertexId vertex_at(const std::vector<std::int64_t>& c) const {
    if (spec_.kind != GraphKind::kLattice) {
      if (c.size() != 1) throw std::domain_error("expected a scalar vertex label");
      return VertexId{c[0]};
    }
    if (c.size() != static_cast<std::size_t>(spec_.dim))
      throw std::domain_error("lattice coordinate has wrong arity");
    const int bits = lattice_bits();
    const std::int64_t offset = std::int64_t{1} << (bits - 1);
    std::int64_t id = 0;
    for (auto x : c) {
      if (x < -offset || x >= offset) throw ResourceError("lattice coordinate out of range");
      id = (id << bits) | (x + offset);
    }
    return VertexId{id};
  }

  /// Human-readable label, e.g. "17" or "(1,-2)".
  [[nodiscard]] std::string label(VertexId v) const {
    if (spec_.kind != GraphKind::kLattice) return std::to_string(v.value);
    std::string s = "(";
    auto c = coordinates(v);
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(c[i]);
    }
    return s + ")";
  }

  /// Vertex list of a finite graph, in canonical order.
  [[nodiscard]] Region finite_vertices() const {
    if (!is_finite()) throw std::domain_error("graph is infinite");
    std::vector<VertexId> out;
    switch (spec_.kind) {
      case GraphKind::kPath:
        for (std::int64_t i = 1; i <= *spec_.length; ++i) out.push_back({i});
        break;
      case GraphKind::kCycle:
        for (std::int64_t i = 0; i < *spec_.length; ++i) out.push_back({i});
        break;
      default:
        for (const auto& [v, _] : *adjacency_) out.push_back(v);
    }
    return Region(std::move(out));
  }

  /// Default origin of the family (the root used when none is configured).
  [[nodiscard]] VertexId origin() const {
    switch (spec_.kind) {
      case GraphKind::kPath: return {1};
      case GraphKind::kLattice: return vertex_at(std::vector<std::int64_t>(spec_.dim, 0));
      case GraphKind::kEdgeList: return adjacency_->begin()->first;
      default: return {0};
    }
  }

 private:
  friend Graph make_graph(const GraphSpec& spec);

  static constexpr std::int64_t kTreeLimit = std::int64_t{1} << 62;

  [[nodiscard]] int lattice_bits() const { return 62 / spec_.dim; }

  GraphSpec spec_;
  std::shared_ptr<const std::map<VertexId, Region>> adjacency_;
};

/// Builds a graph and validates its oracle contract where it can be checked
/// eagerly (edge lists).
inline Graph make_graph(const GraphSpec& spec) {
  Graph g(spec);
  switch (spec.kind) {
    case GraphKind::kPath:
      if (spec.length && *spec.length < 1) throw ValidationError("path length must be >= 1");
      break;
    case GraphKind::kCycle:
      if (!spec.length || *spec.length < 3) throw ValidationError("cycle length must be >= 3");
      break;
    case GraphKind::kRegularTree:
      if (spec.coordination < 2) throw ValidationError("tree coordination must be >= 2");
      break;
    case GraphKind::kLattice:
      if (spec.dim < 1 || spec.dim > 4) throw ValidationError("lattice dim must be in [1,4]");
      break;
    case GraphKind::kEdgeList: {
      std::map<VertexId, std::set<VertexId>> adj;
      for (auto [a, b] : spec.edges) {
        if (a == b) throw ValidationError("self-loop at vertex " + std::to_string(a));
        adj[{a}].insert({b});
        adj[{b}].insert({a});
      }
      for (const auto& [a, nbrs] : spec.adjacency) {
        adj[{a}];
        for (auto b : nbrs) {
          if (a == b) throw ValidationError("self-loop at vertex " + std::to_string(a));
          auto it = spec.adjacency.find(b);
          if (it == spec.adjacency.end() ||
              std::find(it->second.begin(), it->second.end(), a) == it->second.end()) {
            throw ValidationError("asymmetric adjacency: " + std::to_string(a) + " -> " +
                                  std::to_string(b) + " has no reverse entry");
          }
          adj[{a}].insert({b});
        }
      }
      if (adj.empty()) throw ValidationError("edge list graph has no vertices");
      auto table = std::make_shared<std::map<VertexId, Region>>();
      for (const auto& [v, nbrs] : adj) {
        (*table)[v] = Region(std::vector<VertexId>(nbrs.begin(), nbrs.end()));
      }
      g.adjacency_ = std::move(table);
      break;
    }
  }
  return g;
}

struct Boundaries {
  Region internal;
  Region interior;
  Region external;
  Region closure;
};

/// Internal/external boundaries, interior and closure of a nonempty finite region.
inline Boundaries boundaries(const Graph& g, const Region& region) {
  if (region.empty()) throw std::domain_error("boundaries of an empty region");
  std::vector<VertexId> internal, interior, external;
  for (VertexId x : region) {
    bool touches_outside = false;
    for (VertexId y : g.neighbors(x)) {
      if (!region.contains(y)) {
        touches_outside = true;
        external.push_back(y);
      }
    }
    (touches_outside ? internal : interior).push_back(x);
  }
  Boundaries b{Region(std::move(internal)), Region(std::move(interior)),
               Region(std::move(external)), {}};
  b.closure = unite(region, b.external);
  return b;
}

struct EdgePath {
  bool found = false;
  std::vector<VertexId> path;
  std::size_t length = 0;
};

/// Shortest edge path by breadth-first search limited to `max_radius` hops.
/// Frontier vertices are expanded in discovery order and neighbors in
/// canonical order, so ties resolve deterministically.
inline EdgePath edge_path(const Graph& g, VertexId x, VertexId y, std::size_t max_radius) {
  if (!g.is_vertex(x) || !g.is_vertex(y)) throw std::domain_error("edge_path: unknown vertex");
  std::map<VertexId, VertexId> parent{{x, x}};
  std::vector<VertexId> frontier{x};
  for (std::size_t r = 0; r < max_radius && !parent.contains(y); ++r) {
    std::vector<VertexId> next;
    for (VertexId u : frontier) {
      for (VertexId w : g.neighbors(u)) {
        if (parent.emplace(w, u).second) next.push_back(w);
      }
    }
    if (next.empty()) break;
    frontier = std::move(next);
  }
  EdgePath out;
  if (!parent.contains(y)) return out;
  out.found = true;
  for (VertexId v = y; v != x; v = parent.at(v)) out.path.push_back(v);
  out.path.push_back(x);
  std::reverse(out.path.begin(), out.path.end());
  out.length = out.path.size() - 1;
  return out;
}

/// True when the subgraph induced on `region` is connected.
inline bool is_connected(const Graph& g, const Region& region) {
  if (region.empty()) return true;
  std::set<VertexId> seen{region.front()};
  std::deque<VertexId> queue{region.front()};
  while (!queue.empty()) {
    VertexId u = queue.front();
    queue.pop_front();
    for (VertexId w : g.neighbors(u)) {
      if (region.contains(w) && seen.insert(w).second) queue.push_back(w);
    }
  }
  return seen.size() == region.size();
}

/// Checks neighbor symmetry and irreflexivity on every vertex of `region`.
/// Returns the first offending pair, if any.
inline std::optional<std::pair<VertexId, VertexId>> find_asymmetry(const Graph& g,
                                                                   const Region& region) {
  for (VertexId x : region) {
    for (VertexId y : g.neighbors(x)) {
      if (y == x || !g.neighbors(y).contains(x)) return std::make_pair(x, y);
    }
  }
  return std::nullopt;
}

}  // namespace qmf
