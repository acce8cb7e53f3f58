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

#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qmf/field.hpp"

namespace qmf {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

/// Malformed or inconsistent run configuration. The message starts with the
/// JSON pointer of the offending value.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class TeKind { kProduct, kIsometry, kTranspose, kKraus, kMap };

struct TeSpec {
  TeKind kind = TeKind::kProduct;
  std::uint64_t seed = 0;
  bool repair = true;
  /// Optional declared previous/successor sets of an explicit map; checked
  /// against the tessellation.
  std::optional<Region> previous;
  std::optional<Region> successors;
  std::vector<Matrix> kraus;
  Matrix map;
};

struct ObservableSpec {
  enum class Kind { kProduct, kMatrix, kRandom };
  std::string name;
  Kind kind = Kind::kProduct;
  std::vector<std::pair<VertexId, Matrix>> factors;
  Region support;
  Matrix matrix;
  std::uint64_t seed = 0;
};

struct CheckOptions {
  int random_trials = 100;
  std::uint64_t seed = 1;
};

struct RunConfig {
  Graph graph{GraphSpec{}};
  VertexId root;
  int depth = 3;
  SiteDims dims;
  std::optional<ProductState> reference;
  TeSpec default_te;
  std::map<VertexId, TeSpec> site_tes;
  std::vector<ObservableSpec> observables;
  Tolerances tol;
  std::optional<std::uint64_t> enumeration_seed;
  std::size_t max_dim = kDefaultMaxDim;
  CheckOptions checks;
};

namespace detail {

class Reader {
 public:
  explicit Reader(const Json& j, std::string path = "") : j_(j), path_(std::move(path)) {}

  [[nodiscard]] const Json& json() const { return j_; }
  [[nodiscard]] const std::string& path() const { return path_; }
  [[nodiscard]] std::string where() const { return path_.empty() ? "/" : path_; }

  [[noreturn]] void fail(const std::string& what) const { throw ConfigError(where() + ": " + what); }

  [[nodiscard]] bool has(const std::string& key) const { return j_.is_object() && j_.contains(key); }

  [[nodiscard]] Reader at(const std::string& key) const {
    if (!j_.is_object()) fail("expected an object");
    if (!j_.contains(key)) fail("missing field \"" + key + "\"");
    return Reader(j_.at(key), path_ + "/" + key);
  }
  [[nodiscard]] Reader at(std::size_t i) const { return Reader(j_.at(i), path_ + "/" + std::to_string(i)); }

  [[nodiscard]] std::vector<Reader> items() const {
    if (!j_.is_array()) fail("expected an array");
    std::vector<Reader> out;
    for (std::size_t i = 0; i < j_.size(); ++i) out.push_back(at(i));
    return out;
  }

  void allow_keys(std::initializer_list<const char*> keys) const {
    if (!j_.is_object()) fail("expected an object");
    for (const auto& [k, _] : j_.items()) {
      bool ok = false;
      for (const char* a : keys) ok = ok || k == a;
      if (!ok) fail("unknown field \"" + k + "\"");
    }
  }

  /// Numbers may be given as JSON numbers or as decimal strings.
  [[nodiscard]] double number() const {
    if (j_.is_number()) return j_.get<double>();
    if (j_.is_string()) {
      const auto& s = j_.get_ref<const std::string&>();
      char* end = nullptr;
      errno = 0;
      const double x = std::strtod(s.c_str(), &end);
      if (s.empty() || *end != '\0' || errno == ERANGE) fail("not a number: \"" + s + "\"");
      return x;
    }
    fail("expected a number");
  }

  [[nodiscard]] std::int64_t integer() const {
    if (j_.is_number_integer()) return j_.get<std::int64_t>();
    if (j_.is_string()) {
      const auto& s = j_.get_ref<const std::string&>();
      char* end = nullptr;
      errno = 0;
      const long long x = std::strtoll(s.c_str(), &end, 10);
      if (s.empty() || *end != '\0' || errno == ERANGE) fail("not an integer: \"" + s + "\"");
      return x;
    }
    fail("expected an integer");
  }

  [[nodiscard]] std::uint64_t seed() const {
    if (j_.is_number_unsigned()) return j_.get<std::uint64_t>();
    if (j_.is_string()) {
      const auto& s = j_.get_ref<const std::string&>();
      char* end = nullptr;
      errno = 0;
      const unsigned long long x = std::strtoull(s.c_str(), &end, 10);
      if (s.empty() || s[0] == '-' || *end != '\0' || errno == ERANGE) fail("not a seed: \"" + s + "\"");
      return x;
    }
    fail("expected a non-negative integer seed");
  }

  [[nodiscard]] int positive_int(int lo = 1) const {
    const auto x = integer();
    if (x < lo || x > 1'000'000'000) fail("expected an integer >= " + std::to_string(lo));
    return static_cast<int>(x);
  }

  [[nodiscard]] bool boolean() const {
    if (!j_.is_boolean()) fail("expected true or false");
    return j_.get<bool>();
  }

  [[nodiscard]] std::string string() const {
    if (!j_.is_string()) fail("expected a string");
    return j_.get<std::string>();
  }

  [[nodiscard]] Complex complex() const {
    if (j_.is_array()) {
      if (j_.size() != 2) fail("complex entries are [re, im] pairs");
      return {at(0).number(), at(1).number()};
    }
    return {number(), 0.0};
  }

  /// Nested rows of [re, im] pairs (plain reals allowed), or a named
  /// single-site operator when `named_dim` is given.
  [[nodiscard]] Matrix matrix(std::optional<int> named_dim = std::nullopt) const {
    if (j_.is_string() && named_dim) {
      try {
        return named_operator(j_.get<std::string>(), *named_dim);
      } catch (const std::domain_error& e) {
        fail(e.what());
      }
    }
    const auto rows = items();
    if (rows.empty()) fail("matrix has no rows");
    const auto n = static_cast<Eigen::Index>(rows.size());
    Matrix m(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto cols = rows[static_cast<std::size_t>(i)].items();
      if (static_cast<Eigen::Index>(cols.size()) != n) rows[static_cast<std::size_t>(i)].fail("matrix must be square");
      for (Eigen::Index k = 0; k < n; ++k) m(i, k) = cols[static_cast<std::size_t>(k)].complex();
    }
    return m;
  }

  /// Rectangular variant used for Kraus operators.
  [[nodiscard]] Matrix rect_matrix() const {
    const auto rows = items();
    if (rows.empty()) fail("matrix has no rows");
    const auto c0 = rows[0].items().size();
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(c0));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto cols = rows[i].items();
      if (cols.size() != c0) rows[i].fail("ragged matrix rows");
      for (std::size_t k = 0; k < c0; ++k)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = cols[k].complex();
    }
    return m;
  }

  /// A vertex label: an integer, or an array of lattice coordinates.
  [[nodiscard]] VertexId vertex(const Graph& g) const {
    VertexId v;
    try {
      if (j_.is_array()) {
        std::vector<std::int64_t> c;
        for (const auto& r : items()) c.push_back(r.integer());
        v = g.vertex_at(c);
      } else {
        v = g.vertex_at({integer()});
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      fail(e.what());
    }
    if (!g.is_vertex(v)) fail("not a vertex of the graph");
    return v;
  }

  [[nodiscard]] Region region(const Graph& g) const {
    std::vector<VertexId> vs;
    for (const auto& r : items()) vs.push_back(r.vertex(g));
    Region out(vs);
    if (out.size() != vs.size()) fail("repeated vertex");
    return out;
  }

 private:
  const Json& j_;
  std::string path_;
};

inline Graph parse_graph(const Reader& r) {
  GraphSpec s;
  const std::string kind = r.at("kind").string();
  if (kind == "path") {
    r.allow_keys({"kind", "length"});
    s.kind = GraphKind::kPath;
    if (r.has("length")) s.length = r.at("length").integer();
  } else if (kind == "cycle") {
    r.allow_keys({"kind", "length"});
    s.kind = GraphKind::kCycle;
    s.length = r.at("length").integer();
  } else if (kind == "tree") {
    r.allow_keys({"kind", "coordination"});
    s.kind = GraphKind::kRegularTree;
    s.coordination = r.at("coordination").positive_int(2);
  } else if (kind == "lattice") {
    r.allow_keys({"kind", "dim"});
    s.kind = GraphKind::kLattice;
    s.dim = r.at("dim").positive_int();
  } else if (kind == "edges") {
    r.allow_keys({"kind", "edges"});
    s.kind = GraphKind::kEdgeList;
    for (const auto& e : r.at("edges").items()) {
      auto ab = e.items();
      if (ab.size() != 2) e.fail("an edge is a pair of vertex labels");
      s.edges.emplace_back(ab[0].integer(), ab[1].integer());
    }
  } else if (kind == "adjacency") {
    r.allow_keys({"kind", "adjacency"});
    s.kind = GraphKind::kEdgeList;
    const auto adj = r.at("adjacency");
    if (!adj.json().is_object()) adj.fail("expected an object of neighbor lists");
    for (const auto& [k, _] : adj.json().items()) {
      const auto entry = adj.at(k);
      char* end = nullptr;
      const long long a = std::strtoll(k.c_str(), &end, 10);
      if (k.empty() || *end != '\0') entry.fail("adjacency keys are integer labels");
      auto& list = s.adjacency[a];
      for (const auto& b : entry.items()) list.push_back(b.integer());
    }
  } else {
    r.at("kind").fail("unknown graph kind \"" + kind + "\"");
  }
  try {
    return make_graph(s);
  } catch (const std::exception& e) {
    r.fail(e.what());
  }
}

inline SiteDims parse_dims(const Reader& r, const Graph& g) {
  if (!r.json().is_object()) return SiteDims(r.positive_int(2));
  r.allow_keys({"default", "overrides"});
  const int d = r.has("default") ? r.at("default").positive_int(2) : 2;
  std::map<VertexId, int> ov;
  if (r.has("overrides")) {
    for (const auto& o : r.at("overrides").items()) {
      o.allow_keys({"vertex", "dim"});
      ov[o.at("vertex").vertex(g)] = o.at("dim").positive_int(2);
    }
  }
  return SiteDims(d, std::move(ov));
}

inline Matrix parse_density(const Reader& r, int d) {
  const std::string kind = r.at("kind").string();
  if (kind == "maximally_mixed") {
    return Matrix::Identity(d, d) / static_cast<double>(d);
  }
  if (kind == "bloch") {
    if (d != 2) r.fail("a Bloch vector needs a qubit site");
    const auto v = r.at("vector").items();
    if (v.size() != 3) r.at("vector").fail("expected [x, y, z]");
    const double x = v[0].number(), y = v[1].number(), z = v[2].number();
    Matrix rho(2, 2);
    rho << (1 + z) / 2, Complex(x, -y) / 2.0, Complex(x, y) / 2.0, (1 - z) / 2;
    return rho;
  }
  if (kind == "diag") {
    const auto v = r.at("values").items();
    if (static_cast<int>(v.size()) != d) r.at("values").fail("expected " + std::to_string(d) + " values");
    Matrix rho = Matrix::Zero(d, d);
    for (int i = 0; i < d; ++i) rho(i, i) = v[static_cast<std::size_t>(i)].number();
    return rho;
  }
  if (kind == "matrix") return r.at("matrix").matrix();
  r.at("kind").fail("unknown state kind \"" + kind + "\"");
}

inline ProductState parse_reference(const Reader& r, const Graph& g, const SiteDims& dims, const Tolerances& tol) {
  auto site = [&](const Reader& s, int d, const std::string& what) {
    Matrix rho = parse_density(s, d);
    try {
      ProductState::validate(rho, d, what, tol);
    } catch (const ValidationError& e) {
      s.fail(e.what());
    }
    return rho;
  };
  r.allow_keys({"kind", "vector", "values", "matrix", "overrides"});
  Matrix def = site(r, dims.default_dim(), "reference density");
  std::map<VertexId, Matrix> ov;
  for (const auto& [v, dv] : dims.overrides()) {
    if (dv != dims.default_dim()) ov[v] = Matrix::Identity(dv, dv) / static_cast<double>(dv);
  }
  if (r.has("overrides")) {
    for (const auto& o : r.at("overrides").items()) {
      o.allow_keys({"vertex", "kind", "vector", "values", "matrix"});
      const VertexId v = o.at("vertex").vertex(g);
      ov[v] = site(o, dims(v), "density at " + g.label(v));
    }
  }
  return {dims, std::move(def), std::move(ov), tol};
}

inline TeSpec parse_te(const Reader& r, const Graph& g) {
  TeSpec s;
  r.allow_keys({"site", "generator", "seed", "repair", "np", "ns", "kraus", "map"});
  if (r.has("np")) s.previous = r.at("np").region(g);
  if (r.has("ns")) s.successors = r.at("ns").region(g);
  const int forms = int(r.has("generator")) + int(r.has("kraus")) + int(r.has("map"));
  if (forms != 1) r.fail("give exactly one of \"generator\", \"kraus\", \"map\"");
  if (r.has("kraus")) {
    s.kind = TeKind::kKraus;
    for (const auto& k : r.at("kraus").items()) s.kraus.push_back(k.rect_matrix());
    if (s.kraus.empty()) r.at("kraus").fail("Kraus family is empty");
    return s;
  }
  if (r.has("map")) {
    s.kind = TeKind::kMap;
    s.map = r.at("map").rect_matrix();
    return s;
  }
  const std::string gen = r.at("generator").string();
  if (gen == "product") {
    s.kind = TeKind::kProduct;
  } else if (gen == "isometry") {
    s.kind = TeKind::kIsometry;
    s.seed = r.has("seed") ? r.at("seed").seed() : 0;
    if (r.has("repair")) s.repair = r.at("repair").boolean();
  } else if (gen == "transpose") {
    s.kind = TeKind::kTranspose;
  } else {
    r.at("generator").fail("unknown generator \"" + gen + "\"");
  }
  return s;
}

inline ObservableSpec parse_observable(const Reader& r, const Graph& g, const SiteDims& dims, std::size_t index) {
  ObservableSpec o;
  r.allow_keys({"name", "ops", "support", "matrix", "random"});
  o.name = r.has("name") ? r.at("name").string() : "obs" + std::to_string(index);
  const int forms = int(r.has("ops")) + int(r.has("matrix")) + int(r.has("random"));
  if (forms != 1) r.fail("give exactly one of \"ops\", \"matrix\", \"random\"");
  if (r.has("ops")) {
    o.kind = ObservableSpec::Kind::kProduct;
    Region seen;
    for (const auto& f : r.at("ops").items()) {
      f.allow_keys({"vertex", "op"});
      const VertexId v = f.at("vertex").vertex(g);
      if (seen.contains(v)) f.fail("vertex repeated in a product observable");
      seen = unite(seen, Region{v});
      Matrix m = f.at("op").matrix(dims(v));
      if (m.rows() != dims(v)) f.at("op").fail("operator dimension does not match the site");
      o.factors.emplace_back(v, std::move(m));
    }
  } else if (r.has("matrix")) {
    o.kind = ObservableSpec::Kind::kMatrix;
    o.support = r.at("support").region(g);
    o.matrix = r.at("matrix").matrix();
    std::size_t d = 1;
    for (int x : dims.of(o.support)) d *= static_cast<std::size_t>(x);
    if (static_cast<std::size_t>(o.matrix.rows()) != d) r.at("matrix").fail("matrix size does not match the support");
  } else {
    o.kind = ObservableSpec::Kind::kRandom;
    const auto rr = r.at("random");
    rr.allow_keys({"support", "seed"});
    o.support = rr.at("support").region(g);
    o.seed = rr.has("seed") ? rr.at("seed").seed() : 0;
  }
  return o;
}

inline void parse_tolerances(const Reader& r, Tolerances& t) {
  r.allow_keys({"hermitian", "trace", "psd", "localization", "compatibility", "convergence"});
  auto get = [&](const char* k, double& dst) {
    if (!r.has(k)) return;
    dst = r.at(k).number();
    if (!(dst > 0.0)) r.at(k).fail("tolerance must be positive");
  };
  get("hermitian", t.hermitian);
  get("trace", t.trace);
  get("psd", t.psd);
  get("localization", t.localization);
  get("compatibility", t.compatibility);
  get("convergence", t.convergence);
}

}  // namespace detail

/// Builds a RunConfig from parsed JSON. Errors carry the JSON pointer.
inline RunConfig parse_config(const Json& j) {
  detail::Reader r(j);
  r.allow_keys({"schema_version", "graph", "root", "depth", "site_dims", "reference_state", "transitions",
                "observables", "tolerances", "enumeration_seed", "max_dim", "checks"});
  if (r.has("schema_version") && r.at("schema_version").integer() != kSchemaVersion)
    r.at("schema_version").fail("unsupported schema version");
  RunConfig c;
  c.graph = detail::parse_graph(r.at("graph"));
  c.root = r.at("root").vertex(c.graph);
  c.depth = r.at("depth").positive_int();
  if (r.has("tolerances")) detail::parse_tolerances(r.at("tolerances"), c.tol);
  c.dims = r.has("site_dims") ? detail::parse_dims(r.at("site_dims"), c.graph) : SiteDims();
  if (r.has("reference_state")) {
    c.reference = detail::parse_reference(r.at("reference_state"), c.graph, c.dims, c.tol);
  } else {
    c.reference = ProductState::maximally_mixed(c.dims);
  }
  if (r.has("transitions")) {
    const auto tr = r.at("transitions");
    tr.allow_keys({"default", "sites"});
    if (tr.has("default")) {
      if (tr.at("default").has("site")) tr.at("default").fail("the default entry takes no site");
      c.default_te = detail::parse_te(tr.at("default"), c.graph);
      if (c.default_te.kind == TeKind::kKraus || c.default_te.kind == TeKind::kMap)
        tr.at("default").fail("explicit maps must name a site");
    }
    if (tr.has("sites")) {
      for (const auto& s : tr.at("sites").items()) {
        const VertexId y = s.at("site").vertex(c.graph);
        if (c.site_tes.contains(y)) s.fail("site listed twice");
        c.site_tes.emplace(y, detail::parse_te(s, c.graph));
      }
    }
  }
  if (r.has("observables")) {
    std::size_t i = 0;
    for (const auto& o : r.at("observables").items())
      c.observables.push_back(detail::parse_observable(o, c.graph, c.dims, i++));
  }
  if (r.has("enumeration_seed")) c.enumeration_seed = r.at("enumeration_seed").seed();
  if (r.has("max_dim")) c.max_dim = static_cast<std::size_t>(r.at("max_dim").positive_int());
  if (r.has("checks")) {
    const auto ch = r.at("checks");
    ch.allow_keys({"random_trials", "seed"});
    if (ch.has("random_trials")) c.checks.random_trials = ch.at("random_trials").positive_int();
    if (ch.has("seed")) c.checks.seed = ch.at("seed").seed();
  }
  return c;
}

/// Reads and parses a config file; JSON syntax errors keep the parser's
/// line and column.
inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(j);
}

inline Tessellation build_tessellation(const RunConfig& c) {
  return Tessellation::build(c.graph, c.root, c.depth, c.enumeration_seed);
}

/// Materializes the map at one site from its spec. Isometry seeds of the
/// default entry are split per site; a site entry's seed is used as given.
inline TransitionExpectation build_te(const RunConfig& c, const PlaquetteShape& shape, const TeSpec& s,
                                      bool per_site_seed) {
  const std::string at = c.graph.label(shape.site);
  if (s.previous && *s.previous != shape.previous)
    throw ValidationError("declared np at " + at + " differs from the tessellation " + describe(c.graph, shape.previous));
  if (s.successors && *s.successors != shape.successors)
    throw ValidationError("declared ns at " + at + " differs from the tessellation " +
                          describe(c.graph, shape.successors));
  switch (s.kind) {
    case TeKind::kProduct:
      return make_product_te(shape, c.dims, *c.reference);
    case TeKind::kIsometry: {
      const auto seed = per_site_seed ? derive_seed(s.seed, static_cast<std::uint64_t>(shape.site.value)) : s.seed;
      return make_isometry_te(seed, shape, c.dims, *c.reference, {.repair = s.repair});
    }
    case TeKind::kTranspose:
      return make_transpose_te(shape, c.dims);
    case TeKind::kKraus:
      return TransitionExpectation::from_kraus(shape, c.dims.of(shape.domain), s.kraus, c.tol.trace);
    case TeKind::kMap:
      return TransitionExpectation::from_map(shape, c.dims.of(shape.domain), s.map);
  }
  throw std::logic_error("unreachable");
}

inline FieldSpec build_field(const RunConfig& c, const Tessellation& t) {
  for (const auto& [y, _] : c.site_tes) {
    auto lv = t.level_of(y);
    if (!lv || *lv > t.classified_depth())
      throw ValidationError("transition given for " + c.graph.label(y) + ", which is not a site below the top level");
  }
  auto tes = FieldSpec::generate(t, [&](const PlaquetteShape& shape) {
    auto it = c.site_tes.find(shape.site);
    return it == c.site_tes.end() ? build_te(c, shape, c.default_te, true) : build_te(c, shape, it->second, false);
  });
  return {t, c.dims, *c.reference, std::move(tes), c.max_dim, c.tol};
}

inline LocalOperator build_observable(const RunConfig& c, const ObservableSpec& o) {
  switch (o.kind) {
    case ObservableSpec::Kind::kProduct: {
      LocalOperator a = LocalOperator::scalar(1.0);
      for (const auto& [v, m] : o.factors) a = tensor(a, LocalOperator(Region{v}, {c.dims(v)}, m), c.max_dim);
      return a;
    }
    case ObservableSpec::Kind::kMatrix:
      return {o.support, c.dims.of(o.support), o.matrix};
    case ObservableSpec::Kind::kRandom: {
      Rng rng(o.seed);
      auto ds = c.dims.of(o.support);
      const auto d = static_cast<Eigen::Index>(joint_dim(ds, c.max_dim, "observable " + o.name));
      return {o.support, std::move(ds), random_hermitian(rng, d)};
    }
  }
  throw std::logic_error("unreachable");
}

namespace report {

inline Json num(double x) { return format_number(x); }

inline Json labels(const Graph& g, const Region& r) {
  Json a = Json::array();
  for (VertexId v : r) a.push_back(g.label(v));
  return a;
}

inline Json labels(const Graph& g, const std::vector<VertexId>& vs) {
  Json a = Json::array();
  for (VertexId v : vs) a.push_back(g.label(v));
  return a;
}

inline Json graph(const GraphSpec& s) {
  Json j;
  switch (s.kind) {
    case GraphKind::kPath:
      j["kind"] = "path";
      if (s.length) j["length"] = *s.length;
      break;
    case GraphKind::kCycle:
      j["kind"] = "cycle";
      j["length"] = *s.length;
      break;
    case GraphKind::kRegularTree:
      j["kind"] = "tree";
      j["coordination"] = s.coordination;
      break;
    case GraphKind::kLattice:
      j["kind"] = "lattice";
      j["dim"] = s.dim;
      break;
    case GraphKind::kEdgeList:
      j["kind"] = "edges";
      break;
  }
  return j;
}

}  // namespace report

}  // namespace qmf
