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
#include <cstdlib>
#include <exception>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "qmf/config.hpp"

namespace qmf {

enum ExitCode : int { kExitOk = 0, kExitInputError = 1, kExitFailed = 2, kExitCapExceeded = 3 };

/// A check hit the dimension cap.
class CapExceeded : public ResourceError {
 public:
  CapExceeded(std::string check, const std::string& what)
      : ResourceError("check \"" + check + "\" exceeded the dimension cap: " + what), check_(std::move(check)) {}
  [[nodiscard]] const std::string& check() const { return check_; }

 private:
  std::string check_;
};

struct Outcome {
  int exit_code = kExitOk;
  std::optional<Json> report;
  std::string csv;
  std::string message;
};

/// Worker count: QMF_THREADS when set, else the hardware concurrency.
inline unsigned thread_budget() {
  if (const char* s = std::getenv("QMF_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(s, &end, 10);
    if (*s && *end == '\0' && v >= 1) return static_cast<unsigned>(std::min(v, 256L));
  }
  return std::max(1U, std::thread::hardware_concurrency());
}

/// Runs f(0..n-1) over at most thread_budget() workers. Results are written
/// by index, so output order never depends on scheduling; the exception of
/// the lowest failing index is rethrown.
template <class F>
void parallel_for(std::size_t n, F&& f) {
  const std::size_t workers = std::min<std::size_t>(thread_budget(), n);
  std::vector<std::exception_ptr> errors(n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += workers) {
          try {
            f(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace detail {

template <class F>
auto guarded(const std::string& check, F&& f) {
  try {
    return f();
  } catch (const CapExceeded&) {
    throw;
  } catch (const ResourceError& e) {
    throw CapExceeded(check, e.what());
  }
}

inline Json header(const RunConfig& c, const char* command) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = command;
  j["graph"] = report::graph(c.graph.spec());
  j["root"] = c.graph.label(c.root);
  j["depth"] = c.depth;
  j["enumeration_seed"] = c.enumeration_seed ? Json(std::to_string(*c.enumeration_seed)) : Json(nullptr);
  j["max_dim"] = c.max_dim;
  return j;
}

inline Json condition_json(const Graph& g, const ConditionReport& rep) {
  Json j;
  Json orphans = Json::array();
  for (const auto& w : rep.orphans)
    orphans.push_back({{"level", w.level}, {"vertex", g.label(w.vertex)}, {"neighbor", g.label(w.neighbor)}});
  Json overlaps = Json::array();
  for (const auto& w : rep.overlaps)
    overlaps.push_back({{"level", w.level},
                        {"first", g.label(w.first)},
                        {"second", g.label(w.second)},
                        {"common", g.label(w.common)}});
  Json edges = Json::array();
  for (const auto& w : rep.bad_edges) edges.push_back(Json::array({g.label(w.a), g.label(w.b)}));
  j["checked_depth"] = rep.checked_depth;
  j["n0_empty"] = {{"pass", rep.n0_empty()}, {"witnesses", orphans}};
  j["s_disjoint"] = {{"pass", rep.s_disjoint()}, {"witnesses", overlaps}};
  j["edge_bipartition"] = {{"pass", rep.edge_bipartition()}, {"witnesses", edges}};
  j["pass"] = rep.all_pass();
  return j;
}

inline Json partition_json(const Tessellation& t, bool& ok) {
  const Graph& g = t.graph();
  Json a = Json::array();
  for (int n = 1; n < t.depth(); ++n) {
    auto pc = verify_partition(t, n);
    ok = ok && pc.pass();
    a.push_back({{"level", n},
                 {"pass", pc.pass()},
                 {"successors_diff", report::labels(g, pc.successors_diff)},
                 {"previous_diff", report::labels(g, pc.previous_diff)}});
  }
  return a;
}

/// Random subset of `pool` with 1..max_size elements, in canonical order.
inline Region random_subset(Rng& rng, const Region& pool, std::size_t max_size) {
  std::vector<VertexId> pick = pool.vertices();
  rng.shuffle(pick);
  pick.resize(1 + static_cast<std::size_t>(rng.below(std::min(max_size, pick.size()))));
  return Region(std::move(pick));
}

inline LocalOperator random_hermitian_on(Rng& rng, const Region& r, const SiteDims& dims, std::size_t max_dim) {
  auto ds = dims.of(r);
  const auto d = static_cast<Eigen::Index>(joint_dim(ds, max_dim));
  return {r, std::move(ds), random_hermitian(rng, d)};
}

struct Check {
  std::string name;
  bool pass = true;
  double residual = 0.0;
  Json details = Json::object();

  [[nodiscard]] Json json() const {
    Json j;
    j["name"] = name;
    j["pass"] = pass;
    j["residual"] = report::num(residual);
    for (const auto& [k, v] : details.items()) j[k] = v;
    return j;
  }
};

inline std::vector<VertexId> all_sites(const FieldSpec& spec) { return spec.schedule(spec.max_level()); }

inline Check site_check(const FieldSpec& spec, const std::string& name,
                        const std::function<std::pair<bool, double>(const TransitionExpectation&)>& f,
                        const char* field) {
  const auto sites = all_sites(spec);
  std::vector<std::pair<bool, double>> res(sites.size());
  parallel_for(sites.size(), [&](std::size_t i) { res[i] = guarded(name, [&] { return f(spec.te(sites[i])); }); });
  Check c{name};
  Json failing = Json::array();
  for (std::size_t i = 0; i < sites.size(); ++i) {
    c.residual = std::max(c.residual, res[i].second);
    if (!res[i].first) {
      c.pass = false;
      failing.push_back({{"site", spec.graph().label(sites[i])}, {field, report::num(res[i].second)}});
    }
  }
  c.details["sites_checked"] = sites.size();
  c.details["failing_sites"] = failing;
  return c;
}

inline Check cp_check(const FieldSpec& spec) {
  const auto sites = all_sites(spec);
  Check c{"cp"};
  double worst = std::numeric_limits<double>::infinity();
  Json failing = Json::array();
  for (VertexId y : sites) {
    const auto& r = spec.cp_report(y);
    worst = std::min(worst, r.min_choi_eig);
    if (!r.cp) {
      c.pass = false;
      failing.push_back({{"site", spec.graph().label(y)}, {"min_choi_eigenvalue", report::num(r.min_choi_eig)}});
    }
  }
  c.residual = std::max(0.0, -worst);
  c.details["min_choi_eigenvalue"] = report::num(worst);
  c.details["sites_checked"] = sites.size();
  c.details["failing_sites"] = failing;
  return c;
}

inline Check unital_check(const FieldSpec& spec) {
  const auto sites = all_sites(spec);
  Check c{"unital"};
  Json failing = Json::array();
  for (VertexId y : sites) {
    const auto& r = spec.cp_report(y);
    c.residual = std::max(c.residual, r.unital_residual);
    if (!r.unital) {
      c.pass = false;
      failing.push_back({{"site", spec.graph().label(y)}, {"unital_residual", report::num(r.unital_residual)}});
    }
  }
  c.details["sites_checked"] = sites.size();
  c.details["failing_sites"] = failing;
  return c;
}

inline Check compatibility_check(const FieldSpec& spec) {
  const auto sites = all_sites(spec);
  Check c{"compatibility"};
  Json failing = Json::array();
  for (VertexId y : sites) {
    const auto& r = spec.compatibility(y);
    c.residual = std::max(c.residual, r.max_deviation);
    if (!r.pass) {
      c.pass = false;
      failing.push_back({{"site", spec.graph().label(y)},
                         {"max_deviation", report::num(r.max_deviation)},
                         {"defect_norm", report::num(r.defect_norm)}});
    }
  }
  c.details["tolerance"] = report::num(spec.tolerances().compatibility);
  c.details["sites_checked"] = sites.size();
  c.details["failing_sites"] = failing;
  return c;
}

/// Level maps send operators on their domain into the next internal boundary.
inline Check level_markov_check(const FieldSpec& spec, const CheckOptions& opt) {
  const auto& t = spec.tessellation();
  Check c{"level_markov"};
  const double tol = spec.tolerances().localization;
  for (int n = 1; n <= spec.max_level(); ++n) {
    Rng rng(derive_seed(opt.seed, 0x100 + static_cast<std::uint64_t>(n)));
    const Region pool = subtract(t.level(n + 1).closure, t.level(n).interior);
    const Region& target = t.level(n + 1).in_boundary;
    for (int trial = 0; trial < opt.random_trials; ++trial) {
      auto a = random_hermitian_on(rng, random_subset(rng, pool, 3), spec.dims(), spec.max_dim());
      auto out = level_map_apply(spec, n, a);
      auto loc = is_localized_in(embed(out, unite(out.support(), a.support()), spec.dims(), spec.max_dim()), target,
                                 tol);
      c.residual = std::max(c.residual, loc.residual);
      c.pass = c.pass && loc.pass;
    }
  }
  c.details["trials_per_level"] = opt.random_trials;
  return c;
}

/// After levels 0..n-1, an observable inside V_n is localized in the
/// internal boundary of V_n.
inline Check intermediate_check(const FieldSpec& spec, const CheckOptions& opt) {
  const auto& t = spec.tessellation();
  Check c{"intermediate_localization"};
  Json failing = Json::array();
  for (int n = 1; n <= spec.max_level(); ++n) {
    Rng rng(derive_seed(opt.seed, 0x200 + static_cast<std::uint64_t>(n)));
    const int trials = std::max(1, opt.random_trials / 10);
    bool level_ok = true;
    for (int trial = 0; trial < trials; ++trial) {
      auto a = random_hermitian_on(rng, random_subset(rng, t.level(n).closure, 3), spec.dims(), spec.max_dim());
      auto mid = full_map_apply(spec, n - 1, a);
      auto loc = is_localized_in(mid, t.level(n).in_boundary, spec.tolerances().localization);
      c.residual = std::max(c.residual, loc.residual);
      level_ok = level_ok && loc.pass;
    }
    if (!level_ok) failing.push_back(n);
    c.pass = c.pass && level_ok;
  }
  c.details["failing_levels"] = failing;
  return c;
}

inline Check projectivity_check(const FieldSpec& spec, const CheckOptions& opt) {
  const auto& t = spec.tessellation();
  Check c{"projectivity"};
  const double tol = spec.tolerances().localization;
  double trivial = 0.0;
  for (int n = 1; n <= spec.max_level(); ++n) {
    Rng rng(derive_seed(opt.seed, 0x300 + static_cast<std::uint64_t>(n)));
    const Region& shell = t.level(n).in_boundary;
    for (int trial = 0; trial < opt.random_trials; ++trial) {
      std::map<VertexId, Matrix> b;
      for (VertexId v : random_subset(rng, shell, 3)) b[v] = ginibre(rng, spec.dims()(v), spec.dims()(v));
      auto r = verify_projectivity(spec, n, b, tol);
      c.residual = std::max(c.residual, r.residual);
      trivial = std::max(trivial, r.trivial_factor_deviation);
      c.pass = c.pass && r.pass;
    }
  }
  c.details["trials_per_level"] = opt.random_trials;
  c.details["trivial_factor_deviation"] = report::num(trivial);
  return c;
}

/// phi_n from the support-tracked engine against the dense evaluation, on
/// every level whose truncation fits under the cap.
inline Check oracle_check(const FieldSpec& spec, const CheckOptions& opt, const std::vector<LocalOperator>& extra) {
  const auto& t = spec.tessellation();
  Check c{"oracle"};
  Json checked = Json::array(), skipped = Json::array();
  for (int n = 0; n <= spec.max_level(); ++n) {
    const Region& omega = t.level(n + 1).closure;
    double dim = 1.0;
    for (int d : spec.dims().of(omega)) dim *= d;
    if (dim > static_cast<double>(spec.max_dim())) {
      skipped.push_back(n);
      continue;
    }
    checked.push_back(n);
    Rng rng(derive_seed(opt.seed, 0x400 + static_cast<std::uint64_t>(n)));
    // A dense evaluation costs O(dim^2) memory per map; past 1024 one
    // random observable per level keeps the run at desk scale.
    const bool large = dim > 1024.0;
    std::vector<LocalOperator> obs;
    for (int trial = 0; trial < (large ? 1 : std::min(opt.random_trials, 10)); ++trial)
      obs.push_back(random_hermitian_on(rng, random_subset(rng, omega, 3), spec.dims(), spec.max_dim()));
    for (const auto& a : extra)
      if (!large && is_subset(a.support(), omega)) obs.push_back(a);
    for (const auto& a : obs) {
      const double d = std::abs(phi_n(spec, n, a) - oracle_eval(spec, n, a));
      c.residual = std::max(c.residual, d);
    }
  }
  c.pass = c.residual <= spec.tolerances().localization;
  c.details["levels_checked"] = checked;
  c.details["levels_skipped_over_cap"] = skipped;
  return c;
}

inline Outcome condition_failure(Json rep, const Graph& g, const ConditionReport& cr) {
  rep["conditions"] = condition_json(g, cr);
  rep["pass"] = false;
  Outcome o{kExitFailed, std::move(rep), "", "tessellation conditions fail; see the witnesses in the report"};
  return o;
}

}  // namespace detail

/// Levels, boundaries, classifications and the condition report.
/// Exit 0 iff every condition and structural check passes.
inline Outcome run_tessellate(const RunConfig& c) {
  if (c.depth < 2) throw ConfigError("/depth: the condition check needs depth >= 2");
  const auto t = build_tessellation(c);
  const Graph& g = c.graph;
  Json rep = detail::header(c, "tessellate");
  Json levels = Json::array();
  for (int n = 1; n <= t.depth(); ++n) {
    const Level& lv = t.level(n);
    levels.push_back({{"level", n},
                      {"core", report::labels(g, lv.core)},
                      {"closure", report::labels(g, lv.closure)},
                      {"out_boundary", report::labels(g, lv.out_boundary)},
                      {"in_boundary", report::labels(g, lv.in_boundary)},
                      {"interior", report::labels(g, lv.interior)},
                      {"enumeration", report::labels(g, lv.enumeration)},
                      {"sizes",
                       {{"core", lv.core.size()},
                        {"closure", lv.closure.size()},
                        {"out_boundary", lv.out_boundary.size()},
                        {"in_boundary", lv.in_boundary.size()}}}});
  }
  rep["levels"] = levels;
  Json classes = Json::array();
  classes.push_back({{"level", 0},
                     {"vertex", g.label(t.root())},
                     {"previous", Json::array()},
                     {"successors", report::labels(g, g.neighbors(t.root()))},
                     {"orphans", Json::array()}});
  for (int n = 1; n <= t.classified_depth(); ++n) {
    for (VertexId y : t.level(n).out_boundary) {
      auto cl = t.classify(n, y);
      classes.push_back({{"level", n},
                         {"vertex", g.label(y)},
                         {"previous", report::labels(g, cl.previous)},
                         {"successors", report::labels(g, cl.successors)},
                         {"orphans", report::labels(g, cl.orphans)}});
    }
  }
  rep["classifications"] = classes;
  const auto cr = check_conditions(t);
  rep["conditions"] = detail::condition_json(g, cr);
  bool structure_ok = true;
  rep["partition"] = detail::partition_json(t, structure_ok);
  const auto bad = check_invariants(t);
  rep["invariants"] = {{"pass", bad.empty()}, {"violations", bad}};
  const auto ex = verify_exhaustive(t, Region{t.root()});
  rep["connectivity"] = {{"connected_within_radius", 2 * t.depth() - 1}, {"pass", !ex.disconnected_level}};
  const bool pass = cr.all_pass() && structure_ok && bad.empty() && !ex.disconnected_level;
  rep["pass"] = pass;
  Outcome o{pass ? kExitOk : kExitFailed, std::move(rep), "", ""};
  if (!cr.all_pass()) o.message = "tessellation conditions fail; see the witnesses in the report";
  return o;
}

/// One named check per property with pass/fail and residuals.
inline Outcome run_verify(const RunConfig& c) {
  if (c.depth < 2) throw ConfigError("/depth: verification needs depth >= 2");
  const auto t = build_tessellation(c);
  Json rep = detail::header(c, "verify");
  const auto cr = check_conditions(t);
  if (!cr.all_pass()) return detail::condition_failure(std::move(rep), c.graph, cr);
  const auto spec = detail::guarded("build", [&] { return build_field(c, t); });
  std::vector<detail::Check> checks;
  checks.push_back({"conditions", true, 0.0, {{"report", detail::condition_json(c.graph, cr)}}});
  {
    bool ok = true;
    Json levels = detail::partition_json(t, ok);
    checks.push_back({"partition", ok, 0.0, {{"levels", levels}}});
  }
  checks.push_back(detail::cp_check(spec));
  checks.push_back(detail::unital_check(spec));
  const double loc_tol = c.tol.localization;
  checks.push_back(detail::site_check(
      spec, "markov",
      [&](const TransitionExpectation& e) {
        auto r = is_markov_te(e, {e.domain(), e.codomain(), e.previous()}, loc_tol, spec.max_dim());
        return std::pair{r.pass, r.residual};
      },
      "residual"));
  checks.push_back(detail::compatibility_check(spec));
  std::vector<LocalOperator> obs;
  for (const auto& o : c.observables) obs.push_back(build_observable(c, o));
  using Fn = std::function<detail::Check()>;
  const std::vector<std::pair<std::string, Fn>> heavy{
      {"level_markov", [&] { return detail::level_markov_check(spec, c.checks); }},
      {"intermediate_localization", [&] { return detail::intermediate_check(spec, c.checks); }},
      {"projectivity", [&] { return detail::projectivity_check(spec, c.checks); }},
      {"oracle", [&] { return detail::oracle_check(spec, c.checks, obs); }},
  };
  std::vector<detail::Check> results(heavy.size());
  parallel_for(heavy.size(), [&](std::size_t i) { results[i] = detail::guarded(heavy[i].first, heavy[i].second); });
  checks.insert(checks.end(), results.begin(), results.end());
  Json arr = Json::array();
  bool pass = true;
  std::string failed;
  for (const auto& ch : checks) {
    arr.push_back(ch.json());
    pass = pass && ch.pass;
    if (!ch.pass) failed += (failed.empty() ? "" : ", ") + ch.name;
  }
  rep["all_compatible"] = spec.all_compatible();
  rep["checks"] = arr;
  rep["pass"] = pass;
  Outcome o{pass ? kExitOk : kExitFailed, std::move(rep), "", ""};
  if (!pass) o.message = "failed checks: " + failed;
  return o;
}

/// One convergence report per observable; exit 0 iff all stabilized.
inline Outcome run_converge(const RunConfig& c) {
  if (c.observables.empty()) throw ConfigError("/observables: converge needs at least one observable");
  if (c.depth < 2) throw ConfigError("/depth: convergence needs depth >= 2");
  const auto t = build_tessellation(c);
  Json rep = detail::header(c, "converge");
  const auto cr = check_conditions(t);
  if (!cr.all_pass()) return detail::condition_failure(std::move(rep), c.graph, cr);
  const auto spec = detail::guarded("build", [&] { return build_field(c, t); });
  std::vector<ConvergenceReport> reports(c.observables.size());
  parallel_for(reports.size(), [&](std::size_t i) {
    const auto& o = c.observables[i];
    reports[i] = detail::guarded("converge:" + o.name, [&] {
      return convergence_report(spec, build_observable(c, o), c.tol.convergence, o.name);
    });
  });
  // With a permuted enumeration, the canonical order is evaluated as well and
  // the largest difference reported; invariance is observed, not assumed.
  std::vector<std::optional<double>> enum_dev(reports.size());
  if (c.enumeration_seed) {
    RunConfig canon = c;
    canon.enumeration_seed.reset();
    const auto t2 = build_tessellation(canon);
    const auto spec2 = detail::guarded("build", [&] { return build_field(canon, t2); });
    parallel_for(reports.size(), [&](std::size_t i) {
      enum_dev[i] = detail::guarded("converge:" + c.observables[i].name, [&] {
        const auto a = build_observable(c, c.observables[i]);
        double d = 0.0;
        for (std::size_t k = 0; k < reports[i].values.size(); ++k) {
          const int n = reports[i].first_level + static_cast<int>(k);
          d = std::max(d, std::abs(phi_n(spec2, n, a).real() - reports[i].values[k]));
        }
        return d;
      });
      if (*enum_dev[i] > c.tol.convergence)
        reports[i].warnings.push_back("values depend on the enumeration (max difference " +
                                      format_number(*enum_dev[i]) + ")");
    });
  }
  Json arr = Json::array();
  std::ostringstream csv;
  csv << "observable,level,value,deviation\n";
  bool pass = true;
  std::string unstable;
  for (const auto& r : reports) {
    Json j;
    j["observable"] = r.observable;
    j["first_level"] = r.first_level;
    Json vals = Json::array(), devs = Json::array();
    for (double v : r.values) vals.push_back(report::num(v));
    for (double d : r.deviations) devs.push_back(report::num(d));
    j["values"] = vals;
    j["deviations"] = devs;
    j["max_imaginary"] = report::num(r.max_imaginary);
    j["max_successive_deviation"] = report::num(r.max_successive_deviation);
    j["stabilization_index"] = r.stabilization_index ? Json(*r.stabilization_index) : Json(nullptr);
    j["verdict"] = verdict_name(r.verdict);
    const std::size_t idx = static_cast<std::size_t>(&r - reports.data());
    if (enum_dev[idx]) j["enumeration_deviation"] = report::num(*enum_dev[idx]);
    j["warnings"] = r.warnings;
    arr.push_back(j);
    for (std::size_t i = 0; i < r.values.size(); ++i) {
      csv << r.observable << ',' << r.first_level + static_cast<int>(i) << ',' << format_number(r.values[i]) << ','
          << (i ? format_number(r.deviations[i - 1]) : "") << '\n';
    }
    if (r.verdict != Verdict::kStabilized) {
      pass = false;
      unstable += (unstable.empty() ? "" : ", ") + r.observable;
    }
  }
  rep["all_compatible"] = spec.all_compatible();
  rep["tolerance"] = report::num(c.tol.convergence);
  rep["reports"] = arr;
  rep["pass"] = pass;
  Outcome o{pass ? kExitOk : kExitFailed, std::move(rep), csv.str(), ""};
  if (!pass) o.message = "not stabilized: " + unstable;
  return o;
}

/// Runs a command and maps errors onto the exit-code contract.
template <class Cmd>
Outcome run_guarded(Cmd&& cmd) {
  try {
    return cmd();
  } catch (const CapExceeded& e) {
    return {kExitCapExceeded, std::nullopt, "", e.what()};
  } catch (const ResourceError& e) {
    return {kExitCapExceeded, std::nullopt, "", e.what()};
  } catch (const ConditionError& e) {
    return {kExitFailed, std::nullopt, "", e.what()};
  } catch (const std::exception& e) {
    return {kExitInputError, std::nullopt, "", e.what()};
  }
}

}  // namespace qmf
