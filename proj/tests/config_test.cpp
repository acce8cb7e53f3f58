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

#include <atomic>

#include "qmf/commands.hpp"

#include "gtest/gtest.h"

using namespace qmf;

namespace {

RunConfig parse(const char* text) { return parse_config(Json::parse(text)); }

std::string error_of(const char* text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      row.push_back(Json::array({format_number(m(i, j).real()), format_number(m(i, j).imag())}));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST(Config, graph_kinds_and_vertices) {
  auto c = parse(R"({"graph": {"kind": "lattice", "dim": 2}, "root": [1, -2], "depth": 2})");
  EXPECT_EQ(c.graph.label(c.root), "(1,-2)");
  c = parse(R"({"graph": {"kind": "tree", "coordination": 4}, "root": "5", "depth": 3})");
  EXPECT_EQ(c.root, VertexId{5});
  EXPECT_EQ(c.graph.neighbors(VertexId{0}).size(), 4U);
  c = parse(R"({"graph": {"kind": "edges", "edges": [[0, 1], [1, 2]]}, "root": 1, "depth": 2})");
  EXPECT_EQ(c.graph.neighbors(VertexId{1}), Region::of_ids({0, 2}));
  c = parse(R"({"graph": {"kind": "adjacency", "adjacency": {"0": [1], "1": [0]}}, "root": 0, "depth": 2})");
  EXPECT_EQ(c.graph.neighbors(VertexId{0}), Region::of_ids({1}));
  EXPECT_NE(error_of(R"({"graph": {"kind": "adjacency", "adjacency": {"0": [1], "1": []}}, "root": 0, "depth": 2})")
                .find("asymmetric"),
            std::string::npos);
  EXPECT_NE(error_of(R"({"graph": {"kind": "path"}, "root": 0, "depth": 2})").find("/root"), std::string::npos);
  EXPECT_NE(error_of(R"({"graph": {"kind": "mobius"}, "root": 0, "depth": 2})").find("/graph/kind"), std::string::npos);
  EXPECT_NE(error_of(R"({"graph": {"kind": "path"}, "root": 1, "depth": 0})").find("/depth"), std::string::npos);
  EXPECT_NE(error_of(R"({"schema_version": 2, "graph": {"kind": "path"}, "root": 1, "depth": 2})").find("version"),
            std::string::npos);
}

TEST(Config, numbers_accept_decimal_strings) {
  auto c = parse(R"({"graph": {"kind": "path"}, "root": 1, "depth": 3,
                     "reference_state": {"kind": "diag", "values": ["0.25", 0.75]},
                     "tolerances": {"convergence": "1e-9"}, "enumeration_seed": "18446744073709551615"})");
  EXPECT_EQ(c.reference->density(VertexId{4})(1, 1), Complex(0.75));
  EXPECT_EQ(c.tol.convergence, 1e-9);
  EXPECT_EQ(*c.enumeration_seed, 18446744073709551615ULL);
  EXPECT_NE(error_of(R"({"graph": {"kind": "path"}, "root": 1, "depth": 3, "tolerances": {"psd": "abc"}})")
                .find("/tolerances/psd"),
            std::string::npos);
}

TEST(Config, reference_state_forms) {
  auto c = parse(R"({"graph": {"kind": "path"}, "root": 1, "depth": 3,
                     "site_dims": {"default": 2, "overrides": [{"vertex": 3, "dim": 3}]},
                     "reference_state": {"kind": "bloch", "vector": [0, 0, 1],
                                         "overrides": [{"vertex": 2, "kind": "matrix",
                                                        "matrix": [[0.5, [0, -0.5]], [[0, 0.5], 0.5]]}]}})");
  EXPECT_NEAR(std::abs(c.reference->density(VertexId{1})(0, 0) - 1.0), 0.0, 0.0);
  EXPECT_EQ(c.reference->density(VertexId{2})(1, 0), Complex(0, 0.5));
  EXPECT_EQ(c.reference->density(VertexId{3}).rows(), 3);  // maximally mixed on the odd site
  EXPECT_NE(error_of(R"({"graph": {"kind": "path"}, "root": 1, "depth": 3,
                         "reference_state": {"kind": "bloch", "vector": [1, 1, 0]}})")
                .find("positive"),
            std::string::npos);
}

TEST(Config, explicit_kraus_matches_generator) {
  auto base = parse(R"({"graph": {"kind": "path"}, "root": 1, "depth": 3,
                        "reference_state": {"kind": "diag", "values": [0.6, 0.4]}})");
  auto t = build_tessellation(base);
  const auto shape = shape_of(t, VertexId{3});
  auto ref = make_product_te(shape, base.dims, *base.reference);
  Json j = Json::parse(R"({"graph": {"kind": "path"}, "root": 1, "depth": 3,
                           "reference_state": {"kind": "diag", "values": [0.6, 0.4]}})");
  Json kraus = Json::array();
  for (const auto& k : ref.kraus()) kraus.push_back(matrix_json(k));
  j["transitions"] = {{"sites", Json::array({{{"site", 3}, {"np", {2}}, {"ns", {4}}, {"kraus", kraus}}})}};
  auto c = parse_config(j);
  auto spec = build_field(c, t);
  EXPECT_EQ(spec.te(VertexId{3}).kraus().size(), ref.kraus().size());
  EXPECT_EQ(spec.te(VertexId{3}).kraus()[0], ref.kraus()[0]);

  j["transitions"]["sites"][0]["ns"] = {5};
  auto bad = parse_config(j);
  EXPECT_THROW(build_field(bad, t), ValidationError);

  j["transitions"] = {{"sites", Json::array({{{"site", 9}, {"generator", "product"}}})}};
  EXPECT_THROW(build_field(parse_config(j), t), ValidationError);
}

TEST(Config, isometry_seeds) {
  auto c = parse(R"({"graph": {"kind": "path"}, "root": 1, "depth": 3,
                     "transitions": {"default": {"generator": "isometry", "seed": 4},
                                     "sites": [{"site": 3, "generator": "isometry", "seed": 4, "repair": false}]}})");
  auto t = build_tessellation(c);
  auto spec = build_field(c, t);
  const auto ref = make_isometry_te(derive_seed(4, 1), shape_of(t, VertexId{1}), c.dims, *c.reference);
  EXPECT_EQ(spec.te(VertexId{1}).kraus()[0], ref.kraus()[0]);
  const auto raw = make_isometry_te(4, shape_of(t, VertexId{3}), c.dims, *c.reference, {.repair = false});
  EXPECT_EQ(spec.te(VertexId{3}).kraus()[0], raw.kraus()[0]);
}

TEST(Config, observables) {
  auto c = parse(R"({"graph": {"kind": "path"}, "root": 1, "depth": 3,
                     "observables": [{"ops": [{"vertex": 2, "op": "X"}, {"vertex": 1, "op": "Z"}]},
                                     {"name": "m", "support": [2], "matrix": [[1, 0], [0, 2]]},
                                     {"name": "r", "random": {"support": [1, 2], "seed": 3}}]})");
  ASSERT_EQ(c.observables.size(), 3U);
  EXPECT_EQ(c.observables[0].name, "obs0");
  auto zx = build_observable(c, c.observables[0]);
  EXPECT_EQ(zx.support(), Region::of_ids({1, 2}));
  EXPECT_EQ(zx.matrix(), kron(named_operator("Z", 2), named_operator("X", 2)));
  auto r1 = build_observable(c, c.observables[2]);
  auto r2 = build_observable(c, c.observables[2]);
  EXPECT_EQ(r1.matrix(), r2.matrix());
  EXPECT_LT(hermiticity_residual(r1.matrix()), 1e-15);
  EXPECT_NE(error_of(R"({"graph": {"kind": "path"}, "root": 1, "depth": 3,
                         "observables": [{"ops": [{"vertex": 1, "op": "W"}]}]})")
                .find("/observables/0/ops/0/op"),
            std::string::npos);
  EXPECT_NE(error_of(R"({"graph": {"kind": "path"}, "root": 1, "depth": 3,
                         "observables": [{"support": [1, 2], "matrix": [[1, 0], [0, 1]]}]})")
                .find("does not match"),
            std::string::npos);
}

TEST(Commands, parallel_for_is_ordered_and_rethrows_lowest_index) {
  std::vector<int> out(50);
  parallel_for(out.size(), [&](std::size_t i) { out[i] = static_cast<int>(i * i); });
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], static_cast<int>(i * i));
  std::atomic<int> ran{0};
  try {
    parallel_for(20, [&](std::size_t i) {
      ++ran;
      if (i == 7 || i == 13) throw std::runtime_error(std::to_string(i));
    });
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "7");
  }
  EXPECT_EQ(ran.load(), 20);
}

TEST(Commands, exit_code_mapping) {
  EXPECT_EQ(run_guarded([]() -> Outcome { throw ConfigError("x"); }).exit_code, kExitInputError);
  EXPECT_EQ(run_guarded([]() -> Outcome { throw ValidationError("x"); }).exit_code, kExitInputError);
  EXPECT_EQ(run_guarded([]() -> Outcome { throw ResourceError("x"); }).exit_code, kExitCapExceeded);
  EXPECT_EQ(run_guarded([]() -> Outcome { throw ConditionError("x"); }).exit_code, kExitFailed);
  auto o = run_guarded([]() -> Outcome { return detail::guarded("oracle", []() -> Outcome { throw ResourceError("big"); }); });
  EXPECT_EQ(o.exit_code, kExitCapExceeded);
  EXPECT_NE(o.message.find("\"oracle\""), std::string::npos);
}
