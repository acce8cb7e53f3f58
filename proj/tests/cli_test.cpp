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

// End-to-end runs of the qmf_cli binary: exit codes, report content and
// byte determinism.

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "gtest/gtest.h"

namespace {

using Json = nlohmann::json;

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string tmp(const std::string& name) { return ::testing::TempDir() + "qmf_cli_" + name; }

std::string config(const std::string& name) { return std::string(QMF_CONFIG_DIR) + "/" + name + ".json"; }

Run run(const std::string& args, const std::string& env = "") {
  static int counter = 0;
  const std::string tag = std::to_string(counter++);
  const std::string out = tmp("out" + tag), err = tmp("err" + tag);
  const std::string cmd = env + " " + QMF_CLI_PATH + " " + args + " >" + out + " 2>" + err;
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string write_config(const std::string& name, const std::string& text) {
  const std::string path = tmp(name + ".json");
  std::ofstream(path) << text;
  return path;
}

const Json* find_check(const Json& rep, const std::string& name) {
  for (const auto& c : rep.at("checks"))
    if (c.at("name") == name) return &c;
  return nullptr;
}

}  // namespace

TEST(Cli, tessellate_tree_lists_six_out_boundary_vertices) {
  auto r = run("tessellate --config " + config("tree3"));
  ASSERT_EQ(r.code, 0) << r.err;
  auto rep = Json::parse(r.out);
  EXPECT_EQ(rep["schema_version"], 1);
  EXPECT_EQ(rep["levels"][0]["sizes"]["out_boundary"], 6);
  EXPECT_EQ(rep["levels"][0]["out_boundary"], Json({"4", "5", "6", "7", "8", "9"}));
  EXPECT_TRUE(rep["pass"].get<bool>());
}

TEST(Cli, tessellate_lattice_fails_with_witness) {
  auto r = run("tessellate --config " + config("lattice2"));
  ASSERT_EQ(r.code, 2) << r.err;
  auto rep = Json::parse(r.out);
  bool found = false;
  for (const auto& w : rep["conditions"]["s_disjoint"]["witnesses"]) {
    found = found || (w["level"] == 1 && w["first"] == "(1,1)" && w["second"] == "(2,0)" && w["common"] == "(2,1)");
  }
  EXPECT_TRUE(found);
  EXPECT_FALSE(rep["conditions"]["s_disjoint"]["pass"].get<bool>());
}

TEST(Cli, input_errors_exit_one) {
  auto missing_root = write_config("noroot", R"({"graph": {"kind": "path"}, "depth": 3})");
  auto r = run("tessellate --config " + missing_root);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("root"), std::string::npos) << r.err;

  auto broken = write_config("broken", "{\n  \"graph\": {\"kind\": \"path\"},\n  \"root\": 1,,\n}");
  r = run("tessellate --config " + broken);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;

  auto unknown = write_config("unknown", R"({"graph": {"kind": "path"}, "root": 1, "depth": 3, "dpeth": 4})");
  r = run("tessellate --config " + unknown);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("dpeth"), std::string::npos) << r.err;

  auto bad_state = write_config(
      "badstate", R"({"graph": {"kind": "path"}, "root": 1, "depth": 3,
                      "reference_state": {"kind": "diag", "values": [0.7, 0.4]}})");
  r = run("verify --config " + bad_state);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("/reference_state"), std::string::npos) << r.err;

  EXPECT_EQ(run("tessellate").code, 1);
  EXPECT_EQ(run("converge --config " + config("lattice2")).code, 1);  // no observables
}

TEST(Cli, verify_product_and_isometry_specs_pass) {
  for (const char* name : {"path_product", "tree3"}) {
    auto r = run("verify --config " + config(name));
    ASSERT_EQ(r.code, 0) << name << ": " << r.err;
    auto rep = Json::parse(r.out);
    for (const auto& c : rep["checks"]) EXPECT_TRUE(c["pass"].get<bool>()) << name << " " << c["name"];
  }
}

TEST(Cli, verify_rejects_injected_transpose) {
  auto r = run("verify --config " + config("transpose_injected"));
  ASSERT_EQ(r.code, 2) << r.err;
  auto rep = Json::parse(r.out);
  const Json* cp = find_check(rep, "cp");
  ASSERT_NE(cp, nullptr);
  EXPECT_FALSE((*cp)["pass"].get<bool>());
  EXPECT_LE(std::stod((*cp)["min_choi_eigenvalue"].get<std::string>()), -0.9);
  EXPECT_EQ((*cp)["failing_sites"][0]["site"], "3");
  EXPECT_TRUE((*find_check(rep, "unital"))["pass"].get<bool>());
}

TEST(Cli, verify_on_non_tree_reports_conditions) {
  auto r = run("verify --config " + config("lattice2"));
  EXPECT_EQ(r.code, 2);
  auto rep = Json::parse(r.out);
  EXPECT_FALSE(rep["conditions"]["pass"].get<bool>());
}

TEST(Cli, cap_exceeded_names_the_check) {
  auto r = run("verify --config " + config("tree3") + " --max-dim 8");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("check \""), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("MAX_DIM=8"), std::string::npos) << r.err;
}

TEST(Cli, converge_identity_and_root_observable) {
  const std::string csv = tmp("path.csv");
  auto r = run("converge --config " + config("path") + " --csv " + csv);
  ASSERT_EQ(r.code, 0) << r.err;
  auto rep = Json::parse(r.out);
  const auto& id = rep["reports"][0];
  EXPECT_EQ(id["observable"], "identity");
  for (const auto& v : id["values"]) EXPECT_EQ(v, "1");
  const auto& z = rep["reports"][1];
  EXPECT_EQ(z["verdict"], "stabilized");
  EXPECT_LE(z["stabilization_index"].get<int>(), 1);
  const std::string text = slurp(csv);
  EXPECT_EQ(text.rfind("observable,level,value,deviation\n", 0), 0U);
  EXPECT_NE(text.find("identity,1,1,\n"), std::string::npos);
}

TEST(Cli, incompatible_spec_does_not_stabilize) {
  auto r = run("converge --config " + config("incompatible"));
  ASSERT_EQ(r.code, 2) << r.err;
  auto rep = Json::parse(r.out);
  EXPECT_EQ(rep["reports"][0]["verdict"], "not-stabilized");
  EXPECT_FALSE(rep["all_compatible"].get<bool>());
}

TEST(Cli, overrides_apply) {
  auto r = run("tessellate --config " + config("tree3") + " --depth 4 --enum-seed 3");
  ASSERT_EQ(r.code, 0) << r.err;
  auto rep = Json::parse(r.out);
  EXPECT_EQ(rep["depth"], 4);
  EXPECT_EQ(rep["levels"].size(), 4U);
  EXPECT_EQ(rep["enumeration_seed"], "3");
  EXPECT_NE(rep["levels"][1]["enumeration"], rep["levels"][1]["out_boundary"]);
}

TEST(Cli, reports_are_byte_identical) {
  for (const char* cmd : {"tessellate", "verify", "converge"}) {
    const std::string a = tmp(std::string(cmd) + "_a.json"), b = tmp(std::string(cmd) + "_b.json");
    ASSERT_EQ(run(std::string(cmd) + " --config " + config("tree3") + " --out " + a, "QMF_THREADS=1").code, 0);
    ASSERT_EQ(run(std::string(cmd) + " --config " + config("tree3") + " --out " + b, "QMF_THREADS=4").code, 0);
    const std::string sa = slurp(a), sb = slurp(b);
    EXPECT_FALSE(sa.empty());
    EXPECT_EQ(sa, sb) << cmd;
  }
}

TEST(Cli, permuted_enumeration_reports_deviation) {
  auto r = run("converge --config " + config("tree3") + " --enum-seed 11");
  ASSERT_EQ(r.code, 0) << r.err;
  auto rep = Json::parse(r.out);
  for (const auto& o : rep["reports"]) {
    ASSERT_TRUE(o.contains("enumeration_deviation"));
    EXPECT_LE(std::stod(o["enumeration_deviation"].get<std::string>()), 1e-10);
  }
  auto plain = Json::parse(run("converge --config " + config("tree3")).out);
  EXPECT_FALSE(plain["reports"][0].contains("enumeration_deviation"));
}
