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

// qmf_cli: tessellate / verify / converge drivers with JSON reports.
//
//   qmf_cli verify --config configs/tree3.json --out report.json
//
// Exit codes: 0 pass, 1 input error, 2 a check failed or a value did not
// stabilize, 3 the dimension cap was exceeded.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "qmf/commands.hpp"

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::string csv;
  std::optional<double> tol;
  std::optional<std::size_t> max_dim;
  std::optional<std::uint64_t> enum_seed;
  std::optional<int> depth;
};

void add_flags(CLI::App* sub, Flags& f, bool csv) {
  sub->add_option("--config", f.config, "Run configuration (JSON)")->required();
  sub->add_option("--out", f.out, "Write the JSON report here instead of stdout");
  if (csv) sub->add_option("--csv", f.csv, "Also write level values as CSV");
  sub->add_option("--tol", f.tol, "Override every tolerance except compatibility")->check(CLI::PositiveNumber);
  sub->add_option("--max-dim", f.max_dim, "Cap on any dense joint dimension")->check(CLI::PositiveNumber);
  sub->add_option("--enum-seed", f.enum_seed, "Seeded permutation of each level enumeration");
  sub->add_option("--depth", f.depth, "Override the configured depth")->check(CLI::PositiveNumber);
}

bool write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  return static_cast<bool>(out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forward quantum Markov field toolkit"};
  app.require_subcommand(1);
  Flags flags;
  auto* tess = app.add_subcommand("tessellate", "Build the tessellation and check its standing conditions");
  auto* verify = app.add_subcommand("verify", "Run every property check on a field specification");
  auto* converge = app.add_subcommand("converge", "Evaluate observables level by level and judge stabilization");
  add_flags(tess, flags, false);
  add_flags(verify, flags, false);
  add_flags(converge, flags, true);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : qmf::kExitInputError;
  }

  const auto start = std::chrono::steady_clock::now();
  auto outcome = qmf::run_guarded([&] {
    qmf::RunConfig cfg = qmf::load_config(flags.config);
    if (flags.depth) cfg.depth = *flags.depth;
    if (flags.max_dim) cfg.max_dim = *flags.max_dim;
    if (flags.enum_seed) cfg.enumeration_seed = *flags.enum_seed;
    if (flags.tol) {
      cfg.tol.hermitian = cfg.tol.trace = cfg.tol.psd = *flags.tol;
      cfg.tol.localization = cfg.tol.convergence = *flags.tol;
    }
    if (tess->parsed()) return qmf::run_tessellate(cfg);
    if (verify->parsed()) return qmf::run_verify(cfg);
    return qmf::run_converge(cfg);
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (outcome.report) {
    const std::string text = outcome.report->dump(2) + "\n";
    if (flags.out.empty()) {
      std::cout << text;
    } else if (!write_file(flags.out, text)) {
      std::cerr << "qmf_cli: cannot write " << flags.out << "\n";
      return qmf::kExitInputError;
    }
  }
  if (!flags.csv.empty() && !outcome.csv.empty() && !write_file(flags.csv, outcome.csv)) {
    std::cerr << "qmf_cli: cannot write " << flags.csv << "\n";
    return qmf::kExitInputError;
  }
  if (!outcome.message.empty()) std::cerr << "qmf_cli: " << outcome.message << "\n";
  std::fprintf(stderr, "qmf_cli: runtime %.3f s\n", secs);
  return outcome.exit_code;
}
