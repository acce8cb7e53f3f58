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

#include <optional>

#include "qmf/graph.hpp"

namespace qmf::testing {

inline Graph path(std::optional<std::int64_t> length = std::nullopt) {
  GraphSpec s;
  s.kind = GraphKind::kPath;
  s.length = length;
  return make_graph(s);
}

inline Graph tree(int k) {
  GraphSpec s;
  s.kind = GraphKind::kRegularTree;
  s.coordination = k;
  return make_graph(s);
}

inline Graph lattice2() {
  GraphSpec s;
  s.kind = GraphKind::kLattice;
  s.dim = 2;
  return make_graph(s);
}

}  // namespace qmf::testing
