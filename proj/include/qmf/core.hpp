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

#include <complex>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace qmf {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

/// Largest joint Hilbert-space dimension any dense operator may reach.
inline constexpr std::size_t kDefaultMaxDim = 4096;

/// Raised when a dense intermediate would exceed the configured dimension cap.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when user-provided data (densities, edge lists, Kraus families)
/// violates a structural contract.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Tolerances {
  double hermitian = 1e-10;
  double trace = 1e-10;
  double psd = 1e-10;
  double localization = 1e-10;
  double compatibility = 1e-12;
  double convergence = 1e-10;
};

/// Formats a double with 17 significant digits; the result round-trips exactly.
inline std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace qmf
