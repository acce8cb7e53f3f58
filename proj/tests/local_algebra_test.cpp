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

#include "qmf/local_algebra.hpp"

#include "gtest/gtest.h"
#include "qmf/random.hpp"

using namespace qmf;

namespace {

Matrix pauli(const char* n) { return named_operator(n, 2); }

LocalOperator random_op(Rng& rng, const Region& r, const SiteDims& dims) {
  auto ds = dims.of(r);
  std::size_t d = 1;
  for (int x : ds) d *= static_cast<std::size_t>(x);
  return {r, ds, ginibre(rng, static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d))};
}

// Oracle: element-wise embedding by explicit multi-index comparison.
Matrix embed_oracle(const LocalOperator& a, const Region& target, const SiteDims& dims) {
  auto td = dims.of(target);
  std::size_t n = 1;
  for (int x : td) n *= static_cast<std::size_t>(x);
  auto digits = [&](std::size_t k) {
    std::vector<int> dg(td.size());
    for (std::size_t i = td.size(); i-- > 0;) {
      dg[i] = static_cast<int>(k % static_cast<std::size_t>(td[i]));
      k /= static_cast<std::size_t>(td[i]);
    }
    return dg;
  };
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      auto di = digits(i), dj = digits(j);
      bool rest_equal = true;
      std::size_t ai = 0, aj = 0;
      for (std::size_t k = 0; k < target.size(); ++k) {
        if (a.support().contains(target[k])) {
          ai = ai * static_cast<std::size_t>(td[k]) + static_cast<std::size_t>(di[k]);
          aj = aj * static_cast<std::size_t>(td[k]) + static_cast<std::size_t>(dj[k]);
        } else if (di[k] != dj[k]) {
          rest_equal = false;
        }
      }
      if (rest_equal)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            a.matrix()(static_cast<Eigen::Index>(ai), static_cast<Eigen::Index>(aj));
    }
  }
  return m;
}

}  // namespace

TEST(LocalAlgebra, embed_places_legs_canonically) {
  SiteDims dims;
  LocalOperator z(Region::of_ids({1}), {2}, pauli("Z"));
  auto e = embed(z, Region::of_ids({1, 2}), dims);
  EXPECT_LT((e.matrix() - kron(pauli("Z"), Matrix::Identity(2, 2))).norm(), 1e-15);
  auto f = embed(z, Region::of_ids({0, 1}), dims);
  EXPECT_LT((f.matrix() - kron(Matrix::Identity(2, 2), pauli("Z"))).norm(), 1e-15);
}

TEST(LocalAlgebra, embed_matches_index_oracle_with_mixed_dims) {
  SiteDims dims(2, {{VertexId{3}, 3}});
  Rng rng(7);
  LocalOperator a = random_op(rng, Region::of_ids({1, 5}), dims);
  Region target = Region::of_ids({1, 2, 3, 5, 6});
  auto e = embed(a, target, dims);
  EXPECT_EQ(e.dims(), (std::vector<int>{2, 2, 3, 2, 2}));
  EXPECT_LT((e.matrix() - embed_oracle(a, target, dims)).norm(), 1e-13);
}

TEST(LocalAlgebra, embedding_is_functorial) {
  SiteDims dims(2, {{VertexId{4}, 3}});
  Rng rng(11);
  auto a = random_op(rng, Region::of_ids({2}), dims);
  Region mid = Region::of_ids({2, 4});
  Region top = Region::of_ids({1, 2, 4, 7});
  auto twice = embed(embed(a, mid, dims), top, dims);
  auto once = embed(a, top, dims);
  EXPECT_LT((twice.matrix() - once.matrix()).norm(), 1e-14);
}

TEST(LocalAlgebra, embedding_is_a_unital_star_homomorphism) {
  SiteDims dims;
  Rng rng(3);
  Region r = Region::of_ids({0, 2});
  Region t = Region::of_ids({0, 1, 2});
  auto a = random_op(rng, r, dims);
  auto b = random_op(rng, r, dims);
  auto ab = embed(a * b, t, dims);
  auto ea_eb = embed(a, t, dims) * embed(b, t, dims);
  EXPECT_LT((ab.matrix() - ea_eb.matrix()).norm(), 1e-12);
  EXPECT_LT((embed(a.adjoint(), t, dims).matrix() - embed(a, t, dims).adjoint().matrix()).norm(), 1e-14);
  EXPECT_LT((embed(LocalOperator::identity(r, dims), t, dims).matrix() - Matrix::Identity(8, 8)).norm(),
            1e-15);
  // Embedding preserves the operator norm.
  Eigen::JacobiSVD<Matrix> s1(a.matrix()), s2(embed(a, t, dims).matrix());
  EXPECT_NEAR(s1.singularValues()(0), s2.singularValues()(0), 1e-12);
}

TEST(LocalAlgebra, tensor_orders_legs_by_vertex) {
  LocalOperator x(Region::of_ids({5}), {2}, pauli("X"));
  LocalOperator z(Region::of_ids({2}), {2}, pauli("Z"));
  auto t = tensor(x, z);
  EXPECT_EQ(t.support(), Region::of_ids({2, 5}));
  EXPECT_LT((t.matrix() - kron(pauli("Z"), pauli("X"))).norm(), 1e-15);
  EXPECT_THROW(tensor(x, x), std::domain_error);
}

TEST(LocalAlgebra, tensor_trace_factorizes) {
  SiteDims dims(2, {{VertexId{9}, 3}});
  Rng rng(5);
  auto a = random_op(rng, Region::of_ids({1, 9}), dims);
  auto b = random_op(rng, Region::of_ids({4}), dims);
  auto t = tensor(a, b);
  EXPECT_LT(std::abs(t.matrix().trace() - a.matrix().trace() * b.matrix().trace()), 1e-12);
  // Partial trace over b's legs returns tr(b) a.
  auto back = partial_trace(t, b.support());
  EXPECT_LT((back.matrix() - b.matrix().trace() * a.matrix()).norm(), 1e-12);
}

TEST(LocalAlgebra, bell_state_reduces_to_maximally_mixed) {
  Vector psi = Vector::Zero(4);
  psi(0) = psi(3) = 1.0 / std::sqrt(2.0);
  LocalOperator bell(Region::of_ids({0, 1}), {2, 2}, psi * psi.adjoint());
  auto r0 = partial_trace(bell, Region::of_ids({1}));
  auto r1 = partial_trace(bell, Region::of_ids({0}));
  EXPECT_LT((r0.matrix() - Matrix::Identity(2, 2) / 2.0).norm(), 1e-15);
  EXPECT_LT((r1.matrix() - Matrix::Identity(2, 2) / 2.0).norm(), 1e-15);
  auto loc = is_localized_in(bell, Region::of_ids({0}), 1e-10);
  EXPECT_FALSE(loc.pass);
  EXPECT_GT(loc.residual, 0.5);
}

TEST(LocalAlgebra, localization_detects_product_with_identity) {
  SiteDims dims(2, {{VertexId{3}, 3}});
  Rng rng(17);
  auto a = random_op(rng, Region::of_ids({3}), dims);
  auto big = embed(a, Region::of_ids({1, 3, 8}), dims);
  auto loc = is_localized_in(big, Region::of_ids({3}), 1e-10);
  EXPECT_TRUE(loc.pass);
  EXPECT_LT(loc.residual, 1e-12);
  EXPECT_FALSE(is_localized_in(big, Region::of_ids({1}), 1e-10).pass);
}

TEST(LocalAlgebra, partial_trace_oracle) {
  SiteDims dims(2, {{VertexId{2}, 3}});
  Rng rng(23);
  auto a = random_op(rng, Region::of_ids({1, 2, 3}), dims);
  auto pt = partial_trace(a, Region::of_ids({2}));
  // Oracle: explicit sum over the middle index with strides (3*2, 2, 1).
  Matrix expect = Matrix::Zero(4, 4);
  for (int i1 = 0; i1 < 2; ++i1)
    for (int i3 = 0; i3 < 2; ++i3)
      for (int j1 = 0; j1 < 2; ++j1)
        for (int j3 = 0; j3 < 2; ++j3)
          for (int k = 0; k < 3; ++k)
            expect(i1 * 2 + i3, j1 * 2 + j3) += a.matrix()(i1 * 6 + k * 2 + i3, j1 * 6 + k * 2 + j3);
  EXPECT_LT((pt.matrix() - expect).norm(), 1e-13);
}

TEST(LocalAlgebra, product_state_values) {
  SiteDims dims;
  Matrix up = Matrix::Zero(2, 2);
  up(0, 0) = 1;
  ProductState phi(dims, up);
  LocalOperator zz(Region::of_ids({0, 1}), {2, 2}, kron(pauli("Z"), pauli("Z")));
  EXPECT_LT(std::abs(eval_state(phi, zz) - Complex(1.0)), 1e-15);
  LocalOperator xi(Region::of_ids({0, 1}), {2, 2}, kron(pauli("X"), Matrix::Identity(2, 2)));
  EXPECT_LT(std::abs(eval_state(phi, xi)), 1e-15);

  auto mm = ProductState::maximally_mixed(dims);
  EXPECT_LT(std::abs(eval_state(mm, zz)), 1e-15);
  EXPECT_LT(std::abs(eval_state(mm, LocalOperator::identity(Region::of_ids({0, 4, 9}), dims)) - 1.0), 1e-15);
}

TEST(LocalAlgebra, eval_state_matches_trace_against_dense_density) {
  SiteDims dims(2, {{VertexId{2}, 3}});
  Rng rng(31);
  ProductState phi(dims, random_density(rng, 2), {{VertexId{2}, random_density(rng, 3)}});
  Region r = Region::of_ids({0, 2, 5});
  auto a = random_op(rng, r, dims);
  const Complex dense = (phi.density(r) * a.matrix()).trace();
  EXPECT_LT(std::abs(eval_state(phi, a) - dense), 1e-13);
  // A partial expectation followed by the rest gives the same number.
  auto part = partial_expectation(phi, a, Region::of_ids({2}));
  EXPECT_LT(std::abs(eval_state(phi, part) - dense), 1e-13);
}

TEST(LocalAlgebra, states_are_positive_on_positive_operators) {
  SiteDims dims;
  Rng rng(41);
  ProductState phi(dims, random_density(rng, 2));
  for (int trial = 0; trial < 20; ++trial) {
    auto b = random_op(rng, Region::of_ids({1, 2, 3}), dims);
    LocalOperator pos = b.adjoint() * b;
    const Complex v = eval_state(phi, pos);
    EXPECT_GE(v.real(), -1e-14);
    EXPECT_LT(std::abs(v.imag()), 1e-12);
  }
}

TEST(LocalAlgebra, density_validation) {
  SiteDims dims;
  Matrix bad = Matrix::Identity(2, 2);
  EXPECT_THROW(ProductState(dims, bad), ValidationError);
  Matrix neg(2, 2);
  neg << 1.5, 0, 0, -0.5;
  EXPECT_THROW(ProductState(dims, neg), ValidationError);
  Matrix nonherm(2, 2);
  nonherm << 0.5, 0.1, 0, 0.5;
  EXPECT_THROW(ProductState(dims, nonherm), ValidationError);
  EXPECT_THROW(ProductState(dims, Matrix(Matrix::Identity(3, 3) / 3.0)), ValidationError);
  EXPECT_THROW(SiteDims(1), ValidationError);
}

TEST(LocalAlgebra, resource_cap) {
  SiteDims dims;
  std::vector<VertexId> many;
  for (int i = 0; i < 13; ++i) many.push_back({i});
  EXPECT_THROW(LocalOperator::identity(Region(many), dims), ResourceError);
  EXPECT_NO_THROW(LocalOperator::identity(Region(many), dims, 1u << 13));
}
