// Copyright 2026 The dkp Authors. Apache 2.0 License.

#include <doctest.h>

#include <algorithm>

#include "dkp/csr.hpp"
#include "dkp/kron.hpp"
#include "dkp/prune.hpp"
#include "dkp/rank.hpp"
#include "oracles.hpp"

using namespace dkp;

TEST_CASE("kp_expand: identity and scalar factors") {
  const KroneckerPair id{DenseMatrix::identity(2), DenseMatrix::identity(2)};
  CHECK(kp_expand(id) == DenseMatrix::identity(4));

  Rng rng(3);
  const DenseMatrix c = oracle::random_matrix(3, 4, rng);
  const KroneckerPair scalar{DenseMatrix(1, 1, {2.5}), c};
  const DenseMatrix w = kp_expand(scalar);
  for (std::size_t i = 0; i < c.size(); ++i)
    CHECK(w.flat()[i] == 2.5 * c.flat()[i]);
}

TEST_CASE("kp_expand: worked 2x2 example") {
  const KroneckerPair kp{DenseMatrix(2, 2, {1, 2, 3, 4}),
                         DenseMatrix(2, 2, {0, 1, 1, 0})};
  const DenseMatrix expected(4, 4, {0, 1, 0, 2,  //
                                    1, 0, 2, 0,  //
                                    0, 3, 0, 4,  //
                                    3, 0, 4, 0});
  CHECK(kp_expand(kp) == expected);
  CHECK(oracle::kron_by_index(kp.b, kp.c) == expected);
}

TEST_CASE("kp_expand: refuses oversized expansions") {
  const KroneckerPair kp{DenseMatrix(100, 100), DenseMatrix(100, 100)};
  CHECK_THROWS_AS(kp_expand(kp, 1000), ShapeError);
}

TEST_CASE("kp_matvec: small fixed cases") {
  const KroneckerPair id{DenseMatrix::identity(2), DenseMatrix::identity(3)};
  const Vector x{1, 2, 3, 4, 5, 6};
  CHECK(kp_matvec<double>(id, x) == x);

  const KroneckerPair scale{DenseMatrix(1, 1, {2.0}), DenseMatrix::identity(2)};
  CHECK(kp_matvec<double>(scale, Vector{1, 1}) == Vector{2, 2});

  CHECK_THROWS_AS(kp_matvec<double>(id, Vector{1, 2, 3}), ShapeError);
}

TEST_CASE("kp_matvec: both association orders match the expansion") {
  Rng rng(11);
  // 3x4 (x) 5x2 from the worked examples, plus shapes that force each order.
  const std::vector<KronShape> shapes{
      {3, 4, 5, 2}, {8, 2, 2, 8}, {2, 8, 8, 2}, {1, 7, 6, 1}, {5, 5, 5, 5}};
  for (const auto& s : shapes) {
    const KroneckerPair kp{oracle::random_matrix(s.m1, s.n1, rng),
                           oracle::random_matrix(s.m2, s.n2, rng)};
    const Vector x = oracle::random_vector(s.n1 * s.n2, rng);
    const Vector got = kp_matvec<double>(kp, x);
    const Vector want =
        oracle::dense_matvec(oracle::kron_by_index(kp.b, kp.c), x);
    CHECK(oracle::inf_norm_diff(got, want) <= 1e-10);
  }
  CHECK(cheaper_order({8, 2, 2, 8}) != cheaper_order({2, 8, 8, 2}));
}

TEST_CASE("kp_matvec: random property, dims up to 16") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const KronShape s{1 + rng.below(16), 1 + rng.below(16), 1 + rng.below(16),
                      1 + rng.below(16)};
    const KroneckerPair kp{oracle::random_matrix(s.m1, s.n1, rng),
                           oracle::random_matrix(s.m2, s.n2, rng)};
    const Vector x = oracle::random_vector(s.n1 * s.n2, rng);
    REQUIRE(oracle::inf_norm_diff(kp_matvec<double>(kp, x),
                                  oracle::dense_matvec(kp_expand(kp), x)) <=
            1e-10);
  }
}

TEST_CASE("kp_matvec_backward: zero upstream and identity factors") {
  Rng rng(5);
  const KroneckerPair kp{oracle::random_matrix(3, 2, rng),
                         oracle::random_matrix(2, 4, rng)};
  const Vector x = oracle::random_vector(8, rng);
  const auto g0 = kp_matvec_backward(kp, x, Vector(6, 0.0));
  CHECK(std::all_of(g0.b.flat().begin(), g0.b.flat().end(),
                    [](double v) { return v == 0.0; }));
  CHECK(std::all_of(g0.c.flat().begin(), g0.c.flat().end(),
                    [](double v) { return v == 0.0; }));
  CHECK(std::all_of(g0.x.begin(), g0.x.end(), [](double v) { return v == 0.0; }));

  const KroneckerPair id{DenseMatrix::identity(3), DenseMatrix::identity(2)};
  const Vector xi = oracle::random_vector(6, rng);
  const auto gi = kp_matvec_backward(id, xi, xi);
  CHECK(oracle::inf_norm_diff(gi.x, xi) <= 1e-15);
}

TEST_CASE("kp_matvec_backward: matches central finite differences") {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const KronShape s{1 + rng.below(4), 1 + rng.below(4), 1 + rng.below(4),
                      1 + rng.below(4)};
    KroneckerPair kp{oracle::random_matrix(s.m1, s.n1, rng),
                     oracle::random_matrix(s.m2, s.n2, rng)};
    Vector x = oracle::random_vector(s.n1 * s.n2, rng);
    const Vector g = oracle::random_vector(s.m1 * s.m2, rng);
    auto loss = [&] {
      return oracle::dot(g, oracle::dense_matvec(oracle::kron_by_index(kp.b, kp.c), x));
    };
    const auto an = kp_matvec_backward(kp, x, g);
    for (std::size_t i = 0; i < kp.b.size(); ++i)
      REQUIRE(oracle::relative_error(
                  an.b.flat()[i],
                  oracle::central_difference(loss, kp.b.data() + i)) <= 1e-5);
    for (std::size_t i = 0; i < kp.c.size(); ++i)
      REQUIRE(oracle::relative_error(
                  an.c.flat()[i],
                  oracle::central_difference(loss, kp.c.data() + i)) <= 1e-5);
    for (std::size_t i = 0; i < x.size(); ++i)
      REQUIRE(oracle::relative_error(
                  an.x[i], oracle::central_difference(loss, x.data() + i)) <=
              1e-5);
  }
}

TEST_CASE("matvec_csr: edge cases and dense equivalence") {
  Csr empty = Csr::from_dense(DenseMatrix(3, 4));
  CHECK(empty.nnz() == 0);
  CHECK(matvec_csr<double>(empty, Vector{1, 2, 3, 4}) == Vector{0, 0, 0});

  DenseMatrix one(3, 4);
  one(1, 2) = 1.5;
  const Csr s1 = Csr::from_dense(one);
  CHECK(matvec_csr<double>(s1, Vector{1, 2, 3, 4}) == Vector{0, 4.5, 0});
  CHECK_THROWS_AS(matvec_csr<double>(s1, Vector{1, 2}), ShapeError);

  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    DenseMatrix w = oracle::random_matrix(1 + rng.below(64), 1 + rng.below(64), rng);
    PruneMask mask(w.rows(), w.cols());
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (rng.uniform() < 0.9) mask.kill_flat(i);
    const Csr s = Csr::from_masked(w, mask);
    REQUIRE_NOTHROW(s.validate());
    apply_mask(w, mask);
    const Vector x = oracle::random_vector(w.cols(), rng);
    REQUIRE(oracle::inf_norm_diff(matvec_csr<double>(s, x),
                                  oracle::dense_matvec(w, x)) <= 1e-12);
  }
}

TEST_CASE("CsrMatrix::validate rejects broken structure") {
  Csr s = Csr::from_dense(DenseMatrix(2, 3, {1, 0, 2, 0, 3, 0}));
  CHECK_NOTHROW(s.validate());
  Csr bad = s;
  bad.col_idx[1] = 0;  // row 0 columns now {0, 0}
  CHECK_THROWS_AS(bad.validate(), FormatError);
  bad = s;
  bad.col_idx[2] = 7;
  CHECK_THROWS_AS(bad.validate(), FormatError);
  bad = s;
  bad.row_ptr.back() = 2;
  CHECK_THROWS_AS(bad.validate(), FormatError);
  CHECK(s.to_dense() == DenseMatrix(2, 3, {1, 0, 2, 0, 3, 0}));
}

TEST_CASE("prune_to_sparsity: worked example and endpoints") {
  const DenseMatrix w(1, 4, {1, -3, 2, 0.5});
  const PruneMask all(1, 4);
  const PruneMask half = prune_to_sparsity(w, all, 0.5);
  CHECK_FALSE(half.alive(0, 0));
  CHECK(half.alive(0, 1));
  CHECK(half.alive(0, 2));
  CHECK_FALSE(half.alive(0, 3));

  CHECK(prune_to_sparsity(w, half, 0.5) == half);
  CHECK(prune_to_sparsity(w, half, 1.0).alive_count() == 0);
  CHECK_THROWS_AS(prune_to_sparsity(w, half, 0.25), ConfigError);
}

TEST_CASE("prune_to_sparsity: ties broken by lowest flat index") {
  const DenseMatrix w(2, 2, {1, 1, -1, 1});
  const PruneMask m = prune_to_sparsity(w, PruneMask(2, 2), 0.5);
  CHECK_FALSE(m.alive_flat(0));
  CHECK_FALSE(m.alive_flat(1));
  CHECK(m.alive_flat(2));
  CHECK(m.alive_flat(3));
}

TEST_CASE("prune_to_sparsity: monotone, exact, smallest-magnitude property") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const DenseMatrix w =
        oracle::random_matrix(1 + rng.below(20), 1 + rng.below(20), rng);
    PruneMask mask(w.rows(), w.cols());
    double s = 0.0;
    for (int step = 0; step < 4; ++step) {
      s = std::min(1.0, s + rng.uniform(0.0, 0.4));
      const PruneMask next = prune_to_sparsity(w, mask, s);
      for (std::size_t i = 0; i < next.size(); ++i)
        if (next.alive_flat(i)) REQUIRE(mask.alive_flat(i));
      REQUIRE(std::abs(next.sparsity() - s) <= 1.0 / double(next.size()));
      // Every survivor is at least as large as every newly killed weight.
      double min_alive = 1e300, max_killed = 0.0;
      for (std::size_t i = 0; i < next.size(); ++i) {
        const double a = std::abs(w.flat()[i]);
        if (next.alive_flat(i)) min_alive = std::min(min_alive, a);
        else if (mask.alive_flat(i)) max_killed = std::max(max_killed, a);
      }
      if (next.alive_count() > 0) REQUIRE(max_killed <= min_alive);
      mask = next;
    }
  }
}

TEST_CASE("numerical_rank: identity, outer product, Gaussian") {
  CHECK(numerical_rank(DenseMatrix::identity(4), 1e-10) == 4);

  Rng rng(23);
  const Vector u = oracle::random_vector(6, rng), v = oracle::random_vector(5, rng);
  DenseMatrix outer(6, 5);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 5; ++j) outer(i, j) = u[i] * v[j];
  CHECK(numerical_rank(outer, 1e-10) == 1);

  DenseMatrix g(8, 5);
  for (double& x : g.flat()) x = rng.normal();
  CHECK(numerical_rank(g, 1e-10) == 5);
  CHECK(oracle::gaussian_rank(g, 1e-10) == 5);
  CHECK_THROWS_AS(numerical_rank(g, 0.0), ConfigError);
}

TEST_CASE("numerical_rank: Kronecker rank multiplies") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    // Low-rank factors built as products so ranks vary.
    auto low_rank = [&](std::size_t r, std::size_t c) {
      const std::size_t k = 1 + rng.below(std::min(r, c));
      return matmul(oracle::random_matrix(r, k, rng),
                    oracle::random_matrix(k, c, rng));
    };
    const DenseMatrix b = low_rank(1 + rng.below(8), 1 + rng.below(8));
    const DenseMatrix c = low_rank(1 + rng.below(8), 1 + rng.below(8));
    const std::size_t rb = numerical_rank(b, 1e-8), rc = numerical_rank(c, 1e-8);
    REQUIRE(rb == oracle::gaussian_rank(b, 1e-8));
    REQUIRE(numerical_rank(kp_expand(KroneckerPair{b, c}), 1e-8) == rb * rc);
  }
}
