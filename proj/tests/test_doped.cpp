// Copyright 2026 The dkp Authors. Apache 2.0 License.

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <tuple>

#include "dkp/doped.hpp"
#include "dkp/rank.hpp"
#include "oracles.hpp"

using namespace dkp;

namespace {

// Exhaustive search over (M1, N1) written independently of the library.
KronShape brute_force_kp_sizing(std::size_t m, std::size_t n) {
  KronShape best{};
  long best_rank = -1, best_params = 0;
  for (std::size_t m1 = 2; m1 <= m / 2; ++m1) {
    if (m % m1) continue;
    for (std::size_t n1 = 2; n1 <= n / 2; ++n1) {
      if (n % n1) continue;
      const std::size_t m2 = m / m1, n2 = n / n1;
      const long rank = long(std::min(m1, n1) * std::min(m2, n2));
      const long params = long(m1 * n1 + m2 * n2);
      const bool better =
          rank > best_rank || (rank == best_rank && params < best_params) ||
          (rank == best_rank && params == best_params &&
           std::tie(m1, n1, m2, n2) <
               std::tie(best.m1, best.n1, best.m2, best.n2));
      if (better) {
        best = {m1, n1, m2, n2};
        best_rank = rank;
        best_params = params;
      }
    }
  }
  return best;
}

DopedWeight random_doped(VariantKind kind, std::size_t m, std::size_t n,
                         Rng& rng, double sparsity) {
  VariantConfig cfg;
  cfg.kind = kind;
  cfg.doping = false;
  if (kind == VariantKind::kLmf) cfg.lmf_rank = 1 + rng.below(std::min(m, n) - 1);
  if (kind == VariantKind::kHmd) {
    cfg.hmd_m1 = 1 + rng.below(m - 1);
    cfg.hmd_rank = 1 + rng.below(std::min(m, n));
  }
  if (kind == VariantKind::kKp) {
    const KpSizing s = size_kp_factors(m, n);
    cfg.kp_shape = s.shape;
  }
  DopedWeight w = make_doped(m, n, cfg, rng);
  // Fresh dense doping term with a random mask at the requested sparsity.
  DenseMatrix ws = oracle::random_matrix(m, n, rng, 0.5);
  PruneMask mask(m, n);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (rng.uniform() < sparsity) mask.kill_flat(i);
  DopedWeight out(w.structured, ws, mask);
  out.alpha = rng.uniform(0.5, 1.5);
  out.beta = rng.uniform(0.5, 1.5);
  return out;
}

std::size_t even(std::size_t v) { return v + (v % 2); }

}  // namespace

TEST_CASE("size_kp_factors: worked examples") {
  const KpSizing s100 = size_kp_factors(100, 100);
  CHECK(s100.shape.m1 == 10);
  CHECK(s100.shape.n1 == 10);
  CHECK(s100.shape.m2 == 10);
  CHECK(s100.shape.n2 == 10);
  CHECK(s100.rank_bound == 100);
  CHECK(s100.params == 200);

  const KpSizing s4 = size_kp_factors(4, 4);
  CHECK(s4.shape.m1 == 2);
  CHECK(s4.shape.n1 == 2);
  CHECK(s4.shape.m2 == 2);
  CHECK(s4.shape.n2 == 2);

  const KpSizing big = size_kp_factors(2600, 1300);
  CHECK_FALSE((big.shape.m1 == 52 && big.shape.n1 == 65 &&
               big.shape.m2 == 50 && big.shape.n2 == 20));
  CHECK(big.rank_bound > 52u * 20u);

  const KpSizing prime = size_kp_factors(3, 3);
  CHECK(prime.trivial_fallback);
}

TEST_CASE("size_kp_factors: agrees with exhaustive enumeration") {
  for (std::size_t m = 4; m <= 60; m += 4)
    for (std::size_t n = 4; n <= 60; n += 6) {
      const KronShape want = brute_force_kp_sizing(m, n);
      const KronShape got = size_kp_factors(m, n).shape;
      REQUIRE(std::tie(got.m1, got.n1, got.m2, got.n2) ==
              std::tie(want.m1, want.n1, want.m2, want.n2));
    }
}

TEST_CASE("make_doped: explicit medium-LM shapes are accepted") {
  Rng rng(1);
  VariantConfig cfg;
  cfg.kp_shape = KronShape{52, 65, 50, 20};
  cfg.doping = false;
  const StructuredTerm st = make_structured(2600, 1300, cfg);
  const auto& kp = std::get<KroneckerPair>(st);
  CHECK(kp.b.rows() == 52);
  CHECK(kp.c.cols() == 20);

  cfg.kp_shape = KronShape{52, 65, 50, 21};
  CHECK_THROWS_AS(make_structured(2600, 1300, cfg), ShapeError);
}

TEST_CASE("make_doped: doping budget from target CF") {
  Rng rng(2);
  VariantConfig cfg;
  cfg.kp_shape = KronShape{10, 10, 10, 10};
  cfg.target_cf = 14.0;
  DopedWeight w14 = make_doped(100, 100, cfg, rng);
  CHECK(w14.nnz_target == 514);
  CHECK(w14.final_sparsity() == doctest::Approx(0.9486));
  CHECK(w14.nnz() == 10000);

  cfg.target_cf = 8.4;
  DopedWeight w84 = make_doped(100, 100, cfg, rng);
  CHECK(w84.nnz_target == 990);
  CHECK(w84.final_sparsity() == doctest::Approx(0.90).epsilon(0.002));

  cfg.target_cf = 50.0;  // budget equals the structured parameter count
  DopedWeight pure = make_doped(100, 100, cfg, rng);
  CHECK(pure.nnz_target == 0);
  CHECK(pure.nnz() == 0);

  cfg.target_cf = 60.0;
  try {
    make_doped(100, 100, cfg, rng);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("200") != std::string::npos);
    CHECK(msg.find("166.6") != std::string::npos);
  }
}

TEST_CASE("make_doped: initialization ranges") {
  Rng rng(4);
  VariantConfig cfg;
  cfg.kp_shape = KronShape{4, 8, 4, 4};
  cfg.target_cf = 2.0;
  const DopedWeight w = make_doped(16, 32, cfg, rng);
  const auto& kp = std::get<KroneckerPair>(w.structured);
  for (double v : kp.b.flat()) CHECK(std::abs(v) <= 1.0 / std::sqrt(8.0));
  for (double v : kp.c.flat()) CHECK(std::abs(v) <= 1.0 / std::sqrt(4.0));
  for (double v : w.ws.flat()) CHECK(std::abs(v) <= 0.5 / std::sqrt(32.0));
}

TEST_CASE("compression_factor: worked examples") {
  Rng rng(5);
  VariantConfig cfg;
  cfg.kp_shape = KronShape{10, 10, 10, 10};
  cfg.target_cf = 1.0;
  DopedWeight w = make_doped(100, 100, cfg, rng);
  CHECK(compression_factor(w) == doctest::Approx(10000.0 / 10200.0));
  CHECK(compression_factor(w) < 1.0);

  w.prune_to(0.90);
  CHECK(compression_factor(w) == doctest::Approx(10000.0 / 1200.0));
  CHECK(compression_factor(w) >= 8.3);
  CHECK(compression_factor(w) <= 8.4);
  w.prune_to(0.95);
  CHECK(compression_factor(w) == doctest::Approx(10000.0 / 700.0));
  CHECK(compression_factor(w) >= 14.2);
  CHECK(compression_factor(w) <= 14.4);
}

TEST_CASE("doped_forward: dense oracle across variants") {
  Rng rng(6);
  for (VariantKind kind : {VariantKind::kNone, VariantKind::kKp,
                           VariantKind::kLmf, VariantKind::kHmd}) {
    for (int trial = 0; trial < 25; ++trial) {
      const std::size_t m = even(2 + rng.below(63)), n = even(2 + rng.below(63));
      DopedWeight w = random_doped(kind, m, n, rng, rng.uniform());
      const Vector x = oracle::random_vector(n, rng);
      const Vector want = oracle::dense_matvec(expand(w), x);
      REQUIRE(oracle::inf_norm_diff(doped_forward(w, x), want) <= 1e-10);

      CmrMasks all = CmrMasks::all(m, true);
      REQUIRE(oracle::inf_norm_diff(doped_forward(w, x, &all), want) <= 1e-10);
    }
  }
}

TEST_CASE("doped_forward: CMR scenarios") {
  Rng rng(8);
  DopedWeight w = random_doped(VariantKind::kKp, 12, 8, rng, 0.5);
  w.alpha = w.beta = 1.0;
  const Vector x = oracle::random_vector(8, rng);

  CmrMasks structured_only = CmrMasks::all(12, true);
  std::fill(structured_only.b2.begin(), structured_only.b2.end(), 0);
  const Vector s = oracle::dense_matvec(expand(w.structured), x);
  CHECK(oracle::inf_norm_diff(doped_forward(w, x, &structured_only), s) <= 1e-12);

  CmrMasks none = CmrMasks::all(12, false);
  CHECK(doped_forward(w, x, &none) == Vector(12, 0.0));

  CmrMasks bad = CmrMasks::all(11, true);
  CHECK_THROWS_AS(doped_forward(w, x, &bad), ShapeError);
  CHECK_THROWS_AS(doped_forward(w, Vector(7, 0.0)), ShapeError);
}

TEST_CASE("doped_backward: zero upstream and dead bits") {
  Rng rng(9);
  DopedWeight w = random_doped(VariantKind::kLmf, 10, 6, rng, 0.6);
  const Vector x = oracle::random_vector(6, rng);
  const auto z = doped_backward(w, x, Vector(10, 0.0));
  CHECK(z.grads.alpha == 0.0);
  CHECK(z.grads.beta == 0.0);
  CHECK(z.x == Vector(6, 0.0));
  for (double v : z.grads.ws.flat()) CHECK(v == 0.0);

  const Vector g = oracle::random_vector(10, rng);
  const auto b = doped_backward(w, x, g);
  for (std::size_t i = 0; i < w.ws.size(); ++i)
    if (!w.mask().alive_flat(i)) REQUIRE(b.grads.ws.flat()[i] == 0.0);

  // Rows whose doping contribution is dropped get no doping gradient.
  CmrMasks masks = CmrMasks::all(10, true);
  masks.b2[3] = 0;
  const auto bm = doped_backward(w, x, g, &masks);
  for (std::size_t j = 0; j < 6; ++j) CHECK(bm.grads.ws(3, j) == 0.0);
}

TEST_CASE("doped_backward: finite differences across variants") {
  Rng rng(10);
  for (VariantKind kind : {VariantKind::kKp, VariantKind::kLmf,
                           VariantKind::kHmd, VariantKind::kNone}) {
    for (int trial = 0; trial < 25; ++trial) {
      const std::size_t m = even(2 + rng.below(9)), n = even(2 + rng.below(9));
      DopedWeight w = random_doped(kind, m, n, rng, 0.4);
      Vector x = oracle::random_vector(n, rng);
      const Vector g = oracle::random_vector(m, rng);
      CmrMasks masks = CmrMasks::draw(m, 0.3, rng);
      const CmrMasks* mp = trial % 2 ? &masks : nullptr;
      auto loss = [&] { return oracle::dot(g, doped_forward(w, x, mp)); };
      const auto an = doped_backward(w, x, g, mp);

      std::vector<DenseMatrix*> params;
      std::vector<const DenseMatrix*> grads;
      for_each_factor(w.structured, [&](DenseMatrix& f) { params.push_back(&f); });
      for_each_factor(an.grads.structured,
                      [&](const DenseMatrix& f) { grads.push_back(&f); });
      REQUIRE(params.size() == grads.size());
      for (std::size_t p = 0; p < params.size(); ++p)
        for (std::size_t i = 0; i < params[p]->size(); ++i)
          REQUIRE(oracle::relative_error(
                      grads[p]->flat()[i],
                      oracle::central_difference(loss, params[p]->data() + i)) <=
                  1e-5);
      for (std::size_t i = 0; i < w.ws.size(); ++i) {
        if (!w.mask().alive_flat(i)) continue;
        REQUIRE(oracle::relative_error(
                    an.grads.ws.flat()[i],
                    oracle::central_difference(loss, w.ws.data() + i)) <= 1e-5);
      }
      for (std::size_t i = 0; i < n; ++i)
        REQUIRE(oracle::relative_error(
                    an.x[i], oracle::central_difference(loss, x.data() + i)) <=
                1e-5);
      REQUIRE(oracle::relative_error(
                  an.grads.alpha, oracle::central_difference(loss, &w.alpha)) <=
              1e-5);
      REQUIRE(oracle::relative_error(
                  an.grads.beta, oracle::central_difference(loss, &w.beta)) <=
              1e-5);
    }
  }
}

TEST_CASE("doped_backward_add: gated blocks stay untouched") {
  Rng rng(12);
  DopedWeight w = random_doped(VariantKind::kKp, 8, 8, rng, 0.3);
  const Vector x = oracle::random_vector(8, rng), g = oracle::random_vector(8, rng);
  DopedGradients acc = DopedGradients::zeros_like(w);
  Vector gx(8, 0.0);
  Workspace ws;
  doped_backward_add(w, x, g, nullptr, acc, gx, ws,
                     {.structured = false, .sparse = true, .alpha = false, .beta = false});
  for_each_factor(acc.structured, [](const DenseMatrix& f) {
    for (double v : f.flat()) CHECK(v == 0.0);
  });
  CHECK(acc.alpha == 0.0);
  // Input gradient still flows through both terms.
  const auto full = doped_backward(w, x, g);
  CHECK(oracle::inf_norm_diff(gx, full.x) <= 1e-12);
}

TEST_CASE("CMR expectation: Monte-Carlo mean equals (1-p) times full output") {
  Rng rng(13);
  DopedWeight w = random_doped(VariantKind::kKp, 16, 16, rng, 0.5);
  const Vector x = oracle::random_vector(16, rng);
  const Vector full = doped_forward(w, x);
  for (double p : {0.3, 0.5, 0.7}) {
    const int draws = 10000;
    Vector sum(16, 0.0), sq(16, 0.0);
    for (int d = 0; d < draws; ++d) {
      CmrMasks masks = CmrMasks::draw(16, p, rng);
      const Vector y = doped_forward(w, x, &masks);
      for (std::size_t j = 0; j < 16; ++j) {
        sum[j] += y[j];
        sq[j] += y[j] * y[j];
      }
    }
    for (std::size_t j = 0; j < 16; ++j) {
      const double mean = sum[j] / draws;
      const double var = sq[j] / draws - mean * mean;
      const double se = std::sqrt(std::max(var, 0.0) / draws);
      CHECK(std::abs(mean - (1.0 - p) * full[j]) <= 4.0 * se + 1e-12);
    }
  }
}

TEST_CASE("rank ordering at matched parameter budgets on 64x64") {
  Rng rng(14);
  for (int trial = 0; trial < 5; ++trial) {
    const KpSizing kps = size_kp_factors(64, 64);
    const std::size_t budget = kps.params;  // 128
    VariantConfig kp_cfg{.kind = VariantKind::kKp, .doping = false};
    VariantConfig lmf_cfg{.kind = VariantKind::kLmf,
                          .lmf_rank = std::max<std::size_t>(1, budget / 128),
                          .doping = false};
    const HmdSizing h = size_hmd_for_budget(64, 64, budget);
    VariantConfig hmd_cfg{.kind = VariantKind::kHmd,
                          .hmd_m1 = h.m1,
                          .hmd_rank = h.r,
                          .doping = false};
    const auto kp = make_doped(64, 64, kp_cfg, rng);
    const auto lmf = make_doped(64, 64, lmf_cfg, rng);
    const auto hmd = make_doped(64, 64, hmd_cfg, rng);
    const std::size_t rk = numerical_rank(expand(kp.structured), 1e-8);
    const std::size_t rh = numerical_rank(expand(hmd.structured), 1e-8);
    const std::size_t rl = numerical_rank(expand(lmf.structured), 1e-8);
    CHECK(rk == kps.rank_bound);
    CHECK(rh == h.m1 + h.r);
    CHECK(rl == 1);
    CHECK(rk >= rh);
    CHECK(rh >= rl);
  }
}

TEST_CASE("mac_count: worked examples") {
  Rng rng(15);
  VariantConfig dense{.kind = VariantKind::kNone, .target_cf = 1.0};
  const DopedWeight d = make_doped(256, 256, dense, rng);
  const MacEntry de = mac_count(d);
  CHECK(de.dense_macs == 65536);
  CHECK(de.sparse_macs == 65536);
  CHECK(de.reduction == doctest::Approx(1.0));

  VariantConfig kp{.kind = VariantKind::kKp,
                   .kp_shape = KronShape{52, 65, 50, 20},
                   .doping = false};
  DopedWeight w = make_doped(2600, 1300, kp, rng);
  CHECK(mac_count(w).structured_macs == 119600);
  CHECK(mac_count(w).dense_macs == 3380000);
  CHECK(kron_macs({52, 65, 50, 20}, KronOrder::kLeftFirst) == 234000);

  // Dope with 158,860 surviving entries (95.3% sparsity).
  DenseMatrix ws = oracle::random_matrix(2600, 1300, rng);
  DopedWeight doped(w.structured, ws, PruneMask(2600, 1300));
  doped.prune_to(1.0 - 158860.0 / 3380000.0);
  const MacEntry e = mac_count(doped);
  CHECK(e.sparse_macs == 158860);
  CHECK(e.structured_macs + e.sparse_macs == 278460);
  CHECK(e.reduction == doctest::Approx(3380000.0 / 278460.0));
  CHECK(e.reduction == doctest::Approx(12.14).epsilon(0.001));
}

TEST_CASE("mac_count: formula equals instrumented kernels") {
  Rng rng(16);
  for (int trial = 0; trial < 50; ++trial) {
    const VariantKind kind = static_cast<VariantKind>(1 + trial % 3);
    const std::size_t m = even(2 + rng.below(40)), n = even(2 + rng.below(40));
    DopedWeight w = random_doped(kind, m, n, rng, rng.uniform());
    const Vector x = oracle::random_vector(n, rng);
    const MacEntry e = mac_count(w);
    REQUIRE(instrumented_macs(w, x) == e.structured_macs + e.sparse_macs);
  }
}

TEST_CASE("freeze_for_inference: CSR path matches masked dense path") {
  Rng rng(18);
  DopedWeight w = random_doped(VariantKind::kHmd, 20, 14, rng, 0.8);
  const Vector x = oracle::random_vector(14, rng);
  const Vector before = doped_forward(w, x);
  w.freeze();
  REQUIRE(w.frozen());
  CHECK(w.frozen_csr()->nnz() <= w.nnz());
  CHECK_NOTHROW(w.frozen_csr()->validate());
  CHECK(oracle::inf_norm_diff(doped_forward(w, x), before) <= 1e-12);

  DopedWeight twice = w;
  twice.freeze();
  CHECK(twice == w);

  DopedWeight dead = random_doped(VariantKind::kKp, 8, 8, rng, 0.0);
  dead.set_mask(PruneMask(8, 8, false));
  dead.freeze();
  CHECK(dead.frozen_csr()->nnz() == 0);
  CmrMasks structured_only = CmrMasks::all(8, true);
  std::fill(structured_only.b2.begin(), structured_only.b2.end(), 0);
  const Vector xd = oracle::random_vector(8, rng);
  CHECK(oracle::inf_norm_diff(doped_forward(dead, xd),
                              doped_forward(dead, xd, &structured_only)) == 0.0);
}

TEST_CASE("DopedWeight::set_mask refuses regrowth") {
  Rng rng(19);
  DopedWeight w = random_doped(VariantKind::kLmf, 6, 6, rng, 0.5);
  CHECK_THROWS_AS(w.set_mask(PruneMask(6, 6, true)), ConfigError);
}
