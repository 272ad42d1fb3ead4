// Copyright 2026 The dkp Authors. Apache 2.0 License.

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dkp/bench.hpp"
#include "dkp/error.hpp"
#include "oracles.hpp"

using namespace dkp;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

DopedWeight random_weight(Rng& rng) {
  const std::size_t m = 2 + rng.below(40), n = 2 + rng.below(40);
  VariantConfig v;
  v.kind = static_cast<VariantKind>(rng.below(4));
  v.doping = false;
  if (v.kind == VariantKind::kLmf) v.lmf_rank = 1 + rng.below(std::min(m, n) - 1);
  if (v.kind == VariantKind::kHmd) {
    v.hmd_m1 = 1 + rng.below(m - 1);
    v.hmd_rank = 1 + rng.below(std::min(m, n));
  }
  DopedWeight w = make_doped(m, n, v, rng);
  DenseMatrix ws = oracle::random_matrix(m, n, rng);
  PruneMask mask(m, n);
  const double keep = rng.uniform();
  for (std::size_t i = 0; i < m * n; ++i)
    if (rng.uniform() > keep) mask.kill_flat(i);
  w = DopedWeight(w.structured, ws, mask);
  if (rng.below(2)) w.freeze();
  return w;
}

}  // namespace

TEST_CASE("count_macs: dense and KP examples") {
  Rng rng(1);
  VariantConfig dense;
  dense.kind = VariantKind::kNone;
  dense.target_cf = 1.0;
  const MacReport d = count_macs(make_doped(256, 256, dense, rng));
  CHECK(d.dense_macs == 65536);
  CHECK(d.structured_macs + d.sparse_macs == 65536);
  CHECK(d.reduction == 1.0);

  VariantConfig kp;
  kp.kp_shape = KronShape{52, 65, 50, 20};
  kp.doping = false;
  const MacReport k = count_macs(make_doped(2600, 1300, kp, rng));
  CHECK(k.structured_macs == 119600);
  CHECK(k.sparse_macs == 0);
  CHECK(k.dense_macs == 3380000);
}

TEST_CASE("count_macs: formula equals instrumented count on 50 random configs") {
  Rng rng(7);
  for (int t = 0; t < 50; ++t) {
    const DopedWeight w = random_weight(rng);
    const MacEntry e = mac_count(w);
    const Vector x = oracle::random_vector(w.cols(), rng);
    CHECK(instrumented_macs(w, x) == e.structured_macs + e.sparse_macs);
    CHECK_NOTHROW(count_macs(w));
  }
}

TEST_CASE("count_macs: model totals are sums of entries") {
  TrainConfig cfg;
  cfg.embed_size = 16;
  cfg.hidden_size = 16;
  cfg.layers = 2;
  cfg.variants[0].target_cf = 8.0;
  Rng rng(3);
  LanguageModel m = make_model(cfg, 30, rng);
  m.layers[0].w.prune_to(0.5);
  const MacReport r = count_macs(m);
  REQUIRE(r.entries.size() == 2);
  std::size_t s = 0, p = 0, d = 0;
  for (const auto& e : r.entries) {
    s += e.structured_macs;
    p += e.sparse_macs;
    d += e.dense_macs;
    CHECK(e.reduction == doctest::Approx(double(e.dense_macs) /
                                         double(e.structured_macs + e.sparse_macs)));
  }
  CHECK(r.structured_macs == s);
  CHECK(r.sparse_macs == p);
  CHECK(r.dense_macs == d);
  CHECK(r.to_json().find("\"totals\"") != std::string::npos);
}

TEST_CASE("time_matvec: argument checks") {
  TimingSpec s;
  s.kind = KernelKind::kCsr;
  s.sparsity = 1.0;
  CHECK_THROWS_AS(time_matvec(s), ConfigError);
  s.sparsity = 0.5;
  s.iterations = 5;
  CHECK_THROWS_AS(time_matvec(s), ConfigError);
  s.iterations = 30;
  s.warmup = 2;
  CHECK_THROWS_AS(time_matvec(s), ConfigError);
  TimingSpec k;
  k.kind = KernelKind::kKp;
  k.kp = KronShape{3, 3, 3, 3};
  CHECK_THROWS_AS(time_matvec(k), ConfigError);
  CHECK_THROWS_AS(kernel_from_string("gemm"), ConfigError);
}

TEST_CASE("time_matvec: statistics and self-comparison") {
  TimingSpec s;
  s.kind = KernelKind::kDense;
  const TimingResult r = time_matvec(s);
  CHECK(r.iterations >= 30);
  CHECK(r.warmup >= 10);
  CHECK(r.macs == 65536);
  CHECK(r.median_s > 0.0);
  CHECK(r.median_s <= r.p95_s);
  // Dense against dense; retried once for scheduler noise.
  const bool ok = (r.speedup >= 0.9 && r.speedup <= 1.1) || [&] {
    const double again = time_matvec(s).speedup;
    return again >= 0.9 && again <= 1.1;
  }();
  CHECK(ok);

  TimingSpec f = s;
  f.single_precision = true;
  CHECK(time_matvec(f).median_s > 0.0);
}

TEST_CASE("time_matvec: CSR speedup rises with sparsity") {
  auto sweep = [] {
    std::vector<double> sp;
    for (double s : {0.5, 0.75, 0.875, 0.9}) {
      TimingSpec t;
      t.kind = KernelKind::kCsr;
      t.sparsity = s;
      t.iterations = 60;
      sp.push_back(time_matvec(t).speedup);
    }
    return std::is_sorted(sp.begin(), sp.end());
  };
  CHECK((sweep() || sweep()));
}

TEST_CASE("time_matvec: doped is roughly KP plus CSR") {
  auto close = [] {
    TimingSpec t;
    t.rows = 512;
    t.cols = 512;
    t.iterations = 60;
    t.kind = KernelKind::kKp;
    const double kp = time_matvec(t).median_s;
    t.kind = KernelKind::kCsr;
    t.sparsity = 0.9;
    const double csr = time_matvec(t).median_s;
    t.kind = KernelKind::kDoped;
    const double doped = time_matvec(t).median_s;
    return doped >= std::max(kp, csr) && doped <= 1.5 * (kp + csr);
  };
  CHECK((close() || close()));
}

TEST_CASE("emit_report: CSV/JSON output and round trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "dkp_bench_test";
  fs::create_directories(dir);
  TimingResult r;
  r.kind = KernelKind::kDense;
  r.rows = 256;
  r.cols = 256;
  r.macs = 65536;
  r.median_s = 1.0 / 3.0 * 1e-5;
  r.speedup = 0.987654321012345;
  emit_report({r}, (dir / "a.csv").string(), (dir / "a.json").string());
  const std::string csv = slurp(dir / "a.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
  emit_report({r}, (dir / "b.csv").string(), (dir / "b.json").string());
  CHECK(slurp(dir / "b.csv") == csv);
  CHECK(slurp(dir / "b.json") == slurp(dir / "a.json"));

  TimingResult c = r;
  c.kind = KernelKind::kCsr;
  c.sparsity = 0.875;
  const auto back = parse_results_csv(results_csv({r, c}));
  REQUIRE(back.size() == 2);
  CHECK(back[1].kind == KernelKind::kCsr);
  CHECK(back[1].sparsity == 0.875);
  CHECK(oracle::relative_error(back[0].median_s, r.median_s, 0.0) <= 1e-12);
  CHECK(oracle::relative_error(back[0].speedup, r.speedup, 0.0) <= 1e-12);
  CHECK(back[0].macs == r.macs);

  CHECK_THROWS_AS(emit_report({}, (dir / "c.csv").string(), (dir / "c.json").string()),
                  ConfigError);
  CHECK_THROWS_AS(emit_report({r}, (dir / "nope" / "x.csv").string(),
                              (dir / "x.json").string()),
                  FormatError);
  fs::remove_all(dir);
}
