// Copyright 2026 The dkp Authors. Apache 2.0 License.

#include "dkp/bench.hpp"

#include <json.hpp>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "dkp/csr.hpp"
#include "dkp/error.hpp"
#include "dkp/kron.hpp"

namespace dkp {

namespace {

void add_entry(MacReport& r, MacEntry e) {
  r.structured_macs += e.structured_macs;
  r.sparse_macs += e.sparse_macs;
  r.dense_macs += e.dense_macs;
  r.params += e.structured_params + e.nnz;
  r.entries.push_back(std::move(e));
}

void finish(MacReport& r) {
  const double doped = static_cast<double>(r.structured_macs + r.sparse_macs);
  r.reduction = doped == 0.0 ? std::numeric_limits<double>::infinity()
                             : static_cast<double>(r.dense_macs) / doped;
  r.compression_factor =
      r.params == 0 ? std::numeric_limits<double>::infinity()
                    : static_cast<double>(r.dense_macs) / static_cast<double>(r.params);
}

MacEntry checked_entry(const DopedWeight& w, const std::string& name) {
  MacEntry e = mac_count(w, name);
  const Vector x(w.cols(), 1.0);
  const std::size_t counted = instrumented_macs(w, x);
  if (counted != e.structured_macs + e.sparse_macs)
    throw std::logic_error("count_macs: formula " +
                           std::to_string(e.structured_macs + e.sparse_macs) +
                           " != instrumented " + std::to_string(counted) +
                           " for " + name);
  return e;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

struct Stats {
  double median = 0.0, mean = 0.0, p95 = 0.0;
};

// Times fn per call. Each sample runs enough calls to span ~20us.
Stats time_kernel(const std::function<double()>& fn, std::size_t warmup,
                  std::size_t iterations) {
  volatile double sink = 0.0;
  std::size_t reps = 1;
  for (std::size_t i = 0; i < warmup; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t r = 0; r < reps; ++r) sink = sink + fn();
    const double dt = seconds_since(t0);
    if (dt < 20e-6) reps = std::min<std::size_t>(reps * 2, 1 << 16);
  }
  std::vector<double> per_call(iterations);
  for (auto& s : per_call) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t r = 0; r < reps; ++r) sink = sink + fn();
    s = seconds_since(t0) / static_cast<double>(reps);
  }
  std::vector<double> sorted = per_call;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  Stats st;
  st.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  st.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
  st.p95 = sorted[std::min(n - 1, static_cast<std::size_t>(std::ceil(0.95 * n)) - 1)];
  return st;
}

// Uniform random mask with exactly round((1 - sparsity) * size) alive bits.
PruneMask random_mask(std::size_t rows, std::size_t cols, double sparsity,
                      Rng& rng) {
  const std::size_t size = rows * cols;
  const auto alive = static_cast<std::size_t>(
      std::llround((1.0 - sparsity) * static_cast<double>(size)));
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = size; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  PruneMask m(rows, cols, true);
  for (std::size_t i = alive; i < size; ++i) m.kill_flat(idx[i]);
  return m;
}

template <typename T>
Matrix<T> random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix<T> m(r, c);
  for (T& v : m.flat()) v = static_cast<T>(rng.uniform(-1.0, 1.0));
  return m;
}

template <typename T>
std::vector<T> random_values(std::size_t n, Rng& rng) {
  std::vector<T> v(n);
  for (T& x : v) x = static_cast<T>(rng.uniform(-1.0, 1.0));
  return v;
}

template <typename T>
Stats time_dense(const TimingSpec& s, Rng& rng) {
  const Matrix<T> a = random_matrix<T>(s.rows, s.cols, rng);
  const std::vector<T> x = random_values<T>(s.cols, rng);
  std::vector<T> y(s.rows);
  return time_kernel(
      [&] {
        matvec<T>(a, x, std::span<T>(y));
        return static_cast<double>(y[0]);
      },
      s.warmup, s.iterations);
}

template <typename T>
std::pair<Stats, std::size_t> time_kind(const TimingSpec& s, const KronShape& ks,
                                        Rng& rng) {
  const std::vector<T> x = random_values<T>(s.cols, rng);
  std::vector<T> y(s.rows);
  switch (s.kind) {
    case KernelKind::kDense:
      return {time_dense<T>(s, rng), s.rows * s.cols};
    case KernelKind::kCsr: {
      const Matrix<T> a = random_matrix<T>(s.rows, s.cols, rng);
      const CsrMatrix<T> csr =
          CsrMatrix<T>::from_masked(a, random_mask(s.rows, s.cols, s.sparsity, rng));
      const Stats st = time_kernel(
          [&] {
            matvec_csr<T>(csr, x, std::span<T>(y));
            return static_cast<double>(y[0]);
          },
          s.warmup, s.iterations);
      return {st, csr.nnz()};
    }
    case KernelKind::kKp: {
      const KroneckerFactors<T> kp{random_matrix<T>(ks.m1, ks.n1, rng),
                                   random_matrix<T>(ks.m2, ks.n2, rng)};
      std::vector<T> scratch;
      const Stats st = time_kernel(
          [&] {
            kp_matvec<T>(kp, x, std::span<T>(y), scratch);
            return static_cast<double>(y[0]);
          },
          s.warmup, s.iterations);
      return {st, kron_macs(ks, cheaper_order(ks))};
    }
    case KernelKind::kDoped:
      break;
  }
  throw ConfigError("time_matvec: unsupported kernel");
}

std::pair<Stats, std::size_t> time_doped(const TimingSpec& s, const KronShape& ks,
                                         Rng& rng) {
  KroneckerPair kp{random_matrix<double>(ks.m1, ks.n1, rng),
                   random_matrix<double>(ks.m2, ks.n2, rng)};
  DopedWeight w(std::move(kp), random_matrix<double>(s.rows, s.cols, rng),
                random_mask(s.rows, s.cols, s.sparsity, rng));
  w.freeze();
  const Vector x = random_values<double>(s.cols, rng);
  Vector y(s.rows);
  Workspace ws;
  const Stats st = time_kernel(
      [&] {
        doped_forward(w, x, y, nullptr, ws);
        return y[0];
      },
      s.warmup, s.iterations);
  const MacEntry e = mac_count(w);
  return {st, e.structured_macs + e.sparse_macs};
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

std::string MacReport::to_json() const {
  nlohmann::ordered_json j;
  j["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : entries) {
    nlohmann::ordered_json je;
    je["name"] = e.name;
    je["shape"] = {e.rows, e.cols};
    je["variant"] = dkp::to_string(e.variant);
    je["structured_params"] = e.structured_params;
    je["nnz"] = e.nnz;
    je["structured_macs"] = e.structured_macs;
    je["sparse_macs"] = e.sparse_macs;
    je["dense_macs"] = e.dense_macs;
    je["compression_factor"] = e.compression_factor;
    je["reduction"] = e.reduction;
    j["entries"].push_back(je);
  }
  nlohmann::ordered_json t;
  t["structured_macs"] = structured_macs;
  t["sparse_macs"] = sparse_macs;
  t["dense_macs"] = dense_macs;
  t["params"] = params;
  t["compression_factor"] = compression_factor;
  t["reduction"] = reduction;
  j["totals"] = t;
  return j.dump(2);
}

std::string MacReport::to_table() const {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %-11s %-8s %9s %10s %10s %10s %8s %9s\n",
                "layer", "shape", "variant", "sparsity", "struct_mac",
                "sparse_mac", "dense_mac", "cf", "reduction");
  os << line;
  for (const auto& e : entries) {
    const std::string shape = std::to_string(e.rows) + "x" + std::to_string(e.cols);
    const double sp = 1.0 - static_cast<double>(e.nnz) /
                                static_cast<double>(e.rows * e.cols);
    std::snprintf(line, sizeof line,
                  "%-10s %-11s %-8s %9.4f %10zu %10zu %10zu %8.2f %9.2f\n",
                  e.name.c_str(), shape.c_str(), dkp::to_string(e.variant).c_str(),
                  sp, e.structured_macs, e.sparse_macs, e.dense_macs,
                  e.compression_factor, e.reduction);
    os << line;
  }
  std::snprintf(line, sizeof line,
                "%-10s %-11s %-8s %9s %10zu %10zu %10zu %8.2f %9.2f\n", "total",
                "", "", "", structured_macs, sparse_macs, dense_macs,
                compression_factor, reduction);
  os << line;
  return os.str();
}

MacReport count_macs(const DopedWeight& w, const std::string& name) {
  MacReport r;
  add_entry(r, checked_entry(w, name));
  finish(r);
  return r;
}

MacReport count_macs(const LanguageModel& m) {
  MacReport r;
  for (std::size_t l = 0; l < m.layers.size(); ++l)
    add_entry(r, checked_entry(m.layers[l].w, "layer" + std::to_string(l)));
  finish(r);
  return r;
}

std::string to_string(KernelKind k) {
  switch (k) {
    case KernelKind::kDense: return "dense";
    case KernelKind::kCsr: return "csr";
    case KernelKind::kKp: return "kp";
    case KernelKind::kDoped: return "doped";
  }
  return "?";
}

KernelKind kernel_from_string(const std::string& s) {
  if (s == "dense") return KernelKind::kDense;
  if (s == "csr") return KernelKind::kCsr;
  if (s == "kp") return KernelKind::kKp;
  if (s == "doped") return KernelKind::kDoped;
  throw ConfigError("unknown kernel kind '" + s + "' (dense, csr, kp, doped)");
}

TimingResult time_matvec(const TimingSpec& s) {
  if (s.rows == 0 || s.cols == 0) throw ConfigError("bench: empty shape");
  if (!(s.sparsity >= 0.0 && s.sparsity < 1.0))
    throw ConfigError("bench: sparsity must be in [0, 1)");
  if (s.iterations < 30 || s.warmup < 10)
    throw ConfigError("bench: need at least 30 iterations and 10 warmups");
  const bool structured = s.kind == KernelKind::kKp || s.kind == KernelKind::kDoped;
  if (!structured && s.kp) throw ConfigError("bench: kp factors given for " + to_string(s.kind));
  if (s.kind == KernelKind::kDense && s.sparsity != 0.0)
    throw ConfigError("bench: dense kernel takes no sparsity");
  if (s.kind == KernelKind::kKp && s.sparsity != 0.0)
    throw ConfigError("bench: kp kernel takes no sparsity");
  if (s.kind == KernelKind::kDoped && s.single_precision)
    throw ConfigError("bench: doped kernel is 64-bit only");
  KronShape ks{};
  if (structured) {
    ks = s.kp ? *s.kp : size_kp_factors(s.rows, s.cols).shape;
    if (ks.m1 * ks.m2 != s.rows || ks.n1 * ks.n2 != s.cols || ks.m1 == 0 || ks.n1 == 0)
      throw ConfigError("bench: KP factors do not tile " + std::to_string(s.rows) +
                        "x" + std::to_string(s.cols));
  }

  Rng rng(s.seed);
  TimingResult r;
  r.kind = s.kind;
  r.rows = s.rows;
  r.cols = s.cols;
  r.sparsity = s.sparsity;
  r.iterations = s.iterations;
  r.warmup = s.warmup;
  std::pair<Stats, std::size_t> got;
  if (s.kind == KernelKind::kDoped)
    got = time_doped(s, ks, rng);
  else if (s.single_precision)
    got = time_kind<float>(s, ks, rng);
  else
    got = time_kind<double>(s, ks, rng);
  r.median_s = got.first.median;
  r.mean_s = got.first.mean;
  r.p95_s = got.first.p95;
  r.macs = got.second;
  const Stats dense = s.single_precision ? time_dense<float>(s, rng)
                                         : time_dense<double>(s, rng);
  r.dense_median_s = dense.median;
  r.speedup = dense.median / r.median_s;
  return r;
}

std::string results_csv(const std::vector<TimingResult>& results) {
  std::ostringstream os;
  os << "kind,rows,cols,sparsity,macs,median_s,speedup\n";
  for (const auto& r : results)
    os << to_string(r.kind) << ',' << r.rows << ',' << r.cols << ','
       << fmt(r.sparsity) << ',' << r.macs << ',' << fmt(r.median_s) << ','
       << fmt(r.speedup) << '\n';
  return os.str();
}

std::string results_json(const std::vector<TimingResult>& results) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : results) {
    nlohmann::ordered_json o;
    o["kind"] = to_string(r.kind);
    o["rows"] = r.rows;
    o["cols"] = r.cols;
    o["sparsity"] = r.sparsity;
    o["macs"] = r.macs;
    o["median_s"] = r.median_s;
    o["speedup"] = r.speedup;
    o["mean_s"] = r.mean_s;
    o["p95_s"] = r.p95_s;
    o["dense_median_s"] = r.dense_median_s;
    o["iterations"] = r.iterations;
    o["warmup"] = r.warmup;
    j.push_back(o);
  }
  return j.dump(2) + "\n";
}

std::vector<TimingResult> parse_results_csv(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line) || line != "kind,rows,cols,sparsity,macs,median_s,speedup")
    throw FormatError("bench csv: bad header");
  std::vector<TimingResult> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() != 7) throw FormatError("bench csv: expected 7 columns: " + line);
    TimingResult r;
    try {
      r.kind = kernel_from_string(f[0]);
      r.rows = std::stoull(f[1]);
      r.cols = std::stoull(f[2]);
      r.sparsity = std::stod(f[3]);
      r.macs = std::stoull(f[4]);
      r.median_s = std::stod(f[5]);
      r.speedup = std::stod(f[6]);
    } catch (const std::exception& e) {
      throw FormatError("bench csv: " + std::string(e.what()) + ": " + line);
    }
    out.push_back(r);
  }
  return out;
}

void emit_report(const std::vector<TimingResult>& results,
                 const std::string& csv_path, const std::string& json_path) {
  if (results.empty()) throw ConfigError("emit_report: no results");
  auto write = [](const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << text;
    if (!f) throw FormatError("cannot write " + path);
  };
  write(csv_path, results_csv(results));
  write(json_path, results_json(results));
}

}  // namespace dkp
