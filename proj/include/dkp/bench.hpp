// Copyright 2026 The dkp Authors. Apache 2.0 License.
//
// MAC accounting and single-thread matvec timing for the dense, CSR, KP and
// doped kernels.

#ifndef DKP_BENCH_HPP_
#define DKP_BENCH_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dkp/doped.hpp"
#include "dkp/lm.hpp"

namespace dkp {

struct MacReport {
  std::vector<MacEntry> entries;
  std::size_t structured_macs = 0;
  std::size_t sparse_macs = 0;
  std::size_t dense_macs = 0;
  std::size_t params = 0;  // structured params + nnz
  double reduction = 0.0;
  double compression_factor = 0.0;

  std::string to_json() const;
  std::string to_table() const;
};

// Formula counts, each cross-checked against one instrumented forward.
// Throws std::logic_error if they ever disagree.
MacReport count_macs(const DopedWeight& w, const std::string& name = "w");
MacReport count_macs(const LanguageModel& m);

enum class KernelKind { kDense, kCsr, kKp, kDoped };
std::string to_string(KernelKind k);
KernelKind kernel_from_string(const std::string& s);

struct TimingSpec {
  KernelKind kind = KernelKind::kDense;
  std::size_t rows = 256;
  std::size_t cols = 256;
  double sparsity = 0.0;            // csr: matrix; doped: doping term
  std::optional<KronShape> kp;      // kp/doped; default rank-maximal split
  std::size_t iterations = 30;
  std::size_t warmup = 10;
  bool single_precision = false;    // dense, csr and kp only
  std::uint64_t seed = 1;
};

struct TimingResult {
  KernelKind kind = KernelKind::kDense;
  std::size_t rows = 0;
  std::size_t cols = 0;
  double sparsity = 0.0;
  std::size_t macs = 0;
  std::size_t iterations = 0;
  std::size_t warmup = 0;
  double median_s = 0.0;  // per call
  double mean_s = 0.0;
  double p95_s = 0.0;
  double dense_median_s = 0.0;
  double speedup = 0.0;  // dense median / median
};

// Throws ConfigError on inconsistent shapes, sparsity outside [0, 1) or
// fewer than 30 iterations / 10 warmups.
TimingResult time_matvec(const TimingSpec& spec);

std::string results_csv(const std::vector<TimingResult>& results);
std::string results_json(const std::vector<TimingResult>& results);
std::vector<TimingResult> parse_results_csv(const std::string& csv);

// Writes both files; throws ConfigError on empty results, FormatError when a
// path cannot be written.
void emit_report(const std::vector<TimingResult>& results,
                 const std::string& csv_path, const std::string& json_path);

}  // namespace dkp

#endif  // DKP_BENCH_HPP_
