// Copyright 2026 The dkp Authors. Apache 2.0 License.
//
// Doped structured weights: W = alpha * S + beta * (mask o Ws), where S is a
// Kronecker, low-rank or hybrid structured term and Ws an unconstrained term
// that is pruned towards extreme sparsity during training.
//
// Co-matrix regularization drops the two contributions independently per
// output row: y[j] = b1[j] * alpha * (S x)[j] + b2[j] * beta * (Ws x)[j].

#ifndef DKP_DOPED_HPP_
#define DKP_DOPED_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "dkp/csr.hpp"
#include "dkp/kron.hpp"
#include "dkp/matrix.hpp"
#include "dkp/prune.hpp"
#include "dkp/rng.hpp"

namespace dkp {

// W = B C with B: M x d, C: d x N.
struct LowRankPair {
  DenseMatrix b;
  DenseMatrix c;

  std::size_t rows() const { return b.rows(); }
  std::size_t cols() const { return c.cols(); }
  std::size_t rank() const { return b.cols(); }
  std::size_t param_count() const { return b.size() + c.size(); }
  bool operator==(const LowRankPair&) const = default;
};

// W = [D; U V] with D: m1 x N, U: (M - m1) x r, V: r x N.
struct HybridParts {
  DenseMatrix d;
  DenseMatrix u;
  DenseMatrix v;

  std::size_t rows() const { return d.rows() + u.rows(); }
  std::size_t cols() const { return d.cols(); }
  std::size_t dense_rows() const { return d.rows(); }
  std::size_t rank() const { return u.cols(); }
  std::size_t param_count() const { return d.size() + u.size() + v.size(); }
  bool operator==(const HybridParts&) const = default;
};

// Zero structured term: the layer is just its doping matrix. Used for dense
// and prune-only baselines.
struct NoStructure {
  std::size_t m = 0;
  std::size_t n = 0;

  std::size_t rows() const { return m; }
  std::size_t cols() const { return n; }
  std::size_t param_count() const { return 0; }
  bool operator==(const NoStructure&) const = default;
};

using StructuredTerm =
    std::variant<NoStructure, KroneckerPair, LowRankPair, HybridParts>;

enum class VariantKind : std::uint8_t { kNone = 0, kKp = 1, kLmf = 2, kHmd = 3 };

VariantKind kind_of(const StructuredTerm& st);
std::string to_string(VariantKind k);
VariantKind variant_from_string(const std::string& s);

std::size_t rows_of(const StructuredTerm& st);
std::size_t cols_of(const StructuredTerm& st);
std::size_t param_count(const StructuredTerm& st);
std::size_t structured_macs(const StructuredTerm& st);

// Same variant and shapes, all entries zero (gradient accumulators).
StructuredTerm zeros_like(const StructuredTerm& st);

DenseMatrix expand(const StructuredTerm& st);

// Visits every factor matrix in a fixed order (serialization, optimizer).
template <typename St, typename F>
  requires std::is_same_v<std::remove_const_t<St>, StructuredTerm>
void for_each_factor(St& st, F&& f) {
  std::visit(
      [&](auto& t) {
        using T = std::remove_cvref_t<decltype(t)>;
        if constexpr (std::is_same_v<T, KroneckerPair> ||
                      std::is_same_v<T, LowRankPair>) {
          f(t.b);
          f(t.c);
        } else if constexpr (std::is_same_v<T, HybridParts>) {
          f(t.d);
          f(t.u);
          f(t.v);
        }
      },
      st);
}

// Scratch reused by the forward/backward kernels of one thread.
struct Workspace {
  std::vector<double> a;
  std::vector<double> b;
  std::vector<double> c;
};

void structured_forward(const StructuredTerm& st, std::span<const double> x,
                        std::span<double> y, Workspace& ws);
void structured_forward(const StructuredTerm& st, std::span<const double> x,
                        std::span<double> y, Workspace& ws,
                        CountingTally& tally);

// grad += d/dS (g^T S x); gx += S^T g.
void structured_backward_add(const StructuredTerm& st,
                             std::span<const double> x,
                             std::span<const double> g, StructuredTerm& grad,
                             std::span<double> gx, Workspace& ws);

// Per-row keep flags for the structured (b1) and doping (b2) contributions.
struct CmrMasks {
  std::vector<std::uint8_t> b1;
  std::vector<std::uint8_t> b2;

  static CmrMasks all(std::size_t m, bool keep) {
    return {std::vector<std::uint8_t>(m, keep), std::vector<std::uint8_t>(m, keep)};
  }
  // Each flag kept with probability 1 - drop_p.
  static CmrMasks draw(std::size_t m, double drop_p, Rng& rng);
};

// Row-wise index of the alive doping entries, into DopedWeight::ws.
struct AlivePattern {
  std::vector<std::uint32_t> row_ptr;
  std::vector<std::uint32_t> col_idx;
};

class DopedWeight {
 public:
  DopedWeight() = default;
  DopedWeight(StructuredTerm structured, DenseMatrix ws, PruneMask mask);

  std::size_t rows() const { return ws.rows(); }
  std::size_t cols() const { return ws.cols(); }
  VariantKind kind() const { return kind_of(structured); }

  const PruneMask& mask() const { return mask_; }
  const AlivePattern& pattern() const { return pattern_; }
  std::size_t nnz() const { return mask_.alive_count(); }

  // Replaces the mask (must not revive any bit), zeroes dead entries.
  void set_mask(PruneMask mask);
  // Magnitude-prunes ws to the given sparsity.
  void prune_to(double target_sparsity);

  // Final doping budget in surviving entries, fixed at construction.
  std::size_t nnz_target = 0;
  double final_sparsity() const {
    return 1.0 - static_cast<double>(nnz_target) /
                     static_cast<double>(rows() * cols());
  }

  bool frozen() const { return frozen_csr_.has_value(); }
  const std::optional<Csr>& frozen_csr() const { return frozen_csr_; }
  void freeze();

  StructuredTerm structured;
  DenseMatrix ws;  // dead entries are exactly zero
  double alpha = 1.0;
  double beta = 1.0;

  bool operator==(const DopedWeight& o) const;

 private:
  void refresh_pattern();

  PruneMask mask_;
  AlivePattern pattern_;
  std::optional<Csr> frozen_csr_;
};

struct DopedGradients {
  StructuredTerm structured;
  DenseMatrix ws;
  double alpha = 0.0;
  double beta = 0.0;

  static DopedGradients zeros_like(const DopedWeight& w);
  void set_zero();
};

// Doping-term product (Ws x)[j], over alive entries or the frozen CSR.
void sparse_forward(const DopedWeight& w, std::span<const double> x,
                    std::span<double> y);
void sparse_forward(const DopedWeight& w, std::span<const double> x,
                    std::span<double> y, CountingTally& tally);

// masks == nullptr means both terms are always present.
void doped_forward(const DopedWeight& w, std::span<const double> x,
                   std::span<double> y, const CmrMasks* masks, Workspace& ws);
Vector doped_forward(const DopedWeight& w, std::span<const double> x,
                     const CmrMasks* masks = nullptr);

// Which parameter blocks receive gradient in doped_backward_add.
struct GradientFlow {
  bool structured = true;
  bool sparse = true;
  bool alpha = true;
  bool beta = true;
};

// Accumulates parameter gradients into acc and adds the input gradient to gx.
// Blocks disabled in flow are left untouched.
void doped_backward_add(const DopedWeight& w, std::span<const double> x,
                        std::span<const double> g, const CmrMasks* masks,
                        DopedGradients& acc, std::span<double> gx,
                        Workspace& ws, GradientFlow flow = {});

struct DopedBackward {
  DopedGradients grads;
  Vector x;
};
DopedBackward doped_backward(const DopedWeight& w, std::span<const double> x,
                             std::span<const double> g,
                             const CmrMasks* masks = nullptr);

// Dense equivalent alpha * S + beta * (mask o Ws), for oracles.
DenseMatrix expand(const DopedWeight& w);

// ---- sizing -----------------------------------------------------------------

struct KpSizing {
  KronShape shape{};
  std::size_t rank_bound = 0;
  std::size_t params = 0;
  bool trivial_fallback = false;  // no split with all four dims >= 2 exists
};

// Divisor split maximizing min(M1,N1)*min(M2,N2), then minimizing
// M1*N1 + M2*N2, then lexicographic in (M1, N1, M2, N2).
KpSizing size_kp_factors(std::size_t m, std::size_t n);

// Divisor split whose structured compression M*N/params is closest to
// kp_cf (log distance); ties prefer higher rank bound, then fewer params.
KpSizing size_kp_for_cf(std::size_t m, std::size_t n, double kp_cf);

struct HmdSizing {
  std::size_t m1 = 0;
  std::size_t r = 0;
};
// r = round(P / (M + 2N)), m1 = r, both clamped to valid ranges.
HmdSizing size_hmd_for_budget(std::size_t m, std::size_t n,
                              std::size_t budget);

struct VariantConfig {
  VariantKind kind = VariantKind::kKp;
  std::optional<KronShape> kp_shape;  // explicit factor shapes
  std::size_t lmf_rank = 0;           // 0: derive
  std::size_t hmd_m1 = 0;             // 0: derive
  std::size_t hmd_rank = 0;           // 0: derive
  // Compression of the structured term alone; sizes the factors when no
  // explicit shape is given. 0: maximum compression (KP: rank-maximal split).
  double structured_cf = 0.0;
  bool doping = true;
  double target_cf = 20.0;  // overall layer compression, used when doping
};

// Builds the structured term with uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
// factors and a dense ws at half that scale, all bits alive. Without doping
// the mask starts all-dead.
DopedWeight make_doped(std::size_t m, std::size_t n, const VariantConfig& cfg,
                       Rng& rng);

// Structured term only (no random init); throws ShapeError on bad shapes.
StructuredTerm make_structured(std::size_t m, std::size_t n,
                               const VariantConfig& cfg);

// ---- accounting -------------------------------------------------------------

// M*N / (structured params + alive doping entries).
double compression_factor(const DopedWeight& w);

struct MacEntry {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  VariantKind variant = VariantKind::kNone;
  std::size_t structured_params = 0;
  std::size_t nnz = 0;
  std::size_t structured_macs = 0;
  std::size_t sparse_macs = 0;
  std::size_t dense_macs = 0;
  double compression_factor = 0.0;
  double reduction = 0.0;  // dense / (structured + sparse)
};

MacEntry mac_count(const DopedWeight& w, std::string name = {});

// Runs one unmasked forward through instrumented kernels and returns the
// number of multiply-accumulates actually executed.
std::size_t instrumented_macs(const DopedWeight& w, std::span<const double> x);

}  // namespace dkp

#endif  // DKP_DOPED_HPP_
