// Copyright 2026 The dkp Authors. Apache 2.0 License.
//
// Step-indexed controllers that drive training: gradual sparsity annealing,
// co-matrix-regularization drop probability, block coordinate descent gating
// and the alpha/beta penalty terms.

#ifndef DKP_SCHEDULES_HPP_
#define DKP_SCHEDULES_HPP_

#include <cstdint>
#include <string>

namespace dkp {

// s_t = s_f + (s_i - s_f) * (1 - (t - t0) / (t1 - t0))^exponent, evaluated on
// multiples of prune_every past begin_step and held in between.
struct PruneSchedule {
  double s_initial = 0.0;
  double s_final = 0.0;
  std::int64_t begin_step = 0;
  std::int64_t end_step = 1;
  std::int64_t prune_every = 1;
  double exponent = 3.0;

  void validate() const;
  // True on the steps where the trainer should call prune_to_sparsity.
  bool is_prune_step(std::int64_t step) const;
};

double sparsity_at(const PruneSchedule& ps, std::int64_t step);

enum class CmrKind { kConstant, kLinDec, kExpDec };

std::string to_string(CmrKind k);
CmrKind cmr_kind_from_string(const std::string& s);

// Drop probability schedule; timeline shared with a PruneSchedule.
struct CmrSchedule {
  CmrKind kind = CmrKind::kLinDec;
  double p0 = 0.0;
  PruneSchedule timeline;

  void validate() const;
};

// current_density is the alive fraction of the doping term (expDec only).
double cmr_p_at(const CmrSchedule& cs, std::int64_t step,
                double current_density);

struct BcdPolicy {
  bool enabled = false;
  std::int64_t period_epochs = 1;
};

enum class GradientTarget { kBoth, kStructured, kSparse };

GradientTarget bcd_gate(const BcdPolicy& policy, std::int64_t epoch);

enum class PenaltyMode { kNone, kBetaOnly, kAlphaBeta };

std::string to_string(PenaltyMode m);
PenaltyMode penalty_mode_from_string(const std::string& s);

struct PenaltyConfig {
  PenaltyMode mode = PenaltyMode::kNone;
  double lambda = 1e-4;
};

// none: 0; beta-only: lambda*|beta|; alpha-beta: lambda*(|beta| + 1/|alpha|).
double penalty_loss(const PenaltyConfig& cfg, double alpha, double beta);

struct PenaltyGrad {
  double alpha = 0.0;
  double beta = 0.0;
};
// (Sub)gradient of penalty_loss; 0 at beta = 0.
PenaltyGrad penalty_grad(const PenaltyConfig& cfg, double alpha, double beta);

}  // namespace dkp

#endif  // DKP_SCHEDULES_HPP_
