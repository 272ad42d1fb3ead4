// Copyright 2026 The dkp Authors. Apache 2.0 License.

#include "dkp/schedules.hpp"

#include <algorithm>
#include <cmath>

#include "dkp/error.hpp"

namespace dkp {

void PruneSchedule::validate() const {
  if (!(0.0 <= s_initial && s_initial <= s_final && s_final <= 1.0))
    throw ConfigError("prune schedule needs 0 <= s_initial <= s_final <= 1");
  if (!(begin_step < end_step))
    throw ConfigError("prune schedule needs begin_step < end_step");
  if (begin_step < 0) throw ConfigError("prune schedule begin_step < 0");
  if (prune_every < 1) throw ConfigError("prune_every must be positive");
  if (!(exponent > 0.0)) throw ConfigError("prune exponent must be positive");
}

bool PruneSchedule::is_prune_step(std::int64_t step) const {
  if (step < begin_step || step > end_step) return false;
  return step == end_step || (step - begin_step) % prune_every == 0;
}

double sparsity_at(const PruneSchedule& ps, std::int64_t step) {
  if (step <= ps.begin_step) return ps.s_initial;
  if (step >= ps.end_step) return ps.s_final;
  const std::int64_t t =
      ps.begin_step + (step - ps.begin_step) / ps.prune_every * ps.prune_every;
  const double frac = static_cast<double>(t - ps.begin_step) /
                      static_cast<double>(ps.end_step - ps.begin_step);
  const double s = ps.s_final + (ps.s_initial - ps.s_final) *
                                    std::pow(1.0 - frac, ps.exponent);
  return std::clamp(s, ps.s_initial, ps.s_final);
}

std::string to_string(CmrKind k) {
  switch (k) {
    case CmrKind::kConstant: return "constant";
    case CmrKind::kLinDec: return "linDec";
    case CmrKind::kExpDec: return "expDec";
  }
  return "?";
}

CmrKind cmr_kind_from_string(const std::string& s) {
  if (s == "constant") return CmrKind::kConstant;
  if (s == "linDec") return CmrKind::kLinDec;
  if (s == "expDec") return CmrKind::kExpDec;
  throw ConfigError("unknown CMR schedule '" + s +
                    "' (expected constant, linDec or expDec)");
}

void CmrSchedule::validate() const {
  if (!(p0 >= 0.0 && p0 < 1.0))
    throw ConfigError("CMR p0 must lie in [0, 1)");
  timeline.validate();
}

double cmr_p_at(const CmrSchedule& cs, std::int64_t step,
                double current_density) {
  const PruneSchedule& tl = cs.timeline;
  switch (cs.kind) {
    case CmrKind::kConstant:
      return cs.p0;
    case CmrKind::kLinDec: {
      if (step <= tl.begin_step) return cs.p0;
      if (step >= tl.end_step) return 0.0;
      const double frac = static_cast<double>(step - tl.begin_step) /
                          static_cast<double>(tl.end_step - tl.begin_step);
      return cs.p0 * (1.0 - frac);
    }
    case CmrKind::kExpDec: {
      if (step < tl.begin_step) return cs.p0;
      if (step >= tl.end_step) return 0.0;
      const double d_final = 1.0 - tl.s_final;
      if (d_final >= 1.0) return cs.p0;
      const double p =
          cs.p0 * (current_density - d_final) / (1.0 - d_final);
      return std::clamp(p, 0.0, cs.p0);
    }
  }
  return 0.0;
}

GradientTarget bcd_gate(const BcdPolicy& policy, std::int64_t epoch) {
  if (!policy.enabled) return GradientTarget::kBoth;
  const std::int64_t period = std::max<std::int64_t>(1, policy.period_epochs);
  return (epoch / period) % 2 == 0 ? GradientTarget::kStructured
                                   : GradientTarget::kSparse;
}

std::string to_string(PenaltyMode m) {
  switch (m) {
    case PenaltyMode::kNone: return "none";
    case PenaltyMode::kBetaOnly: return "eq15a";
    case PenaltyMode::kAlphaBeta: return "eq15b";
  }
  return "?";
}

PenaltyMode penalty_mode_from_string(const std::string& s) {
  if (s == "none") return PenaltyMode::kNone;
  if (s == "eq15a" || s == "beta") return PenaltyMode::kBetaOnly;
  if (s == "eq15b" || s == "alpha-beta") return PenaltyMode::kAlphaBeta;
  throw ConfigError("unknown penalty mode '" + s +
                    "' (expected none, eq15a or eq15b)");
}

namespace {
constexpr double kAlphaPole = 1e-8;

double sign(double v) { return (v > 0.0) - (v < 0.0); }
}  // namespace

double penalty_loss(const PenaltyConfig& cfg, double alpha, double beta) {
  switch (cfg.mode) {
    case PenaltyMode::kNone:
      return 0.0;
    case PenaltyMode::kBetaOnly:
      return cfg.lambda * std::abs(beta);
    case PenaltyMode::kAlphaBeta:
      if (std::abs(alpha) < kAlphaPole)
        throw NumericalAbort("penalty: |alpha| below 1e-8 (1/|alpha| pole)");
      return cfg.lambda * (std::abs(beta) + 1.0 / std::abs(alpha));
  }
  return 0.0;
}

PenaltyGrad penalty_grad(const PenaltyConfig& cfg, double alpha, double beta) {
  PenaltyGrad g;
  switch (cfg.mode) {
    case PenaltyMode::kNone:
      break;
    case PenaltyMode::kBetaOnly:
      g.beta = cfg.lambda * sign(beta);
      break;
    case PenaltyMode::kAlphaBeta:
      if (std::abs(alpha) < kAlphaPole)
        throw NumericalAbort("penalty: |alpha| below 1e-8 (1/|alpha| pole)");
      g.beta = cfg.lambda * sign(beta);
      g.alpha = -cfg.lambda * sign(alpha) / (alpha * alpha);
      break;
  }
  return g;
}

}  // namespace dkp
