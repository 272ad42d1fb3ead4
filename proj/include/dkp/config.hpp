// Copyright 2026 The dkp Authors. Apache 2.0 License.

#ifndef DKP_CONFIG_HPP_
#define DKP_CONFIG_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dkp/doped.hpp"
#include "dkp/schedules.hpp"

namespace dkp {

// Pruning window in (fractional) epochs; converted to steps at train time.
struct PruneConfig {
  double begin_epoch = 2.0;
  double end_epoch = 9.0;
  std::int64_t prune_every = 10;  // steps
  double exponent = 3.0;
  double s_initial = 0.0;
};

struct CmrConfig {
  bool enabled = true;
  CmrKind kind = CmrKind::kLinDec;
  double p0 = 0.7;
  bool share_timesteps = false;  // one mask per BPTT window instead of per step
};

struct TrainConfig {
  std::uint64_t seed = 1;
  std::size_t vocab_size = 2000;
  std::size_t embed_size = 64;
  std::size_t hidden_size = 64;
  std::size_t layers = 1;
  std::size_t bptt = 20;
  std::size_t batch_size = 20;
  std::int64_t epochs = 10;
  double lr = 0.3;
  double lr_decay = 0.96;
  std::int64_t decay_start_epoch = 4;
  double max_grad_norm = 5.0;
  double dropout = 0.1;
  double l2 = 0.0;
  double forget_bias = 1.0;
  double init_scale = 0.1;  // embedding and output projection
  PruneConfig prune;
  CmrConfig cmr;
  BcdPolicy bcd;
  PenaltyConfig penalty;
  // One entry shared by all layers, or one per layer.
  std::vector<VariantConfig> variants{VariantConfig{}};

  const VariantConfig& variant(std::size_t layer) const {
    return variants.size() == 1 ? variants[0] : variants.at(layer);
  }
  // Throws ConfigError naming the offending field.
  void validate() const;
};

// JSON round trip; unknown keys and ill-typed values raise ConfigError.
std::string to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const std::string& text);

TrainConfig preset(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace dkp

#endif  // DKP_CONFIG_HPP_
