// Copyright 2026 The dkp Authors. Apache 2.0 License.

#ifndef DKP_TRAIN_HPP_
#define DKP_TRAIN_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dkp/lm.hpp"

namespace dkp {

struct EpochLog {
  std::int64_t epoch = 0;  // 1-based
  double train_ppl = 0.0;
  double valid_ppl = 0.0;
  double sparsity = 0.0;  // doping-term sparsity over all layers
  double cmr_p = 0.0;     // layer 0, last step of the epoch
  double lr = 0.0;
  double wall_secs = 0.0;

  // One JSON object, keys in fixed order.
  std::string to_json() const;
  // Field-wise equality ignoring wall_secs.
  bool same_result(const EpochLog& o) const;
};

struct TrainState {
  TrainConfig config;
  Vocab vocab;
  LanguageModel model;
  Rng rng;
  std::int64_t step = 0;   // optimizer updates done
  std::int64_t epoch = 0;  // epochs completed
  std::vector<EpochLog> log;

  bool operator==(const TrainState& o) const;
};

// Validates the config and builds the model from the seed.
TrainState init_training(const TrainConfig& cfg, const Vocab& vocab);

struct PruneEvent {
  std::int64_t step = 0;
  std::size_t layer = 0;
  double scheduled = 0.0;  // sparsity_at(step)
  double achieved = 0.0;   // mask sparsity afterwards
};

struct TrainHooks {
  std::function<void(const EpochLog&)> on_epoch;
  std::function<void(const TrainState&)> on_epoch_end;
  std::int64_t stop_after_epoch = -1;  // stop early once this many are done
  std::vector<double>* step_ce = nullptr;  // mean train CE per step
  std::vector<PruneEvent>* prune_events = nullptr;
};

struct Timeline {
  std::int64_t steps_per_epoch = 0;
  std::vector<PruneSchedule> prune;  // per layer
  std::vector<CmrSchedule> cmr;      // per layer
  std::vector<bool> doped;           // layer has a live doping term
};
Timeline make_timeline(const TrainState& st, std::size_t train_tokens);

double lr_at(const TrainConfig& cfg, std::int64_t epoch);

// Continues from st.epoch up to config.epochs. Throws NumericalAbort on a
// non-finite loss or gradient.
void train(TrainState& st, const Corpus& corpus, const TrainHooks& hooks = {});

}  // namespace dkp

#endif  // DKP_TRAIN_HPP_
