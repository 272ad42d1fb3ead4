// Copyright 2026 The dkp Authors. Apache 2.0 License.
//
// Word-level LSTM language model: dense embedding, a stack of LSTM layers
// with doped gate matrices, dense softmax projection.

#ifndef DKP_LM_HPP_
#define DKP_LM_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dkp/config.hpp"
#include "dkp/corpus.hpp"
#include "dkp/lstm.hpp"

namespace dkp {

struct LanguageModel {
  DenseMatrix embedding;  // V x E
  std::vector<LstmLayer> layers;
  DenseMatrix out_w;  // V x H
  Vector out_b;       // V

  std::size_t vocab() const { return embedding.rows(); }
  std::size_t embed() const { return embedding.cols(); }
  std::size_t hidden() const { return out_w.cols(); }
  bool operator==(const LanguageModel&) const = default;
};

LanguageModel make_model(const TrainConfig& cfg, std::size_t vocab, Rng& rng);

struct ModelGrads {
  DenseMatrix embedding;
  std::vector<LstmGrads> layers;
  DenseMatrix out_w;
  Vector out_b;

  static ModelGrads zeros_like(const LanguageModel& m);
  void set_zero();
};

// Named flat views over every gradient block (including alpha/beta), in a
// fixed order.
struct GradBlock {
  std::string name;
  std::span<double> values;
};
std::vector<GradBlock> grad_blocks(ModelGrads& g);

// Parameter views in the same order as grad_blocks.
std::vector<std::span<double>> param_blocks(LanguageModel& m);

// Scales all blocks by max_norm / norm when the global L2 norm exceeds
// max_norm. Returns the pre-clip norm.
double clip_global_norm(std::span<const GradBlock> blocks, double max_norm);

// Hidden and cell state per layer, batch-major (b * H + j).
struct RecurrentState {
  std::vector<Vector> h;
  std::vector<Vector> c;

  static RecurrentState zeros(const LanguageModel& m, std::size_t batch);
};

// Stochastic regularizers for one chunk. rng == nullptr disables both.
struct ChunkNoise {
  Rng* rng = nullptr;
  double dropout = 0.0;
  std::vector<double> cmr_p;  // per layer; empty or 0 disables
  bool cmr_share_timesteps = false;
};

struct ChunkResult {
  double ce_sum = 0.0;  // summed over all predicted tokens
  std::size_t tokens = 0;
};

// Runs one truncated-BPTT window. inputs/targets are time-major
// (t * batch + b). With grads != nullptr, accumulates the gradient of
// ce_sum / batch. State is advanced to the end of the window.
class ChunkRunner {
 public:
  ChunkResult run(const LanguageModel& m, std::span<const TokenId> inputs,
                  std::span<const TokenId> targets, std::size_t batch,
                  RecurrentState& state, const ChunkNoise& noise,
                  ModelGrads* grads, std::span<const GradientFlow> flows = {});

 private:
  struct Slot {
    std::vector<LstmStepCache> cache;  // per layer
    std::vector<Vector> drop;          // per layer + 1: input masks and top
  };
  std::vector<Slot> slots_;  // t * batch + b
  Vector top_;               // (T * batch) x H
  Vector logits_;
  Workspace ws_;
};

// L2 (l2/2 * sum of squared weights, biases excluded) plus the alpha/beta
// penalty of every doped layer. Adds the gradient into grads when given.
double regularization(const LanguageModel& m, const TrainConfig& cfg,
                      ModelGrads* grads, bool scales_trainable);

// exp(mean cross-entropy) over the stream, CMR and dropout off, batch 1.
double evaluate_perplexity(const LanguageModel& m,
                           std::span<const TokenId> tokens, std::size_t bptt);

}  // namespace dkp

#endif  // DKP_LM_HPP_
