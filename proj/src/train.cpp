// Copyright 2026 The dkp Authors. Apache 2.0 License.

#include "dkp/train.hpp"

#include <json.hpp>
#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dkp/error.hpp"

namespace dkp {

std::string EpochLog::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["train_ppl"] = train_ppl;
  j["valid_ppl"] = valid_ppl;
  j["sparsity"] = sparsity;
  j["cmr_p"] = cmr_p;
  j["lr"] = lr;
  j["wall_secs"] = wall_secs;
  return j.dump();
}

bool EpochLog::same_result(const EpochLog& o) const {
  return epoch == o.epoch && train_ppl == o.train_ppl &&
         valid_ppl == o.valid_ppl && sparsity == o.sparsity &&
         cmr_p == o.cmr_p && lr == o.lr;
}

bool TrainState::operator==(const TrainState& o) const {
  if (log.size() != o.log.size()) return false;
  for (std::size_t i = 0; i < log.size(); ++i)
    if (!log[i].same_result(o.log[i]) || log[i].wall_secs != o.log[i].wall_secs)
      return false;
  return to_json(config) == to_json(o.config) && vocab == o.vocab &&
         model == o.model && rng.state() == o.rng.state() && step == o.step &&
         epoch == o.epoch;
}

TrainState init_training(const TrainConfig& cfg, const Vocab& vocab) {
  cfg.validate();
  TrainState st{cfg, vocab, {}, Rng(cfg.seed), 0, 0, {}};
  st.model = make_model(cfg, vocab.size(), st.rng);
  return st;
}

double lr_at(const TrainConfig& cfg, std::int64_t epoch) {
  const std::int64_t k = std::max<std::int64_t>(0, epoch - cfg.decay_start_epoch);
  return cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(k));
}

Timeline make_timeline(const TrainState& st, std::size_t train_tokens) {
  const TrainConfig& cfg = st.config;
  const std::size_t nb = train_tokens / cfg.batch_size;
  if (nb < 2)
    throw ConfigError("training split too small for batch_size " +
                      std::to_string(cfg.batch_size));
  Timeline tl;
  tl.steps_per_epoch = static_cast<std::int64_t>((nb - 1 + cfg.bptt - 1) / cfg.bptt);
  const auto spe = static_cast<double>(tl.steps_per_epoch);
  const auto begin = static_cast<std::int64_t>(std::llround(cfg.prune.begin_epoch * spe));
  const auto end = std::max<std::int64_t>(
      begin + 1, std::llround(cfg.prune.end_epoch * spe));
  for (const auto& layer : st.model.layers) {
    PruneSchedule ps;
    ps.s_final = layer.w.final_sparsity();
    ps.s_initial = std::min(cfg.prune.s_initial, ps.s_final);
    ps.begin_step = begin;
    ps.end_step = end;
    ps.prune_every = cfg.prune.prune_every;
    ps.exponent = cfg.prune.exponent;
    ps.validate();
    tl.prune.push_back(ps);
    tl.cmr.push_back({cfg.cmr.kind, cfg.cmr.p0, ps});
    tl.doped.push_back(layer.w.nnz_target > 0);
  }
  return tl;
}

namespace {

double doping_sparsity(const LanguageModel& m) {
  std::size_t alive = 0, total = 0;
  for (const auto& l : m.layers) {
    alive += l.w.nnz();
    total += l.w.mask().size();
  }
  return total ? 1.0 - static_cast<double>(alive) / static_cast<double>(total)
               : 0.0;
}

double density(const DopedWeight& w) {
  return static_cast<double>(w.nnz()) / static_cast<double>(w.mask().size());
}

void gate_gradients(ModelGrads& g, std::span<const GradientFlow> flows) {
  for (std::size_t l = 0; l < g.layers.size(); ++l) {
    DopedGradients& d = g.layers[l].w;
    if (!flows[l].structured)
      for_each_factor(d.structured, [](DenseMatrix& f) { f.fill(0.0); });
    if (!flows[l].sparse) d.ws.fill(0.0);
    if (!flows[l].alpha) d.alpha = 0.0;
    if (!flows[l].beta) d.beta = 0.0;
  }
}

[[noreturn]] void abort_non_finite(std::int64_t step, double loss,
                                   std::span<const GradBlock> blocks) {
  double worst = 0.0;
  std::string where = "none";
  for (const auto& b : blocks)
    for (double v : b.values)
      if (!std::isfinite(v) || std::abs(v) > worst) {
        worst = std::isfinite(v) ? std::abs(v) : INFINITY;
        where = b.name;
        if (!std::isfinite(v)) break;
      }
  std::ostringstream os;
  os << "non-finite training state at step " << step << ": loss=" << loss
     << ", max |grad| = " << worst << " in " << where;
  throw NumericalAbort(os.str());
}

void check_masked_zero(const LanguageModel& m, std::int64_t step) {
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const DopedWeight& w = m.layers[l].w;
    const double* v = w.ws.data();
    for (std::size_t i = 0; i < w.ws.size(); ++i)
      if (!w.mask().alive_flat(i) && v[i] != 0.0)
        throw std::logic_error("masked weight became nonzero in layer " +
                               std::to_string(l) + " at step " +
                               std::to_string(step));
  }
}

}  // namespace

void train(TrainState& st, const Corpus& corpus, const TrainHooks& hooks) {
  const TrainConfig& cfg = st.config;
  cfg.validate();
  if (corpus.vocab.size() != st.model.vocab())
    throw ConfigError("corpus vocabulary size does not match the model");
  if (corpus.valid.size() < 2) throw ConfigError("validation split is empty");
  for (auto& l : st.model.layers)
    if (l.w.frozen()) throw ConfigError("cannot train a frozen model");

  const Timeline tl = make_timeline(st, corpus.train.size());
  const std::size_t batch = cfg.batch_size, nl = st.model.layers.size();
  const std::size_t nb = corpus.train.size() / batch;
  const bool scales = cfg.penalty.mode != PenaltyMode::kNone;

  ChunkRunner runner;
  ModelGrads grads = ModelGrads::zeros_like(st.model);
  std::vector<TokenId> inputs, targets;
  std::vector<GradientFlow> flows(nl);

  while (st.epoch < cfg.epochs) {
    if (hooks.stop_after_epoch >= 0 && st.epoch >= hooks.stop_after_epoch) break;
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(cfg, st.epoch);
    const GradientTarget gate = bcd_gate(cfg.bcd, st.epoch);
    for (auto& f : flows) {
      f.structured = gate != GradientTarget::kSparse;
      f.sparse = gate != GradientTarget::kStructured;
      f.alpha = scales && f.structured;
      f.beta = scales && f.sparse;
    }

    RecurrentState state = RecurrentState::zeros(st.model, batch);
    double ce = 0.0, last_p = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i + 1 < nb; i += cfg.bptt) {
      const std::size_t len = std::min(cfg.bptt, nb - 1 - i);
      inputs.resize(len * batch);
      targets.resize(len * batch);
      for (std::size_t t = 0; t < len; ++t)
        for (std::size_t b = 0; b < batch; ++b) {
          inputs[t * batch + b] = corpus.train[b * nb + i + t];
          targets[t * batch + b] = corpus.train[b * nb + i + t + 1];
        }

      ChunkNoise noise{&st.rng, cfg.dropout, std::vector<double>(nl, 0.0),
                       cfg.cmr.share_timesteps};
      if (cfg.cmr.enabled)
        for (std::size_t l = 0; l < nl; ++l)
          if (tl.doped[l])
            noise.cmr_p[l] =
                cmr_p_at(tl.cmr[l], st.step, density(st.model.layers[l].w));
      last_p = noise.cmr_p[0];

      grads.set_zero();
      const ChunkResult r =
          runner.run(st.model, inputs, targets, batch, state, noise, &grads, flows);
      const double loss = r.ce_sum / static_cast<double>(batch) +
                          regularization(st.model, cfg, &grads, scales);
      gate_gradients(grads, flows);
      const std::vector<GradBlock> blocks = grad_blocks(grads);
      bool finite = std::isfinite(loss);
      for (const auto& b : blocks) finite = finite && all_finite(b.values);
      if (!finite) abort_non_finite(st.step, loss, blocks);
      clip_global_norm(blocks, cfg.max_grad_norm);

      const auto params = param_blocks(st.model);
      for (std::size_t k = 0; k < params.size(); ++k) {
        const auto g = blocks[k].values;
        for (std::size_t j = 0; j < g.size(); ++j) params[k][j] -= lr * g[j];
      }
      ++st.step;

      for (std::size_t l = 0; l < nl; ++l) {
        if (!tl.doped[l] || !tl.prune[l].is_prune_step(st.step)) continue;
        const double s = sparsity_at(tl.prune[l], st.step);
        st.model.layers[l].w.prune_to(s);
        if (hooks.prune_events)
          hooks.prune_events->push_back(
              {st.step, l, s, st.model.layers[l].w.mask().sparsity()});
      }
      check_masked_zero(st.model, st.step);

      ce += r.ce_sum;
      count += r.tokens;
      if (hooks.step_ce)
        hooks.step_ce->push_back(r.ce_sum / static_cast<double>(r.tokens));
    }

    ++st.epoch;
    EpochLog e;
    e.epoch = st.epoch;
    e.train_ppl = std::exp(ce / static_cast<double>(count));
    e.valid_ppl = evaluate_perplexity(st.model, corpus.valid, cfg.bptt);
    e.sparsity = doping_sparsity(st.model);
    e.cmr_p = last_p;
    e.lr = lr;
    e.wall_secs = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0).count();
    st.log.push_back(e);
    if (hooks.on_epoch) hooks.on_epoch(e);
    if (hooks.on_epoch_end) hooks.on_epoch_end(st);
  }
}

}  // namespace dkp
