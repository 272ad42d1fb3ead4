// Copyright 2026 The dkp Authors. Apache 2.0 License.

#include "dkp/lm.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "dkp/error.hpp"

namespace dkp {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

ConstMapMat view(const DenseMatrix& m) {
  return {m.data(), static_cast<Eigen::Index>(m.rows()),
          static_cast<Eigen::Index>(m.cols())};
}
MapMat view(DenseMatrix& m) {
  return {m.data(), static_cast<Eigen::Index>(m.rows()),
          static_cast<Eigen::Index>(m.cols())};
}

void fill_uniform(DenseMatrix& m, double scale, Rng& rng) {
  for (double& v : m.flat()) v = rng.uniform(-scale, scale);
}

double sum_squares(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

void add_scaled(std::span<double> g, std::span<const double> v, double s) {
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * v[i];
}

}  // namespace

LanguageModel make_model(const TrainConfig& cfg, std::size_t vocab, Rng& rng) {
  cfg.validate();
  if (vocab < 2) throw ConfigError("model: vocabulary needs at least 2 tokens");
  LanguageModel m;
  m.embedding = DenseMatrix(vocab, cfg.embed_size);
  fill_uniform(m.embedding, cfg.init_scale, rng);
  for (std::size_t l = 0; l < cfg.layers; ++l)
    m.layers.push_back(make_lstm_layer(l == 0 ? cfg.embed_size : cfg.hidden_size,
                                       cfg.hidden_size, cfg.variant(l),
                                       cfg.forget_bias, rng));
  m.out_w = DenseMatrix(vocab, cfg.hidden_size);
  fill_uniform(m.out_w, cfg.init_scale, rng);
  m.out_b = Vector(vocab, 0.0);
  return m;
}

ModelGrads ModelGrads::zeros_like(const LanguageModel& m) {
  ModelGrads g{DenseMatrix(m.embedding.rows(), m.embedding.cols()), {},
               DenseMatrix(m.out_w.rows(), m.out_w.cols()),
               Vector(m.out_b.size(), 0.0)};
  for (const auto& l : m.layers) g.layers.push_back(LstmGrads::zeros_like(l));
  return g;
}

void ModelGrads::set_zero() {
  embedding.fill(0.0);
  for (auto& l : layers) l.set_zero();
  out_w.fill(0.0);
  std::fill(out_b.begin(), out_b.end(), 0.0);
}

std::vector<GradBlock> grad_blocks(ModelGrads& g) {
  std::vector<GradBlock> out;
  out.push_back({"embedding", g.embedding.flat()});
  for (std::size_t l = 0; l < g.layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    auto& lg = g.layers[l];
    int k = 0;
    for_each_factor(lg.w.structured, [&](DenseMatrix& f) {
      out.push_back({p + "factor" + std::to_string(k++), f.flat()});
    });
    out.push_back({p + "ws", lg.w.ws.flat()});
    out.push_back({p + "alpha", std::span<double>(&lg.w.alpha, 1)});
    out.push_back({p + "beta", std::span<double>(&lg.w.beta, 1)});
    out.push_back({p + "bias", lg.bias});
  }
  out.push_back({"out_w", g.out_w.flat()});
  out.push_back({"out_b", g.out_b});
  return out;
}

std::vector<std::span<double>> param_blocks(LanguageModel& m) {
  std::vector<std::span<double>> out{m.embedding.flat()};
  for (auto& layer : m.layers) {
    for_each_factor(layer.w.structured,
                    [&](DenseMatrix& f) { out.push_back(f.flat()); });
    out.push_back(layer.w.ws.flat());
    out.push_back(std::span<double>(&layer.w.alpha, 1));
    out.push_back(std::span<double>(&layer.w.beta, 1));
    out.push_back(layer.bias);
  }
  out.push_back(m.out_w.flat());
  out.push_back(m.out_b);
  return out;
}

double clip_global_norm(std::span<const GradBlock> blocks, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip_global_norm: max_norm must be > 0");
  double sq = 0.0;
  for (const auto& b : blocks) sq += sum_squares(b.values);
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& b : blocks)
      for (double& v : b.values) v *= s;
  }
  return norm;
}

RecurrentState RecurrentState::zeros(const LanguageModel& m, std::size_t batch) {
  RecurrentState s;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    s.h.emplace_back(batch * m.hidden(), 0.0);
    s.c.emplace_back(batch * m.hidden(), 0.0);
  }
  return s;
}

ChunkResult ChunkRunner::run(const LanguageModel& m,
                             std::span<const TokenId> inputs,
                             std::span<const TokenId> targets,
                             std::size_t batch, RecurrentState& state,
                             const ChunkNoise& noise, ModelGrads* grads,
                             std::span<const GradientFlow> flows) {
  require(batch > 0 && !inputs.empty() && inputs.size() % batch == 0 &&
              targets.size() == inputs.size(),
          "chunk: inputs/targets must be equal, non-empty multiples of batch");
  const std::size_t steps = inputs.size() / batch, nl = m.layers.size();
  const std::size_t hd = m.hidden(), v = m.vocab(), e = m.embed();
  require(state.h.size() == nl && state.c.size() == nl,
          "chunk: recurrent state layer count mismatch");
  for (std::size_t l = 0; l < nl; ++l)
    require(state.h[l].size() == batch * hd && state.c[l].size() == batch * hd,
            "chunk: recurrent state size mismatch");
  require(flows.empty() || flows.size() == nl, "chunk: one flow per layer");
  for (std::size_t i = 0; i < inputs.size(); ++i)
    require(inputs[i] >= 0 && static_cast<std::size_t>(inputs[i]) < v &&
                targets[i] >= 0 && static_cast<std::size_t>(targets[i]) < v,
            "chunk: token id outside the vocabulary");

  const bool noisy = noise.rng != nullptr;
  const bool drop = noisy && noise.dropout > 0.0;
  const double keep_scale = drop ? 1.0 / (1.0 - noise.dropout) : 1.0;
  auto cmr_p = [&](std::size_t l) {
    return noisy && l < noise.cmr_p.size() ? noise.cmr_p[l] : 0.0;
  };
  auto draw_drop = [&](Vector& mask, std::size_t n) {
    mask.resize(n);
    for (double& x : mask)
      x = noise.rng->bernoulli(noise.dropout) ? 0.0 : keep_scale;
  };

  if (slots_.size() < inputs.size()) slots_.resize(inputs.size());
  top_.resize(inputs.size() * hd);
  Vector x, h_new(hd), c_new(hd);

  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t b = 0; b < batch; ++b) {
      Slot& s = slots_[t * batch + b];
      s.cache.resize(nl);
      s.drop.resize(nl + 1);
      const auto row = m.embedding.row(static_cast<std::size_t>(inputs[t * batch + b]));
      x.assign(row.begin(), row.end());
      if (drop) {
        draw_drop(s.drop[0], e);
        for (std::size_t j = 0; j < e; ++j) x[j] *= s.drop[0][j];
      }
      for (std::size_t l = 0; l < nl; ++l) {
        const CmrMasks* masks = nullptr;
        if (const double p = cmr_p(l); p > 0.0) {
          CmrMasks& mk = s.cache[l].masks;
          if (noise.cmr_share_timesteps && t > 0)
            mk = slots_[b].cache[l].masks;
          else
            mk = CmrMasks::draw(4 * hd, p, *noise.rng);
          masks = &mk;
        }
        std::span<double> h(state.h[l].data() + b * hd, hd);
        std::span<double> c(state.c[l].data() + b * hd, hd);
        lstm_step(m.layers[l], x, h, c, h_new, c_new, masks, ws_, &s.cache[l]);
        std::copy(h_new.begin(), h_new.end(), h.begin());
        std::copy(c_new.begin(), c_new.end(), c.begin());
        x = h_new;
        if (drop) {
          draw_drop(s.drop[l + 1], hd);
          for (std::size_t j = 0; j < hd; ++j) x[j] *= s.drop[l + 1][j];
        }
      }
      std::copy(x.begin(), x.end(), top_.begin() + (t * batch + b) * hd);
    }

  // Softmax projection over all positions at once.
  const auto rows = static_cast<Eigen::Index>(inputs.size());
  MapMat top(top_.data(), rows, static_cast<Eigen::Index>(hd));
  logits_.resize(inputs.size() * v);
  MapMat logits(logits_.data(), rows, static_cast<Eigen::Index>(v));
  logits.noalias() = top * view(m.out_w).transpose();
  Eigen::Map<const Eigen::RowVectorXd> ob(m.out_b.data(), static_cast<Eigen::Index>(v));
  logits.rowwise() += ob;

  ChunkResult res{0.0, inputs.size()};
  const double inv_batch = 1.0 / static_cast<double>(batch);
  for (Eigen::Index r = 0; r < rows; ++r) {
    auto lr = logits.row(r);
    const double mx = lr.maxCoeff();
    const double lse = mx + std::log((lr.array() - mx).exp().sum());
    const auto tgt = static_cast<Eigen::Index>(targets[static_cast<std::size_t>(r)]);
    res.ce_sum += lse - lr(tgt);
    if (grads) {
      lr = ((lr.array() - lse).exp() * inv_batch).matrix();
      lr(tgt) -= inv_batch;
    }
  }
  if (!grads) return res;

  view(grads->out_w).noalias() += logits.transpose() * top;
  Eigen::Map<Eigen::RowVectorXd>(grads->out_b.data(), static_cast<Eigen::Index>(v)) +=
      logits.colwise().sum();
  RowMat dtop = logits * view(m.out_w);

  std::vector<Vector> dh_next(nl, Vector(batch * hd, 0.0));
  std::vector<Vector> dc_next(nl, Vector(batch * hd, 0.0));
  Vector g(hd), dh(hd), dx, dh_prev(hd), dc_prev(hd);
  for (std::size_t t = steps; t-- > 0;)
    for (std::size_t b = 0; b < batch; ++b) {
      const Slot& s = slots_[t * batch + b];
      const std::size_t r = t * batch + b;
      g.assign(dtop.data() + r * hd, dtop.data() + (r + 1) * hd);
      if (drop)
        for (std::size_t j = 0; j < hd; ++j) g[j] *= s.drop[nl][j];
      for (std::size_t l = nl; l-- > 0;) {
        const LstmLayer& layer = m.layers[l];
        double* dhn = dh_next[l].data() + b * hd;
        double* dcn = dc_next[l].data() + b * hd;
        for (std::size_t j = 0; j < hd; ++j) dh[j] = g[j] + dhn[j];
        dx.assign(layer.input_size(), 0.0);
        lstm_step_backward(layer, s.cache[l], dh, std::span<const double>(dcn, hd),
                           grads->layers[l], dx, dh_prev, dc_prev, ws_,
                           flows.empty() ? GradientFlow{} : flows[l]);
        std::copy(dh_prev.begin(), dh_prev.end(), dhn);
        std::copy(dc_prev.begin(), dc_prev.end(), dcn);
        if (drop)
          for (std::size_t j = 0; j < dx.size(); ++j) dx[j] *= s.drop[l][j];
        g = dx;
      }
      auto erow = grads->embedding.row(static_cast<std::size_t>(inputs[r]));
      for (std::size_t j = 0; j < e; ++j) erow[j] += g[j];
    }
  return res;
}

double regularization(const LanguageModel& m, const TrainConfig& cfg,
                      ModelGrads* grads, bool scales_trainable) {
  double loss = 0.0;
  if (cfg.l2 > 0.0) {
    const double l2 = cfg.l2;
    loss += 0.5 * l2 * (sum_squares(m.embedding.flat()) + sum_squares(m.out_w.flat()));
    if (grads) {
      add_scaled(grads->embedding.flat(), m.embedding.flat(), l2);
      add_scaled(grads->out_w.flat(), m.out_w.flat(), l2);
    }
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      const DopedWeight& w = m.layers[l].w;
      std::vector<std::span<const double>> params;
      for_each_factor(w.structured,
                      [&](const DenseMatrix& f) { params.push_back(f.flat()); });
      params.push_back(w.ws.flat());
      std::vector<std::span<double>> gs;
      if (grads) {
        for_each_factor(grads->layers[l].w.structured,
                        [&](DenseMatrix& f) { gs.push_back(f.flat()); });
        gs.push_back(grads->layers[l].w.ws.flat());
      }
      for (std::size_t k = 0; k < params.size(); ++k) {
        loss += 0.5 * l2 * sum_squares(params[k]);
        if (grads) add_scaled(gs[k], params[k], l2);
      }
    }
  }
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const DopedWeight& w = m.layers[l].w;
    loss += penalty_loss(cfg.penalty, w.alpha, w.beta);
    if (grads && scales_trainable) {
      const PenaltyGrad pg = penalty_grad(cfg.penalty, w.alpha, w.beta);
      grads->layers[l].w.alpha += pg.alpha;
      grads->layers[l].w.beta += pg.beta;
    }
  }
  return loss;
}

double evaluate_perplexity(const LanguageModel& m,
                           std::span<const TokenId> tokens, std::size_t bptt) {
  if (tokens.size() < 2)
    throw ConfigError("evaluate_perplexity: evaluation set needs >= 2 tokens");
  if (bptt == 0) throw ConfigError("evaluate_perplexity: bptt must be positive");
  ChunkRunner runner;
  RecurrentState state = RecurrentState::zeros(m, 1);
  double ce = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < tokens.size(); i += bptt) {
    const std::size_t len = std::min(bptt, tokens.size() - 1 - i);
    const ChunkResult r =
        runner.run(m, tokens.subspan(i, len), tokens.subspan(i + 1, len), 1,
                   state, ChunkNoise{}, nullptr);
    ce += r.ce_sum;
    n += r.tokens;
  }
  return std::exp(ce / static_cast<double>(n));
}

}  // namespace dkp
