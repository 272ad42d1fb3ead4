// Copyright 2026 The dkp Authors. Apache 2.0 License.

#include "dkp/lstm.hpp"

#include <algorithm>
#include <cmath>

namespace dkp {

namespace {
double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }
}  // namespace

LstmLayer make_lstm_layer(std::size_t input, std::size_t hidden,
                          const VariantConfig& cfg, double forget_bias,
                          Rng& rng) {
  if (input == 0 || hidden == 0)
    throw ConfigError("lstm layer: input and hidden sizes must be positive");
  LstmLayer layer{make_doped(4 * hidden, input + hidden, cfg, rng),
                  Vector(4 * hidden, 0.0)};
  std::fill(layer.bias.begin() + hidden, layer.bias.begin() + 2 * hidden,
            forget_bias);
  return layer;
}

void lstm_step(const LstmLayer& layer, std::span<const double> x,
               std::span<const double> h, std::span<const double> c,
               std::span<double> h_out, std::span<double> c_out,
               const CmrMasks* masks, Workspace& ws, LstmStepCache* cache) {
  const std::size_t hd = layer.hidden(), in = layer.input_size();
  require(x.size() == in, "lstm_step: input length mismatch");
  require(h.size() == hd && c.size() == hd && h_out.size() == hd &&
              c_out.size() == hd,
          "lstm_step: state length mismatch");

  LstmStepCache local;
  LstmStepCache& k = cache ? *cache : local;
  k.xh.resize(in + hd);
  std::copy(x.begin(), x.end(), k.xh.begin());
  std::copy(h.begin(), h.end(), k.xh.begin() + in);
  k.act.resize(4 * hd);
  doped_forward(layer.w, k.xh, k.act, masks, ws);

  k.c_prev.assign(c.begin(), c.end());
  k.tanh_c.resize(hd);
  k.masked = masks != nullptr;
  if (masks && cache && masks != &k.masks) k.masks = *masks;
  double* a = k.act.data();
  for (std::size_t j = 0; j < 4 * hd; ++j) a[j] += layer.bias[j];
  for (std::size_t j = 0; j < hd; ++j) {
    a[j] = sigmoid(a[j]);
    a[hd + j] = sigmoid(a[hd + j]);
    a[2 * hd + j] = std::tanh(a[2 * hd + j]);
    a[3 * hd + j] = sigmoid(a[3 * hd + j]);
    const double cn = a[hd + j] * c[j] + a[j] * a[2 * hd + j];
    k.tanh_c[j] = std::tanh(cn);
    c_out[j] = cn;
    h_out[j] = a[3 * hd + j] * k.tanh_c[j];
  }
}

LstmGrads LstmGrads::zeros_like(const LstmLayer& layer) {
  return {DopedGradients::zeros_like(layer.w), Vector(layer.bias.size(), 0.0)};
}

void LstmGrads::set_zero() {
  w.set_zero();
  std::fill(bias.begin(), bias.end(), 0.0);
}

void lstm_step_backward(const LstmLayer& layer, const LstmStepCache& cache,
                        std::span<const double> dh, std::span<const double> dc,
                        LstmGrads& acc, std::span<double> dx,
                        std::span<double> dh_prev, std::span<double> dc_prev,
                        Workspace& ws, GradientFlow flow) {
  const std::size_t hd = layer.hidden(), in = layer.input_size();
  require(dh.size() == hd && dc.size() == hd && dh_prev.size() == hd &&
              dc_prev.size() == hd && dx.size() == in,
          "lstm_step_backward: length mismatch");
  const double* a = cache.act.data();
  Vector da(4 * hd);
  for (std::size_t j = 0; j < hd; ++j) {
    const double i = a[j], f = a[hd + j], g = a[2 * hd + j], o = a[3 * hd + j];
    const double tc = cache.tanh_c[j];
    const double dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
    da[j] = dct * g * i * (1.0 - i);
    da[hd + j] = dct * cache.c_prev[j] * f * (1.0 - f);
    da[2 * hd + j] = dct * i * (1.0 - g * g);
    da[3 * hd + j] = dh[j] * tc * o * (1.0 - o);
    dc_prev[j] = dct * f;
  }
  for (std::size_t j = 0; j < 4 * hd; ++j) acc.bias[j] += da[j];

  Vector gxh(in + hd, 0.0);
  doped_backward_add(layer.w, cache.xh, da,
                     cache.masked ? &cache.masks : nullptr, acc.w, gxh, ws,
                     flow);
  std::copy(gxh.begin(), gxh.begin() + in, dx.begin());
  std::copy(gxh.begin() + in, gxh.end(), dh_prev.begin());
}

}  // namespace dkp
