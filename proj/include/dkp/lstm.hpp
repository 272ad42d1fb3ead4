// Copyright 2026 The dkp Authors. Apache 2.0 License.
//
// LSTM cell whose fused gate matrix is a doped weight:
//   [i f g o] = W [x; h] + bias
//   c' = sigmoid(f) c + sigmoid(i) tanh(g),  h' = sigmoid(o) tanh(c')

#ifndef DKP_LSTM_HPP_
#define DKP_LSTM_HPP_

#include <cstddef>
#include <span>

#include "dkp/doped.hpp"

namespace dkp {

struct LstmLayer {
  DopedWeight w;  // 4H x (input + H), gate row blocks i, f, g, o
  Vector bias;    // 4H

  std::size_t hidden() const { return bias.size() / 4; }
  std::size_t input_size() const { return w.cols() - hidden(); }
  bool operator==(const LstmLayer&) const = default;
};

// Uniform init per make_doped, zero bias except forget gate = forget_bias.
LstmLayer make_lstm_layer(std::size_t input, std::size_t hidden,
                          const VariantConfig& cfg, double forget_bias,
                          Rng& rng);

struct LstmStepCache {
  Vector xh;   // [x; h_prev]
  Vector act;  // sigmoid(i), sigmoid(f), tanh(g), sigmoid(o)
  Vector c_prev;
  Vector tanh_c;
  CmrMasks masks;
  bool masked = false;
};

void lstm_step(const LstmLayer& layer, std::span<const double> x,
               std::span<const double> h, std::span<const double> c,
               std::span<double> h_out, std::span<double> c_out,
               const CmrMasks* masks, Workspace& ws,
               LstmStepCache* cache = nullptr);

struct LstmGrads {
  DopedGradients w;
  Vector bias;

  static LstmGrads zeros_like(const LstmLayer& layer);
  void set_zero();
};

// dh, dc are the gradients reaching h' and c'. Overwrites dx, dh_prev and
// dc_prev; accumulates parameter gradients into acc.
void lstm_step_backward(const LstmLayer& layer, const LstmStepCache& cache,
                        std::span<const double> dh, std::span<const double> dc,
                        LstmGrads& acc, std::span<double> dx,
                        std::span<double> dh_prev, std::span<double> dc_prev,
                        Workspace& ws, GradientFlow flow = {});

}  // namespace dkp

#endif  // DKP_LSTM_HPP_
