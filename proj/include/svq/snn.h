#pragma once

#include "svq/ops.h"
#include "svq/rng.h"
#include "svq/tensor.h"

namespace svq {

struct LifConfig {
  float tau = 2.0f;
  float v_threshold = 1.0f;
  float v_reset = 0.0f;
  float surrogate_alpha = 2.0f;
  // When true, the spike entering the reset product H(1-S)+S*v_reset is
  // detached, so backward sees the reset gate as a constant. Default keeps
  // the surrogate in both places.
  bool detach_reset = false;
};

void validate(const LifConfig& cfg);

// Membrane potential carried between steps. Leave v undefined to start a
// fresh sequence; the first step fills it with v_reset.
struct LifState {
  Tensor v;
};

// dS/dv of the arctan-family surrogate, alpha/(2*(1+(pi*alpha*v/2)^2)).
float surrogate_grad(float v, float alpha);
Tensor surrogate_grad(const Tensor& v, float alpha);

// Heaviside forward (1 where v >= 0), surrogate backward. v is H - V_th.
Tensor spike_threshold(Tape& tape, const Tensor& v, float alpha);

// One LIF update: H = V + (1/tau)*(I - (V - v_reset)); S = step(H - V_th);
// V' = H*(1-S) + S*v_reset. Returns S and replaces state.v with V'.
Tensor lif_step(Tape& tape, const Tensor& input, LifState& state,
                const LifConfig& cfg);

// Direct coding: replicate a [C,H,W] image T times as input current.
Tensor spike_encode(Tape& tape, const Tensor& image, int T);

// Mean over the leading (time) axis: [T,...] -> [...].
Tensor time_mean(Tape& tape, const Tensor& x);

// Learned decode head: time-mean, 1x1 conv, sigmoid.
class SpikeDecodeHead {
 public:
  SpikeDecodeHead() = default;
  SpikeDecodeHead(int channels, Rng& rng);
  static SpikeDecodeHead identity(int channels);

  // [B,C,H,W] -> [B,C,H,W]; conv + sigmoid, no time axis.
  Tensor apply(Tape& tape, const Tensor& x) const;
  // [T,C,H,W] -> [C,H,W]; the full decode path.
  Tensor decode(Tape& tape, const Tensor& x) const;

  Tensor weight;  // [C,C,1,1]
  Tensor bias;    // [C]
};

}  // namespace svq
