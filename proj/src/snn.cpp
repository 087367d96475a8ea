#include "svq/snn.h"

#include <cmath>

#include "svq/check.h"

namespace svq {

void validate(const LifConfig& cfg) {
  SVQ_CHECK(cfg.tau > 0.0f, "lif: tau must be positive, got ", cfg.tau);
  SVQ_CHECK(cfg.v_threshold > cfg.v_reset, "lif: v_threshold (",
            cfg.v_threshold, ") must exceed v_reset (", cfg.v_reset, ")");
}

float surrogate_grad(float v, float alpha) {
  const float u = static_cast<float>(M_PI) * alpha * v * 0.5f;
  return alpha / (2.0f * (1.0f + u * u));
}

Tensor surrogate_grad(const Tensor& v, float alpha) {
  Tensor out = Tensor::zeros(v.shape());
  for (std::size_t i = 0; i < v.numel(); ++i)
    out.data()[i] = surrogate_grad(v.data()[i], alpha);
  return out;
}

Tensor spike_threshold(Tape& tape, const Tensor& v, float alpha) {
  Tensor out = Tensor::zeros(v.shape());
  for (std::size_t i = 0; i < v.numel(); ++i)
    out.data()[i] = v.data()[i] >= 0.0f ? 1.0f : 0.0f;
  Tensor vc = v, oc = out;
  tape.record("spike", {v}, out, [vc, oc, alpha]() mutable {
    const float* g = oc.grad();
    float* gv = vc.grad();
    for (std::size_t i = 0; i < vc.numel(); ++i)
      gv[i] += g[i] * surrogate_grad(vc.data()[i], alpha);
  });
  return out;
}

Tensor lif_step(Tape& tape, const Tensor& input, LifState& state,
                const LifConfig& cfg) {
  validate(cfg);
  SVQ_CHECK(all_finite(input), "lif_step: non-finite input current");
  if (!state.v.defined()) state.v = Tensor::full(input.shape(), cfg.v_reset);
  SVQ_CHECK(state.v.shape() == input.shape(),
            "lif_step: input shape ", shape_str(input.shape()),
            " does not match state ", shape_str(state.v.shape()));
  const float inv_tau = 1.0f / cfg.tau;
  // H = V*(1-1/tau) + I/tau + v_reset/tau
  Tensor h = add_scalar(
      tape,
      add(tape, mul_scalar(tape, state.v, 1.0f - inv_tau),
          mul_scalar(tape, input, inv_tau)),
      cfg.v_reset * inv_tau);
  Tensor s = spike_threshold(tape, add_scalar(tape, h, -cfg.v_threshold),
                             cfg.surrogate_alpha);
  Tensor gate = cfg.detach_reset ? detach(s) : s;
  Tensor keep = add_scalar(tape, mul_scalar(tape, gate, -1.0f), 1.0f);
  state.v = add(tape, mul(tape, h, keep), mul_scalar(tape, gate, cfg.v_reset));
  return s;
}

Tensor spike_encode(Tape& tape, const Tensor& image, int T) {
  SVQ_CHECK(T >= 1, "spike_encode: T must be >= 1, got ", T);
  SVQ_CHECK(image.rank() == 3, "spike_encode: image must be [C,H,W], got ",
            shape_str(image.shape()));
  for (std::size_t i = 0; i < image.numel(); ++i)
    SVQ_CHECK(image.data()[i] >= 0.0f && image.data()[i] <= 1.0f,
              "spike_encode: image value ", image.data()[i], " outside [0,1]");
  Tensor lead = reshape(tape, image,
                        {1, image.dim(0), image.dim(1), image.dim(2)});
  std::vector<Tensor> copies(static_cast<std::size_t>(T), lead);
  if (T == 1) return lead;
  return concat(tape, copies, 0);
}

Tensor time_mean(Tape& tape, const Tensor& x) {
  SVQ_CHECK(x.rank() >= 2, "time_mean: need a leading time axis, got ",
            shape_str(x.shape()));
  const int T = x.dim(0);
  Shape os(x.shape().begin() + 1, x.shape().end());
  Tensor out = Tensor::zeros(os);
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int t = 0; t < T; ++t) acc += x.data()[static_cast<std::size_t>(t) * n + i];
    out.data()[i] = static_cast<float>(acc / T);
  }
  Tensor xc = x, oc = out;
  tape.record("time_mean", {x}, out, [xc, oc, T, n]() mutable {
    const float* g = oc.grad();
    float* gx = xc.grad();
    const float inv = 1.0f / static_cast<float>(T);
    for (int t = 0; t < T; ++t)
      for (std::size_t i = 0; i < n; ++i)
        gx[static_cast<std::size_t>(t) * n + i] += g[i] * inv;
  });
  return out;
}

SpikeDecodeHead::SpikeDecodeHead(int channels, Rng& rng) {
  weight = Tensor::zeros({channels, channels, 1, 1}, true);
  const float sd = 1.0f / std::sqrt(static_cast<float>(channels));
  for (std::size_t i = 0; i < weight.numel(); ++i)
    weight.data()[i] = rng.normal(0.0f, sd);
  bias = Tensor::zeros({channels}, true);
}

SpikeDecodeHead SpikeDecodeHead::identity(int channels) {
  SpikeDecodeHead head;
  head.weight = Tensor::zeros({channels, channels, 1, 1}, true);
  for (int c = 0; c < channels; ++c)
    head.weight.data()[static_cast<std::size_t>(c) * channels + c] = 1.0f;
  head.bias = Tensor::zeros({channels}, true);
  return head;
}

Tensor SpikeDecodeHead::apply(Tape& tape, const Tensor& x) const {
  SVQ_CHECK(x.rank() == 4, "decode head: expected [B,C,H,W], got ",
            shape_str(x.shape()));
  return sigmoid(tape, conv2d(tape, x, weight, bias, 1, 0));
}

Tensor SpikeDecodeHead::decode(Tape& tape, const Tensor& x) const {
  SVQ_CHECK(x.rank() == 4, "spike_decode: expected [T,C,H,W], got ",
            shape_str(x.shape()));
  Tensor m = time_mean(tape, x);
  Tensor batched = reshape(tape, m, {1, m.dim(0), m.dim(1), m.dim(2)});
  Tensor y = apply(tape, batched);
  return reshape(tape, y, {m.dim(0), m.dim(1), m.dim(2)});
}

}  // namespace svq
