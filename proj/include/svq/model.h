#pragma once

#include <string>
#include <vector>

#include "svq/adamw.h"
#include "svq/codebook.h"
#include "svq/ops.h"
#include "svq/rng.h"
#include "svq/snn.h"
#include "svq/tensor.h"

namespace svq {

struct ModelConfig {
  int in_channels = 1;
  int image_h = 16;
  int image_w = 16;
  int stem = 8;
  std::vector<int> stage_widths = {16, 16};  // one width per stride-2 stage
  int latent_c = 8;
  int n_q = 32;
  int T = 2;
  bool temporal_codebook = true;
  float beta = 0.25f;
  LifConfig lif;
  LifConfig decoder_lif;

  int stages() const { return static_cast<int>(stage_widths.size()); }
  int latent_h() const { return image_h >> stages(); }
  int latent_w() const { return image_w >> stages(); }
  void validate() const;
};

struct Conv2dLayer {
  Tensor w, b;
  int stride = 1, pad = 1;
  Conv2dLayer() = default;
  Conv2dLayer(int in, int out, int k, int stride, int pad, Rng& rng);
  Tensor forward(Tape& tape, const Tensor& x) const {
    return conv2d(tape, x, w, b, stride, pad);
  }
};

struct ConvTranspose2dLayer {
  Tensor w, b;
  int stride = 2, pad = 1;
  ConvTranspose2dLayer() = default;
  ConvTranspose2dLayer(int in, int out, int k, int stride, int pad, Rng& rng);
  Tensor forward(Tape& tape, const Tensor& x) const {
    return conv_transpose2d(tape, x, w, b, stride, pad);
  }
};

// Spiking convolutional encoder: stem conv + LIF, one stride-2 conv + LIF
// per stage, then a plain conv to the real-valued latent. LIF states
// persist across step() calls until reset_state().
class SpikingEncoder {
 public:
  SpikingEncoder() = default;
  SpikingEncoder(const ModelConfig& cfg, Rng& rng);

  Tensor step(Tape& tape, const Tensor& current);  // [B,C,H,W] -> [B,c,h,w]
  void reset_state();

  Conv2dLayer stem;
  std::vector<Conv2dLayer> downs;
  Conv2dLayer out;
  LifConfig lif;

 private:
  std::vector<LifState> states_;
};

// Mirror of the encoder built from transposed convolutions. step() maps one
// quantized latent slice to a real-valued pre-head image.
class SpikingDecoder {
 public:
  SpikingDecoder() = default;
  SpikingDecoder(const ModelConfig& cfg, Rng& rng);

  Tensor step(Tape& tape, const Tensor& zq_t);  // [B,c,h,w] -> [B,C,H,W]
  void reset_state();

  Conv2dLayer in;
  std::vector<ConvTranspose2dLayer> ups;
  Conv2dLayer out;
  LifConfig lif;

 private:
  std::vector<LifState> states_;
};

// Pluggable feature extractor for the perceptual distance: identity (the
// image itself, one layer) or a frozen random two-conv stack. Each layer
// carries a learnable scalar scale.
class FeatureExtractor {
 public:
  enum class Kind { kIdentity, kRandomConv };

  FeatureExtractor();  // identity
  FeatureExtractor(int in_channels, Rng& rng);

  std::vector<Tensor> features(Tape& tape, const Tensor& x) const;

  Kind kind = Kind::kIdentity;
  Conv2dLayer conv1, conv2;     // frozen (requires_grad=false) when random
  std::vector<Tensor> scales;   // one learnable [1] tensor per layer
};

// Sum over layers of mean-per-site squared difference, scaled by the
// layer's learnable factor (contribution is quadratic in the scale).
Tensor feature_distance(Tape& tape, const Tensor& a, const Tensor& b,
                        const FeatureExtractor& ex);

struct ForwardResult {
  Tensor recon;       // [C,H,W] static mode, [T,C,H,W] temporal mode
  Tensor recon_loss;  // scalar
  Tensor vq_loss;     // (codebook + beta*commit) / numel(z)
  QuantizationResult quant;
};

class Pipeline {
 public:
  Pipeline() = default;
  Pipeline(const ModelConfig& cfg, Rng& rng);

  // [C,H,W] in [0,1] -> real latent sequence [T,c,h,w].
  Tensor encode(Tape& tape, const Tensor& image);
  // Quantized latents [T,c,h,w] -> static reconstruction [C,H,W] in (0,1).
  Tensor decode(Tape& tape, const Tensor& zq);
  // Same latents -> per-step reconstructions [T,C,H,W].
  Tensor decode_temporal(Tape& tape, const Tensor& zq);

  // Static stimulus: replicate the image as current, reconstruct it once.
  ForwardResult forward_static(Tape& tape, const Tensor& image);
  // Temporal stimulus: per-step frames [T,C,H,W], per-step reconstructions.
  ForwardResult forward_temporal(Tape& tape, const Tensor& frames);

  // Quantize a latent sequence with whichever codebook is configured.
  QuantizationResult quantize(Tape& tape, const Tensor& z) const;

  void register_params(AdamW& opt);

  ModelConfig cfg;
  SpikingEncoder enc;
  SpikingDecoder dec;
  SpikeDecodeHead head;
  VanillaCodebook vq;
  TemporalCodebook tq;
};

struct TrainMetrics {
  double mse = 0.0;
  double codebook = 0.0;
  double commit = 0.0;
  double perceptual = 0.0;
  double total = 0.0;
  std::vector<int> indices;  // all code indices used by the batch
};

// One optimizer update over a batch. Static mode: each element is an image
// [C,H,W]; temporal mode: each element is a frame stack [T,C,H,W].
TrainMetrics train_step(Pipeline& model, const std::vector<Tensor>& batch,
                        AdamW& opt, const FeatureExtractor& perceptual,
                        float lambda_p, bool temporal_input);

}  // namespace svq
