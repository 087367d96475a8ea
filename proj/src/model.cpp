#include "svq/model.h"

#include <cmath>
#include <cstddef>
#include <sstream>

#include "svq/check.h"

namespace svq {

void ModelConfig::validate() const {
  SVQ_CHECK(in_channels >= 1, "model: in_channels must be positive");
  SVQ_CHECK(image_h >= 1 && image_w >= 1, "model: image size must be positive");
  SVQ_CHECK(stem >= 1, "model: stem width must be positive");
  SVQ_CHECK(!stage_widths.empty(), "model: need at least one stage");
  for (int w : stage_widths)
    SVQ_CHECK(w >= 1, "model: stage widths must be positive");
  SVQ_CHECK(latent_c >= 1, "model: latent_c must be positive");
  SVQ_CHECK(n_q >= 1, "model: n_q must be positive");
  SVQ_CHECK(T >= 1, "model: T must be positive");
  const int div = 1 << stages();
  SVQ_CHECK(image_h % div == 0 && image_w % div == 0,
            "model: image size ", image_h, "x", image_w,
            " not divisible by 2^stages = ", div);
  svq::validate(lif);
  svq::validate(decoder_lif);
}

namespace {

Tensor conv_weight(Shape shape, int fan_in, Rng& rng) {
  Tensor w = Tensor::zeros(shape, true);
  const float std = std::sqrt(2.0f / static_cast<float>(fan_in));
  float* p = w.data();
  for (std::size_t i = 0; i < w.numel(); ++i) p[i] = rng.normal(0.0f, std);
  return w;
}

}  // namespace

Conv2dLayer::Conv2dLayer(int in, int out, int k, int stride, int pad, Rng& rng)
    : w(conv_weight({out, in, k, k}, in * k * k, rng)),
      b(Tensor::zeros({out}, true)),
      stride(stride),
      pad(pad) {}

ConvTranspose2dLayer::ConvTranspose2dLayer(int in, int out, int k, int stride,
                                           int pad, Rng& rng)
    : w(conv_weight({in, out, k, k}, in * k * k, rng)),
      b(Tensor::zeros({out}, true)),
      stride(stride),
      pad(pad) {}

namespace {

// Convs that drive LIF layers start hot: He weights alone leave most
// membrane potentials far under threshold, so spikes never happen and
// surrogate gradients stay tiny. Scaled weights plus a small tonic bias put
// the operating point near threshold without causing background spiking.
void wake_init(Tensor& w, Tensor& b, Rng& rng) {
  for (float& x : w.vec()) x *= 2.5f;
  for (float& x : b.vec()) x = rng.uniform(0.05f, 0.3f);
}

}  // namespace

SpikingEncoder::SpikingEncoder(const ModelConfig& cfg, Rng& rng)
    : stem(cfg.in_channels, cfg.stem, 3, 1, 1, rng), lif(cfg.lif) {
  wake_init(stem.w, stem.b, rng);
  int prev = cfg.stem;
  for (int w : cfg.stage_widths) {
    downs.emplace_back(prev, w, 3, 2, 1, rng);
    wake_init(downs.back().w, downs.back().b, rng);
    prev = w;
  }
  out = Conv2dLayer(prev, cfg.latent_c, 3, 1, 1, rng);
  states_.resize(downs.size() + 1);
}

Tensor SpikingEncoder::step(Tape& tape, const Tensor& current) {
  Tensor s = lif_step(tape, stem.forward(tape, current), states_[0], lif);
  for (std::size_t i = 0; i < downs.size(); ++i)
    s = lif_step(tape, downs[i].forward(tape, s), states_[i + 1], lif);
  return out.forward(tape, s);
}

void SpikingEncoder::reset_state() {
  for (auto& st : states_) st = LifState{};
}

SpikingDecoder::SpikingDecoder(const ModelConfig& cfg, Rng& rng)
    : in(cfg.latent_c, cfg.stage_widths.back(), 3, 1, 1, rng),
      lif(cfg.decoder_lif) {
  wake_init(in.w, in.b, rng);
  for (int i = static_cast<int>(cfg.stage_widths.size()) - 1; i >= 0; --i) {
    const int from = cfg.stage_widths[static_cast<std::size_t>(i)];
    const int to = i > 0 ? cfg.stage_widths[static_cast<std::size_t>(i - 1)]
                         : cfg.stem;
    ups.emplace_back(from, to, 4, 2, 1, rng);
    wake_init(ups.back().w, ups.back().b, rng);
  }
  out = Conv2dLayer(cfg.stem, cfg.in_channels, 3, 1, 1, rng);
  states_.resize(ups.size() + 1);
}

Tensor SpikingDecoder::step(Tape& tape, const Tensor& zq_t) {
  Tensor s = lif_step(tape, in.forward(tape, zq_t), states_[0], lif);
  for (std::size_t i = 0; i < ups.size(); ++i)
    s = lif_step(tape, ups[i].forward(tape, s), states_[i + 1], lif);
  return out.forward(tape, s);
}

void SpikingDecoder::reset_state() {
  for (auto& st : states_) st = LifState{};
}

FeatureExtractor::FeatureExtractor() {
  scales.push_back(Tensor::full({1}, 1.0f, true));
}

FeatureExtractor::FeatureExtractor(int in_channels, Rng& rng)
    : kind(Kind::kRandomConv) {
  conv1 = Conv2dLayer(in_channels, 8, 3, 2, 1, rng);
  conv2 = Conv2dLayer(8, 16, 3, 2, 1, rng);
  // The extractor is a fixed random projection; only the scales train.
  conv1.w = detach(conv1.w);
  conv1.b = detach(conv1.b);
  conv2.w = detach(conv2.w);
  conv2.b = detach(conv2.b);
  scales.push_back(Tensor::full({1}, 1.0f, true));
  scales.push_back(Tensor::full({1}, 1.0f, true));
}

std::vector<Tensor> FeatureExtractor::features(Tape& tape,
                                               const Tensor& x) const {
  if (kind == Kind::kIdentity) return {x};
  Tensor f1 = relu(tape, conv1.forward(tape, x));
  Tensor f2 = relu(tape, conv2.forward(tape, f1));
  return {f1, f2};
}

Tensor feature_distance(Tape& tape, const Tensor& a, const Tensor& b,
                        const FeatureExtractor& ex) {
  std::vector<Tensor> fa = ex.features(tape, a);
  std::vector<Tensor> fb = ex.features(tape, b);
  SVQ_CHECK(fa.size() == ex.scales.size(),
            "feature_distance: layer/scale count mismatch");
  Tensor total;
  for (std::size_t l = 0; l < fa.size(); ++l) {
    const Shape& s = fa[l].shape();
    SVQ_CHECK(s.size() >= 2, "feature_distance: feature rank too small");
    const int h = s[s.size() - 2];
    const int w = s[s.size() - 1];
    Tensor diff = scale_by(tape, sub(tape, fa[l], fb[l]), ex.scales[l]);
    Tensor term = mul_scalar(tape, sse(tape, diff, Tensor::zeros(diff.shape())),
                             1.0f / static_cast<float>(h * w));
    total = total.defined() ? add(tape, total, term) : term;
  }
  return total;
}

Pipeline::Pipeline(const ModelConfig& cfg, Rng& rng) : cfg(cfg) {
  cfg.validate();
  enc = SpikingEncoder(cfg, rng);
  dec = SpikingDecoder(cfg, rng);
  head = SpikeDecodeHead(cfg.in_channels, rng);
  if (cfg.temporal_codebook)
    tq = TemporalCodebook(cfg.n_q, cfg.T, cfg.latent_c, rng);
  else
    vq = VanillaCodebook(cfg.n_q, cfg.latent_c, rng);
}

Tensor Pipeline::encode(Tape& tape, const Tensor& image) {
  SVQ_CHECK(image.shape() ==
                Shape({cfg.in_channels, cfg.image_h, cfg.image_w}),
            "encode: expected image of shape [", cfg.in_channels, ",",
            cfg.image_h, ",", cfg.image_w, "], got ", shape_str(image.shape()));
  Tensor current = spike_encode(tape, image, cfg.T);
  enc.reset_state();
  std::vector<Tensor> z;
  for (int t = 0; t < cfg.T; ++t)
    z.push_back(enc.step(tape, slice(tape, current, 0, t, 1)));
  return z.size() == 1 ? z[0] : concat(tape, z, 0);  // [T, c, h, w]
}

Tensor Pipeline::decode(Tape& tape, const Tensor& zq) {
  SVQ_CHECK(zq.shape() ==
                Shape({cfg.T, cfg.latent_c, cfg.latent_h(), cfg.latent_w()}),
            "decode: expected latents of shape [", cfg.T, ",", cfg.latent_c,
            ",", cfg.latent_h(), ",", cfg.latent_w(), "], got ",
            shape_str(zq.shape()));
  dec.reset_state();
  std::vector<Tensor> x;
  for (int t = 0; t < cfg.T; ++t)
    x.push_back(dec.step(tape, slice(tape, zq, 0, t, 1)));
  return head.decode(tape, x.size() == 1 ? x[0] : concat(tape, x, 0));
}

Tensor Pipeline::decode_temporal(Tape& tape, const Tensor& zq) {
  SVQ_CHECK(zq.shape() ==
                Shape({cfg.T, cfg.latent_c, cfg.latent_h(), cfg.latent_w()}),
            "decode_temporal: expected latents of shape [", cfg.T, ",",
            cfg.latent_c, ",", cfg.latent_h(), ",", cfg.latent_w(), "], got ",
            shape_str(zq.shape()));
  dec.reset_state();
  std::vector<Tensor> ys;
  for (int t = 0; t < cfg.T; ++t)
    ys.push_back(head.apply(tape, dec.step(tape, slice(tape, zq, 0, t, 1))));
  return ys.size() == 1 ? ys[0] : concat(tape, ys, 0);
}

QuantizationResult Pipeline::quantize(Tape& tape, const Tensor& z) const {
  return cfg.temporal_codebook ? quantize_temporal(tape, z, tq)
                               : quantize_vanilla(tape, z, vq);
}

namespace {

Tensor normalized_vq_loss(Tape& tape, const QuantizationResult& q, float beta,
                          std::size_t z_numel) {
  Tensor raw = add(tape, q.codebook_term,
                   mul_scalar(tape, q.commit_term, beta));
  return mul_scalar(tape, raw, 1.0f / static_cast<float>(z_numel));
}

}  // namespace

ForwardResult Pipeline::forward_static(Tape& tape, const Tensor& image) {
  ForwardResult r;
  Tensor z = encode(tape, image);
  r.quant = quantize(tape, z);
  Tensor st = straight_through(tape, z, r.quant.quantized);
  r.recon = decode(tape, st);
  r.recon_loss = mse(tape, r.recon, image);
  r.vq_loss = normalized_vq_loss(tape, r.quant, cfg.beta, z.numel());
  return r;
}

ForwardResult Pipeline::forward_temporal(Tape& tape, const Tensor& frames) {
  SVQ_CHECK(frames.shape() ==
                Shape({cfg.T, cfg.in_channels, cfg.image_h, cfg.image_w}),
            "forward_temporal: expected frames of shape [", cfg.T, ",",
            cfg.in_channels, ",", cfg.image_h, ",", cfg.image_w, "], got ",
            shape_str(frames.shape()));
  ForwardResult r;
  enc.reset_state();
  std::vector<Tensor> zs;
  for (int t = 0; t < cfg.T; ++t)
    zs.push_back(enc.step(tape, slice(tape, frames, 0, t, 1)));
  Tensor z = zs.size() == 1 ? zs[0] : concat(tape, zs, 0);
  r.quant = quantize(tape, z);
  Tensor st = straight_through(tape, z, r.quant.quantized);
  dec.reset_state();
  std::vector<Tensor> ys;
  for (int t = 0; t < cfg.T; ++t)
    ys.push_back(head.apply(tape, dec.step(tape, slice(tape, st, 0, t, 1))));
  r.recon = ys.size() == 1 ? ys[0] : concat(tape, ys, 0);
  r.recon_loss = mse(tape, r.recon, frames);
  r.vq_loss = normalized_vq_loss(tape, r.quant, cfg.beta, z.numel());
  return r;
}

void Pipeline::register_params(AdamW& opt) {
  opt.add_param("enc.stem.w", enc.stem.w);
  opt.add_param("enc.stem.b", enc.stem.b);
  for (std::size_t i = 0; i < enc.downs.size(); ++i) {
    opt.add_param("enc.down" + std::to_string(i) + ".w", enc.downs[i].w);
    opt.add_param("enc.down" + std::to_string(i) + ".b", enc.downs[i].b);
  }
  opt.add_param("enc.out.w", enc.out.w);
  opt.add_param("enc.out.b", enc.out.b);
  opt.add_param("dec.in.w", dec.in.w);
  opt.add_param("dec.in.b", dec.in.b);
  for (std::size_t i = 0; i < dec.ups.size(); ++i) {
    opt.add_param("dec.up" + std::to_string(i) + ".w", dec.ups[i].w);
    opt.add_param("dec.up" + std::to_string(i) + ".b", dec.ups[i].b);
  }
  opt.add_param("dec.out.w", dec.out.w);
  opt.add_param("dec.out.b", dec.out.b);
  opt.add_param("head.w", head.weight);
  opt.add_param("head.b", head.bias);
  opt.add_param("codebook.entries",
                cfg.temporal_codebook ? tq.entries : vq.entries);
}

TrainMetrics train_step(Pipeline& model, const std::vector<Tensor>& batch,
                        AdamW& opt, const FeatureExtractor& perceptual,
                        float lambda_p, bool temporal_input) {
  SVQ_CHECK(!batch.empty(), "train_step: empty batch");
  Tape tape;
  TrainMetrics m;
  Tensor total;
  const float inv_b = 1.0f / static_cast<float>(batch.size());
  for (const Tensor& sample : batch) {
    ForwardResult fw = temporal_input ? model.forward_temporal(tape, sample)
                                      : model.forward_static(tape, sample);
    Tensor perc = feature_distance(tape, fw.recon, sample, perceptual);
    Tensor loss = add(tape, fw.recon_loss,
                      add(tape, mul_scalar(tape, perc, lambda_p), fw.vq_loss));
    total = total.defined() ? add(tape, total, loss) : loss;
    m.mse += fw.recon_loss.item() * inv_b;
    m.codebook += fw.quant.codebook_term.item() * inv_b;
    m.commit += fw.quant.commit_term.item() * inv_b;
    m.perceptual += perc.item() * inv_b;
    m.indices.insert(m.indices.end(), fw.quant.indices.begin(),
                     fw.quant.indices.end());
  }
  total = mul_scalar(tape, total, inv_b);
  m.total = total.item();
  if (!std::isfinite(m.total)) {
    const Tensor& last = model.dec.out.w;
    double lo = last.vec()[0], hi = last.vec()[0];
    for (float v : last.vec()) {
      lo = std::min<double>(lo, v);
      hi = std::max<double>(hi, v);
    }
    std::ostringstream msg;
    msg << "train_step: non-finite loss (mse=" << m.mse
        << ", codebook=" << m.codebook << ", commit=" << m.commit
        << ", perceptual=" << m.perceptual << "); lr=" << opt.config().lr
        << ", dec.out.w range=[" << lo << ", " << hi << "]";
    throw std::runtime_error(msg.str());
  }
  opt.zero_grad();
  tape.backward(total);
  opt.step();
  return m;
}

}  // namespace svq
