#include "svq/train.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

#include "svq/check.h"
#include "svq/data.h"

namespace svq {

namespace {

RunConfig with_overrides(RunConfig base, const std::vector<std::string>& kvs) {
  for (const std::string& kv : kvs) base.set_kv(kv);
  return base;
}

// Deterministic from the seed alone, so reloading a checkpoint rebuilds the
// identical frozen feature stack.
FeatureExtractor build_extractor(const RunConfig& cfg) {
  if (cfg.perceptual == "identity") return FeatureExtractor();
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  return FeatureExtractor(cfg.in_channels, rng);
}

void register_run_params(Pipeline& model, FeatureExtractor& perc, AdamW& opt) {
  model.register_params(opt);
  for (std::size_t i = 0; i < perc.scales.size(); ++i)
    opt.add_param("perc.scale" + std::to_string(i), perc.scales[i]);
}

// Append-mode CSV that writes the header only when the file starts empty.
std::ofstream open_csv(const std::string& path, const char* header) {
  namespace fs = std::filesystem;
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  SVQ_CHECK(out.good(), "csv: cannot write '", path, "'");
  if (fresh) out << header << "\n";
  out << std::setprecision(17);
  return out;
}

void ensure_out_dir(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
}

Tensor frame_of(const Tensor& tchw, int t) {
  const int c = tchw.dim(1), h = tchw.dim(2), w = tchw.dim(3);
  const std::size_t plane = static_cast<std::size_t>(c) * h * w;
  std::vector<float> v(tchw.vec().begin() + static_cast<long>(t) * static_cast<long>(plane),
                       tchw.vec().begin() + static_cast<long>(t + 1) * static_cast<long>(plane));
  return Tensor::from_data({c, h, w}, std::move(v));
}

// PGM for 1 channel, PPM for 3, one PGM per channel otherwise.
std::vector<std::string> write_frames(const Tensor& chw,
                                      const std::string& stem) {
  const int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  std::vector<std::string> files;
  if (c == 1 || c == 3) {
    const std::string p = stem + (c == 1 ? ".pgm" : ".ppm");
    write_image(chw, p);
    files.push_back(p);
    return files;
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int ch = 0; ch < c; ++ch) {
    std::vector<float> v(chw.vec().begin() + static_cast<long>(ch) * static_cast<long>(plane),
                         chw.vec().begin() + static_cast<long>(ch + 1) * static_cast<long>(plane));
    const std::string p = stem + "_c" + std::to_string(ch) + ".pgm";
    write_image(Tensor::from_data({1, h, w}, std::move(v)), p);
    files.push_back(p);
  }
  return files;
}

// Per-site fibers of z laid out exactly like codebook entry rows.
Tensor fibers_of(const Tensor& z, bool temporal) {
  const int T = z.dim(0), c = z.dim(1), h = z.dim(2), w = z.dim(3);
  if (temporal) {
    Tensor out = Tensor::zeros({h * w, T * c});
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        for (int t = 0; t < T; ++t)
          for (int cc = 0; cc < c; ++cc)
            out.data()[(i * w + j) * T * c + t * c + cc] =
                z.vec()[static_cast<std::size_t>(((t * c + cc) * h + i) * w + j)];
    return out;
  }
  Tensor out = Tensor::zeros({T * h * w, c});
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        for (int cc = 0; cc < c; ++cc)
          out.data()[((t * h + i) * w + j) * c + cc] =
              z.vec()[static_cast<std::size_t>(((t * c + cc) * h + i) * w + j)];
  return out;
}

// Fiber pool drawn from a few random items, entry-layout rows.
Tensor fiber_pool(Pipeline& model, const std::vector<Tensor>& items,
                  bool temporal, bool temporal_codebook, int max_items,
                  Rng& rng) {
  std::vector<Tensor> parts;
  const int take = std::min<int>(max_items, static_cast<int>(items.size()));
  for (int s = 0; s < take; ++s) {
    const int pick = rng.uniform_int(static_cast<int>(items.size()));
    Tape tape;
    const Tensor z =
        encode_item(tape, model, items[static_cast<std::size_t>(pick)], temporal);
    parts.push_back(fibers_of(z, temporal_codebook));
  }
  if (parts.size() == 1) return parts[0];
  std::size_t rows = 0;
  for (const Tensor& p : parts) rows += static_cast<std::size_t>(p.dim(0));
  Tensor out = Tensor::zeros({static_cast<int>(rows), parts[0].dim(1)});
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    std::copy(p.vec().begin(), p.vec().end(), out.vec().begin() + static_cast<long>(off));
    off += p.vec().size();
  }
  return out;
}

double item_mse(Pipeline& model, const Tensor& item, bool temporal) {
  Tape tape;
  const ForwardResult r = temporal ? model.forward_temporal(tape, item)
                                   : model.forward_static(tape, item);
  return static_cast<double>(r.recon_loss.vec()[0]);
}

const char* kind_name(int kind) {
  return kind == kCheckpointModel ? "first-stage" : "prior";
}

void check_kind(const Checkpoint& ck, int want, const std::string& path) {
  SVQ_CHECK(ck.kind == want, "checkpoint '", path, "' holds a ",
            kind_name(ck.kind), " model, expected ", kind_name(want));
}

}  // namespace

LoadedData load_dataset(RunConfig& cfg, Rng& rng) {
  LoadedData d;
  if (cfg.dataset == "synthetic") {
    SpikeFrameDataset s =
        synth_temporal(cfg.samples, cfg.T, cfg.image_h, cfg.image_w, rng);
    if (cfg.presentation == "static") {
      // hold the first frame for all T steps instead of playing the video
      for (const Tensor& video : s.samples) d.items.push_back(frame_of(video, 0));
      d.temporal = false;
    } else {
      d.items = std::move(s.samples);
      d.temporal = true;
    }
    cfg.in_channels = 1;
  } else if (cfg.dataset == "idx") {
    ImageDataset s = load_idx(cfg.data_path);
    const std::size_t keep =
        cfg.limit > 0 ? std::min<std::size_t>(s.size(), cfg.limit) : s.size();
    d.items.assign(s.images.begin(), s.images.begin() + static_cast<long>(keep));
    d.temporal = false;
    cfg.in_channels = s.c;
    cfg.image_h = s.h;
    cfg.image_w = s.w;
  } else if (cfg.dataset == "events") {
    EventStream s = load_events(cfg.data_path);
    d.items.push_back(bin_events(s, cfg.T));
    d.temporal = true;
    cfg.in_channels = 2;
    cfg.image_h = s.height;
    cfg.image_w = s.width;
  } else {
    throw ConfigError("config: dataset must be synthetic, idx, or events, got '" +
                      cfg.dataset + "'");
  }
  SVQ_CHECK(!d.items.empty(), "dataset is empty");
  return d;
}

Trainer::Trainer(const RunConfig& c) : cfg(c), rng(c.seed) {
  data = load_dataset(cfg, rng);  // may adopt geometry into cfg
  cfg.validate();
  model = Pipeline(cfg.model_config(), rng);
  perc = build_extractor(cfg);
  AdamWConfig oc;
  oc.lr = cfg.lr;
  oc.weight_decay = cfg.weight_decay;
  opt = AdamW(oc);
  register_run_params(model, perc, opt);
}

void Trainer::restore(const Checkpoint& ck) {
  fill_from_checkpoint(ck, opt);
  epoch = ck.epoch;
  usage = ck.usage;
  if (!ck.rng_state.empty()) rng.set_state(ck.rng_state);
}

Checkpoint Trainer::snapshot() const {
  return make_checkpoint(kCheckpointModel, cfg, opt, epoch, rng.state(), usage);
}

void Trainer::run(const std::string& metrics_path,
                  const std::string& ckpt_path) {
  const int n_q = cfg.n_q;
  std::ofstream csv;
  if (!metrics_path.empty())
    csv = open_csv(metrics_path,
                   "epoch,mse,codebook,commit,perceptual,total,utilization");
  const std::size_t n = data.items.size();
  if (epoch == 0 && cfg.epochs > 0) {
    // seed every entry from real encoder fibers so the codebook starts
    // inside the latent cloud instead of collapsing onto one central entry
    Tensor pool = fiber_pool(model, data.items, data.temporal,
                             cfg.codebook == "temporal", 8, rng);
    Tensor entries =
        cfg.codebook == "temporal" ? model.tq.entries : model.vq.entries;
    const int dim = entries.dim(1);
    for (int k = 0; k < n_q; ++k) {
      const int r = rng.uniform_int(pool.dim(0));
      for (int i = 0; i < dim; ++i)
        entries.data()[k * dim + i] =
            pool.vec()[static_cast<std::size_t>(r * dim + i)] +
            rng.normal(0.0f, 1e-3f);
    }
  }
  for (std::int64_t e = epoch; e < cfg.epochs; ++e) {
    std::vector<std::int64_t> counts(static_cast<std::size_t>(n_q), 0);
    double mse = 0, cb = 0, cm = 0, pc = 0, tot = 0;
    for (const std::vector<int>& bidx : batches(n, cfg.batch, true, rng)) {
      std::vector<Tensor> items;
      for (int i : bidx) items.push_back(data.items[static_cast<std::size_t>(i)]);
      const TrainMetrics m =
          train_step(model, items, opt, perc, cfg.lambda_p, data.temporal);
      const double wgt = static_cast<double>(items.size());
      mse += m.mse * wgt;
      cb += m.codebook * wgt;
      cm += m.commit * wgt;
      pc += m.perceptual * wgt;
      tot += m.total * wgt;
      for (int k : m.indices) counts[static_cast<std::size_t>(k)]++;
    }
    const double inv = 1.0 / static_cast<double>(n);
    int active = 0;
    for (std::int64_t ct : counts) active += ct > 0;
    const double util = static_cast<double>(active) / n_q;
    epoch = e + 1;
    usage = counts;
    if (csv.is_open())
      csv << epoch << "," << mse * inv << "," << cb * inv << "," << cm * inv
          << "," << pc * inv << "," << tot * inv << "," << util << "\n";
    std::cout << "epoch " << epoch << " mse " << std::setprecision(6)
              << mse * inv << " total " << tot * inv << " utilization "
              << util << "\n";

    if (active < n_q && epoch < cfg.epochs) {
      // replace dead codes with fresh encoder fibers; their stale moments
      // go with them
      const Tensor fib = fiber_pool(model, data.items, data.temporal,
                                    cfg.codebook == "temporal", 4, rng);
      Tensor entries = cfg.codebook == "temporal" ? model.tq.entries
                                                  : model.vq.entries;
      const int dim = entries.dim(1);
      for (ParamSlot& s : opt.slots()) {
        if (s.name != "codebook.entries") continue;
        for (int k = 0; k < n_q; ++k) {
          if (counts[static_cast<std::size_t>(k)] > 0) continue;
          std::fill(s.m.begin() + k * dim, s.m.begin() + (k + 1) * dim, 0.0f);
          std::fill(s.v.begin() + k * dim, s.v.begin() + (k + 1) * dim, 0.0f);
        }
      }
      reseed_dead_codes(entries, counts, fib, rng);
    }
    if (!ckpt_path.empty()) save_checkpoint(snapshot(), ckpt_path);
  }
  if (!ckpt_path.empty()) save_checkpoint(snapshot(), ckpt_path);
}

double Trainer::eval_mse() {
  double sum = 0;
  for (const Tensor& item : data.items)
    sum += item_mse(model, item, data.temporal);
  return sum / static_cast<double>(data.items.size());
}

Utilization Trainer::eval_usage() {
  std::vector<int> all;
  for (const Tensor& item : data.items) {
    const QuantizationResult q = quantize_item(model, item, data.temporal);
    all.insert(all.end(), q.indices.begin(), q.indices.end());
  }
  return utilization(all, cfg.n_q);
}

Tensor encode_item(Tape& tape, Pipeline& model, const Tensor& item,
                   bool temporal) {
  if (!temporal) return model.encode(tape, item);
  SVQ_CHECK(item.rank() == 4 && item.dim(0) == model.cfg.T,
            "encode_item: expected [", model.cfg.T, ",C,H,W] frames, got ",
            shape_str(item.shape()));
  model.enc.reset_state();
  std::vector<Tensor> zs;
  for (int t = 0; t < model.cfg.T; ++t)
    zs.push_back(model.enc.step(tape, slice(tape, item, 0, t, 1)));
  return zs.size() == 1 ? zs[0] : concat(tape, zs, 0);
}

QuantizationResult quantize_item(Pipeline& model, const Tensor& item,
                                 bool temporal) {
  Tape tape;
  const Tensor z = encode_item(tape, model, item, temporal);
  return model.quantize(tape, z);
}

Tensor latents_from_indices(const Pipeline& model, const std::vector<int>& idx) {
  const ModelConfig& mc = model.cfg;
  const int T = mc.T, c = mc.latent_c, h = mc.latent_h(), w = mc.latent_w();
  Tensor zq = Tensor::zeros({T, c, h, w});
  if (mc.temporal_codebook) {
    SVQ_CHECK(static_cast<int>(idx.size()) == h * w,
              "latents_from_indices: got ", idx.size(), " indices, grid needs ",
              h * w);
    const float* e = model.tq.entries.data();
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const int k = idx[static_cast<std::size_t>(i * w + j)];
        SVQ_CHECK(k >= 0 && k < mc.n_q, "latents_from_indices: index ", k,
                  " outside [0,", mc.n_q, ")");
        for (int t = 0; t < T; ++t)
          for (int cc = 0; cc < c; ++cc)
            zq.data()[((t * c + cc) * h + i) * w + j] = e[(k * T + t) * c + cc];
      }
    return zq;
  }
  SVQ_CHECK(static_cast<int>(idx.size()) == T * h * w,
            "latents_from_indices: got ", idx.size(), " indices, grid needs ",
            T * h * w);
  const float* e = model.vq.entries.data();
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const int k = idx[static_cast<std::size_t>((t * h + i) * w + j)];
        SVQ_CHECK(k >= 0 && k < mc.n_q, "latents_from_indices: index ", k,
                  " outside [0,", mc.n_q, ")");
        for (int cc = 0; cc < c; ++cc)
          zq.data()[((t * c + cc) * h + i) * w + j] = e[k * c + cc];
      }
  return zq;
}

void cmd_train(const RunConfig& cfg_in, const std::string& resume_path) {
  RunConfig cfg = cfg_in;
  Checkpoint ck;
  bool resuming = false;
  if (!resume_path.empty()) {
    ck = load_checkpoint(resume_path);
    check_kind(ck, kCheckpointModel, resume_path);
    // the stored run continues; only the budget and output move
    RunConfig merged = ck.config;
    merged.epochs = cfg.epochs;
    merged.out_dir = cfg.out_dir;
    cfg = merged;
    resuming = true;
  }
  ensure_out_dir(cfg);
  Trainer tr(cfg);
  if (resuming) tr.restore(ck);
  const std::string ckpt_path = cfg.out_dir + "/model.svqc";
  tr.run(cfg.out_dir + "/metrics.csv", ckpt_path);
  const double final_mse = tr.eval_mse();
  const Utilization u = tr.eval_usage();
  std::cout << "saved " << ckpt_path << " (epoch " << tr.epoch << ", eval mse "
            << std::setprecision(6) << final_mse << ", utilization "
            << u.active_fraction << ")\n";
}

void cmd_train_prior(const std::string& model_ckpt,
                     const std::vector<std::string>& overrides) {
  const Checkpoint ck = load_checkpoint(model_ckpt);
  check_kind(ck, kCheckpointModel, model_ckpt);
  const RunConfig cfg = with_overrides(ck.config, overrides);
  cfg.validate();
  ensure_out_dir(cfg);

  Trainer stage(cfg);
  stage.restore(ck);

  IndexSequences seqs;
  seqs.n_q = cfg.n_q;
  const ModelConfig mc = cfg.model_config();
  seqs.t = cfg.codebook == "temporal" ? 1 : cfg.T;
  seqs.h = mc.latent_h();
  seqs.w = mc.latent_w();
  for (const Tensor& item : stage.data.items)
    seqs.seqs.push_back(
        quantize_item(stage.model, item, stage.data.temporal).indices);
  const std::string seq_path = cfg.out_dir + "/sequences.svqi";
  write_sequences(seqs, seq_path);
  std::cout << "wrote " << seqs.seqs.size() << " sequences of length "
            << seqs.t * seqs.h * seqs.w << " to " << seq_path << "\n";

  Rng prng(cfg.seed);
  TransformerPrior prior(cfg.prior_config(), prng);
  AdamWConfig oc;
  oc.lr = cfg.prior_lr;
  oc.weight_decay = cfg.weight_decay;
  AdamW popt(oc);
  prior.register_params(popt);

  std::ofstream csv = open_csv(cfg.out_dir + "/prior_metrics.csv", "step,nll");
  const std::size_t n = seqs.seqs.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t pos = n;
  const int report = std::max(1, cfg.prior_steps / 10);
  for (int step = 1; step <= cfg.prior_steps; ++step) {
    if (pos >= n) {
      prng.shuffle(order);
      pos = 0;
    }
    const std::size_t take =
        std::min<std::size_t>(static_cast<std::size_t>(cfg.batch), n - pos);
    std::vector<std::vector<int>> batch;
    for (std::size_t i = 0; i < take; ++i)
      batch.push_back(seqs.seqs[static_cast<std::size_t>(order[pos + i])]);
    pos += take;
    const double nll = prior_train_step(prior, batch, popt);
    csv << step << "," << nll << "\n";
    if (step % report == 0 || step == 1)
      std::cout << "step " << step << " nll " << std::setprecision(6) << nll
                << "\n";
  }
  const std::string out = cfg.out_dir + "/prior.svqc";
  save_checkpoint(make_checkpoint(kCheckpointPrior, cfg, popt, cfg.prior_steps,
                                  prng.state(), {}),
                  out);
  std::cout << "saved " << out << "\n";
}

void cmd_sample(const std::string& prior_ckpt, const std::string& model_ckpt,
                int n, const std::vector<std::string>& overrides) {
  const Checkpoint pck = load_checkpoint(prior_ckpt);
  check_kind(pck, kCheckpointPrior, prior_ckpt);
  const Checkpoint mck = load_checkpoint(model_ckpt);
  check_kind(mck, kCheckpointModel, model_ckpt);
  SVQ_CHECK(pck.config.n_q == mck.config.n_q, "sample: n_q mismatch: prior ",
            pck.config.n_q, ", first stage ", mck.config.n_q);
  SVQ_CHECK(pck.config.codebook == mck.config.codebook,
            "sample: codebook mismatch: prior trained over ",
            pck.config.codebook, ", first stage uses ", mck.config.codebook);
  SVQ_CHECK(pck.config.sequence_length() == mck.config.sequence_length(),
            "sample: sequence_length mismatch: prior ",
            pck.config.sequence_length(), ", first stage ",
            mck.config.sequence_length());
  SVQ_CHECK(n > 0, "sample: n must be positive");
  const RunConfig cfg = with_overrides(pck.config, overrides);
  ensure_out_dir(cfg);

  Pipeline model;
  FeatureExtractor mperc;
  AdamW mopt;
  {
    Rng tmp(0);
    model = Pipeline(mck.config.model_config(), tmp);
    mperc = build_extractor(mck.config);
    register_run_params(model, mperc, mopt);
    fill_from_checkpoint(mck, mopt);
  }
  TransformerPrior prior;
  AdamW popt;
  {
    Rng tmp(0);
    prior = TransformerPrior(pck.config.prior_config(), tmp);
    prior.register_params(popt);
    fill_from_checkpoint(pck, popt);
  }

  const ModelConfig mc = mck.config.model_config();
  const int gh = mck.config.codebook == "temporal" ? mc.latent_h()
                                                   : mc.T * mc.latent_h();
  const int gw = mc.latent_w();
  Rng rng(cfg.seed);
  std::ofstream manifest = open_csv(cfg.out_dir + "/manifest.csv", "sample,file");
  for (int i = 0; i < n; ++i) {
    const IndexGrid g =
        sample_indices(prior, gh, gw, cfg.temperature, cfg.top_k, rng);
    const Tensor zq = latents_from_indices(model, g.v);
    Tape tape;
    const Tensor img = model.decode(tape, zq);
    std::ostringstream stem;
    stem << cfg.out_dir << "/sample_" << std::setw(3) << std::setfill('0') << i;
    for (const std::string& f : write_frames(img, stem.str()))
      manifest << i << "," << f << "\n";
  }
  std::cout << "wrote " << n << " samples to " << cfg.out_dir << "\n";
}

void cmd_reconstruct(const std::string& model_ckpt, int n,
                     const std::vector<std::string>& overrides) {
  const Checkpoint ck = load_checkpoint(model_ckpt);
  check_kind(ck, kCheckpointModel, model_ckpt);
  SVQ_CHECK(n > 0, "reconstruct: n must be positive");
  const RunConfig cfg = with_overrides(ck.config, overrides);
  ensure_out_dir(cfg);
  Trainer tr(cfg);
  tr.restore(ck);

  std::ofstream csv = open_csv(cfg.out_dir + "/recon.csv", "sample,mse");
  const int count = std::min<int>(n, static_cast<int>(tr.data.items.size()));
  double sum = 0;
  for (int i = 0; i < count; ++i) {
    const Tensor& item = tr.data.items[static_cast<std::size_t>(i)];
    Tape tape;
    const ForwardResult r = tr.data.temporal
                                ? tr.model.forward_temporal(tape, item)
                                : tr.model.forward_static(tape, item);
    const double m = static_cast<double>(r.recon_loss.vec()[0]);
    sum += m;
    csv << i << "," << m << "\n";
    if (tr.data.temporal) {
      for (int t = 0; t < cfg.T; ++t) {
        write_frames(frame_of(item, t), cfg.out_dir + "/in_" +
                                            std::to_string(i) + "_t" +
                                            std::to_string(t));
        write_frames(frame_of(r.recon, t), cfg.out_dir + "/rec_" +
                                               std::to_string(i) + "_t" +
                                               std::to_string(t));
      }
    } else {
      write_frames(item, cfg.out_dir + "/in_" + std::to_string(i));
      write_frames(r.recon, cfg.out_dir + "/rec_" + std::to_string(i));
    }
  }
  std::cout << "reconstructed " << count << " samples, mean mse "
            << std::setprecision(6) << sum / count << "\n";
}

void cmd_ablate_destruction(const std::string& model_ckpt,
                            const std::vector<std::string>& overrides) {
  const Checkpoint ck = load_checkpoint(model_ckpt);
  check_kind(ck, kCheckpointModel, model_ckpt);
  const RunConfig cfg = with_overrides(ck.config, overrides);
  SVQ_CHECK(cfg.codebook == "temporal",
            "ablate-destruction: needs a temporal-codebook checkpoint");
  ensure_out_dir(cfg);
  Trainer tr(cfg);
  tr.restore(ck);

  Rng rng(cfg.seed);
  std::ofstream csv = open_csv(cfg.out_dir + "/destruction.csv", "p_d,mse");
  const int T = cfg.T;
  for (int k = 0; k <= T; ++k) {
    const float p_d = static_cast<float>(k) / static_cast<float>(T);
    double sum = 0;
    bool wrote_sample = false;
    for (const Tensor& item : tr.data.items) {
      Tape tape;
      const Tensor z = encode_item(tape, tr.model, item, tr.data.temporal);
      const QuantizationResult q = tr.model.quantize(tape, z);
      const Tensor broken = destroy_temporal(q.quantized, p_d, rng);
      if (tr.data.temporal) {
        const Tensor recon = tr.model.decode_temporal(tape, broken);
        sum += static_cast<double>(mse(tape, recon, item).vec()[0]);
        if (!wrote_sample)
          for (int t = 0; t < T; ++t)
            write_frames(frame_of(recon, t),
                         cfg.out_dir + "/pd" + std::to_string(k) + "_t" +
                             std::to_string(t));
      } else {
        const Tensor recon = tr.model.decode(tape, broken);
        sum += static_cast<double>(mse(tape, recon, item).vec()[0]);
        if (!wrote_sample)
          write_frames(recon, cfg.out_dir + "/pd" + std::to_string(k));
      }
      wrote_sample = true;
    }
    const double mean = sum / static_cast<double>(tr.data.items.size());
    csv << p_d << "," << mean << "\n";
    std::cout << "p_d " << std::setprecision(6) << p_d << " mse " << mean
              << "\n";
  }
}

void cmd_compare_codebooks(const RunConfig& cfg_in) {
  RunConfig cfg = cfg_in;
  SVQ_CHECK(cfg.dataset == "synthetic",
            "compare-codebooks: needs dataset=synthetic");
  cfg.validate();
  ensure_out_dir(cfg);
  const int ts[3] = {2, 4, 6};
  const char* kinds[2] = {"temporal", "vanilla"};
  double cell[2][3];
  for (int ki = 0; ki < 2; ++ki) {
    for (int ti = 0; ti < 3; ++ti) {
      RunConfig c = cfg;
      c.T = ts[ti];
      c.codebook = kinds[ki];
      Trainer tr(c);
      tr.run("", "");
      cell[ki][ti] = tr.eval_mse();
      std::cout << kinds[ki] << " T=" << ts[ti] << " mse "
                << std::setprecision(6) << cell[ki][ti] << " utilization "
                << tr.eval_usage().active_fraction << "\n";
    }
  }
  const std::string path = cfg.out_dir + "/compare.csv";
  std::ofstream csv = open_csv(path, "codebook,t2,t4,t6");
  for (int ki = 0; ki < 2; ++ki)
    csv << kinds[ki] << "," << cell[ki][0] << "," << cell[ki][1] << ","
        << cell[ki][2] << "\n";
  std::cout << "wrote " << path << "\n";
}

void cmd_export_heatmap(const std::string& model_ckpt,
                        const std::string& out_csv) {
  const Checkpoint ck = load_checkpoint(model_ckpt);
  check_kind(ck, kCheckpointModel, model_ckpt);
  SVQ_CHECK(ck.config.codebook == "temporal",
            "export-heatmap: needs a temporal-codebook checkpoint");
  Pipeline model;
  FeatureExtractor perc;
  AdamW opt;
  Rng tmp(0);
  model = Pipeline(ck.config.model_config(), tmp);
  perc = build_extractor(ck.config);
  register_run_params(model, perc, opt);
  fill_from_checkpoint(ck, opt);
  write_heatmap_csv(model.tq, out_csv);
  std::cout << "wrote " << out_csv << "\n";
}

void cmd_info(const std::string& ckpt_path) {
  const Checkpoint ck = load_checkpoint(ckpt_path);
  std::cout << "kind: " << kind_name(ck.kind) << "\n";
  std::cout << "epoch: " << ck.epoch << "\n";
  std::cout << "optimizer steps: " << ck.opt_step << "\n";
  std::size_t total = 0;
  for (const ParamBlob& b : ck.params) total += b.data.size();
  std::cout << "parameters: " << total << " across " << ck.params.size()
            << " tensors\n";
  for (const ParamBlob& b : ck.params)
    std::cout << "  " << b.name << " " << shape_str(b.shape) << " "
              << b.data.size() << "\n";
  if (!ck.usage.empty()) {
    int active = 0;
    for (std::int64_t c : ck.usage) active += c > 0;
    std::cout << "codebook utilization: " << active << "/" << ck.usage.size()
              << " entries active\n";
  }
  std::cout << "config:\n";
  std::istringstream cfg_text(ck.config.to_text());
  std::string line;
  while (std::getline(cfg_text, line)) std::cout << "  " << line << "\n";
}

}  // namespace svq
