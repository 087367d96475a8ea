#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svq/checkpoint.h"
#include "svq/config.h"
#include "svq/model.h"
#include "svq/prior.h"

namespace svq {

// Dataset resolved from config: [C,H,W] images (static) or [T,C,H,W]
// frame stacks (temporal).
struct LoadedData {
  std::vector<Tensor> items;
  bool temporal = false;
};

// Loads whatever cfg.dataset names; idx and events adopt their geometry
// into cfg before the model is built.
LoadedData load_dataset(RunConfig& cfg, Rng& rng);

// One first-stage training context: dataset, pipeline, perceptual
// extractor, optimizer, rng. Built fresh from config; restore() pours a
// checkpoint into it. Experiment commands drive cells through this class
// without touching the filesystem.
class Trainer {
 public:
  explicit Trainer(const RunConfig& cfg);

  void restore(const Checkpoint& ck);

  // Trains until cfg.epochs completed epochs, appending one row per epoch
  // to metrics_path and rewriting ckpt_path after every epoch. Empty paths
  // skip the corresponding output.
  void run(const std::string& metrics_path, const std::string& ckpt_path);

  double eval_mse();        // mean per-pixel reconstruction MSE, no updates
  Utilization eval_usage(); // codes selected across the whole dataset

  Checkpoint snapshot() const;

  RunConfig cfg;
  LoadedData data;
  Pipeline model;
  FeatureExtractor perc;
  AdamW opt;
  Rng rng;
  std::int64_t epoch = 0;            // completed epochs
  std::vector<std::int64_t> usage;   // last trained epoch's code histogram
};

// Encoder latents for one dataset item, static or temporal.
Tensor encode_item(Tape& tape, Pipeline& model, const Tensor& item,
                   bool temporal);
// Codebook indices for one item (values only).
QuantizationResult quantize_item(Pipeline& model, const Tensor& item,
                                 bool temporal);
// Entry lookup: index sequence (raster [h,w] or [T,h,w]) -> [T,c,h,w].
Tensor latents_from_indices(const Pipeline& model, const std::vector<int>& idx);

// Command bodies behind the CLI. Overrides are raw key=value pairs applied
// on top of the checkpoint's stored config.
void cmd_train(const RunConfig& cfg, const std::string& resume_path);
void cmd_train_prior(const std::string& model_ckpt,
                     const std::vector<std::string>& overrides);
void cmd_sample(const std::string& prior_ckpt, const std::string& model_ckpt,
                int n, const std::vector<std::string>& overrides);
void cmd_reconstruct(const std::string& model_ckpt, int n,
                     const std::vector<std::string>& overrides);
void cmd_ablate_destruction(const std::string& model_ckpt,
                            const std::vector<std::string>& overrides);
void cmd_compare_codebooks(const RunConfig& cfg);
void cmd_export_heatmap(const std::string& model_ckpt,
                        const std::string& out_csv);
void cmd_info(const std::string& ckpt_path);

}  // namespace svq
