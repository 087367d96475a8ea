#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "svq/model.h"
#include "svq/prior.h"

namespace svq {

// Problems with a run configuration (unknown keys, bad values, violated
// cross-field constraints). The CLI maps these to usage errors.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Every tunable in one flat key=value bag. Files and CLI overrides both go
// through set(); to_text() writes every key so snapshots round-trip.
struct RunConfig {
  // data
  std::string dataset = "synthetic";  // synthetic | idx | events
  std::string data_path;
  int samples = 128;  // synthetic dataset size
  int limit = 0;      // idx subset cap, 0 = all
  // temporal: frames change per step; static: one frame held for T steps
  std::string presentation = "temporal";

  // geometry
  int in_channels = 1;
  int image_h = 16, image_w = 16;

  // model
  int stem = 8;
  std::vector<int> stage_widths = {16, 16};
  int latent_c = 8;
  int n_q = 32;
  int T = 2;
  std::string codebook = "temporal";  // temporal | vanilla
  float beta = 0.25f;
  float lambda_p = 0.0f;
  std::string perceptual = "identity";  // identity | random

  // neuron
  float tau = 2.0f;
  float v_threshold = 1.0f;
  float v_reset = 0.0f;
  float surrogate_alpha = 2.0f;

  // optimization
  float lr = 2e-3f;
  float weight_decay = 0.0f;
  int batch = 8;
  int epochs = 20;
  std::uint64_t seed = 1;

  // ablation
  float p_d = 0.0f;

  // prior
  int prior_layers = 2;
  int prior_width = 64;
  int prior_heads = 4;
  float prior_lr = 1e-3f;
  int prior_steps = 300;
  float temperature = 1.0f;
  int top_k = 0;

  // output
  std::string out_dir = "runs/out";

  // Applies one key=value pair; ConfigError on unknown key or bad value.
  void set(const std::string& key, const std::string& value);
  void set_kv(const std::string& kv);  // "key=value" form

  std::string to_text() const;  // canonical, covers every key
  void validate() const;        // ConfigError on violated constraints

  ModelConfig model_config() const;
  // tokens per sample the prior must cover: h*w (temporal) or T*h*w (vanilla)
  int sequence_length() const;
  PriorConfig prior_config() const;
  bool temporal_input() const {
    return dataset != "idx" && presentation != "static";
  }
};

RunConfig parse_config_text(const std::string& text);
RunConfig load_config_file(const std::string& path);

// Same parsers, applied on top of an existing config.
void apply_config_text(RunConfig& cfg, const std::string& text);
void apply_config_file(RunConfig& cfg, const std::string& path);

// Named bundles of defaults applied before file/flag overrides.
void apply_preset(RunConfig& cfg, const std::string& name);

}  // namespace svq
