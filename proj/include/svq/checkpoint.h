#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svq/adamw.h"
#include "svq/config.h"
#include "svq/tensor.h"

namespace svq {

inline constexpr int kCheckpointModel = 0;
inline constexpr int kCheckpointPrior = 1;

struct ParamBlob {
  std::string name;
  Shape shape;
  std::vector<float> data;
  std::vector<float> m, v;  // optimizer moments, same length as data
};

// Everything a run needs to continue: config snapshot, named parameters,
// optimizer moments, epoch counter, rng state, codebook usage histogram.
// All scalars little-endian, floats raw 32-bit.
struct Checkpoint {
  int kind = kCheckpointModel;
  RunConfig config;
  std::int64_t epoch = 0;
  std::int64_t opt_step = 0;
  std::string rng_state;
  std::vector<std::int64_t> usage;
  std::vector<ParamBlob> params;
};

Checkpoint make_checkpoint(int kind, const RunConfig& cfg, const AdamW& opt,
                           std::int64_t epoch, const std::string& rng_state,
                           const std::vector<std::int64_t>& usage);

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Pours saved params and moments into an optimizer whose registered slots
// must match by name and shape, and restores the step counter.
void fill_from_checkpoint(const Checkpoint& ck, AdamW& opt);

// Batch of same-length index sequences with the grid geometry needed to
// turn a sequence back into latents.
struct IndexSequences {
  int n_q = 0;
  int t = 0, h = 0, w = 0;  // grid dims; t=1 when one index covers all steps
  std::vector<std::vector<int>> seqs;  // each of length t*h*w
};

void write_sequences(const IndexSequences& s, const std::string& path);
IndexSequences load_sequences(const std::string& path);

}  // namespace svq
