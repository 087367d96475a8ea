#pragma once

#include <vector>

#include "svq/adamw.h"
#include "svq/ops.h"
#include "svq/rng.h"
#include "svq/tensor.h"

namespace svq {

struct PriorConfig {
  int n_q = 64;          // real vocabulary; BOS is appended as id n_q
  int layers = 4;
  int width = 128;
  int heads = 4;
  int context = 65;      // must cover h*w + 1 (BOS)
  float temperature = 1.0f;
  int top_k = 0;         // 0 keeps the full support
  void validate() const;
};

struct IndexGrid {
  std::vector<int> v;  // row-major
  int h = 0, w = 0;
};

// Row-major raster of the [h,w] index grid.
std::vector<int> flatten_indices(const IndexGrid& grid);
IndexGrid unflatten_indices(const std::vector<int>& seq, int h, int w);

// Decoder-only transformer with learned positions and pre-LN blocks. The
// head predicts real codes only; BOS is input-only.
class TransformerPrior {
 public:
  TransformerPrior() = default;
  TransformerPrior(const PriorConfig& cfg, Rng& rng);

  // Teacher-forced logits for every position: tokens (BOS allowed) -> [len, n_q].
  Tensor logits(Tape& tape, const std::vector<int>& tokens) const;

  int bos() const { return cfg.n_q; }
  void register_params(AdamW& opt);

  PriorConfig cfg;
  Tensor tok_emb;  // [n_q+1, width]
  Tensor pos_emb;  // [context, width]
  struct Block {
    Tensor ln1_g, ln1_b;
    Tensor wq, wk, wv, wo;      // [width, width]
    Tensor ln2_g, ln2_b;
    Tensor fc1_w, fc1_b;        // [width, 4*width], [4*width]
    Tensor fc2_w, fc2_b;        // [4*width, width], [width]
  };
  std::vector<Block> blocks;
  Tensor lnf_g, lnf_b;
  Tensor head_w;  // [width, n_q]
};

// Next-token distribution after BOS + prefix, softmax in double.
std::vector<double> prior_forward(const TransformerPrior& m,
                                  const std::vector<int>& prefix);

// Teacher-forced cross-entropy over every position of every sequence, one
// optimizer step; returns the mean NLL in nats.
double prior_train_step(TransformerPrior& m,
                        const std::vector<std::vector<int>>& batch,
                        AdamW& opt);

// Ancestral sampling from BOS. Ties and top_k=1 resolve to the lowest index.
IndexGrid sample_indices(const TransformerPrior& m, int h, int w,
                         float temperature, int top_k, Rng& rng);

}  // namespace svq
