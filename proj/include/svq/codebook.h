#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svq/ops.h"
#include "svq/rng.h"
#include "svq/tensor.h"

namespace svq {

// N_q code vectors of dimension c, matched per (t,i,j) fiber.
struct VanillaCodebook {
  Tensor entries;  // [N_q, c]
  VanillaCodebook() = default;
  VanillaCodebook(int n_q, int c, Rng& rng);
  int n() const { return entries.dim(0); }
  int c() const { return entries.dim(1); }
};

// N_q code trajectories of shape [T, c] (stored flat per entry), matched
// per (i,j) against the full temporal fiber.
struct TemporalCodebook {
  Tensor entries;  // [N_q, T*c]
  int T = 0;
  int c = 0;
  TemporalCodebook() = default;
  TemporalCodebook(int n_q, int T, int c, Rng& rng);
  int n() const { return entries.dim(0); }
};

struct QuantizationResult {
  std::vector<int> indices;  // row-major over index_shape
  Shape index_shape;         // [T,h,w] for vanilla, [h,w] for temporal
  Tensor quantized;          // same shape as the input, fibers = entries
  Tensor codebook_term;      // ||sg(z) - z_q||^2, gradient into entries
  Tensor commit_term;        // ||z - sg(z_q)||^2, gradient into z (unweighted)
};

// Argmin over per-step c-dim fibers; ties break to the lowest index.
QuantizationResult quantize_vanilla(Tape& tape, const Tensor& z,
                                    const VanillaCodebook& q);
// Argmin over full [T*c] trajectories, one index per (i,j).
QuantizationResult quantize_temporal(Tape& tape, const Tensor& z,
                                     const TemporalCodebook& qt);

// ||sg(z) - z_q||^2 + beta*||z - sg(z_q)||^2 as one scalar.
Tensor codebook_loss(Tape& tape, const Tensor& z, const Tensor& z_q,
                     float beta);

// Forward value of z_q, identity Jacobian into z, nothing into z_q.
Tensor straight_through(Tape& tape, const Tensor& z, const Tensor& z_q);

// How destroy_temporal fills the selected slices.
enum class DestructionMode {
  kLastSlice,   // copy slice T-1 into each selected step
  kZeroSlice,   // zero the selected steps instead
};

// Replaces round(p_d*T) randomly chosen time slices (final step excluded
// from selection when possible). p_d must be a multiple of 1/T in [0,1].
Tensor destroy_temporal(const Tensor& z_q, float p_d, Rng& rng,
                        DestructionMode mode = DestructionMode::kLastSlice);

struct Utilization {
  std::vector<std::int64_t> counts;
  double active_fraction = 0.0;
};

Utilization utilization(const std::vector<int>& indices, int n_q);

// Mean |entry| per (t, k); row-major [T, N_q].
std::vector<double> heatmap(const TemporalCodebook& qt);
void write_heatmap_csv(const TemporalCodebook& qt, const std::string& path);

// Replaces entries with zero usage by random rows of `fibers`
// ([n, entry_dim]); returns how many were replaced.
int reseed_dead_codes(Tensor& entries, const std::vector<std::int64_t>& usage,
                      const Tensor& fibers, Rng& rng);

}  // namespace svq
