#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svq/rng.h"
#include "svq/tensor.h"

namespace svq {

struct ImageDataset {
  std::vector<Tensor> images;  // each [C,H,W] in [0,1]
  std::vector<int> labels;     // empty or one per image
  int c = 0, h = 0, w = 0;
  std::size_t size() const { return images.size(); }
};

struct EventRecord {
  std::uint32_t t = 0;  // microseconds, non-decreasing in a stream
  std::uint16_t x = 0, y = 0;
  std::uint8_t p = 0;  // polarity
};

struct EventStream {
  std::vector<EventRecord> events;
  int width = 0, height = 0;
  void validate() const;
};

struct Trajectory {
  enum Kind { kBar, kDot } kind = kBar;
  int x0 = 0, y0 = 0;
  int vx = 0, vy = 0;
};

struct SpikeFrameDataset {
  std::vector<Tensor> samples;  // each [T,1,H,W], binary
  std::vector<Trajectory> trajectories;
  int T = 0, h = 0, w = 0;
  std::size_t size() const { return samples.size(); }
};

// IDX container (big-endian dims, raw bytes scaled to [0,1]).
ImageDataset load_idx(const std::string& path);
std::vector<int> load_idx_labels(const std::string& path);
void write_idx(const ImageDataset& ds, const std::string& path);
void write_idx_labels(const std::vector<int>& labels, const std::string& path);

// SVQE event container: magic, u16 sensor dims, then packed records.
EventStream load_events(const std::string& path);
void write_events(const EventStream& s, const std::string& path);

// OR-binarized presence per window: [T, 2, H, W]. Empty streams give zeros
// and log a warning. Window boundaries belong to the earlier window.
Tensor bin_events(const EventStream& s, int T);

// Bright bar or dot moving at constant velocity, binary frames, trajectory
// metadata kept for oracle checks.
SpikeFrameDataset synth_temporal(int n, int T, int h, int w, Rng& rng);

// Index batches covering {0..n-1} exactly once; final short batch included.
std::vector<std::vector<int>> batches(std::size_t n, int batch_size,
                                      bool shuffle, Rng& rng);

// Binary PGM (C=1) / PPM (C=3), 8-bit, round-to-nearest.
void write_image(const Tensor& img, const std::string& path);
Tensor read_image(const std::string& path);

}  // namespace svq
