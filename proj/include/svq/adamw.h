#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svq/tensor.h"

namespace svq {

struct AdamWConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.01f;
};

// One registered parameter with its moment buffers.
struct ParamSlot {
  std::string name;
  Tensor param;
  std::vector<float> m;
  std::vector<float> v;
};

class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  // Registers a requires_grad tensor under a unique name.
  void add_param(const std::string& name, const Tensor& p);

  // One decoupled-weight-decay update over all registered params.
  // A parameter with no grad buffer is treated as zero gradient.
  void step();
  void zero_grad();

  AdamWConfig& config() { return cfg_; }
  const AdamWConfig& config() const { return cfg_; }
  std::int64_t step_count() const { return step_; }
  void set_step_count(std::int64_t t) { step_ = t; }

  std::vector<ParamSlot>& slots() { return slots_; }
  const std::vector<ParamSlot>& slots() const { return slots_; }
  Tensor find(const std::string& name) const;

 private:
  AdamWConfig cfg_;
  std::vector<ParamSlot> slots_;
  std::int64_t step_ = 0;
};

}  // namespace svq
