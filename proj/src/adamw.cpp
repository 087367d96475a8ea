#include "svq/adamw.h"

#include <cmath>

#include "svq/check.h"

namespace svq {

void AdamW::add_param(const std::string& name, const Tensor& p) {
  SVQ_CHECK(p.defined(), "add_param: undefined tensor for '", name, "'");
  SVQ_CHECK(p.requires_grad(), "add_param: '", name, "' has requires_grad=false");
  for (const ParamSlot& s : slots_)
    SVQ_CHECK(s.name != name, "add_param: duplicate name '", name, "'");
  ParamSlot s;
  s.name = name;
  s.param = p;
  s.m.assign(p.numel(), 0.0f);
  s.v.assign(p.numel(), 0.0f);
  slots_.push_back(std::move(s));
}

void AdamW::step() {
  step_ += 1;
  const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(step_));
  for (ParamSlot& s : slots_) {
    float* p = s.param.data();
    const float* g = s.param.has_grad() ? s.param.grad() : nullptr;
    const std::size_t n = s.param.numel();
    for (std::size_t i = 0; i < n; ++i) {
      const float gi = g ? g[i] : 0.0f;
      SVQ_CHECK(std::isfinite(gi), "adamw: non-finite gradient in '", s.name,
                "' at element ", i);
      s.m[i] = cfg_.beta1 * s.m[i] + (1.0f - cfg_.beta1) * gi;
      s.v[i] = cfg_.beta2 * s.v[i] + (1.0f - cfg_.beta2) * gi * gi;
      const double mhat = s.m[i] / bc1;
      const double vhat = s.v[i] / bc2;
      p[i] -= static_cast<float>(cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps)) +
                                 cfg_.lr * cfg_.weight_decay * p[i]);
    }
  }
}

void AdamW::zero_grad() {
  for (ParamSlot& s : slots_) s.param.zero_grad();
}

Tensor AdamW::find(const std::string& name) const {
  for (const ParamSlot& s : slots_)
    if (s.name == name) return s.param;
  fail("optimizer has no parameter named '" + name + "'");
}

}  // namespace svq
