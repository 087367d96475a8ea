#include "svq/tensor.h"

#include <unordered_set>
#include <utility>

#include "svq/check.h"

namespace svq {

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor Tensor::zeros(const Shape& s, bool requires_grad) {
  return full(s, 0.0f, requires_grad);
}

Tensor Tensor::full(const Shape& s, float v, bool requires_grad) {
  for (int d : s) SVQ_CHECK(d > 0, "tensor: nonpositive dim in ", shape_str(s));
  Tensor t;
  t.d_ = std::make_shared<TensorData>();
  t.d_->shape = s;
  t.d_->data.assign(shape_numel(s), v);
  t.d_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from_data(const Shape& s, std::vector<float> v,
                         bool requires_grad) {
  SVQ_CHECK(v.size() == shape_numel(s), "tensor: data length ", v.size(),
            " does not match shape ", shape_str(s));
  Tensor t = zeros(s, requires_grad);
  t.d_->data = std::move(v);
  return t;
}

float Tensor::item() const {
  SVQ_CHECK(numel() == 1, "item: tensor is not scalar, shape ",
            shape_str(shape()));
  return d_->data[0];
}

void Tensor::ensure_grad() {
  if (d_->grad.empty()) d_->grad.assign(d_->data.size(), 0.0f);
}

float* Tensor::grad() {
  ensure_grad();
  return d_->grad.data();
}

const float* Tensor::grad() const {
  SVQ_CHECK(!d_->grad.empty(), "grad: no gradient buffer; run backward first");
  return d_->grad.data();
}

void Tensor::zero_grad() {
  if (!d_->grad.empty()) d_->grad.assign(d_->data.size(), 0.0f);
}

void Tape::record(const char* name, std::vector<Tensor> inputs, Tensor output,
                  BackwardFn backward) {
  bool path = false;
  for (const Tensor& in : inputs) {
    if (in.on_grad_path()) path = true;
  }
  output.node()->on_grad_path = path;
  steps_.push_back(
      Step{name, std::move(inputs), std::move(output), std::move(backward)});
  consumed_ = false;
}

void Tape::backward(const Tensor& loss) {
  SVQ_CHECK(loss.defined(), "backward: undefined loss");
  SVQ_CHECK(!steps_.empty(), "backward: tape is empty (cleared or no forward pass)");
  SVQ_CHECK(loss.numel() == 1, "backward: loss must be scalar, got shape ",
            shape_str(loss.shape()));
  SVQ_CHECK(!consumed_, "backward: tape already consumed; run a new forward pass");
  bool produced_here = false;
  for (const Step& s : steps_) {
    if (s.output.node() == loss.node()) produced_here = true;
  }
  SVQ_CHECK(produced_here,
            "backward: loss was not produced by this tape (stale tensor from "
            "a cleared tape?)");
  consumed_ = true;

  // Leaves recorded on the tape but not feeding the loss still get a zero
  // grad buffer, so "unreachable" reads as zero rather than absent.
  for (Step& s : steps_) {
    for (Tensor& in : s.inputs) {
      if (in.requires_grad()) in.ensure_grad();
    }
  }

  Tensor seed = loss;
  seed.ensure_grad();
  seed.grad()[0] += 1.0f;

  std::unordered_set<TensorData*> needed;
  needed.insert(seed.node());

  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
    if (!needed.count(it->output.node())) continue;
    if (!it->output.node()->on_grad_path && !it->output.requires_grad())
      continue;
    for (Tensor& in : it->inputs) {
      in.ensure_grad();
      needed.insert(in.node());
    }
    it->output.ensure_grad();
    it->backward();
  }
}

void Tape::clear() {
  steps_.clear();
  consumed_ = false;
}

}  // namespace svq
