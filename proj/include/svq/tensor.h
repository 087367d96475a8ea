#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace svq {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Shared storage behind a Tensor handle. `grad` stays empty until backward
// touches the node. `on_grad_path` marks nodes whose value depends on some
// requires_grad leaf; kernels use it to skip dead gradient work.
struct TensorData {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;
  bool requires_grad = false;
  bool on_grad_path = false;
};

// Float32 n-dimensional array, row-major. Copies are shallow: two Tensors
// may alias the same storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& s, bool requires_grad = false);
  static Tensor full(const Shape& s, float v, bool requires_grad = false);
  static Tensor from_data(const Shape& s, std::vector<float> v,
                          bool requires_grad = false);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  int rank() const { return static_cast<int>(d_->shape.size()); }
  int dim(int i) const { return d_->shape[static_cast<size_t>(i)]; }
  std::size_t numel() const { return d_->data.size(); }

  float* data() { return d_->data.data(); }
  const float* data() const { return d_->data.data(); }
  std::vector<float>& vec() { return d_->data; }
  const std::vector<float>& vec() const { return d_->data; }

  // Value of a scalar (numel == 1) tensor.
  float item() const;

  bool requires_grad() const { return d_->requires_grad; }
  bool on_grad_path() const {
    return d_->on_grad_path || d_->requires_grad;
  }

  bool has_grad() const { return !d_->grad.empty(); }
  // Allocates a zero-filled grad buffer if absent.
  void ensure_grad();
  float* grad();
  const float* grad() const;
  void zero_grad();

  bool same_storage(const Tensor& o) const { return d_ == o.d_; }
  TensorData* node() const { return d_.get(); }

 private:
  std::shared_ptr<TensorData> d_;
};

// Define-by-run gradient tape. Records one step per primitive in execution
// order, which is a topological order by construction. backward() runs the
// recorded rules in reverse, restricted to steps that actually feed the
// loss; a second backward() without new recorded work is rejected.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Step {
    const char* name;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  // `backward` must add the output's grad contribution into each input's
  // grad buffer (allocated by the tape before the call).
  void record(const char* name, std::vector<Tensor> inputs, Tensor output,
              BackwardFn backward);

  void backward(const Tensor& loss);

  // Drops every recorded step, releasing intermediate buffers.
  void clear();

  std::size_t size() const { return steps_.size(); }
  const std::vector<Step>& steps() const { return steps_; }

 private:
  std::vector<Step> steps_;
  bool consumed_ = false;
};

}  // namespace svq
