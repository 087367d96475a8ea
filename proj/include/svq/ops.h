#pragma once

#include <vector>

#include "svq/tensor.h"

namespace svq {

// Elementwise, shapes must match exactly.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);

Tensor add_scalar(Tape& tape, const Tensor& a, float s);
Tensor mul_scalar(Tape& tape, const Tensor& a, float s);

// a: [leading..., suffix...], b: [suffix...]; adds b to every leading slice.
Tensor add_broadcast(Tape& tape, const Tensor& a, const Tensor& b);

// Scales x by a scalar-shaped tensor s (numel 1); gradient reaches both.
Tensor scale_by(Tape& tape, const Tensor& x, const Tensor& s);

Tensor relu(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor gelu(Tape& tape, const Tensor& x);

// [M,K] x [K,N] -> [M,N]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// [G,M,K] x [G,K,N] -> [G,M,N]
Tensor bmm(Tape& tape, const Tensor& a, const Tensor& b);

// x: [N,C,H,W], w: [F,C,kh,kw], bias: [F] or undefined.
Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias,
              int stride, int pad);
// x: [N,C,H,W], w: [C,F,kh,kw], bias: [F] or undefined. Exact adjoint of
// conv2d with the same weight buffer: <conv2d(x,w), y> == <x, conv_transpose2d(y,w)>.
Tensor conv_transpose2d(Tape& tape, const Tensor& x, const Tensor& w,
                        const Tensor& bias, int stride, int pad);

// Full reductions to a scalar; accumulation in double.
Tensor sum(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);

// Sum / mean of squared differences, double accumulation.
Tensor sse(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mse(Tape& tape, const Tensor& a, const Tensor& b);

Tensor concat(Tape& tape, const std::vector<Tensor>& parts, int axis);
Tensor slice(Tape& tape, const Tensor& x, int axis, int start, int len);
Tensor reshape(Tape& tape, const Tensor& x, const Shape& shape);
Tensor permute(Tape& tape, const Tensor& x, const std::vector<int>& axes);

// Softmax over the last axis; rows sum to 1.
Tensor softmax_lastdim(Tape& tape, const Tensor& x);

// logits: [N,V], targets: N class ids; mean negative log-likelihood in nats.
Tensor cross_entropy_logits(Tape& tape, const Tensor& logits,
                            const std::vector<int>& targets);

// Normalizes over the last axis; gain/bias: [D].
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain,
                  const Tensor& bias, float eps = 1e-5f);

// table: [V,D], ids in [0,V) -> [ids.size(), D].
Tensor embedding(Tape& tape, const Tensor& table, const std::vector<int>& ids);

// Value copy that blocks gradients (fresh leaf, requires_grad=false).
Tensor detach(const Tensor& x);

bool all_finite(const Tensor& x);

}  // namespace svq
