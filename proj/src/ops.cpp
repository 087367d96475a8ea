#include "svq/ops.h"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "svq/check.h"

namespace svq {

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  SVQ_CHECK(a.shape() == b.shape(), op, ": shape mismatch ",
            shape_str(a.shape()), " vs ", shape_str(b.shape()));
}

std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size());
  std::size_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<size_t>(i)] = acc;
    acc *= static_cast<std::size_t>(s[static_cast<size_t>(i)]);
  }
  return st;
}

Tensor unary_map(Tape& tape, const char* name, const Tensor& x,
                 float (*f)(float), float (*df)(float, float)) {
  Tensor out = Tensor::zeros(x.shape());
  const float* xd = x.data();
  float* od = out.data();
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) od[i] = f(xd[i]);
  Tensor xc = x, oc = out;
  tape.record(name, {x}, out, [xc, oc, df]() mutable {
    const float* g = oc.grad();
    const float* xd2 = xc.data();
    const float* od2 = oc.data();
    float* gx = xc.grad();
    const std::size_t m = xc.numel();
    for (std::size_t i = 0; i < m; ++i) gx[i] += g[i] * df(xd2[i], od2[i]);
  });
  return out;
}

}  // namespace

bool all_finite(const Tensor& x) {
  const float* d = x.data();
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if (!std::isfinite(d[i])) return false;
  }
  return true;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  Tensor ac = a, bc = b, oc = out;
  tape.record("add", {a, b}, out, [ac, bc, oc]() mutable {
    const float* g = oc.grad();
    float* ga = ac.grad();
    float* gb = bc.grad();
    const std::size_t m = oc.numel();
    for (std::size_t i = 0; i < m; ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  });
  return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  Tensor ac = a, bc = b, oc = out;
  tape.record("sub", {a, b}, out, [ac, bc, oc]() mutable {
    const float* g = oc.grad();
    float* ga = ac.grad();
    float* gb = bc.grad();
    const std::size_t m = oc.numel();
    for (std::size_t i = 0; i < m; ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  });
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  Tensor ac = a, bc = b, oc = out;
  tape.record("mul", {a, b}, out, [ac, bc, oc]() mutable {
    const float* g = oc.grad();
    float* ga = ac.grad();
    float* gb = bc.grad();
    const std::size_t m = oc.numel();
    for (std::size_t i = 0; i < m; ++i) {
      ga[i] += g[i] * bc.data()[i];
      gb[i] += g[i] * ac.data()[i];
    }
  });
  return out;
}

Tensor add_scalar(Tape& tape, const Tensor& a, float s) {
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + s;
  Tensor ac = a, oc = out;
  tape.record("add_scalar", {a}, out, [ac, oc]() mutable {
    const float* g = oc.grad();
    float* ga = ac.grad();
    const std::size_t m = oc.numel();
    for (std::size_t i = 0; i < m; ++i) ga[i] += g[i];
  });
  return out;
}

Tensor mul_scalar(Tape& tape, const Tensor& a, float s) {
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * s;
  Tensor ac = a, oc = out;
  tape.record("mul_scalar", {a}, out, [ac, oc, s]() mutable {
    const float* g = oc.grad();
    float* ga = ac.grad();
    const std::size_t m = oc.numel();
    for (std::size_t i = 0; i < m; ++i) ga[i] += g[i] * s;
  });
  return out;
}

Tensor add_broadcast(Tape& tape, const Tensor& a, const Tensor& b) {
  SVQ_CHECK(b.rank() <= a.rank(), "add_broadcast: rhs rank exceeds lhs, ",
            shape_str(a.shape()), " vs ", shape_str(b.shape()));
  const int off = a.rank() - b.rank();
  for (int i = 0; i < b.rank(); ++i) {
    SVQ_CHECK(a.dim(off + i) == b.dim(i),
              "add_broadcast: trailing shape mismatch ", shape_str(a.shape()),
              " vs ", shape_str(b.shape()));
  }
  const std::size_t inner = b.numel();
  const std::size_t outer = a.numel() / inner;
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    const float* ad = a.data() + o * inner;
    float* od = out.data() + o * inner;
    for (std::size_t i = 0; i < inner; ++i) od[i] = ad[i] + b.data()[i];
  }
  Tensor ac = a, bc = b, oc = out;
  tape.record("add_broadcast", {a, b}, out, [ac, bc, oc, outer, inner]() mutable {
    const float* g = oc.grad();
    float* ga = ac.grad();
    float* gb = bc.grad();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        ga[o * inner + i] += g[o * inner + i];
        gb[i] += g[o * inner + i];
      }
    }
  });
  return out;
}

Tensor scale_by(Tape& tape, const Tensor& x, const Tensor& s) {
  SVQ_CHECK(s.numel() == 1, "scale_by: scale must be scalar, got ",
            shape_str(s.shape()));
  Tensor out = Tensor::zeros(x.shape());
  const float sv = s.data()[0];
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] * sv;
  Tensor xc = x, sc = s, oc = out;
  tape.record("scale_by", {x, s}, out, [xc, sc, oc]() mutable {
    const float* g = oc.grad();
    float* gx = xc.grad();
    float* gs = sc.grad();
    const float sv2 = sc.data()[0];
    double acc = 0.0;
    const std::size_t m = xc.numel();
    for (std::size_t i = 0; i < m; ++i) {
      gx[i] += g[i] * sv2;
      acc += static_cast<double>(g[i]) * xc.data()[i];
    }
    gs[0] += static_cast<float>(acc);
  });
  return out;
}

Tensor relu(Tape& tape, const Tensor& x) {
  return unary_map(
      tape, "relu", x, [](float v) { return v > 0.0f ? v : 0.0f; },
      [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; });
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  return unary_map(
      tape, "sigmoid", x,
      [](float v) { return 1.0f / (1.0f + std::exp(-v)); },
      [](float, float y) { return y * (1.0f - y); });
}

Tensor gelu(Tape& tape, const Tensor& x) {
  // tanh approximation
  constexpr float k = 0.7978845608028654f;  // sqrt(2/pi)
  constexpr float c = 0.044715f;
  return unary_map(
      tape, "gelu", x,
      [](float v) {
        float u = k * (v + c * v * v * v);
        return 0.5f * v * (1.0f + std::tanh(u));
      },
      [](float v, float) {
        float u = k * (v + c * v * v * v);
        float t = std::tanh(u);
        float du = k * (1.0f + 3.0f * c * v * v);
        return 0.5f * (1.0f + t) + 0.5f * v * (1.0f - t * t) * du;
      });
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  SVQ_CHECK(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
            "matmul: incompatible shapes ", shape_str(a.shape()), " vs ",
            shape_str(b.shape()));
  const int M = a.dim(0), K = a.dim(1), N = b.dim(1);
  Tensor out = Tensor::zeros({M, N});
  const float* ad = a.data();
  const float* bd = b.data();
  float* od = out.data();
  for (int i = 0; i < M; ++i) {
    for (int k = 0; k < K; ++k) {
      const float av = ad[i * K + k];
      if (av == 0.0f) continue;
      const float* br = bd + k * N;
      float* orow = od + i * N;
      for (int j = 0; j < N; ++j) orow[j] += av * br[j];
    }
  }
  const bool need_da = a.on_grad_path();
  const bool need_db = b.on_grad_path();
  Tensor ac = a, bc = b, oc = out;
  tape.record("matmul", {a, b}, out,
              [ac, bc, oc, M, K, N, need_da, need_db]() mutable {
                const float* g = oc.grad();
                if (need_da) {
                  float* ga = ac.grad();
                  const float* bd2 = bc.data();
                  for (int i = 0; i < M; ++i)
                    for (int j = 0; j < N; ++j) {
                      const float gv = g[i * N + j];
                      if (gv == 0.0f) continue;
                      for (int k = 0; k < K; ++k)
                        ga[i * K + k] += gv * bd2[k * N + j];
                    }
                }
                if (need_db) {
                  float* gb = bc.grad();
                  const float* ad2 = ac.data();
                  for (int i = 0; i < M; ++i)
                    for (int k = 0; k < K; ++k) {
                      const float av = ad2[i * K + k];
                      if (av == 0.0f) continue;
                      for (int j = 0; j < N; ++j)
                        gb[k * N + j] += av * g[i * N + j];
                    }
                }
              });
  return out;
}

Tensor bmm(Tape& tape, const Tensor& a, const Tensor& b) {
  SVQ_CHECK(a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0) &&
                a.dim(2) == b.dim(1),
            "bmm: incompatible shapes ", shape_str(a.shape()), " vs ",
            shape_str(b.shape()));
  const int G = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(2);
  Tensor out = Tensor::zeros({G, M, N});
  for (int gidx = 0; gidx < G; ++gidx) {
    const float* ad = a.data() + static_cast<std::size_t>(gidx) * M * K;
    const float* bd = b.data() + static_cast<std::size_t>(gidx) * K * N;
    float* od = out.data() + static_cast<std::size_t>(gidx) * M * N;
    for (int i = 0; i < M; ++i)
      for (int k = 0; k < K; ++k) {
        const float av = ad[i * K + k];
        if (av == 0.0f) continue;
        for (int j = 0; j < N; ++j) od[i * N + j] += av * bd[k * N + j];
      }
  }
  const bool need_da = a.on_grad_path();
  const bool need_db = b.on_grad_path();
  Tensor ac = a, bc = b, oc = out;
  tape.record("bmm", {a, b}, out,
              [ac, bc, oc, G, M, K, N, need_da, need_db]() mutable {
                for (int gidx = 0; gidx < G; ++gidx) {
                  const float* g = oc.grad() + static_cast<std::size_t>(gidx) * M * N;
                  const float* ad = ac.data() + static_cast<std::size_t>(gidx) * M * K;
                  const float* bd = bc.data() + static_cast<std::size_t>(gidx) * K * N;
                  if (need_da) {
                    float* ga = ac.grad() + static_cast<std::size_t>(gidx) * M * K;
                    for (int i = 0; i < M; ++i)
                      for (int j = 0; j < N; ++j) {
                        const float gv = g[i * N + j];
                        if (gv == 0.0f) continue;
                        for (int k = 0; k < K; ++k)
                          ga[i * K + k] += gv * bd[k * N + j];
                      }
                  }
                  if (need_db) {
                    float* gb = bc.grad() + static_cast<std::size_t>(gidx) * K * N;
                    for (int i = 0; i < M; ++i)
                      for (int k = 0; k < K; ++k) {
                        const float av = ad[i * K + k];
                        if (av == 0.0f) continue;
                        for (int j = 0; j < N; ++j)
                          gb[k * N + j] += av * g[i * N + j];
                      }
                  }
                }
              });
  return out;
}

Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias,
              int stride, int pad) {
  SVQ_CHECK(x.rank() == 4 && w.rank() == 4 && x.dim(1) == w.dim(1),
            "conv2d: incompatible shapes ", shape_str(x.shape()), " vs ",
            shape_str(w.shape()));
  SVQ_CHECK(stride >= 1 && pad >= 0, "conv2d: bad stride/pad ", stride, "/", pad);
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int F = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  const int OH = (H + 2 * pad - KH) / stride + 1;
  const int OW = (W + 2 * pad - KW) / stride + 1;
  SVQ_CHECK(H + 2 * pad >= KH && W + 2 * pad >= KW,
            "conv2d: kernel larger than padded input");
  if (bias.defined())
    SVQ_CHECK(bias.rank() == 1 && bias.dim(0) == F,
              "conv2d: bias shape ", shape_str(bias.shape()), " vs F=", F);

  Tensor out = Tensor::zeros({N, F, OH, OW});
  const float* xd = x.data();
  const float* wd = w.data();
  float* od = out.data();
  for (int n = 0; n < N; ++n)
    for (int f = 0; f < F; ++f) {
      const float bv = bias.defined() ? bias.data()[f] : 0.0f;
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          float acc = bv;
          for (int c = 0; c < C; ++c)
            for (int ky = 0; ky < KH; ++ky) {
              const int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= H) continue;
              for (int kx = 0; kx < KW; ++kx) {
                const int ix = ox * stride - pad + kx;
                if (ix < 0 || ix >= W) continue;
                acc += xd[((n * C + c) * H + iy) * W + ix] *
                       wd[((f * C + c) * KH + ky) * KW + kx];
              }
            }
          od[((n * F + f) * OH + oy) * OW + ox] = acc;
        }
    }

  const bool need_dx = x.on_grad_path();
  const bool need_dw = w.on_grad_path();
  const bool need_db = bias.defined() && bias.on_grad_path();
  std::vector<Tensor> ins = {x, w};
  if (bias.defined()) ins.push_back(bias);
  Tensor xc = x, wc = w, bc = bias, oc = out;
  tape.record("conv2d", std::move(ins), out, [xc, wc, bc, oc, N, C, H, W, F,
                                              KH, KW, OH, OW, stride, pad,
                                              need_dx, need_dw, need_db]() mutable {
    const float* g = oc.grad();
    const float* xd2 = xc.data();
    const float* wd2 = wc.data();
    float* gx = need_dx ? xc.grad() : nullptr;
    float* gw = need_dw ? wc.grad() : nullptr;
    for (int n = 0; n < N; ++n)
      for (int f = 0; f < F; ++f)
        for (int oy = 0; oy < OH; ++oy)
          for (int ox = 0; ox < OW; ++ox) {
            const float gv = g[((n * F + f) * OH + oy) * OW + ox];
            if (gv == 0.0f) continue;
            for (int c = 0; c < C; ++c)
              for (int ky = 0; ky < KH; ++ky) {
                const int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= H) continue;
                for (int kx = 0; kx < KW; ++kx) {
                  const int ix = ox * stride - pad + kx;
                  if (ix < 0 || ix >= W) continue;
                  const std::size_t xi = ((n * C + c) * H + iy) * W + ix;
                  const std::size_t wi = ((f * C + c) * KH + ky) * KW + kx;
                  if (gx) gx[xi] += gv * wd2[wi];
                  if (gw) gw[wi] += gv * xd2[xi];
                }
              }
          }
    if (need_db) {
      float* gb = bc.grad();
      for (int n = 0; n < N; ++n)
        for (int f = 0; f < F; ++f) {
          double acc = 0.0;
          for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox)
              acc += g[((n * F + f) * OH + oy) * OW + ox];
          gb[f] += static_cast<float>(acc);
        }
    }
  });
  return out;
}

Tensor conv_transpose2d(Tape& tape, const Tensor& x, const Tensor& w,
                        const Tensor& bias, int stride, int pad) {
  SVQ_CHECK(x.rank() == 4 && w.rank() == 4 && x.dim(1) == w.dim(0),
            "conv_transpose2d: incompatible shapes ", shape_str(x.shape()),
            " vs ", shape_str(w.shape()));
  SVQ_CHECK(stride >= 1 && pad >= 0, "conv_transpose2d: bad stride/pad ",
            stride, "/", pad);
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int F = w.dim(1), KH = w.dim(2), KW = w.dim(3);
  const int OH = (H - 1) * stride - 2 * pad + KH;
  const int OW = (W - 1) * stride - 2 * pad + KW;
  SVQ_CHECK(OH > 0 && OW > 0, "conv_transpose2d: empty output for input ",
            shape_str(x.shape()));
  if (bias.defined())
    SVQ_CHECK(bias.rank() == 1 && bias.dim(0) == F,
              "conv_transpose2d: bias shape ", shape_str(bias.shape()),
              " vs F=", F);

  Tensor out = Tensor::zeros({N, F, OH, OW});
  const float* xd = x.data();
  const float* wd = w.data();
  float* od = out.data();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int iy = 0; iy < H; ++iy)
        for (int ix = 0; ix < W; ++ix) {
          const float v = xd[((n * C + c) * H + iy) * W + ix];
          if (v == 0.0f) continue;
          for (int f = 0; f < F; ++f)
            for (int ky = 0; ky < KH; ++ky) {
              const int oy = iy * stride - pad + ky;
              if (oy < 0 || oy >= OH) continue;
              for (int kx = 0; kx < KW; ++kx) {
                const int ox = ix * stride - pad + kx;
                if (ox < 0 || ox >= OW) continue;
                od[((n * F + f) * OH + oy) * OW + ox] +=
                    v * wd[((c * F + f) * KH + ky) * KW + kx];
              }
            }
        }
  if (bias.defined()) {
    for (int n = 0; n < N; ++n)
      for (int f = 0; f < F; ++f) {
        const float bv = bias.data()[f];
        float* plane = od + ((static_cast<std::size_t>(n) * F + f) * OH) * OW;
        for (int i = 0; i < OH * OW; ++i) plane[i] += bv;
      }
  }

  const bool need_dx = x.on_grad_path();
  const bool need_dw = w.on_grad_path();
  const bool need_db = bias.defined() && bias.on_grad_path();
  std::vector<Tensor> ins = {x, w};
  if (bias.defined()) ins.push_back(bias);
  Tensor xc = x, wc = w, bc = bias, oc = out;
  tape.record("conv_transpose2d", std::move(ins), out,
              [xc, wc, bc, oc, N, C, H, W, F, KH, KW, OH, OW, stride, pad,
               need_dx, need_dw, need_db]() mutable {
    const float* g = oc.grad();
    const float* xd2 = xc.data();
    const float* wd2 = wc.data();
    float* gx = need_dx ? xc.grad() : nullptr;
    float* gw = need_dw ? wc.grad() : nullptr;
    if (gx || gw) {
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
          for (int iy = 0; iy < H; ++iy)
            for (int ix = 0; ix < W; ++ix) {
              const std::size_t xi = ((n * C + c) * H + iy) * W + ix;
              float acc = 0.0f;
              for (int f = 0; f < F; ++f)
                for (int ky = 0; ky < KH; ++ky) {
                  const int oy = iy * stride - pad + ky;
                  if (oy < 0 || oy >= OH) continue;
                  for (int kx = 0; kx < KW; ++kx) {
                    const int ox = ix * stride - pad + kx;
                    if (ox < 0 || ox >= OW) continue;
                    const float gv = g[((n * F + f) * OH + oy) * OW + ox];
                    const std::size_t wi = ((c * F + f) * KH + ky) * KW + kx;
                    if (gx) acc += gv * wd2[wi];
                    if (gw) gw[wi] += gv * xd2[xi];
                  }
                }
              if (gx) gx[xi] += acc;
            }
    }
    if (need_db) {
      float* gb = bc.grad();
      for (int n = 0; n < N; ++n)
        for (int f = 0; f < F; ++f) {
          double acc = 0.0;
          const float* plane = g + ((static_cast<std::size_t>(n) * F + f) * OH) * OW;
          for (int i = 0; i < OH * OW; ++i) acc += plane[i];
          gb[f] += static_cast<float>(acc);
        }
    }
  });
  return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) acc += x.data()[i];
  Tensor out = Tensor::from_data({1}, {static_cast<float>(acc)});
  Tensor xc = x, oc = out;
  tape.record("sum", {x}, out, [xc, oc]() mutable {
    const float g = oc.grad()[0];
    float* gx = xc.grad();
    for (std::size_t i = 0; i < xc.numel(); ++i) gx[i] += g;
  });
  return out;
}

Tensor mean(Tape& tape, const Tensor& x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) acc += x.data()[i];
  const double inv = 1.0 / static_cast<double>(x.numel());
  Tensor out = Tensor::from_data({1}, {static_cast<float>(acc * inv)});
  Tensor xc = x, oc = out;
  tape.record("mean", {x}, out, [xc, oc, inv]() mutable {
    const float g = oc.grad()[0] * static_cast<float>(inv);
    float* gx = xc.grad();
    for (std::size_t i = 0; i < xc.numel(); ++i) gx[i] += g;
  });
  return out;
}

Tensor sse(Tape& tape, const Tensor& a, const Tensor& b) {
  check_same_shape("sse", a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - b.data()[i];
    acc += d * d;
  }
  Tensor out = Tensor::from_data({1}, {static_cast<float>(acc)});
  Tensor ac = a, bc = b, oc = out;
  tape.record("sse", {a, b}, out, [ac, bc, oc]() mutable {
    const float g = oc.grad()[0];
    float* ga = ac.grad();
    float* gb = bc.grad();
    for (std::size_t i = 0; i < ac.numel(); ++i) {
      const float d = 2.0f * (ac.data()[i] - bc.data()[i]) * g;
      ga[i] += d;
      gb[i] -= d;
    }
  });
  return out;
}

Tensor mse(Tape& tape, const Tensor& a, const Tensor& b) {
  check_same_shape("mse", a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - b.data()[i];
    acc += d * d;
  }
  const double inv = 1.0 / static_cast<double>(a.numel());
  Tensor out = Tensor::from_data({1}, {static_cast<float>(acc * inv)});
  Tensor ac = a, bc = b, oc = out;
  tape.record("mse", {a, b}, out, [ac, bc, oc, inv]() mutable {
    const float g = oc.grad()[0] * static_cast<float>(inv);
    float* ga = ac.grad();
    float* gb = bc.grad();
    for (std::size_t i = 0; i < ac.numel(); ++i) {
      const float d = 2.0f * (ac.data()[i] - bc.data()[i]) * g;
      ga[i] += d;
      gb[i] -= d;
    }
  });
  return out;
}

Tensor concat(Tape& tape, const std::vector<Tensor>& parts, int axis) {
  SVQ_CHECK(!parts.empty(), "concat: no inputs");
  const Shape& s0 = parts[0].shape();
  SVQ_CHECK(axis >= 0 && axis < static_cast<int>(s0.size()),
            "concat: axis ", axis, " out of range for ", shape_str(s0));
  int total = 0;
  for (const Tensor& p : parts) {
    SVQ_CHECK(p.rank() == static_cast<int>(s0.size()),
              "concat: rank mismatch ", shape_str(p.shape()), " vs ",
              shape_str(s0));
    for (int i = 0; i < p.rank(); ++i) {
      if (i == axis) continue;
      SVQ_CHECK(p.dim(i) == s0[static_cast<size_t>(i)],
                "concat: shape mismatch ", shape_str(p.shape()), " vs ",
                shape_str(s0), " (axis ", axis, ")");
    }
    total += p.dim(axis);
  }
  Shape os = s0;
  os[static_cast<size_t>(axis)] = total;
  Tensor out = Tensor::zeros(os);

  std::size_t inner = 1;
  for (int i = axis + 1; i < static_cast<int>(os.size()); ++i)
    inner *= static_cast<std::size_t>(os[static_cast<size_t>(i)]);
  std::size_t outer = 1;
  for (int i = 0; i < axis; ++i)
    outer *= static_cast<std::size_t>(os[static_cast<size_t>(i)]);

  std::vector<std::size_t> offsets(parts.size());
  std::size_t run = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    offsets[p] = run;
    run += static_cast<std::size_t>(parts[p].dim(axis));
  }
  const std::size_t out_axis = static_cast<std::size_t>(total);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const std::size_t len = static_cast<std::size_t>(parts[p].dim(axis));
    const float* src = parts[p].data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::memcpy(out.data() + (o * out_axis + offsets[p]) * inner,
                  src + o * len * inner, len * inner * sizeof(float));
    }
  }
  std::vector<Tensor> pc = parts;
  Tensor oc = out;
  tape.record("concat", parts, out,
              [pc, oc, offsets, outer, inner, out_axis]() mutable {
                const float* g = oc.grad();
                for (std::size_t p = 0; p < pc.size(); ++p) {
                  const std::size_t len =
                      pc[p].numel() / (outer * inner);
                  float* gp = pc[p].grad();
                  for (std::size_t o = 0; o < outer; ++o) {
                    const float* gsrc = g + (o * out_axis + offsets[p]) * inner;
                    float* gdst = gp + o * len * inner;
                    for (std::size_t i = 0; i < len * inner; ++i)
                      gdst[i] += gsrc[i];
                  }
                }
              });
  return out;
}

Tensor slice(Tape& tape, const Tensor& x, int axis, int start, int len) {
  SVQ_CHECK(axis >= 0 && axis < x.rank(), "slice: axis ", axis,
            " out of range for ", shape_str(x.shape()));
  SVQ_CHECK(start >= 0 && len > 0 && start + len <= x.dim(axis),
            "slice: range [", start, ",", start + len, ") outside axis ",
            axis, " of ", shape_str(x.shape()));
  Shape os = x.shape();
  os[static_cast<size_t>(axis)] = len;
  Tensor out = Tensor::zeros(os);

  std::size_t inner = 1;
  for (int i = axis + 1; i < x.rank(); ++i)
    inner *= static_cast<std::size_t>(x.dim(i));
  std::size_t outer = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(x.dim(i));
  const std::size_t in_axis = static_cast<std::size_t>(x.dim(axis));
  const std::size_t ulen = static_cast<std::size_t>(len);
  const std::size_t ustart = static_cast<std::size_t>(start);

  for (std::size_t o = 0; o < outer; ++o) {
    std::memcpy(out.data() + o * ulen * inner,
                x.data() + (o * in_axis + ustart) * inner,
                ulen * inner * sizeof(float));
  }
  Tensor xc = x, oc = out;
  tape.record("slice", {x}, out,
              [xc, oc, outer, inner, in_axis, ulen, ustart]() mutable {
                const float* g = oc.grad();
                float* gx = xc.grad();
                for (std::size_t o = 0; o < outer; ++o) {
                  float* dst = gx + (o * in_axis + ustart) * inner;
                  const float* src = g + o * ulen * inner;
                  for (std::size_t i = 0; i < ulen * inner; ++i)
                    dst[i] += src[i];
                }
              });
  return out;
}

Tensor reshape(Tape& tape, const Tensor& x, const Shape& shape) {
  SVQ_CHECK(shape_numel(shape) == x.numel(), "reshape: ",
            shape_str(x.shape()), " to ", shape_str(shape),
            " changes element count");
  Tensor out = Tensor::from_data(shape, x.vec());
  Tensor xc = x, oc = out;
  tape.record("reshape", {x}, out, [xc, oc]() mutable {
    const float* g = oc.grad();
    float* gx = xc.grad();
    for (std::size_t i = 0; i < xc.numel(); ++i) gx[i] += g[i];
  });
  return out;
}

Tensor permute(Tape& tape, const Tensor& x, const std::vector<int>& axes) {
  SVQ_CHECK(static_cast<int>(axes.size()) == x.rank(),
            "permute: axes count ", axes.size(), " vs rank ", x.rank());
  std::vector<bool> seen(axes.size(), false);
  Shape os(axes.size());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    const int a = axes[i];
    SVQ_CHECK(a >= 0 && a < x.rank() && !seen[static_cast<size_t>(a)],
              "permute: bad axis list");
    seen[static_cast<size_t>(a)] = true;
    os[i] = x.dim(a);
  }
  Tensor out = Tensor::zeros(os);
  const auto xst = row_major_strides(x.shape());
  const auto ost = row_major_strides(os);
  const std::size_t n = x.numel();
  const int r = x.rank();
  // out[i0,..] = x[axes[i0],..]: walk output linearly, map back to input.
  std::vector<std::size_t> in_stride_for_out(axes.size());
  for (std::size_t i = 0; i < axes.size(); ++i)
    in_stride_for_out[i] = xst[static_cast<size_t>(axes[i])];
  float* od = out.data();
  const float* xd = x.data();
  for (std::size_t lin = 0; lin < n; ++lin) {
    std::size_t rem = lin, xoff = 0;
    for (int i = 0; i < r; ++i) {
      const std::size_t q = rem / ost[static_cast<size_t>(i)];
      rem %= ost[static_cast<size_t>(i)];
      xoff += q * in_stride_for_out[static_cast<size_t>(i)];
    }
    od[lin] = xd[xoff];
  }
  Tensor xc = x, oc = out;
  tape.record("permute", {x}, out,
              [xc, oc, ost, in_stride_for_out, r]() mutable {
                const float* g = oc.grad();
                float* gx = xc.grad();
                const std::size_t m = oc.numel();
                for (std::size_t lin = 0; lin < m; ++lin) {
                  std::size_t rem = lin, xoff = 0;
                  for (int i = 0; i < r; ++i) {
                    const std::size_t q = rem / ost[static_cast<size_t>(i)];
                    rem %= ost[static_cast<size_t>(i)];
                    xoff += q * in_stride_for_out[static_cast<size_t>(i)];
                  }
                  gx[xoff] += g[lin];
                }
              });
  return out;
}

Tensor softmax_lastdim(Tape& tape, const Tensor& x) {
  SVQ_CHECK(x.rank() >= 1, "softmax: rank-0 input");
  const std::size_t V = static_cast<std::size_t>(x.dim(x.rank() - 1));
  const std::size_t rows = x.numel() / V;
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = x.data() + r * V;
    float* orow = out.data() + r * V;
    float mx = xr[0];
    for (std::size_t i = 1; i < V; ++i) mx = std::max(mx, xr[i]);
    double denom = 0.0;
    for (std::size_t i = 0; i < V; ++i) {
      const double e = std::exp(static_cast<double>(xr[i]) - mx);
      orow[i] = static_cast<float>(e);
      denom += e;
    }
    const double inv = 1.0 / denom;
    for (std::size_t i = 0; i < V; ++i)
      orow[i] = static_cast<float>(orow[i] * inv);
  }
  Tensor xc = x, oc = out;
  tape.record("softmax", {x}, out, [xc, oc, rows, V]() mutable {
    const float* g = oc.grad();
    const float* y = oc.data();
    float* gx = xc.grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const float* gr = g + r * V;
      const float* yr = y + r * V;
      float* gxr = gx + r * V;
      double dot = 0.0;
      for (std::size_t i = 0; i < V; ++i)
        dot += static_cast<double>(gr[i]) * yr[i];
      for (std::size_t i = 0; i < V; ++i)
        gxr[i] += yr[i] * (gr[i] - static_cast<float>(dot));
    }
  });
  return out;
}

Tensor cross_entropy_logits(Tape& tape, const Tensor& logits,
                            const std::vector<int>& targets) {
  SVQ_CHECK(logits.rank() == 2, "cross_entropy: logits must be [N,V], got ",
            shape_str(logits.shape()));
  const std::size_t N = static_cast<std::size_t>(logits.dim(0));
  const std::size_t V = static_cast<std::size_t>(logits.dim(1));
  SVQ_CHECK(targets.size() == N, "cross_entropy: ", targets.size(),
            " targets for ", N, " rows");
  for (std::size_t i = 0; i < N; ++i)
    SVQ_CHECK(targets[i] >= 0 && static_cast<std::size_t>(targets[i]) < V,
              "cross_entropy: target ", targets[i], " out of range at row ", i);

  double total = 0.0;
  for (std::size_t r = 0; r < N; ++r) {
    const float* xr = logits.data() + r * V;
    float mx = xr[0];
    for (std::size_t i = 1; i < V; ++i) mx = std::max(mx, xr[i]);
    double denom = 0.0;
    for (std::size_t i = 0; i < V; ++i)
      denom += std::exp(static_cast<double>(xr[i]) - mx);
    total += std::log(denom) + mx - xr[static_cast<size_t>(targets[r])];
  }
  Tensor out = Tensor::from_data({1}, {static_cast<float>(total / N)});
  Tensor lc = logits, oc = out;
  tape.record("cross_entropy", {logits}, out, [lc, oc, targets, N, V]() mutable {
    const float g = oc.grad()[0] / static_cast<float>(N);
    float* gl = lc.grad();
    for (std::size_t r = 0; r < N; ++r) {
      const float* xr = lc.data() + r * V;
      float mx = xr[0];
      for (std::size_t i = 1; i < V; ++i) mx = std::max(mx, xr[i]);
      double denom = 0.0;
      for (std::size_t i = 0; i < V; ++i)
        denom += std::exp(static_cast<double>(xr[i]) - mx);
      const double inv = 1.0 / denom;
      float* gr = gl + r * V;
      for (std::size_t i = 0; i < V; ++i) {
        const float p = static_cast<float>(
            std::exp(static_cast<double>(xr[i]) - mx) * inv);
        gr[i] += g * (p - (static_cast<std::size_t>(targets[r]) == i ? 1.0f : 0.0f));
      }
    }
  });
  return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain,
                  const Tensor& bias, float eps) {
  SVQ_CHECK(x.rank() >= 1, "layer_norm: rank-0 input");
  const std::size_t D = static_cast<std::size_t>(x.dim(x.rank() - 1));
  SVQ_CHECK(gain.rank() == 1 && static_cast<std::size_t>(gain.dim(0)) == D &&
                bias.rank() == 1 && static_cast<std::size_t>(bias.dim(0)) == D,
            "layer_norm: gain/bias must be [", D, "]");
  const std::size_t rows = x.numel() / D;
  Tensor out = Tensor::zeros(x.shape());
  // xhat per row is recomputed in backward from saved inv_std and mean.
  std::vector<float> mean_v(rows), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = x.data() + r * D;
    double m = 0.0;
    for (std::size_t i = 0; i < D; ++i) m += xr[i];
    m /= static_cast<double>(D);
    double var = 0.0;
    for (std::size_t i = 0; i < D; ++i) {
      const double d = xr[i] - m;
      var += d * d;
    }
    var /= static_cast<double>(D);
    const float is = static_cast<float>(1.0 / std::sqrt(var + eps));
    mean_v[r] = static_cast<float>(m);
    inv_std[r] = is;
    float* orow = out.data() + r * D;
    for (std::size_t i = 0; i < D; ++i)
      orow[i] = (xr[i] - mean_v[r]) * is * gain.data()[i] + bias.data()[i];
  }
  Tensor xc = x, gc = gain, bc = bias, oc = out;
  tape.record("layer_norm", {x, gain, bias}, out,
              [xc, gc, bc, oc, rows, D, mean_v, inv_std]() mutable {
    const float* g = oc.grad();
    float* gx = xc.grad();
    float* gg = gc.grad();
    float* gb = bc.grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const float* xr = xc.data() + r * D;
      const float* gr = g + r * D;
      float* gxr = gx + r * D;
      const float m = mean_v[r];
      const float is = inv_std[r];
      double s1 = 0.0, s2 = 0.0;  // sum(dxhat), sum(dxhat * xhat)
      for (std::size_t i = 0; i < D; ++i) {
        const float xhat = (xr[i] - m) * is;
        const float dxhat = gr[i] * gc.data()[i];
        s1 += dxhat;
        s2 += static_cast<double>(dxhat) * xhat;
        gg[i] += gr[i] * xhat;
        gb[i] += gr[i];
      }
      const float f1 = static_cast<float>(s1 / static_cast<double>(D));
      const float f2 = static_cast<float>(s2 / static_cast<double>(D));
      for (std::size_t i = 0; i < D; ++i) {
        const float xhat = (xr[i] - m) * is;
        const float dxhat = gr[i] * gc.data()[i];
        gxr[i] += is * (dxhat - f1 - xhat * f2);
      }
    }
  });
  return out;
}

Tensor embedding(Tape& tape, const Tensor& table, const std::vector<int>& ids) {
  SVQ_CHECK(table.rank() == 2, "embedding: table must be [V,D], got ",
            shape_str(table.shape()));
  const int V = table.dim(0), D = table.dim(1);
  for (std::size_t i = 0; i < ids.size(); ++i)
    SVQ_CHECK(ids[i] >= 0 && ids[i] < V, "embedding: id ", ids[i],
              " out of range [0,", V, ") at position ", i);
  Tensor out = Tensor::zeros({static_cast<int>(ids.size()), D});
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::memcpy(out.data() + i * static_cast<std::size_t>(D),
                table.data() + static_cast<std::size_t>(ids[i]) * D,
                static_cast<std::size_t>(D) * sizeof(float));
  Tensor tc = table, oc = out;
  tape.record("embedding", {table}, out, [tc, oc, ids, D]() mutable {
    const float* g = oc.grad();
    float* gt = tc.grad();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      float* row = gt + static_cast<std::size_t>(ids[i]) * D;
      const float* gr = g + i * static_cast<std::size_t>(D);
      for (int j = 0; j < D; ++j) row[j] += gr[j];
    }
  });
  return out;
}

Tensor detach(const Tensor& x) {
  return Tensor::from_data(x.shape(), x.vec(), false);
}

}  // namespace svq
