#include "svq/codebook.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "svq/check.h"

namespace svq {

namespace {

Tensor uniform_entries(int n_q, int dim, int n_for_range, Rng& rng) {
  const float r = 1.0f / static_cast<float>(n_for_range);
  Tensor e = Tensor::zeros({n_q, dim}, true);
  for (std::size_t i = 0; i < e.numel(); ++i)
    e.data()[i] = rng.uniform(-r, r);
  return e;
}

// out fiber (t,:,i,j) <- entries row idx[(t*h+i)*w+j]; backward scatters.
Tensor gather_vanilla(Tape& tape, const Tensor& entries,
                      const std::vector<int>& idx, int T, int c, int h, int w) {
  Tensor out = Tensor::zeros({T, c, h, w});
  const float* e = entries.data();
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const int k = idx[static_cast<size_t>((t * h + i) * w + j)];
        for (int cc = 0; cc < c; ++cc)
          out.data()[((t * c + cc) * h + i) * w + j] = e[k * c + cc];
      }
  Tensor ec = entries, oc = out;
  tape.record("gather_codes", {entries}, out,
              [ec, oc, idx, T, c, h, w]() mutable {
                const float* g = oc.grad();
                float* ge = ec.grad();
                for (int t = 0; t < T; ++t)
                  for (int i = 0; i < h; ++i)
                    for (int j = 0; j < w; ++j) {
                      const int k = idx[static_cast<size_t>((t * h + i) * w + j)];
                      for (int cc = 0; cc < c; ++cc)
                        ge[k * c + cc] += g[((t * c + cc) * h + i) * w + j];
                    }
              });
  return out;
}

// out fiber (:,:,i,j) <- trajectory row idx[i*w+j] reshaped [T,c].
Tensor gather_temporal(Tape& tape, const Tensor& entries,
                       const std::vector<int>& idx, int T, int c, int h, int w) {
  Tensor out = Tensor::zeros({T, c, h, w});
  const float* e = entries.data();
  const int tc = T * c;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const int k = idx[static_cast<size_t>(i * w + j)];
      for (int t = 0; t < T; ++t)
        for (int cc = 0; cc < c; ++cc)
          out.data()[((t * c + cc) * h + i) * w + j] = e[k * tc + t * c + cc];
    }
  Tensor ec = entries, oc = out;
  tape.record("gather_codes", {entries}, out,
              [ec, oc, idx, T, c, h, w, tc]() mutable {
                const float* g = oc.grad();
                float* ge = ec.grad();
                for (int i = 0; i < h; ++i)
                  for (int j = 0; j < w; ++j) {
                    const int k = idx[static_cast<size_t>(i * w + j)];
                    for (int t = 0; t < T; ++t)
                      for (int cc = 0; cc < c; ++cc)
                        ge[k * tc + t * c + cc] +=
                            g[((t * c + cc) * h + i) * w + j];
                  }
              });
  return out;
}

void attach_loss_terms(Tape& tape, const Tensor& z, QuantizationResult& res) {
  res.codebook_term = sse(tape, detach(z), res.quantized);
  res.commit_term = sse(tape, z, detach(res.quantized));
}

}  // namespace

VanillaCodebook::VanillaCodebook(int n_q, int c, Rng& rng) {
  SVQ_CHECK(n_q > 0 && c > 0, "codebook: bad dimensions N_q=", n_q, " c=", c);
  entries = uniform_entries(n_q, c, n_q, rng);
}

TemporalCodebook::TemporalCodebook(int n_q, int T_, int c_, Rng& rng)
    : T(T_), c(c_) {
  SVQ_CHECK(n_q > 0 && T > 0 && c > 0, "codebook: bad dimensions N_q=", n_q,
            " T=", T, " c=", c);
  entries = uniform_entries(n_q, T * c, n_q, rng);
}

QuantizationResult quantize_vanilla(Tape& tape, const Tensor& z,
                                    const VanillaCodebook& q) {
  SVQ_CHECK(z.rank() == 4, "quantize_vanilla: expected [T,c,h,w], got ",
            shape_str(z.shape()));
  SVQ_CHECK(z.dim(1) == q.c(), "quantize_vanilla: code dim ", q.c(),
            " does not match input channels ", z.dim(1));
  SVQ_CHECK(all_finite(z), "quantize_vanilla: non-finite input");
  const int T = z.dim(0), c = z.dim(1), h = z.dim(2), w = z.dim(3);
  const int n = q.n();
  QuantizationResult res;
  res.index_shape = {T, h, w};
  res.indices.resize(static_cast<size_t>(T * h * w));
  const float* zd = z.data();
  const float* e = q.entries.data();
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        int best = 0;
        double best_d = 0.0;
        for (int k = 0; k < n; ++k) {
          double d = 0.0;
          for (int cc = 0; cc < c; ++cc) {
            const double diff =
                static_cast<double>(zd[((t * c + cc) * h + i) * w + j]) -
                e[k * c + cc];
            d += diff * diff;
          }
          if (k == 0 || d < best_d) {
            best = k;
            best_d = d;
          }
        }
        res.indices[static_cast<size_t>((t * h + i) * w + j)] = best;
      }
  res.quantized = gather_vanilla(tape, q.entries, res.indices, T, c, h, w);
  attach_loss_terms(tape, z, res);
  return res;
}

QuantizationResult quantize_temporal(Tape& tape, const Tensor& z,
                                     const TemporalCodebook& qt) {
  SVQ_CHECK(z.rank() == 4, "quantize_temporal: expected [T,c,h,w], got ",
            shape_str(z.shape()));
  SVQ_CHECK(z.dim(0) == qt.T, "quantize_temporal: codebook is bound to T=",
            qt.T, ", input has T=", z.dim(0));
  SVQ_CHECK(z.dim(1) == qt.c, "quantize_temporal: code dim ", qt.c,
            " does not match input channels ", z.dim(1));
  SVQ_CHECK(all_finite(z), "quantize_temporal: non-finite input");
  const int T = z.dim(0), c = z.dim(1), h = z.dim(2), w = z.dim(3);
  const int n = qt.n();
  const int tc = T * c;
  QuantizationResult res;
  res.index_shape = {h, w};
  res.indices.resize(static_cast<size_t>(h * w));
  const float* zd = z.data();
  const float* e = qt.entries.data();
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      int best = 0;
      double best_d = 0.0;
      for (int k = 0; k < n; ++k) {
        double d = 0.0;
        for (int t = 0; t < T; ++t)
          for (int cc = 0; cc < c; ++cc) {
            const double diff =
                static_cast<double>(zd[((t * c + cc) * h + i) * w + j]) -
                e[k * tc + t * c + cc];
            d += diff * diff;
          }
        if (k == 0 || d < best_d) {
          best = k;
          best_d = d;
        }
      }
      res.indices[static_cast<size_t>(i * w + j)] = best;
    }
  res.quantized = gather_temporal(tape, qt.entries, res.indices, T, c, h, w);
  attach_loss_terms(tape, z, res);
  return res;
}

Tensor codebook_loss(Tape& tape, const Tensor& z, const Tensor& z_q,
                     float beta) {
  SVQ_CHECK(z.shape() == z_q.shape(), "codebook_loss: shape mismatch ",
            shape_str(z.shape()), " vs ", shape_str(z_q.shape()));
  Tensor push_codes = sse(tape, detach(z), z_q);
  Tensor commit = sse(tape, z, detach(z_q));
  return add(tape, push_codes, mul_scalar(tape, commit, beta));
}

Tensor straight_through(Tape& tape, const Tensor& z, const Tensor& z_q) {
  SVQ_CHECK(z.shape() == z_q.shape(), "straight_through: shape mismatch ",
            shape_str(z.shape()), " vs ", shape_str(z_q.shape()));
  Tensor out = Tensor::from_data(z_q.shape(), z_q.vec());
  Tensor zc = z, oc = out;
  tape.record("straight_through", {z, z_q}, out, [zc, oc]() mutable {
    const float* g = oc.grad();
    float* gz = zc.grad();
    for (std::size_t i = 0; i < zc.numel(); ++i) gz[i] += g[i];
  });
  return out;
}

Tensor destroy_temporal(const Tensor& z_q, float p_d, Rng& rng,
                        DestructionMode mode) {
  SVQ_CHECK(z_q.rank() >= 2, "destroy_temporal: need a leading time axis, got ",
            shape_str(z_q.shape()));
  const int T = z_q.dim(0);
  const float kf = p_d * static_cast<float>(T);
  const int k = static_cast<int>(std::lround(kf));
  SVQ_CHECK(p_d >= 0.0f && p_d <= 1.0f && std::abs(kf - static_cast<float>(k)) < 1e-3f,
            "destroy_temporal: p_d=", p_d, " is not a multiple of 1/T (T=", T, ")");
  Tensor out = Tensor::from_data(z_q.shape(), z_q.vec());
  if (k == 0) return out;

  std::vector<int> steps;
  if (k <= T - 1) {
    std::vector<int> cand(static_cast<size_t>(T - 1));
    std::iota(cand.begin(), cand.end(), 0);  // final step excluded
    rng.shuffle(cand);
    steps.assign(cand.begin(), cand.begin() + k);
  } else {
    steps.resize(static_cast<size_t>(T));
    std::iota(steps.begin(), steps.end(), 0);
  }

  const std::size_t slice_n = z_q.numel() / static_cast<std::size_t>(T);
  const float* last = z_q.data() + static_cast<std::size_t>(T - 1) * slice_n;
  for (int t : steps) {
    float* dst = out.data() + static_cast<std::size_t>(t) * slice_n;
    for (std::size_t i = 0; i < slice_n; ++i)
      dst[i] = mode == DestructionMode::kLastSlice ? last[i] : 0.0f;
  }
  return out;
}

Utilization utilization(const std::vector<int>& indices, int n_q) {
  SVQ_CHECK(n_q > 0, "utilization: N_q must be positive");
  Utilization u;
  u.counts.assign(static_cast<size_t>(n_q), 0);
  for (int idx : indices) {
    SVQ_CHECK(idx >= 0 && idx < n_q, "utilization: index ", idx,
              " outside [0,", n_q, ")");
    u.counts[static_cast<size_t>(idx)]++;
  }
  int active = 0;
  for (std::int64_t c : u.counts)
    if (c > 0) active++;
  u.active_fraction = static_cast<double>(active) / n_q;
  return u;
}

std::vector<double> heatmap(const TemporalCodebook& qt) {
  const int n = qt.n();
  std::vector<double> m(static_cast<size_t>(qt.T * n), 0.0);
  for (int k = 0; k < n; ++k)
    for (int t = 0; t < qt.T; ++t) {
      double acc = 0.0;
      for (int cc = 0; cc < qt.c; ++cc)
        acc += std::abs(qt.entries.data()[(k * qt.T + t) * qt.c + cc]);
      m[static_cast<size_t>(t * n + k)] = acc / qt.c;
    }
  return m;
}

void write_heatmap_csv(const TemporalCodebook& qt, const std::string& path) {
  std::vector<double> m = heatmap(qt);
  std::ofstream f(path);
  SVQ_CHECK(f.good(), "heatmap: cannot open ", path, " for writing");
  f << "t,k,magnitude\n";
  char buf[64];
  for (int t = 0; t < qt.T; ++t)
    for (int k = 0; k < qt.n(); ++k) {
      std::snprintf(buf, sizeof(buf), "%.6g", m[static_cast<size_t>(t * qt.n() + k)]);
      f << t << "," << k << "," << buf << "\n";
    }
  SVQ_CHECK(f.good(), "heatmap: write to ", path, " failed");
}

int reseed_dead_codes(Tensor& entries, const std::vector<std::int64_t>& usage,
                      const Tensor& fibers, Rng& rng) {
  SVQ_CHECK(entries.rank() == 2, "reseed: entries must be [N_q, dim]");
  const int n = entries.dim(0), dim = entries.dim(1);
  SVQ_CHECK(static_cast<int>(usage.size()) == n, "reseed: usage size ",
            usage.size(), " vs N_q=", n);
  int replaced = 0;
  for (int k = 0; k < n; ++k) {
    if (usage[static_cast<size_t>(k)] > 0) continue;
    SVQ_CHECK(fibers.defined() && fibers.rank() == 2 && fibers.dim(1) == dim,
              "reseed: fibers must be [n, ", dim, "]");
    const int r = rng.uniform_int(fibers.dim(0));
    for (int i = 0; i < dim; ++i)
      entries.data()[k * dim + i] = fibers.data()[r * dim + i];
    replaced++;
  }
  return replaced;
}

}  // namespace svq
