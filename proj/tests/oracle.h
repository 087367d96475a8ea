#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

// Central-difference gradient oracle. f must rebuild its graph from scratch
// on every call. The difference is divided by the actually representable
// float32 step, and everything outside f stays in double.
inline std::vector<double> fd_grad(
    const std::function<double(const std::vector<float>&)>& f,
    std::vector<float> x, double eps = 1e-3) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float keep = x[i];
    const float hi_x = static_cast<float>(keep + eps);
    const float lo_x = static_cast<float>(keep - eps);
    x[i] = hi_x;
    const double hi = f(x);
    x[i] = lo_x;
    const double lo = f(x);
    x[i] = keep;
    g[i] = (hi - lo) / (static_cast<double>(hi_x) - static_cast<double>(lo_x));
  }
  return g;
}

// Relative error between gradient vectors, norm-wise: float32 forward noise
// makes per-component comparison meaningless for tiny components while any
// real backward bug shifts the whole vector.
inline double grad_rel_err(const float* analytic, const std::vector<double>& fd) {
  double diff2 = 0.0, ref2 = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    const double d = static_cast<double>(analytic[i]) - fd[i];
    diff2 += d * d;
    ref2 += fd[i] * fd[i];
  }
  return std::sqrt(diff2) / std::max(std::sqrt(ref2), 1e-12);
}
