#pragma once

// Test-only reference implementations. Deliberately naive: direct loops over
// the defining formulas, in double precision, sharing no code with src/.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "tensor.hpp"

namespace oracle {

using convprobe::Shape;
using convprobe::Tensor;
using convprobe::Tensor64;

inline Tensor random_tensor(const Shape& shape, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (float& v : t.data()) v = static_cast<float>(u(rng));
  return t;
}

inline Tensor64 random_tensor64(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor64 t(shape);
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Six nested loops over (n, k, i, j, c, r, s) with explicit zero padding.
inline std::vector<double> conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const auto N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto K = w.dim(0), R = w.dim(2), S = w.dim(3);
  const auto Ho = (H + 2 * pad - R) / stride + 1, Wo = (W + 2 * pad - S) / stride + 1;
  std::vector<double> y(N * K * Ho * Wo);
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t k = 0; k < K; ++k)
      for (std::int64_t i = 0; i < Ho; ++i)
        for (std::int64_t j = 0; j < Wo; ++j) {
          double acc = b[k];
          for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t r = 0; r < R; ++r)
              for (std::int64_t s = 0; s < S; ++s) {
                const std::int64_t h = i * stride + r - pad, ww = j * stride + s - pad;
                if (h < 0 || h >= H || ww < 0 || ww >= W) continue;
                acc += static_cast<double>(x[((n * C + c) * H + h) * W + ww]) * w[((k * C + c) * R + r) * S + s];
              }
          y[((n * K + k) * Ho + i) * Wo + j] = acc;
        }
  return y;
}

inline std::vector<double> window_max(const Tensor& x, int size, int stride) {
  const auto N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto Ho = (H - size) / stride + 1, Wo = (W - size) / stride + 1;
  std::vector<double> y;
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t i = 0; i < Ho; ++i)
        for (std::int64_t j = 0; j < Wo; ++j) {
          double m = -INFINITY;
          for (int r = 0; r < size; ++r)
            for (int s = 0; s < size; ++s)
              m = std::max<double>(m, x[((n * C + c) * H + i * stride + r) * W + j * stride + s]);
          y.push_back(m);
        }
  return y;
}

// b = a / (k + alpha/n * sum_{c' in window} a^2)^beta, window [c - (n-1)/2, c + n/2].
inline std::vector<double> lrn(const Tensor& x, int n, double k, double alpha, double beta) {
  const auto N = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
  std::vector<double> y(x.size());
  for (std::int64_t b = 0; b < N; ++b)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t q = 0; q < P; ++q) {
        double sum = 0;
        for (std::int64_t cc = c - (n - 1) / 2; cc <= c + n / 2; ++cc)
          if (cc >= 0 && cc < C) {
            const double a = x[(b * C + cc) * P + q];
            sum += a * a;
          }
        y[(b * C + c) * P + q] = x[(b * C + c) * P + q] / std::pow(k + alpha / n * sum, beta);
      }
  return y;
}

inline std::vector<double> matmul_bias(const Tensor& x, const Tensor& w, const Tensor& b) {
  const auto N = x.dim(0), D = x.dim(1), M = w.dim(1);
  std::vector<double> y(N * M);
  for (std::int64_t i = 0; i < N; ++i)
    for (std::int64_t j = 0; j < M; ++j) {
      double acc = b[j];
      for (std::int64_t d = 0; d < D; ++d) acc += static_cast<double>(x[i * D + d]) * w[d * M + j];
      y[i * M + j] = acc;
    }
  return y;
}

inline double max_rel_error(const Tensor& got, const std::vector<double>& want) {
  double worst = 0;
  for (std::size_t i = 0; i < want.size(); ++i)
    worst = std::max(worst, std::abs(got[static_cast<std::int64_t>(i)] - want[i]) / std::max(1.0, std::abs(want[i])));
  return worst;
}

}  // namespace oracle
