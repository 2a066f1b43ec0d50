#include "ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace convprobe {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

void require_rank(const Shape& s, int rank, const char* what) {
  require(static_cast<int>(s.size()) == rank, ErrorCode::kShapeMismatch,
          std::string(what) + " must have rank " + std::to_string(rank) + ", got " + shape_str(s));
}

// Unfolds one sample [C,H,W] into columns [C*R*S, Ho*Wo].
template <typename T>
void im2col(const T* x, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t R, std::int64_t S,
            int stride, int pad, std::int64_t Ho, std::int64_t Wo, T* col) {
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t r = 0; r < R; ++r) {
      for (std::int64_t s = 0; s < S; ++s) {
        T* row = col + ((c * R + r) * S + s) * Ho * Wo;
        for (std::int64_t i = 0; i < Ho; ++i) {
          const std::int64_t h = i * stride - pad + r;
          if (h < 0 || h >= H) {
            std::fill(row + i * Wo, row + (i + 1) * Wo, T{0});
            continue;
          }
          const T* xrow = x + (c * H + h) * W;
          for (std::int64_t j = 0; j < Wo; ++j) {
            const std::int64_t w = j * stride - pad + s;
            row[i * Wo + j] = (w < 0 || w >= W) ? T{0} : xrow[w];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t R, std::int64_t S,
            int stride, int pad, std::int64_t Ho, std::int64_t Wo, T* x) {
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t r = 0; r < R; ++r) {
      for (std::int64_t s = 0; s < S; ++s) {
        const T* row = col + ((c * R + r) * S + s) * Ho * Wo;
        for (std::int64_t i = 0; i < Ho; ++i) {
          const std::int64_t h = i * stride - pad + r;
          if (h < 0 || h >= H) continue;
          T* xrow = x + (c * H + h) * W;
          for (std::int64_t j = 0; j < Wo; ++j) {
            const std::int64_t w = j * stride - pad + s;
            if (w >= 0 && w < W) xrow[w] += row[i * Wo + j];
          }
        }
      }
    }
  }
}

}  // namespace

Shape conv2d_output_shape(const Shape& x, const Shape& w, int stride, int pad) {
  require_rank(x, 4, "conv2d input");
  require_rank(w, 4, "conv2d weights");
  require(stride > 0 && pad >= 0, ErrorCode::kInvalidArgument, "conv2d needs stride > 0 and pad >= 0");
  require(x[1] == w[1], ErrorCode::kShapeMismatch,
          "conv2d channel mismatch: input " + shape_str(x) + " has " + std::to_string(x[1]) +
              " channels but weights " + shape_str(w) + " expect " + std::to_string(w[1]));
  const std::int64_t hp = x[2] + 2 * pad, wp = x[3] + 2 * pad;
  require(hp >= w[2] && wp >= w[3], ErrorCode::kShapeMismatch,
          "conv2d kernel " + shape_str(w) + " larger than padded input " + shape_str(x));
  // Floor division: trailing rows/columns a full stride cannot reach are unused.
  return {x[0], w[0], (hp - w[2]) / stride + 1, (wp - w[3]) / stride + 1};
}

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b,
                              int stride, int pad) {
  const Shape out_shape = conv2d_output_shape(x.shape(), w.shape(), stride, pad);
  require(b.rank() == 1 && b.dim(0) == w.dim(0), ErrorCode::kShapeMismatch,
          "conv2d bias " + shape_str(b.shape()) + " does not match " + std::to_string(w.dim(0)) + " filters");
  const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t K = w.dim(0), R = w.dim(2), S = w.dim(3);
  const std::int64_t Ho = out_shape[2], Wo = out_shape[3];
  const std::int64_t crs = C * R * S, hw = Ho * Wo;

  BasicTensor<T> y(out_shape);
  std::vector<T> col(static_cast<std::size_t>(crs * hw));
  CMapMat<T> wm(w.raw(), K, crs);
  for (std::int64_t n = 0; n < N; ++n) {
    im2col(x.raw() + n * C * H * W, C, H, W, R, S, stride, pad, Ho, Wo, col.data());
    MapMat<T> ym(y.raw() + n * K * hw, K, hw);
    ym.noalias() = wm * CMapMat<T>(col.data(), crs, hw);
    for (std::int64_t k = 0; k < K; ++k) ym.row(k).array() += b[k];
  }
  return y;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& w, int stride, int pad,
                             const BasicTensor<T>& dy, bool need_dx) {
  const Shape out_shape = conv2d_output_shape(x.shape(), w.shape(), stride, pad);
  require(dy.shape() == out_shape, ErrorCode::kShapeMismatch,
          "conv2d upstream gradient " + shape_str(dy.shape()) + " != output " + shape_str(out_shape));
  const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t K = w.dim(0), R = w.dim(2), S = w.dim(3);
  const std::int64_t Ho = out_shape[2], Wo = out_shape[3];
  const std::int64_t crs = C * R * S, hw = Ho * Wo;

  ConvGrads<T> g{need_dx ? BasicTensor<T>(x.shape()) : BasicTensor<T>(), BasicTensor<T>(w.shape()),
                 BasicTensor<T>(Shape{K})};
  std::vector<T> col(static_cast<std::size_t>(crs * hw));
  CMapMat<T> wm(w.raw(), K, crs);
  MapMat<T> dwm(g.dw.raw(), K, crs);
  for (std::int64_t n = 0; n < N; ++n) {
    CMapMat<T> dym(dy.raw() + n * K * hw, K, hw);
    im2col(x.raw() + n * C * H * W, C, H, W, R, S, stride, pad, Ho, Wo, col.data());
    dwm.noalias() += dym * CMapMat<T>(col.data(), crs, hw).transpose();
    for (std::int64_t k = 0; k < K; ++k) g.db[k] += dym.row(k).sum();
    if (need_dx) {
      MapMat<T>(col.data(), crs, hw).noalias() = wm.transpose() * dym;
      col2im(col.data(), C, H, W, R, S, stride, pad, Ho, Wo, g.dx.raw() + n * C * H * W);
    }
  }
  return g;
}

Shape maxpool_output_shape(const Shape& x, int size, int stride) {
  require_rank(x, 4, "maxpool input");
  require(size > 0 && stride > 0, ErrorCode::kInvalidArgument, "maxpool size and stride must be positive");
  require(x[2] >= size && x[3] >= size, ErrorCode::kShapeMismatch,
          "maxpool window " + std::to_string(size) + " larger than input " + shape_str(x));
  return {x[0], x[1], (x[2] - size) / stride + 1, (x[3] - size) / stride + 1};
}

template <typename T>
MaxPoolOutput<T> maxpool_forward(const BasicTensor<T>& x, int size, int stride) {
  const Shape out_shape = maxpool_output_shape(x.shape(), size, stride);
  const std::int64_t H = x.dim(2), W = x.dim(3), Ho = out_shape[2], Wo = out_shape[3];
  const std::int64_t planes = x.dim(0) * x.dim(1);
  MaxPoolOutput<T> out{BasicTensor<T>(out_shape), std::vector<std::int64_t>(shape_numel(out_shape))};
  std::int64_t o = 0;
  for (std::int64_t p = 0; p < planes; ++p) {
    const std::int64_t base = p * H * W;
    for (std::int64_t i = 0; i < Ho; ++i) {
      for (std::int64_t j = 0; j < Wo; ++j, ++o) {
        std::int64_t best = base + (i * stride) * W + j * stride;
        for (std::int64_t r = 0; r < size; ++r) {
          for (std::int64_t s = 0; s < size; ++s) {
            const std::int64_t idx = base + (i * stride + r) * W + (j * stride + s);
            if (x[idx] > x[best]) best = idx;  // strict: first in scan order wins ties
          }
        }
        out.value[o] = x[best];
        out.argmax[o] = best;
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> maxpool_backward(const Shape& x_shape, std::span<const std::int64_t> argmax,
                                const BasicTensor<T>& dy) {
  require(static_cast<std::int64_t>(argmax.size()) == dy.size(), ErrorCode::kShapeMismatch,
          "maxpool argmax map does not match upstream gradient");
  BasicTensor<T> dx(x_shape);
  for (std::int64_t o = 0; o < dy.size(); ++o) dx[argmax[o]] += dy[o];
  return dx;
}

template <typename T>
LrnOutput<T> lrn_forward(const BasicTensor<T>& x, const LrnParams& p) {
  require_rank(x.shape(), 4, "lrn input");
  require(p.local_size >= 1, ErrorCode::kInvalidArgument, "lrn window size must be >= 1");
  require(p.k > 0, ErrorCode::kInvalidArgument, "lrn offset k must be positive");
  require(p.beta > 0, ErrorCode::kInvalidArgument, "lrn exponent beta must be positive");
  const std::int64_t N = x.dim(0), C = x.dim(1), plane = x.dim(2) * x.dim(3);
  const std::int64_t pre = (p.local_size - 1) / 2;
  const double coef = p.alpha / p.local_size;
  LrnOutput<T> out{BasicTensor<T>(x.shape()), BasicTensor<T>(x.shape())};
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t c = 0; c < C; ++c) {
      const std::int64_t lo = std::max<std::int64_t>(0, c - pre);
      const std::int64_t hi = std::min<std::int64_t>(C - 1, c - pre + p.local_size - 1);
      for (std::int64_t q = 0; q < plane; ++q) {
        double sum = 0.0;
        for (std::int64_t cc = lo; cc <= hi; ++cc) {
          const double a = x[(n * C + cc) * plane + q];
          sum += a * a;
        }
        const std::int64_t idx = (n * C + c) * plane + q;
        const double scale = p.k + coef * sum;
        out.scale[idx] = static_cast<T>(scale);
        out.value[idx] = static_cast<T>(x[idx] * std::pow(scale, -p.beta));
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> lrn_backward(const BasicTensor<T>& x, const LrnOutput<T>& fwd, const BasicTensor<T>& dy,
                            const LrnParams& p) {
  require(dy.shape() == x.shape(), ErrorCode::kShapeMismatch, "lrn upstream gradient shape mismatch");
  const std::int64_t N = x.dim(0), C = x.dim(1), plane = x.dim(2) * x.dim(3);
  const std::int64_t pre = (p.local_size - 1) / 2;
  const double coef = 2.0 * p.alpha * p.beta / p.local_size;
  BasicTensor<T> dx(x.shape());
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t i = 0; i < C; ++i) {
      // Channels c whose window contains i.
      const std::int64_t lo = std::max<std::int64_t>(0, i + pre - p.local_size + 1);
      const std::int64_t hi = std::min<std::int64_t>(C - 1, i + pre);
      for (std::int64_t q = 0; q < plane; ++q) {
        const std::int64_t idx = (n * C + i) * plane + q;
        double cross = 0.0;
        for (std::int64_t c = lo; c <= hi; ++c) {
          const std::int64_t cidx = (n * C + c) * plane + q;
          cross += static_cast<double>(dy[cidx]) * fwd.value[cidx] / fwd.scale[cidx];
        }
        dx[idx] = static_cast<T>(dy[idx] * std::pow(static_cast<double>(fwd.scale[idx]), -p.beta) -
                                 coef * x[idx] * cross);
      }
    }
  }
  return dx;
}

template <typename T>
BasicTensor<T> affine_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
  require_rank(x.shape(), 2, "affine input");
  require_rank(w.shape(), 2, "affine weights");
  require(x.dim(1) == w.dim(0), ErrorCode::kShapeMismatch,
          "affine inner dimension mismatch: input " + shape_str(x.shape()) + " vs weights " +
              shape_str(w.shape()));
  require(b.rank() == 1 && b.dim(0) == w.dim(1), ErrorCode::kShapeMismatch,
          "affine bias " + shape_str(b.shape()) + " does not match " + std::to_string(w.dim(1)) + " units");
  const std::int64_t N = x.dim(0), D = x.dim(1), M = w.dim(1);
  BasicTensor<T> y(Shape{N, M});
  MapMat<T> ym(y.raw(), N, M);
  ym.noalias() = CMapMat<T>(x.raw(), N, D) * CMapMat<T>(w.raw(), D, M);
  ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(b.raw(), M);
  return y;
}

template <typename T>
ConvGrads<T> affine_backward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& dy,
                             bool need_dx) {
  const std::int64_t N = x.dim(0), D = x.dim(1), M = w.dim(1);
  require(dy.shape() == Shape({N, M}), ErrorCode::kShapeMismatch, "affine upstream gradient shape mismatch");
  ConvGrads<T> g{need_dx ? BasicTensor<T>(x.shape()) : BasicTensor<T>(), BasicTensor<T>(w.shape()),
                 BasicTensor<T>(Shape{M})};
  CMapMat<T> xm(x.raw(), N, D), wm(w.raw(), D, M), dym(dy.raw(), N, M);
  MapMat<T>(g.dw.raw(), D, M).noalias() = xm.transpose() * dym;
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(g.db.raw(), M) = dym.colwise().sum();
  if (need_dx) MapMat<T>(g.dx.raw(), N, D).noalias() = dym * wm.transpose();
  return g;
}

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy) {
  require(dy.shape() == x.shape(), ErrorCode::kShapeMismatch, "relu upstream gradient shape mismatch");
  BasicTensor<T> dx(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T{0} ? dy[i] : T{0};
  return dx;
}

template <typename T>
GradPair<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b, int stride,
                   int pad) {
  GradPair<T> out{conv2d_forward(x, w, b, stride, pad), {}};
  out.pullback = [x, w, stride, pad](const BasicTensor<T>& dy) {
    ConvGrads<T> g = conv2d_backward(x, w, stride, pad, dy, true);
    return std::vector<BasicTensor<T>>{std::move(g.dx), std::move(g.dw), std::move(g.db)};
  };
  return out;
}

template <typename T>
MaxPoolPair<T> maxpool(const BasicTensor<T>& x, int size, int stride) {
  MaxPoolOutput<T> fwd = maxpool_forward(x, size, stride);
  MaxPoolPair<T> out{{std::move(fwd.value), {}}, std::move(fwd.argmax)};
  out.grad.pullback = [shape = x.shape(), argmax = out.argmax](const BasicTensor<T>& dy) {
    return std::vector<BasicTensor<T>>{maxpool_backward(shape, argmax, dy)};
  };
  return out;
}

template <typename T>
GradPair<T> lrn(const BasicTensor<T>& x, const LrnParams& p) {
  LrnOutput<T> fwd = lrn_forward(x, p);
  GradPair<T> out{fwd.value, {}};
  out.pullback = [x, fwd = std::move(fwd), p](const BasicTensor<T>& dy) {
    return std::vector<BasicTensor<T>>{lrn_backward(x, fwd, dy, p)};
  };
  return out;
}

template <typename T>
GradPair<T> affine(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
  GradPair<T> out{affine_forward(x, w, b), {}};
  out.pullback = [x, w](const BasicTensor<T>& dy) {
    ConvGrads<T> g = affine_backward(x, w, dy, true);
    return std::vector<BasicTensor<T>>{std::move(g.dx), std::move(g.dw), std::move(g.db)};
  };
  return out;
}

template <typename T>
GradPair<T> relu(const BasicTensor<T>& x) {
  GradPair<T> out{relu_forward(x), {}};
  out.pullback = [x](const BasicTensor<T>& dy) { return std::vector<BasicTensor<T>>{relu_backward(x, dy)}; };
  return out;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  require_rank(logits.shape(), 2, "softmax input");
  require(logits.dim(1) >= 2, ErrorCode::kShapeMismatch, "softmax needs at least two classes");
  const std::int64_t N = logits.dim(0), C = logits.dim(1);
  BasicTensor<T> p(logits.shape());
  for (std::int64_t n = 0; n < N; ++n) {
    const T* z = logits.raw() + n * C;
    const double zmax = *std::max_element(z, z + C);
    double sum = 0.0;
    for (std::int64_t c = 0; c < C; ++c) sum += std::exp(static_cast<double>(z[c]) - zmax);
    for (std::int64_t c = 0; c < C; ++c) p[n * C + c] = static_cast<T>(std::exp(z[c] - zmax) / sum);
  }
  return p;
}

template <typename T>
GradPair<T> cross_entropy_loss(const BasicTensor<T>& logits, std::span<const int> labels) {
  require_rank(logits.shape(), 2, "cross-entropy logits");
  const std::int64_t N = logits.dim(0), C = logits.dim(1);
  require(static_cast<std::int64_t>(labels.size()) == N, ErrorCode::kShapeMismatch,
          "cross-entropy label count does not match batch size");
  for (int y : labels)
    require(y >= 0 && y < C, ErrorCode::kInvalidArgument,
            "label " + std::to_string(y) + " outside [0," + std::to_string(C) + ")");
  double loss = 0.0;
  for (std::int64_t n = 0; n < N; ++n) {
    const T* z = logits.raw() + n * C;
    const double zmax = *std::max_element(z, z + C);
    double sum = 0.0;
    for (std::int64_t c = 0; c < C; ++c) sum += std::exp(static_cast<double>(z[c]) - zmax);
    loss += std::log(sum) + zmax - z[labels[n]];
  }
  GradPair<T> out{BasicTensor<T>(Shape{1}, static_cast<T>(loss / N)), {}};
  std::vector<int> ys(labels.begin(), labels.end());
  out.pullback = [logits, ys = std::move(ys)](const BasicTensor<T>& up) {
    const std::int64_t N = logits.dim(0), C = logits.dim(1);
    BasicTensor<T> g = softmax(logits);
    const T scale = up[0] / static_cast<T>(N);
    for (std::int64_t n = 0; n < N; ++n) {
      g[n * C + ys[n]] -= T{1};
      for (std::int64_t c = 0; c < C; ++c) g[n * C + c] *= scale;
    }
    return std::vector<BasicTensor<T>>{std::move(g)};
  };
  return out;
}

template <typename T>
GradPair<T> hinge_loss(const BasicTensor<T>& scores, std::span<const int> labels, T weights_norm_sq,
                       T lambda) {
  const std::int64_t N = scores.size();
  require(static_cast<std::int64_t>(labels.size()) == N, ErrorCode::kShapeMismatch,
          "hinge label count does not match score count");
  for (int y : labels)
    require(y == 1 || y == -1, ErrorCode::kInvalidArgument,
            "hinge label " + std::to_string(y) + " is not -1 or +1");
  double loss = 0.0;
  for (std::int64_t n = 0; n < N; ++n) loss += std::max(0.0, 1.0 - labels[n] * static_cast<double>(scores[n]));
  loss = loss / N + static_cast<double>(lambda) * weights_norm_sq;
  GradPair<T> out{BasicTensor<T>(Shape{1}, static_cast<T>(loss)), {}};
  std::vector<int> ys(labels.begin(), labels.end());
  out.pullback = [scores, ys = std::move(ys), lambda](const BasicTensor<T>& up) {
    const std::int64_t N = scores.size();
    BasicTensor<T> ds(scores.shape());
    for (std::int64_t n = 0; n < N; ++n)
      if (1.0 - ys[n] * static_cast<double>(scores[n]) > 0.0) ds[n] = up[0] * static_cast<T>(-ys[n]) / N;
    return std::vector<BasicTensor<T>>{std::move(ds), BasicTensor<T>(Shape{1}, up[0] * lambda)};
  };
  return out;
}

GradCheckReport grad_check(const DiffFn& fn, const std::vector<Tensor64>& inputs, double eps,
                           std::uint64_t seed) {
  GradPair<double> base = fn(inputs);
  Tensor64 upstream(base.value.shape(), 1.0);
  if (upstream.size() > 1) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& v : upstream.data()) v = u(rng);
  }
  const std::vector<Tensor64> analytic = base.pullback(upstream);
  require(analytic.size() == inputs.size(), ErrorCode::kInvalidArgument,
          "pullback returned a different number of gradients than inputs");

  auto contract = [&](const std::vector<Tensor64>& in) {
    const Tensor64 v = fn(in).value;
    double s = 0.0;
    for (std::int64_t i = 0; i < v.size(); ++i) s += v[i] * upstream[i];
    return s;
  };

  GradCheckReport report;
  std::vector<Tensor64> probe = inputs;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    require(analytic[t].shape() == inputs[t].shape(), ErrorCode::kShapeMismatch,
            "pullback gradient " + std::to_string(t) + " has shape " + shape_str(analytic[t].shape()) +
                " but input has " + shape_str(inputs[t].shape()));
    for (std::int64_t i = 0; i < inputs[t].size(); ++i) {
      const double orig = inputs[t][i];
      probe[t][i] = orig + eps;
      const double fp = contract(probe);
      probe[t][i] = orig - eps;
      const double fm = contract(probe);
      probe[t][i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[t][i];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (err > report.max_rel_error || report.worst_input < 0) {
        report = {err, static_cast<int>(t), i, a, numeric};
      }
    }
  }
  return report;
}

#define CONVPROBE_INSTANTIATE(T)                                                                         \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const BasicTensor<T>&,                   \
                                         const BasicTensor<T>&, int, int);                               \
  template ConvGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&, int, int,          \
                                        const BasicTensor<T>&, bool);                                    \
  template MaxPoolOutput<T> maxpool_forward(const BasicTensor<T>&, int, int);                            \
  template BasicTensor<T> maxpool_backward(const Shape&, std::span<const std::int64_t>,                  \
                                           const BasicTensor<T>&);                                       \
  template LrnOutput<T> lrn_forward(const BasicTensor<T>&, const LrnParams&);                            \
  template BasicTensor<T> lrn_backward(const BasicTensor<T>&, const LrnOutput<T>&, const BasicTensor<T>&, \
                                       const LrnParams&);                                                \
  template BasicTensor<T> affine_forward(const BasicTensor<T>&, const BasicTensor<T>&,                   \
                                         const BasicTensor<T>&);                                         \
  template ConvGrads<T> affine_backward(const BasicTensor<T>&, const BasicTensor<T>&,                    \
                                        const BasicTensor<T>&, bool);                                    \
  template BasicTensor<T> relu_forward(const BasicTensor<T>&);                                           \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template GradPair<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, int,  \
                              int);                                                                      \
  template MaxPoolPair<T> maxpool(const BasicTensor<T>&, int, int);                                      \
  template GradPair<T> lrn(const BasicTensor<T>&, const LrnParams&);                                     \
  template GradPair<T> affine(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);      \
  template GradPair<T> relu(const BasicTensor<T>&);                                                      \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                                \
  template GradPair<T> cross_entropy_loss(const BasicTensor<T>&, std::span<const int>);                  \
  template GradPair<T> hinge_loss(const BasicTensor<T>&, std::span<const int>, T, T);

CONVPROBE_INSTANTIATE(float)
CONVPROBE_INSTANTIATE(double)

#undef CONVPROBE_INSTANTIATE

}  // namespace convprobe
