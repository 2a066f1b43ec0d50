#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tensor.hpp"

namespace convprobe {

// Forward value plus a pullback mapping an upstream gradient (shaped like
// value) to one gradient per input, in argument order.
template <typename T>
struct GradPair {
  BasicTensor<T> value;
  std::function<std::vector<BasicTensor<T>>(const BasicTensor<T>&)> pullback;
};

struct LrnParams {
  int local_size = 5;
  double k = 2.0;
  double alpha = 1e-4;
  double beta = 0.75;
};

// ---- Kernels --------------------------------------------------------------
// The network executor calls these directly and keeps its own forward state.

template <typename T>
struct ConvGrads {
  BasicTensor<T> dx;  // empty when not requested
  BasicTensor<T> dw;
  BasicTensor<T> db;
};

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b,
                              int stride, int pad);

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& w, int stride, int pad,
                             const BasicTensor<T>& dy, bool need_dx);

Shape conv2d_output_shape(const Shape& x, const Shape& w, int stride, int pad);

template <typename T>
struct MaxPoolOutput {
  BasicTensor<T> value;
  // Flat input offset of the winning element for every output element.
  std::vector<std::int64_t> argmax;
};

template <typename T>
MaxPoolOutput<T> maxpool_forward(const BasicTensor<T>& x, int size, int stride);

template <typename T>
BasicTensor<T> maxpool_backward(const Shape& x_shape, std::span<const std::int64_t> argmax,
                                const BasicTensor<T>& dy);

Shape maxpool_output_shape(const Shape& x, int size, int stride);

template <typename T>
struct LrnOutput {
  BasicTensor<T> value;
  BasicTensor<T> scale;  // k + (alpha/n) * windowed sum of squares
};

template <typename T>
LrnOutput<T> lrn_forward(const BasicTensor<T>& x, const LrnParams& p);

template <typename T>
BasicTensor<T> lrn_backward(const BasicTensor<T>& x, const LrnOutput<T>& fwd, const BasicTensor<T>& dy,
                            const LrnParams& p);

template <typename T>
BasicTensor<T> affine_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b);

template <typename T>
ConvGrads<T> affine_backward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& dy,
                             bool need_dx);

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy);

// ---- Differentiable primitives --------------------------------------------

template <typename T>
GradPair<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b, int stride,
                   int pad);

template <typename T>
struct MaxPoolPair {
  GradPair<T> grad;
  std::vector<std::int64_t> argmax;
};

template <typename T>
MaxPoolPair<T> maxpool(const BasicTensor<T>& x, int size, int stride);

template <typename T>
GradPair<T> lrn(const BasicTensor<T>& x, const LrnParams& p);

template <typename T>
GradPair<T> affine(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b);

template <typename T>
GradPair<T> relu(const BasicTensor<T>& x);

// Row-wise, max-subtracted. Requires at least two columns.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

// Mean negative log-likelihood; value has shape [1].
template <typename T>
GradPair<T> cross_entropy_loss(const BasicTensor<T>& logits, std::span<const int> labels);

// mean(max(0, 1 - y*s)) + lambda * weights_norm_sq. Pullback returns
// {d/dscores, d/dweights_norm_sq}.
template <typename T>
GradPair<T> hinge_loss(const BasicTensor<T>& scores, std::span<const int> labels, T weights_norm_sq,
                       T lambda);

// ---- Gradient verification ------------------------------------------------

using DiffFn = std::function<GradPair<double>(const std::vector<Tensor64>&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  int worst_input = -1;
  std::int64_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Contracts the output with a seeded random upstream tensor (ones for scalar
// outputs) and compares the analytic pullback against central differences.
// Error per element is |a - n| / max(1, |a|, |n|).
GradCheckReport grad_check(const DiffFn& fn, const std::vector<Tensor64>& inputs, double eps,
                           std::uint64_t seed = 7);

}  // namespace convprobe
