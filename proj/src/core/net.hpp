#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "ops.hpp"
#include "tensor.hpp"

namespace convprobe {

enum class LayerKind { kConv, kPool, kNorm, kFc, kRelu, kSoftmax };

const char* layer_kind_name(LayerKind kind);

struct ConvParams {
  int out_channels = 0;
  int kernel = 0;
  int stride = 1;
  int pad = 0;
};
struct PoolParams {
  int size = 0;
  int stride = 1;
};
struct FcParams {
  int units = 0;
};
struct ReluParams {};
struct SoftmaxParams {};

using LayerParams = std::variant<ConvParams, PoolParams, LrnParams, FcParams, ReluParams, SoftmaxParams>;

struct LayerSpec {
  std::string name;
  LayerParams params;
  float lr_mult = 1.0f;

  LayerKind kind() const { return static_cast<LayerKind>(params.index()); }
  bool has_params() const { return kind() == LayerKind::kConv || kind() == LayerKind::kFc; }
};

struct NetworkSpec {
  std::array<std::int64_t, 3> input_shape{};  // C, H, W
  std::vector<LayerSpec> layers;

  // Index of the named layer, or -1.
  int find(const std::string& name) const;
  const LayerSpec& layer(const std::string& name) const;
  // Index of the topmost FC layer, or -1.
  int top_fc() const;
  bool has_softmax() const { return !layers.empty() && layers.back().kind() == LayerKind::kSoftmax; }

  // Single-line textual form, stable across runs; used in checkpoint metadata.
  std::string to_text() const;
  static NetworkSpec from_text(const std::string& text);
  std::uint64_t fingerprint() const;

  bool operator==(const NetworkSpec&) const;
};

// The thirteen layer-wise probe endpoints, bottom to top.
const std::vector<std::string>& probe_endpoints();

// AlexNet-class stack at full scale: 3x227x227 input, conv1..fc8, 1000-way top.
NetworkSpec reference_spec(int top_units = 1000);

// Desk-scale twin with the same layer names and kind ordering.
NetworkSpec reference_spec_small(int top_units = 10);

struct ShapeInfo {
  std::vector<Shape> outputs;  // per layer, without the batch axis
  std::map<std::string, Shape> by_name;
};

// Validates the spec and returns per-layer output shapes. Errors name the
// first offending layer.
ShapeInfo infer_shapes(const NetworkSpec& spec);

// ---- Parameters and checkpoints --------------------------------------------

struct ParamPair {
  Tensor weights;
  Tensor bias;

  // Bitwise comparison.
  bool operator==(const ParamPair& o) const {
    return bit_identical(weights, o.weights) && bit_identical(bias, o.bias);
  }
};

struct Checkpoint {
  std::map<std::string, ParamPair> entries;
  std::map<std::string, std::string> metadata;

  bool operator==(const Checkpoint&) const = default;
};

// Expected weight/bias shapes of every parameterized layer.
std::map<std::string, std::pair<Shape, Shape>> param_shapes(const NetworkSpec& spec);

// Analytic parameter count: sum over layers of weights + biases.
std::int64_t param_count(const NetworkSpec& spec);
// Recount from stored tensors.
std::int64_t param_count(const Checkpoint& ckpt);

enum class InitScheme {
  kGaussian,  // N(0, std) weights
  kHe,        // N(0, sqrt(2 / fan_in)) weights
};

struct InitConfig {
  InitScheme scheme = InitScheme::kGaussian;
  double std = 0.01;
};

ParamPair init_layer(const Shape& weight_shape, const Shape& bias_shape, const InitConfig& init,
                     std::uint64_t seed);

// Deterministic given seed; biases are zero. Records the spec in metadata.
Checkpoint init_params(const NetworkSpec& spec, std::uint64_t seed, const InitConfig& init = {});

// Throws kSpecMismatch naming the first layer whose entry is missing or
// mis-shaped.
void validate_checkpoint(const NetworkSpec& spec, const Checkpoint& ckpt);

// Rewrites the spec-related metadata keys to describe `spec`.
void stamp_spec(Checkpoint& ckpt, const NetworkSpec& spec);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
// Loads and validates against a spec.
Checkpoint load_checkpoint(const std::string& path, const NetworkSpec& spec);

// Single tensor in checkpoint tensor encoding (rank, extents, raw data).
void save_raw_tensor(const Tensor& t, const std::string& path);
Tensor load_raw_tensor(const std::string& path);

// ---- Execution -----------------------------------------------------------

struct ForwardOptions {
  bool retain_state = false;
  // CONV/FC endpoints report the output of their attached ReLU.
  bool post_activation = true;
};

struct ForwardState {
  Tensor input;
  std::vector<Tensor> outputs;  // per layer
  std::vector<std::vector<std::int64_t>> pool_argmax;
  std::vector<Tensor> lrn_scale;
  bool valid = false;
};

struct ForwardResult {
  std::map<std::string, Tensor> activations;
  Tensor output;  // top layer output (probabilities when the spec ends in SOFTMAX)
  Tensor logits;  // input to SOFTMAX, or the top output otherwise
  ForwardState state;
};

// Index of the layer whose output an endpoint name refers to.
int resolve_endpoint(const NetworkSpec& spec, const std::string& endpoint, bool post_activation);

ForwardResult forward(const NetworkSpec& spec, const Checkpoint& ckpt, const Tensor& batch,
                      const std::set<std::string>& endpoints, const ForwardOptions& options = {});

// Gradients of every parameterized layer given d(loss)/d(logits). The state
// is consumed.
std::map<std::string, ParamPair> backward(const NetworkSpec& spec, const Checkpoint& ckpt, ForwardState& state,
                                          const Tensor& logits_grad);

}  // namespace convprobe
