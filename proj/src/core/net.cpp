#include "net.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "util.hpp"

namespace convprobe {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kPool: return "pool";
    case LayerKind::kNorm: return "norm";
    case LayerKind::kFc: return "fc";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kSoftmax: return "softmax";
  }
  return "?";
}

int NetworkSpec::find(const std::string& name) const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].name == name) return static_cast<int>(i);
  return -1;
}

const LayerSpec& NetworkSpec::layer(const std::string& name) const {
  const int i = find(name);
  require(i >= 0, ErrorCode::kInvalidArgument, "no layer named '" + name + "'");
  return layers[i];
}

int NetworkSpec::top_fc() const {
  for (int i = static_cast<int>(layers.size()) - 1; i >= 0; --i)
    if (layers[i].kind() == LayerKind::kFc) return i;
  return -1;
}

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string fmt_float(float v) {
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

struct ParamWriter {
  std::string operator()(const ConvParams& p) const {
    return "conv:o" + std::to_string(p.out_channels) + ",k" + std::to_string(p.kernel) + ",s" +
           std::to_string(p.stride) + ",p" + std::to_string(p.pad);
  }
  std::string operator()(const PoolParams& p) const {
    return "pool:z" + std::to_string(p.size) + ",s" + std::to_string(p.stride);
  }
  std::string operator()(const LrnParams& p) const {
    return "norm:n" + std::to_string(p.local_size) + ",k" + fmt_double(p.k) + ",a" + fmt_double(p.alpha) + ",b" +
           fmt_double(p.beta);
  }
  std::string operator()(const FcParams& p) const { return "fc:u" + std::to_string(p.units); }
  std::string operator()(const ReluParams&) const { return "relu"; }
  std::string operator()(const SoftmaxParams&) const { return "softmax"; }
};

std::map<char, std::string> parse_fields(const std::string& s, const std::string& layer) {
  std::map<char, std::string> out;
  for (const std::string& tok : split(s, ',')) {
    require(tok.size() >= 2, ErrorCode::kData, "malformed hyperparameter in layer '" + layer + "'");
    out[tok[0]] = tok.substr(1);
  }
  return out;
}

int field_int(const std::map<char, std::string>& f, char key, const std::string& layer) {
  auto it = f.find(key);
  require(it != f.end(), ErrorCode::kData, std::string("layer '") + layer + "' missing field " + key);
  return parse_int(it->second);
}

}  // namespace

std::string NetworkSpec::to_text() const {
  std::string s = "input=" + std::to_string(input_shape[0]) + "x" + std::to_string(input_shape[1]) + "x" +
                  std::to_string(input_shape[2]);
  for (const LayerSpec& l : layers) {
    s += '|' + l.name + ':' + std::visit(ParamWriter{}, l.params);
    if (l.has_params()) s += ",m" + fmt_float(l.lr_mult);
  }
  return s;
}

NetworkSpec NetworkSpec::from_text(const std::string& text) {
  const std::vector<std::string> parts = split(text, '|');
  require(!parts.empty() && starts_with(parts[0], "input="), ErrorCode::kData, "spec text lacks input shape");
  const std::vector<std::string> dims = split(parts[0].substr(6), 'x');
  require(dims.size() == 3, ErrorCode::kData, "spec input shape must be CxHxW");
  NetworkSpec spec;
  for (int i = 0; i < 3; ++i) spec.input_shape[i] = parse_int(dims[i]);
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const std::vector<std::string> seg = split(parts[i], ':');
    require(seg.size() >= 2, ErrorCode::kData, "malformed layer entry '" + parts[i] + "'");
    LayerSpec l;
    l.name = seg[0];
    const std::string& kind = seg[1];
    const auto f = seg.size() > 2 ? parse_fields(seg[2], l.name) : std::map<char, std::string>{};
    if (kind == "conv") {
      l.params = ConvParams{field_int(f, 'o', l.name), field_int(f, 'k', l.name), field_int(f, 's', l.name),
                            field_int(f, 'p', l.name)};
    } else if (kind == "pool") {
      l.params = PoolParams{field_int(f, 'z', l.name), field_int(f, 's', l.name)};
    } else if (kind == "norm") {
      l.params = LrnParams{field_int(f, 'n', l.name), parse_double(f.at('k')), parse_double(f.at('a')),
                           parse_double(f.at('b'))};
    } else if (kind == "fc") {
      l.params = FcParams{field_int(f, 'u', l.name)};
    } else if (kind == "relu") {
      l.params = ReluParams{};
    } else if (kind == "softmax") {
      l.params = SoftmaxParams{};
    } else {
      fail(ErrorCode::kData, "unknown layer kind '" + kind + "'");
    }
    if (auto it = f.find('m'); it != f.end()) l.lr_mult = static_cast<float>(parse_double(it->second));
    spec.layers.push_back(std::move(l));
  }
  return spec;
}

std::uint64_t NetworkSpec::fingerprint() const { return fnv1a64(to_text()); }

bool NetworkSpec::operator==(const NetworkSpec& other) const { return to_text() == other.to_text(); }

const std::vector<std::string>& probe_endpoints() {
  static const std::vector<std::string> names = {"conv1", "pool1", "norm1", "conv2", "pool2",
                                                 "norm2", "conv3", "conv4", "conv5", "pool5",
                                                 "fc6",   "fc7",   "fc8"};
  return names;
}

namespace {

NetworkSpec build_alexnet_like(std::array<std::int64_t, 3> input, const std::array<ConvParams, 5>& convs,
                               int fc_width, int top_units) {
  NetworkSpec s;
  s.input_shape = input;
  auto add = [&](std::string name, LayerParams p) { s.layers.push_back({std::move(name), std::move(p), 1.0f}); };
  add("conv1", convs[0]);
  add("relu1", ReluParams{});
  add("pool1", PoolParams{3, 2});
  add("norm1", LrnParams{});
  add("conv2", convs[1]);
  add("relu2", ReluParams{});
  add("pool2", PoolParams{3, 2});
  add("norm2", LrnParams{});
  add("conv3", convs[2]);
  add("relu3", ReluParams{});
  add("conv4", convs[3]);
  add("relu4", ReluParams{});
  add("conv5", convs[4]);
  add("relu5", ReluParams{});
  add("pool5", PoolParams{3, 2});
  add("fc6", FcParams{fc_width});
  add("relu6", ReluParams{});
  add("fc7", FcParams{fc_width});
  add("relu7", ReluParams{});
  add("fc8", FcParams{top_units});
  add("prob", SoftmaxParams{});
  return s;
}

}  // namespace

NetworkSpec reference_spec(int top_units) {
  return build_alexnet_like({3, 227, 227},
                            {ConvParams{96, 11, 4, 0}, ConvParams{256, 5, 1, 2}, ConvParams{384, 3, 1, 1},
                             ConvParams{384, 3, 1, 1}, ConvParams{256, 3, 1, 1}},
                            4096, top_units);
}

NetworkSpec reference_spec_small(int top_units) {
  return build_alexnet_like({3, 64, 64},
                            {ConvParams{12, 8, 4, 0}, ConvParams{32, 5, 1, 2}, ConvParams{48, 3, 1, 1},
                             ConvParams{48, 3, 1, 1}, ConvParams{32, 3, 1, 1}},
                            128, top_units);
}

ShapeInfo infer_shapes(const NetworkSpec& spec) {
  ShapeInfo info;
  for (std::int64_t e : spec.input_shape)
    require(e > 0, ErrorCode::kShapeMismatch, "input shape must be positive");
  Shape cur(spec.input_shape.begin(), spec.input_shape.end());
  std::set<std::string> names;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::string where = "layer '" + l.name + "' (" + layer_kind_name(l.kind()) + ")";
    require(!l.name.empty(), ErrorCode::kShapeMismatch, "layer " + std::to_string(i) + " has no name");
    require(names.insert(l.name).second, ErrorCode::kShapeMismatch, "duplicate layer name '" + l.name + "'");
    require(l.lr_mult >= 0.0f, ErrorCode::kShapeMismatch, where + ": negative lr_mult");
    switch (l.kind()) {
      case LayerKind::kConv: {
        const auto& p = std::get<ConvParams>(l.params);
        require(cur.size() == 3, ErrorCode::kShapeMismatch,
                where + ": expected a CxHxW input, got " + shape_str(cur));
        require(p.out_channels > 0 && p.kernel > 0, ErrorCode::kShapeMismatch,
                where + ": filters and kernel must be positive");
        try {
          const Shape out = conv2d_output_shape({1, cur[0], cur[1], cur[2]},
                                                {p.out_channels, cur[0], p.kernel, p.kernel}, p.stride, p.pad);
          cur = {out[1], out[2], out[3]};
        } catch (const Error& e) {
          fail(ErrorCode::kShapeMismatch, where + ": " + e.what());
        }
        break;
      }
      case LayerKind::kPool: {
        const auto& p = std::get<PoolParams>(l.params);
        require(cur.size() == 3, ErrorCode::kShapeMismatch,
                where + ": expected a CxHxW input, got " + shape_str(cur));
        try {
          const Shape out = maxpool_output_shape({1, cur[0], cur[1], cur[2]}, p.size, p.stride);
          cur = {out[1], out[2], out[3]};
        } catch (const Error& e) {
          fail(ErrorCode::kShapeMismatch, where + ": " + e.what());
        }
        break;
      }
      case LayerKind::kNorm: {
        const auto& p = std::get<LrnParams>(l.params);
        require(cur.size() == 3, ErrorCode::kShapeMismatch,
                where + ": expected a CxHxW input, got " + shape_str(cur));
        require(p.local_size >= 1 && p.k > 0 && p.beta > 0, ErrorCode::kShapeMismatch,
                where + ": invalid normalization constants");
        break;
      }
      case LayerKind::kFc: {
        const auto& p = std::get<FcParams>(l.params);
        require(p.units > 0, ErrorCode::kShapeMismatch, where + ": units must be positive");
        cur = {p.units};
        break;
      }
      case LayerKind::kRelu:
        break;
      case LayerKind::kSoftmax:
        require(i + 1 == spec.layers.size(), ErrorCode::kShapeMismatch, where + ": softmax must be the top layer");
        require(i > 0 && spec.layers[i - 1].kind() == LayerKind::kFc, ErrorCode::kShapeMismatch,
                where + ": the layer below softmax must be FC");
        require(cur.size() == 1 && cur[0] >= 2, ErrorCode::kShapeMismatch,
                where + ": softmax needs a vector of at least two classes, got " + shape_str(cur));
        break;
    }
    info.outputs.push_back(cur);
    info.by_name[l.name] = cur;
  }
  return info;
}

std::map<std::string, std::pair<Shape, Shape>> param_shapes(const NetworkSpec& spec) {
  const ShapeInfo info = infer_shapes(spec);
  std::map<std::string, std::pair<Shape, Shape>> out;
  Shape in(spec.input_shape.begin(), spec.input_shape.end());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    if (l.kind() == LayerKind::kConv) {
      const auto& p = std::get<ConvParams>(l.params);
      out[l.name] = {Shape{p.out_channels, in[0], p.kernel, p.kernel}, Shape{p.out_channels}};
    } else if (l.kind() == LayerKind::kFc) {
      const auto& p = std::get<FcParams>(l.params);
      out[l.name] = {Shape{shape_numel(in), p.units}, Shape{p.units}};
    }
    in = info.outputs[i];
  }
  return out;
}

std::int64_t param_count(const NetworkSpec& spec) {
  std::int64_t n = 0;
  for (const auto& [name, shapes] : param_shapes(spec)) n += shape_numel(shapes.first) + shape_numel(shapes.second);
  return n;
}

std::int64_t param_count(const Checkpoint& ckpt) {
  std::int64_t n = 0;
  for (const auto& [name, p] : ckpt.entries) n += p.weights.size() + p.bias.size();
  return n;
}

ParamPair init_layer(const Shape& weight_shape, const Shape& bias_shape, const InitConfig& init,
                     std::uint64_t seed) {
  ParamPair p{Tensor(weight_shape), Tensor(bias_shape)};
  double stddev = init.std;
  if (init.scheme == InitScheme::kHe) {
    const std::int64_t fan_in = weight_shape.size() == 4 ? weight_shape[1] * weight_shape[2] * weight_shape[3]
                                                         : weight_shape[0];
    stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, stddev);
  for (float& v : p.weights.data()) v = static_cast<float>(gauss(rng));
  return p;
}

Checkpoint init_params(const NetworkSpec& spec, std::uint64_t seed, const InitConfig& init) {
  Checkpoint ckpt;
  for (const auto& [name, shapes] : param_shapes(spec))
    ckpt.entries[name] = init_layer(shapes.first, shapes.second, init, mix_seed(seed, name));
  stamp_spec(ckpt, spec);
  ckpt.metadata["seed"] = std::to_string(seed);
  ckpt.metadata["epoch"] = "0";
  return ckpt;
}

void stamp_spec(Checkpoint& ckpt, const NetworkSpec& spec) {
  ckpt.metadata["spec"] = spec.to_text();
  ckpt.metadata["fingerprint"] = hex64(spec.fingerprint());
}

void validate_checkpoint(const NetworkSpec& spec, const Checkpoint& ckpt) {
  for (const auto& [name, shapes] : param_shapes(spec)) {
    auto it = ckpt.entries.find(name);
    require(it != ckpt.entries.end(), ErrorCode::kSpecMismatch, "checkpoint has no entry for layer '" + name + "'");
    const ParamPair& p = it->second;
    require(p.weights.shape() == shapes.first && p.bias.shape() == shapes.second, ErrorCode::kSpecMismatch,
            "shape mismatch for layer '" + name + "': checkpoint has weights " + shape_str(p.weights.shape()) +
                " bias " + shape_str(p.bias.shape()) + ", spec expects weights " + shape_str(shapes.first) +
                " bias " + shape_str(shapes.second));
  }
}

// ---- Serialization ----------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'N', 'S', 'R', 'G'};
constexpr std::uint32_t kVersion = 1;

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}
  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const std::uint8_t* take(std::size_t n) {
    require(n <= b_.size() - pos_, ErrorCode::kTruncated,
            "truncated file: needed " + std::to_string(n) + " bytes at offset " + std::to_string(pos_));
    const std::uint8_t* p = b_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

void write_tensor(ByteWriter& w, const Tensor& t) {
  w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
  for (std::int64_t e : t.shape()) w.put<std::uint64_t>(static_cast<std::uint64_t>(e));
  w.bytes(t.raw(), static_cast<std::size_t>(t.size()) * sizeof(float));
}

Tensor read_tensor(ByteReader& r) {
  const int rank = r.get<std::uint8_t>();
  Shape shape(rank);
  for (int i = 0; i < rank; ++i) {
    const auto e = r.get<std::uint64_t>();
    require(e > 0 && e < (1ull << 40), ErrorCode::kData, "implausible tensor extent " + std::to_string(e));
    shape[i] = static_cast<std::int64_t>(e);
  }
  const std::int64_t n = shape_numel(shape);
  require(n >= 0 && static_cast<std::uint64_t>(n) * sizeof(float) <= r.remaining(), ErrorCode::kTruncated,
          "truncated file: tensor " + shape_str(shape) + " exceeds remaining bytes");
  std::vector<float> data(static_cast<std::size_t>(n));
  std::memcpy(data.data(), r.take(data.size() * sizeof(float)), data.size() * sizeof(float));
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.bytes(kMagic, 4);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.entries.size()));
  for (const auto& [name, p] : ckpt.entries) {
    require(name.size() <= 0xffff, ErrorCode::kInvalidArgument, "layer name too long");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.put<std::uint8_t>(2);
    write_tensor(w, p.weights);
    write_tensor(w, p.bias);
  }
  std::string meta;
  for (const auto& [k, v] : ckpt.metadata) {
    require(k.find_first_of("=\n") == std::string::npos && v.find('\n') == std::string::npos,
            ErrorCode::kInvalidArgument, "metadata key/value contains a reserved character: " + k);
    meta += k + "=" + v + "\n";
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(meta.size()));
  w.bytes(meta.data(), meta.size());
  return std::move(w.buffer());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= 4, ErrorCode::kTruncated, "truncated file: shorter than the magic");
  require(std::memcmp(bytes.data(), kMagic, 4) == 0, ErrorCode::kBadMagic, "bad magic: not an NSRG checkpoint");
  ByteReader r(bytes);
  r.take(4);
  const auto version = r.get<std::uint32_t>();
  require(version == kVersion, ErrorCode::kData, "unsupported checkpoint version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  Checkpoint ckpt;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>();
    const std::uint8_t* s = r.take(len);
    std::string name(reinterpret_cast<const char*>(s), len);
    const int tensors = r.get<std::uint8_t>();
    require(tensors == 2, ErrorCode::kData,
            "entry '" + name + "' holds " + std::to_string(tensors) + " tensors, expected weights and bias");
    ParamPair p;
    p.weights = read_tensor(r);
    p.bias = read_tensor(r);
    ckpt.entries[name] = std::move(p);
  }
  const auto meta_len = r.get<std::uint32_t>();
  const std::uint8_t* m = r.take(meta_len);
  for (const std::string& line : split(std::string(reinterpret_cast<const char*>(m), meta_len), '\n')) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::kData, "malformed metadata line '" + line + "'");
    ckpt.metadata[line.substr(0, eq)] = line.substr(eq + 1);
  }
  require(r.remaining() == 0, ErrorCode::kData, "trailing bytes after checkpoint metadata");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

Checkpoint load_checkpoint(const std::string& path, const NetworkSpec& spec) {
  Checkpoint ckpt = load_checkpoint(path);
  validate_checkpoint(spec, ckpt);
  return ckpt;
}

void save_raw_tensor(const Tensor& t, const std::string& path) {
  ByteWriter w;
  write_tensor(w, t);
  write_file(path, w.buffer());
}

Tensor load_raw_tensor(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  ByteReader r(bytes);
  Tensor t = read_tensor(r);
  require(r.remaining() == 0, ErrorCode::kData, "trailing bytes in raw tensor file " + path);
  return t;
}

// ---- Execution -------------------------------------------------------------

int resolve_endpoint(const NetworkSpec& spec, const std::string& endpoint, bool post_activation) {
  const int i = spec.find(endpoint);
  require(i >= 0, ErrorCode::kInvalidArgument, "unknown endpoint '" + endpoint + "'");
  const LayerKind k = spec.layers[i].kind();
  if (post_activation && (k == LayerKind::kConv || k == LayerKind::kFc) &&
      i + 1 < static_cast<int>(spec.layers.size()) && spec.layers[i + 1].kind() == LayerKind::kRelu)
    return i + 1;
  return i;
}

namespace {

Tensor flatten_batch(const Tensor& x) {
  const std::int64_t n = x.dim(0);
  return x.reshaped({n, x.size() / n});
}

}  // namespace

ForwardResult forward(const NetworkSpec& spec, const Checkpoint& ckpt, const Tensor& batch,
                      const std::set<std::string>& endpoints, const ForwardOptions& options) {
  const Shape expected{spec.input_shape[0], spec.input_shape[1], spec.input_shape[2]};
  require(batch.rank() == 4 && Shape(batch.shape().begin() + 1, batch.shape().end()) == expected,
          ErrorCode::kShapeMismatch,
          "batch shape " + shape_str(batch.shape()) + " does not match network input N" + shape_str(expected));
  std::map<int, std::vector<std::string>> wanted;
  for (const std::string& e : endpoints) wanted[resolve_endpoint(spec, e, options.post_activation)].push_back(e);

  const std::size_t L = spec.layers.size();
  ForwardResult result;
  ForwardState& st = result.state;
  if (options.retain_state) {
    st.input = batch;
    st.outputs.resize(L);
    st.pool_argmax.resize(L);
    st.lrn_scale.resize(L);
  }
  Tensor cur = batch;
  for (std::size_t i = 0; i < L; ++i) {
    const LayerSpec& l = spec.layers[i];
    Tensor next;
    switch (l.kind()) {
      case LayerKind::kConv: {
        const auto& p = std::get<ConvParams>(l.params);
        const ParamPair& w = ckpt.entries.at(l.name);
        next = conv2d_forward(cur, w.weights, w.bias, p.stride, p.pad);
        break;
      }
      case LayerKind::kPool: {
        const auto& p = std::get<PoolParams>(l.params);
        MaxPoolOutput<float> out = maxpool_forward(cur, p.size, p.stride);
        next = std::move(out.value);
        if (options.retain_state) st.pool_argmax[i] = std::move(out.argmax);
        break;
      }
      case LayerKind::kNorm: {
        LrnOutput<float> out = lrn_forward(cur, std::get<LrnParams>(l.params));
        next = std::move(out.value);
        if (options.retain_state) st.lrn_scale[i] = std::move(out.scale);
        break;
      }
      case LayerKind::kFc: {
        const ParamPair& w = ckpt.entries.at(l.name);
        next = affine_forward(cur.rank() == 2 ? cur : flatten_batch(cur), w.weights, w.bias);
        break;
      }
      case LayerKind::kRelu:
        next = relu_forward(cur);
        break;
      case LayerKind::kSoftmax:
        result.logits = cur;
        next = softmax(cur);
        break;
    }
    if (auto it = wanted.find(static_cast<int>(i)); it != wanted.end())
      for (const std::string& name : it->second) result.activations[name] = next;
    if (options.retain_state) st.outputs[i] = next;
    cur = std::move(next);
  }
  if (result.logits.empty()) result.logits = cur;
  result.output = std::move(cur);
  st.valid = options.retain_state;
  return result;
}

std::map<std::string, ParamPair> backward(const NetworkSpec& spec, const Checkpoint& ckpt, ForwardState& state,
                                          const Tensor& logits_grad) {
  require(state.valid, ErrorCode::kInvalidArgument, "backward called without a retained forward state");
  state.valid = false;
  int top = static_cast<int>(spec.layers.size()) - 1;
  if (top >= 0 && spec.layers[top].kind() == LayerKind::kSoftmax) --top;
  require(top >= 0, ErrorCode::kInvalidArgument, "network has no differentiable layers");

  int lowest_trainable = static_cast<int>(spec.layers.size());
  for (int i = 0; i <= top; ++i)
    if (spec.layers[i].has_params() && spec.layers[i].lr_mult != 0.0f) {
      lowest_trainable = i;
      break;
    }

  std::map<std::string, ParamPair> grads;
  for (int i = 0; i <= top; ++i) {
    const LayerSpec& l = spec.layers[i];
    if (l.has_params()) {
      const ParamPair& w = ckpt.entries.at(l.name);
      grads[l.name] = ParamPair{Tensor(w.weights.shape()), Tensor(w.bias.shape())};
    }
  }

  Tensor grad = logits_grad;
  require(grad.shape() == state.outputs[top].shape(), ErrorCode::kShapeMismatch,
          "logits gradient " + shape_str(grad.shape()) + " does not match output " +
              shape_str(state.outputs[top].shape()));
  for (int i = top; i >= lowest_trainable; --i) {
    const LayerSpec& l = spec.layers[i];
    const Tensor& in = i == 0 ? state.input : state.outputs[i - 1];
    const bool need_dx = i > lowest_trainable;
    switch (l.kind()) {
      case LayerKind::kConv: {
        const auto& p = std::get<ConvParams>(l.params);
        ConvGrads<float> g = conv2d_backward(in, ckpt.entries.at(l.name).weights, p.stride, p.pad, grad, need_dx);
        if (l.lr_mult != 0.0f) grads[l.name] = ParamPair{std::move(g.dw), std::move(g.db)};
        grad = std::move(g.dx);
        break;
      }
      case LayerKind::kFc: {
        const Tensor flat = in.rank() == 2 ? in : flatten_batch(in);
        ConvGrads<float> g = affine_backward(flat, ckpt.entries.at(l.name).weights, grad, need_dx);
        if (l.lr_mult != 0.0f) grads[l.name] = ParamPair{std::move(g.dw), std::move(g.db)};
        grad = need_dx ? g.dx.reshaped(in.shape()) : Tensor();
        break;
      }
      case LayerKind::kPool:
        if (need_dx) grad = maxpool_backward(in.shape(), state.pool_argmax[i], grad);
        break;
      case LayerKind::kNorm:
        if (need_dx) {
          LrnOutput<float> fwd{state.outputs[i], state.lrn_scale[i]};
          grad = lrn_backward(in, fwd, grad, std::get<LrnParams>(l.params));
        }
        break;
      case LayerKind::kRelu:
        if (need_dx) grad = relu_backward(in, grad);
        break;
      case LayerKind::kSoftmax:
        fail(ErrorCode::kInvalidArgument, "softmax below the top of the network");
    }
  }
  return grads;
}

}  // namespace convprobe
