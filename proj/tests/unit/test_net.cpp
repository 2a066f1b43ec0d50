#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "net.hpp"
#include "oracles.hpp"
#include "util.hpp"

using namespace convprobe;

namespace {

std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "convprobe_test_net";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

NetworkSpec tiny_spec() {
  NetworkSpec s;
  s.input_shape = {2, 5, 5};
  s.layers = {{"conv1", ConvParams{3, 3, 1, 0}, 1.0f},
              {"relu1", ReluParams{}, 1.0f},
              {"fc1", FcParams{2}, 1.0f},
              {"prob", SoftmaxParams{}, 1.0f}};
  return s;
}

// Same network composed directly from double-precision primitives.
double tiny_loss64(const Checkpoint& c, const Tensor64& x, const std::vector<int>& labels) {
  const auto& cv = c.entries.at("conv1");
  const auto& fc = c.entries.at("fc1");
  Tensor64 h = conv2d_forward(x, cv.weights.cast<double>(), cv.bias.cast<double>(), 1, 0);
  h = relu_forward(h);
  h = h.reshaped({x.dim(0), h.size() / x.dim(0)});
  const Tensor64 z = affine_forward(h, fc.weights.cast<double>(), fc.bias.cast<double>());
  return cross_entropy_loss(z, labels).value[0];
}

}  // namespace

TEST_CASE("reference spec geometry") {
  const NetworkSpec spec = reference_spec();
  const ShapeInfo info = infer_shapes(spec);
  CHECK(probe_endpoints().size() == 13);
  for (const auto& e : probe_endpoints()) CHECK(spec.find(e) >= 0);
  CHECK(info.by_name.at("conv5") == Shape{256, 13, 13});
  CHECK(shape_numel(info.by_name.at("pool5")) == 9216);
  CHECK(info.by_name.at("fc6") == Shape{4096});
  CHECK(info.by_name.at("fc7") == Shape{4096});
  CHECK(info.by_name.at("fc8") == Shape{1000});
  CHECK(info.by_name.at("conv1") == Shape{96, 55, 55});
}

TEST_CASE("small spec keeps names and kind ordering") {
  const NetworkSpec big = reference_spec(), small = reference_spec_small();
  REQUIRE(big.layers.size() == small.layers.size());
  for (std::size_t i = 0; i < big.layers.size(); ++i) {
    CHECK(big.layers[i].name == small.layers[i].name);
    CHECK(big.layers[i].kind() == small.layers[i].kind());
  }
  CHECK_NOTHROW(infer_shapes(small));
}

TEST_CASE("infer_shapes") {
  SUBCASE("single FC") {
    NetworkSpec s;
    s.input_shape = {10, 1, 1};
    s.layers = {{"fc", FcParams{2}, 1.0f}};
    CHECK(infer_shapes(s).by_name.at("fc") == Shape{2});
  }
  SUBCASE("same padding preserves spatial size") {
    NetworkSpec s;
    s.input_shape = {3, 9, 9};
    s.layers = {{"c", ConvParams{4, 3, 1, 1}, 1.0f}};
    CHECK(infer_shapes(s).by_name.at("c") == Shape{4, 9, 9});
  }
  SUBCASE("inconsistent chain names the layer") {
    NetworkSpec s;
    s.input_shape = {3, 8, 8};
    s.layers = {{"fc6", FcParams{4}, 1.0f}, {"conv9", ConvParams{2, 3, 1, 0}, 1.0f}};
    try {
      infer_shapes(s);
      FAIL("expected failure");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("conv9") != std::string::npos);
    }
  }
  SUBCASE("softmax must sit on an FC at the top") {
    NetworkSpec s = tiny_spec();
    s.layers.insert(s.layers.begin() + 2, LayerSpec{"relu_x", ReluParams{}, 1.0f});
    std::swap(s.layers[2], s.layers[3]);  // fc1, relu_x, prob
    CHECK_THROWS_AS(infer_shapes(s), Error);
  }
  SUBCASE("duplicate names rejected") {
    NetworkSpec s = tiny_spec();
    s.layers[1].name = "conv1";
    CHECK_THROWS_AS(infer_shapes(s), Error);
  }
}

TEST_CASE("spec text round trip") {
  NetworkSpec s = reference_spec_small(7);
  s.layers[19].lr_mult = 10.0f;
  const NetworkSpec back = NetworkSpec::from_text(s.to_text());
  CHECK(back.to_text() == s.to_text());
  CHECK(back.layers[19].lr_mult == 10.0f);
  CHECK(std::get<LrnParams>(back.layers[3].params).alpha == 1e-4);
}

TEST_CASE("init_params") {
  const NetworkSpec spec = reference_spec_small(2);
  const Checkpoint a = init_params(spec, 17), b = init_params(spec, 17), c = init_params(spec, 18);
  CHECK(encode_checkpoint(a) == encode_checkpoint(b));
  CHECK_FALSE(a.entries.at("fc6").weights == c.entries.at("fc6").weights);
  for (const auto& [name, p] : a.entries)
    for (float v : p.bias.data()) CHECK(v == 0.0f);
  validate_checkpoint(spec, a);

  const ParamPair block = init_layer({4096, 2}, {2}, InitConfig{}, 99);
  double mean = 0, sq = 0;
  for (float v : block.weights.data()) mean += v;
  mean /= block.weights.size();
  for (float v : block.weights.data()) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / (block.weights.size() - 1));
  CHECK(sd > 0.009);
  CHECK(sd < 0.011);
}

TEST_CASE("forward") {
  const NetworkSpec spec = reference_spec_small(2);
  const Checkpoint ckpt = init_params(spec, 3, {InitScheme::kHe, 0});
  const Tensor batch = oracle::random_tensor({4, 3, 64, 64}, 5, -100, 100);

  SUBCASE("softmax rows sum to one") {
    const auto r = forward(spec, ckpt, batch, {"prob"});
    const Tensor& p = r.activations.at("prob");
    for (int n = 0; n < 4; ++n) CHECK(std::abs(p.at({n, 0}) + p.at({n, 1}) - 1.0) <= 1e-6);
  }
  SUBCASE("all probe endpoints match inferred shapes") {
    const std::set<std::string> eps(probe_endpoints().begin(), probe_endpoints().end());
    const auto r = forward(spec, ckpt, batch, eps);
    const ShapeInfo info = infer_shapes(spec);
    REQUIRE(r.activations.size() == 13);
    for (const auto& [name, t] : r.activations) {
      Shape want{4};
      for (auto e : info.by_name.at(name)) want.push_back(e);
      CHECK(t.shape() == want);
      CHECK(t.all_finite());
    }
    // post-activation: ReLU outputs are non-negative
    for (float v : r.activations.at("conv3").data()) CHECK(v >= 0.0f);
  }
  SUBCASE("pre-activation switch") {
    const auto r = forward(spec, ckpt, batch, {"fc7"}, ForwardOptions{false, false});
    bool any_negative = false;
    for (float v : r.activations.at("fc7").data()) any_negative |= v < 0.0f;
    CHECK(any_negative);
  }
  SUBCASE("deterministic") {
    const auto r1 = forward(spec, ckpt, batch, {"conv1", "fc8"});
    const auto r2 = forward(spec, ckpt, batch, {"conv1", "fc8"});
    CHECK(bit_identical(r1.activations.at("conv1"), r2.activations.at("conv1")));
    CHECK(bit_identical(r1.activations.at("fc8"), r2.activations.at("fc8")));
  }
  SUBCASE("unknown endpoint rejected") { CHECK_THROWS_AS(forward(spec, ckpt, batch, {"fc42"}), Error); }
  SUBCASE("wrong input shape rejected") {
    CHECK_THROWS_AS(forward(spec, ckpt, Tensor({1, 3, 32, 32}), {}), Error);
  }
}

TEST_CASE("reference forward at full scale") {
  const NetworkSpec spec = reference_spec();
  const Checkpoint ckpt = init_params(spec, 1);
  const std::set<std::string> eps(probe_endpoints().begin(), probe_endpoints().end());
  const auto r = forward(spec, ckpt, oracle::random_tensor({1, 3, 227, 227}, 2, -100, 100), eps);
  CHECK(r.activations.size() == 13);
  CHECK(r.activations.at("conv5").shape() == Shape{1, 256, 13, 13});
  CHECK(r.activations.at("pool5").size() == 9216);
  CHECK(r.activations.at("fc8").shape() == Shape{1, 1000});
}

TEST_CASE("backward") {
  const NetworkSpec spec = tiny_spec();
  const Checkpoint ckpt = init_params(spec, 4, {InitScheme::kGaussian, 0.5});
  const Tensor x = oracle::random_tensor({3, 2, 5, 5}, 6);
  const std::vector<int> labels{0, 1, 1};

  SUBCASE("zero upstream gives zero gradients") {
    auto r = forward(spec, ckpt, x, {}, ForwardOptions{true});
    const auto g = backward(spec, ckpt, r.state, Tensor({3, 2}));
    for (const auto& [name, p] : g) {
      for (float v : p.weights.data()) CHECK(v == 0.0f);
      for (float v : p.bias.data()) CHECK(v == 0.0f);
    }
  }
  SUBCASE("matches 64-bit finite differences") {
    auto r = forward(spec, ckpt, x, {}, ForwardOptions{true});
    const Tensor dlogits = cross_entropy_loss(r.logits, labels).pullback(Tensor({1}, 1.0f))[0];
    const auto g = backward(spec, ckpt, r.state, dlogits);
    const Tensor64 x64 = x.cast<double>();
    const double eps = 1e-3;
    double worst = 0;
    for (const std::string layer : {"conv1", "fc1"}) {
      for (int which = 0; which < 2; ++which) {
        const Tensor& analytic = which == 0 ? g.at(layer).weights : g.at(layer).bias;
        for (std::int64_t i = 0; i < analytic.size(); ++i) {
          Checkpoint p = ckpt, m = ckpt;
          Tensor& tp = which == 0 ? p.entries[layer].weights : p.entries[layer].bias;
          Tensor& tm = which == 0 ? m.entries[layer].weights : m.entries[layer].bias;
          // perturb through double so the step is exact in the loss oracle
          const double base = tp[i];
          tp[i] = static_cast<float>(base + eps);
          tm[i] = static_cast<float>(base - eps);
          const double step = static_cast<double>(tp[i]) - tm[i];
          const double numeric = (tiny_loss64(p, x64, labels) - tiny_loss64(m, x64, labels)) / step;
          const double a = analytic[i];
          worst = std::max(worst, std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)}));
        }
      }
    }
    CHECK(worst < 1e-4);
  }
  SUBCASE("duplicated sample gives the single-sample gradient") {
    const Tensor one = oracle::random_tensor({1, 2, 5, 5}, 8);
    Tensor two({2, 2, 5, 5});
    std::copy(one.data().begin(), one.data().end(), two.data().begin());
    std::copy(one.data().begin(), one.data().end(), two.data().begin() + one.size());
    auto grads_for = [&](const Tensor& batch, std::vector<int> ys) {
      auto r = forward(spec, ckpt, batch, {}, ForwardOptions{true});
      const Tensor d = cross_entropy_loss(r.logits, ys).pullback(Tensor({1}, 1.0f))[0];
      return backward(spec, ckpt, r.state, d);
    };
    const auto g1 = grads_for(one, {1}), g2 = grads_for(two, {1, 1});
    for (const auto& [name, p] : g1)
      for (std::int64_t i = 0; i < p.weights.size(); ++i)
        CHECK(g2.at(name).weights[i] == doctest::Approx(p.weights[i]).epsilon(1e-5));
  }
  SUBCASE("backward without forward state rejected") {
    auto r = forward(spec, ckpt, x, {});
    CHECK_THROWS_AS(backward(spec, ckpt, r.state, Tensor({3, 2})), Error);
    auto r2 = forward(spec, ckpt, x, {}, ForwardOptions{true});
    backward(spec, ckpt, r2.state, Tensor({3, 2}));
    CHECK_THROWS_AS(backward(spec, ckpt, r2.state, Tensor({3, 2})), Error);  // single use
  }
  SUBCASE("frozen layers report zero gradients") {
    NetworkSpec frozen = spec;
    frozen.layers[0].lr_mult = 0.0f;
    auto r = forward(frozen, ckpt, x, {}, ForwardOptions{true});
    const auto g = backward(frozen, ckpt, r.state, Tensor({3, 2}, 1.0f));
    for (float v : g.at("conv1").weights.data()) CHECK(v == 0.0f);
    bool any = false;
    for (float v : g.at("fc1").weights.data()) any |= v != 0.0f;
    CHECK(any);
  }
}

TEST_CASE("checkpoint serialization") {
  const NetworkSpec spec = reference_spec_small(2);
  Checkpoint ckpt = init_params(spec, 21);
  ckpt.metadata["note"] = "hello world";
  const std::string path = temp_path("round.nsrg");
  save_checkpoint(ckpt, path);
  const Checkpoint back = load_checkpoint(path, spec);
  CHECK(back == ckpt);
  const std::string path2 = temp_path("round2.nsrg");
  save_checkpoint(back, path2);
  CHECK(read_file(path) == read_file(path2));

  SUBCASE("header layout") {
    const auto bytes = read_file(path);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "NSRG");
    CHECK(bytes[4] == 1);
    CHECK(bytes[8] == ckpt.entries.size());
  }
  SUBCASE("bad magic") {
    auto bytes = read_file(path);
    bytes[0] = 'X';
    try {
      decode_checkpoint(bytes);
      FAIL("expected failure");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kBadMagic);
      CHECK(std::string(e.what()).find("bad magic") != std::string::npos);
    }
  }
  SUBCASE("truncated") {
    auto bytes = read_file(path);
    bytes.resize(bytes.size() / 2);
    try {
      decode_checkpoint(bytes);
      FAIL("expected failure");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kTruncated);
    }
  }
  SUBCASE("1000-unit fc8 against a 2-unit spec") {
    const std::string p1000 = temp_path("fc8_1000.nsrg");
    save_checkpoint(init_params(reference_spec_small(1000), 3), p1000);
    try {
      load_checkpoint(p1000, spec);
      FAIL("expected failure");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kSpecMismatch);
      CHECK(std::string(e.what()).find("fc8") != std::string::npos);
    }
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_checkpoint(temp_path("nope.nsrg")), Error); }
}

TEST_CASE("parameter counts") {
  NetworkSpec s = tiny_spec();
  // conv: 3*2*3*3 + 3; fc: (3*3*3)*2 + 2
  CHECK(param_count(s) == 57 + 56);
  CHECK(param_count(init_params(s, 1)) == param_count(s));
}
