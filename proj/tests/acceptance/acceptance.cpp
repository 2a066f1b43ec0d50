// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: acceptance [criterion numbers...]

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "harness.hpp"
#include "oracles.hpp"
#include "ops.hpp"
#include "surgery.hpp"
#include "synthetic.hpp"
#include "util.hpp"

using namespace convprobe;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  bool skipped = false;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string strf(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string strf(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

fs::path work_root() {
  static const fs::path root = [] {
    const fs::path p = fs::temp_directory_path() / "convprobe_acceptance";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

PreprocessConfig desk_prep() {
  PreprocessConfig p;
  p.resize_to = 72;
  p.crop = 64;
  p.mean = {128, 128, 128};
  p.scale = 1.0f / 128;
  return p;
}

ExperimentConfig desk_config() {
  ExperimentConfig c;
  c.preprocess.config = desk_prep();
  c.preprocess.auto_mean = true;
  c.experiment.network = "small";
  c.experiment.source_classes = kPretextClasses;
  c.experiment.init.scheme = InitScheme::kHe;
  return c;
}

// ---- 1: gradient integrity ---------------------------------------------------

Tensor64 away_from(Tensor64 t, double at, double margin) {
  for (double& v : t.data())
    if (std::abs(v - at) < margin) v += v < at ? -margin : margin;
  return t;
}

Tensor64 distinct(const Shape& shape, std::mt19937_64& rng) {
  Tensor64 t(shape);
  std::vector<double> v(static_cast<std::size_t>(t.size()));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.1 * static_cast<double>(i);
  std::shuffle(v.begin(), v.end(), rng);
  std::copy(v.begin(), v.end(), t.data().begin());
  return t;
}

Outcome gradient_integrity() {
  const auto t0 = Clock::now();
  const double eps = 1e-3;
  const int shapes = 12;
  std::map<std::string, double> worst;
  int checks = 0;
  std::mt19937_64 rng(2024);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto record = [&](const std::string& op, const GradCheckReport& r) {
    worst[op] = std::max(worst[op], r.max_rel_error);
    ++checks;
  };
  for (int s = 0; s < shapes; ++s) {
    const std::uint64_t seed = 100 + s;
    {
      const int n = pick(1, 2), c = pick(1, 3), k = pick(1, 3), r = pick(1, 3), stride = pick(1, 2), pad = pick(0, 1);
      const int h = pick(std::max(1, r - 2 * pad), 7), w = pick(std::max(1, r - 2 * pad), 7);
      const auto fn = [=](const std::vector<Tensor64>& in) { return conv2d(in[0], in[1], in[2], stride, pad); };
      record("conv2d", grad_check(fn,
                                  {oracle::random_tensor64({n, c, h, w}, seed), oracle::random_tensor64({k, c, r, r}, seed + 1),
                                   oracle::random_tensor64({k}, seed + 2)},
                                  eps, seed));
    }
    {
      const int size = pick(1, 3), stride = pick(1, 2);
      const Shape shape{pick(1, 2), pick(1, 3), pick(size, 7), pick(size, 7)};
      const auto fn = [=](const std::vector<Tensor64>& in) { return maxpool(in[0], size, stride).grad; };
      record("maxpool", grad_check(fn, {distinct(shape, rng)}, eps, seed));
    }
    {
      const LrnParams p{pick(1, 5), 1.0 + pick(0, 2), 0.5 * pick(1, 4), 0.75};
      const auto fn = [=](const std::vector<Tensor64>& in) { return lrn(in[0], p); };
      record("lrn", grad_check(fn, {oracle::random_tensor64({pick(1, 2), pick(1, 7), pick(1, 4), pick(1, 4)}, seed, -3, 3)},
                               eps, seed));
    }
    {
      const int n = pick(1, 5), d = pick(1, 8), m = pick(1, 5);
      const auto fn = [](const std::vector<Tensor64>& in) { return affine(in[0], in[1], in[2]); };
      record("affine", grad_check(fn,
                                  {oracle::random_tensor64({n, d}, seed), oracle::random_tensor64({d, m}, seed + 1),
                                   oracle::random_tensor64({m}, seed + 2)},
                                  eps, seed));
    }
    {
      const auto fn = [](const std::vector<Tensor64>& in) { return relu(in[0]); };
      record("relu", grad_check(fn, {away_from(oracle::random_tensor64({pick(1, 4), pick(1, 9)}, seed), 0.0, 0.01)}, eps,
                                seed));
    }
    {
      const int n = pick(1, 6), c = pick(2, 5);
      std::vector<int> labels;
      for (int i = 0; i < n; ++i) labels.push_back(pick(0, c - 1));
      const auto fn = [labels](const std::vector<Tensor64>& in) { return cross_entropy_loss(in[0], labels); };
      record("softmax_cross_entropy", grad_check(fn, {oracle::random_tensor64({n, c}, seed, -3, 3)}, eps, seed));
    }
    {
      const int n = pick(1, 8);
      std::vector<int> labels;
      for (int i = 0; i < n; ++i) labels.push_back(pick(0, 1) ? 1 : -1);
      Tensor64 sc = oracle::random_tensor64({n}, seed, -3, 3);
      for (std::int64_t i = 0; i < n; ++i)
        if (std::abs(1.0 - labels[i] * sc[i]) < 0.01) sc[i] += 0.05;
      const auto fn = [labels](const std::vector<Tensor64>& in) { return hinge_loss(in[0], labels, in[1][0], 0.05); };
      record("hinge", grad_check(fn, {sc, Tensor64({1}, 0.3 + 0.1 * s)}, eps, seed));
    }
  }
  const double secs = seconds_since(t0);
  double overall = 0;
  std::string which;
  for (const auto& [op, e] : worst)
    if (e >= overall) {
      overall = e;
      which = op;
    }
  const bool pass = overall < 1e-4 && secs < 60;
  return {pass, strf("%zu primitives x %d shapes (%d checks), max rel err %.2e (%s) < 1e-4; %.1f s < 60 s", worst.size(),
                     shapes, checks, overall, which.c_str(), secs)};
}

// ---- 2: convolution oracle -----------------------------------------------------

Outcome convolution_oracle() {
  const auto t0 = Clock::now();
  double worst = 0;
  long cases = 0;
  std::uint64_t seed = 1;
  for (int n = 1; n <= 4; ++n)
    for (int c = 1; c <= 4; ++c)
      for (int k = 1; k <= 4; ++k)
        for (int r = 1; r <= 3; ++r)
          for (int h = 1; h <= 8; ++h)
            for (int w = 1; w <= 8; ++w)
              for (int stride = 1; stride <= 2; ++stride)
                for (int pad = 0; pad <= 1; ++pad) {
                  if (h + 2 * pad < r || w + 2 * pad < r) continue;
                  const Tensor x = oracle::random_tensor({n, c, h, w}, seed++);
                  const Tensor wt = oracle::random_tensor({k, c, r, r}, seed++);
                  const Tensor b = oracle::random_tensor({k}, seed++);
                  const Tensor y = conv2d_forward(x, wt, b, stride, pad);
                  const auto want = oracle::conv2d(x, wt, b, stride, pad);
                  if (y.size() != static_cast<std::int64_t>(want.size())) return {false, "output size differs from oracle"};
                  worst = std::max(worst, oracle::max_rel_error(y, want));
                  ++cases;
                }
  const double secs = seconds_since(t0);
  return {worst <= 1e-5 && secs < 120,
          strf("%ld shapes (N,C,K<=4, R<=3, H,W<=8, stride 1-2, pad 0-1), max rel err %.2e <= 1e-5; %.1f s < 120 s",
               cases, worst, secs)};
}

// ---- 3: shape fidelity ----------------------------------------------------------

Outcome shape_fidelity() {
  const ShapeInfo info = infer_shapes(reference_spec());
  const Shape conv5 = info.by_name.at("conv5");
  const Shape pool5 = info.by_name.at("pool5");
  std::int64_t flat = 1;
  for (auto e : pool5) flat *= e;
  const bool pass = conv5 == Shape{256, 13, 13} && flat == 9216;
  return {pass, strf("conv5 %s (want 256x13x13), pool5 flatten %lld (want 9216)", shape_str(conv5).c_str(),
                     static_cast<long long>(flat))};
}

// ---- 4: schedule exactness --------------------------------------------------------

Outcome schedule_exactness() {
  TrainConfig t;
  t.base_lr = 0.001;
  t.step_epochs = 6;
  t.gamma = 0.1;
  t.epochs = 65;
  int mismatches = 0;
  std::string first;
  for (int e = 0; e < t.epochs; ++e) {
    const double want = std::strtod(("1e" + std::to_string(-3 - e / 6)).c_str(), nullptr);
    const double got = lr_at(t, e);
    if (got != want) {
      if (!mismatches) first = strf("epoch %d: %.17g != %.17g", e, got, want);
      ++mismatches;
    }
  }
  return {mismatches == 0,
          mismatches ? first
                     : strf("65 epochs exact; lr(5)=%g lr(6)=%g lr(12)=%g", lr_at(t, 5), lr_at(t, 6), lr_at(t, 12))};
}

// ---- 5: overfit capacity -------------------------------------------------------------

Outcome overfit_capacity() {
  const auto t0 = Clock::now();
  const NetworkSpec spec = reference_spec_small(2);
  const SyntheticSet set = make_binary_set(16, 72, 31);
  const TrainSet data{&set.images, set.labels};
  std::string detail;
  bool pass = true;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    TrainConfig cfg;
    cfg.base_lr = 0.01;
    cfg.step_epochs = 1000;
    cfg.epochs = 300;
    cfg.batch_size = 8;
    cfg.seed = seed;
    const auto r = train(spec, init_params(spec, seed, {InitScheme::kHe}), data, desk_prep(), cfg, &data,
                         [](const EpochRecord& e) { return e.val_acc < 1.0; });
    const double acc = accuracy(spec, r.checkpoint, data, desk_prep());
    pass &= acc == 1.0;
    detail += strf("seed %llu: %.0f%% at epoch %zu; ", static_cast<unsigned long long>(seed), 100 * acc,
                   r.history.size());
  }
  const double secs = seconds_since(t0);
  pass &= secs < 60;
  return {pass, detail + strf("%.1f s < 60 s", secs)};
}

// ---- 6 and 7 share one pretrained source network --------------------------------------

struct Pretrained {
  std::string path;
  double seconds = 0;
};

const Pretrained& pretrained_source() {
  static const Pretrained p = [] {
    const auto t0 = Clock::now();
    ExperimentConfig c = desk_config();
    c.seed = 1;
    c.pretrain.images = 5000;
    c.pretrain.image_size = 72;
    c.pretrain.train.base_lr = 0.02;
    c.pretrain.train.epochs = 8;
    c.pretrain.train.step_epochs = 5;
    c.pretrain.train.batch_size = 32;
    const fs::path dir = work_root() / "pretrain";
    fs::create_directories(dir);
    pretrain(c, dir.string());
    return Pretrained{(dir / "pretrained.nsrg").string(), seconds_since(t0)};
  }();
  return p;
}

Outcome transfer_direction() {
  const auto t0 = Clock::now();
  const Pretrained& src = pretrained_source();
  const NetworkSpec source_spec = reference_spec_small(kPretextClasses);
  const Checkpoint source = load_checkpoint(src.path, source_spec);
  const SurgeryPlan plan = preset_plan("finetune", source_spec);
  const NetworkSpec scratch_spec = reference_spec_small(2);

  const SyntheticSet test = make_binary_set(400, 72, 777);
  std::vector<Tensor> test_sq;
  for (const auto& im : test.images) test_sq.push_back(resize_square(im, 72));

  TrainConfig tc;
  tc.base_lr = 0.005;
  tc.epochs = 30;
  tc.step_epochs = 20;
  tc.batch_size = 8;
  double sum_pre = 0, sum_rand = 0;
  std::string per_seed;
  const int seeds = 5;
  for (int s = 0; s < seeds; ++s) {
    const SyntheticSet tr = make_binary_set(40, 72, 1000 + s);
    std::vector<Tensor> sq;
    for (const auto& im : tr.images) sq.push_back(resize_square(im, 72));
    PreprocessConfig prep = desk_prep();
    prep.mean = channel_mean(sq);
    const TrainSet ts{&sq, tr.labels};
    tc.seed = 10 + s;
    const SurgeryResult fine = apply(plan, source_spec, source, 50 + s, {InitScheme::kHe});
    const Checkpoint a = train(fine.spec, fine.checkpoint, ts, prep, tc).checkpoint;
    const Checkpoint b = train(scratch_spec, init_params(scratch_spec, 50 + s, {InitScheme::kHe}), ts, prep, tc).checkpoint;
    const double acc_pre = evaluate(fine.spec, a, test_sq, test.labels, prep, {}, {}).accuracy;
    const double acc_rand = evaluate(scratch_spec, b, test_sq, test.labels, prep, {}, {}).accuracy;
    sum_pre += acc_pre;
    sum_rand += acc_rand;
    per_seed += strf("%.3f/%.3f ", acc_pre, acc_rand);
  }
  const double mp = sum_pre / seeds, mr = sum_rand / seeds;
  const double secs = seconds_since(t0);
  const double total = secs + src.seconds;
  return {mp - mr >= 0.05 && total < 600,
          strf("pretrained %.3f vs random init %.3f (gap %+.1f points >= 5; per seed %s); %.0f s incl. %.0f s "
               "pretraining < 600 s",
               mp, mr, 100 * (mp - mr), per_seed.c_str(), total, src.seconds)};
}

Outcome probe_depth_trend() {
  const auto t0 = Clock::now();
  const Pretrained& src = pretrained_source();
  const fs::path dir = work_root() / "probe";
  const std::string manifest = write_binary_dataset((dir / "data").string(), 200, 72, 4242, 1.0, -1);
  ExperimentConfig c = desk_config();
  c.seed = 9;
  c.dataset.manifest = manifest;
  c.dataset.folds = 5;
  c.experiment.kind = "probe";
  c.experiment.init_checkpoint = src.path;
  c.experiment.endpoints = {"conv1", "fc8"};
  const ProbeReport rep = run_probe(c, dir.string());
  std::map<std::string, std::map<ProbeKind, double>> acc;
  for (const auto& r : rep.rows) acc[r.endpoint][r.kind] = r.summary.mean;
  bool pass = true;
  std::string detail;
  for (ProbeKind k : {ProbeKind::kSvm, ProbeKind::kSoftmax}) {
    const double top = acc["fc8"][k], low = acc["conv1"][k];
    pass &= top - low >= 0.03;
    detail += strf("%s fc8 %.3f vs conv1 %.3f (%+.1f points); ", probe_kind_name(k), top, low, 100 * (top - low));
  }
  const double total = seconds_since(t0) + src.seconds;
  pass &= total < 600;
  return {pass, detail + strf("%.0f s incl. %.0f s pretraining < 600 s", total, src.seconds)};
}

// ---- 8: surgery bit-exactness -----------------------------------------------------------

bool same_bytes(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.raw(), b.raw(), sizeof(float) * a.size()) == 0;
}

Outcome surgery_bit_exactness() {
  const auto t0 = Clock::now();
  const NetworkSpec spec = reference_spec(1000);
  const Checkpoint src = init_params(spec, 3);
  auto conv = [](long k, long c, long r) { return k * c * r * r + k; };
  auto fc = [](long in, long out) { return in * out + out; };
  const long convs = conv(96, 3, 11) + conv(256, 96, 5) + conv(384, 256, 3) + conv(384, 384, 3) + conv(256, 384, 3);
  const long fc6 = fc(9216, 4096), fc7 = fc(4096, 4096), fc8 = fc(4096, 1000);
  const long base = convs + fc6 + fc7 + fc8;
  const std::vector<std::string> conv_names{"conv1", "conv2", "conv3", "conv4", "conv5"};
  struct Expect {
    long params;
    std::vector<std::string> retained;
  };
  auto with = [&](std::vector<std::string> extra) {
    std::vector<std::string> v = conv_names;
    v.insert(v.end(), extra.begin(), extra.end());
    return v;
  };
  const std::map<std::string, Expect> expect{
      {"finetune", {convs + fc6 + fc7 + fc(4096, 2), with({"fc6", "fc7"})}},
      {"fc7-4096", {convs + fc6 + fc7, with({"fc6", "fc7"})}},
      {"fc6-4096", {convs + fc6, with({"fc6"})}},
      {"fc7-2", {convs + fc6 + fc(4096, 2), with({"fc6"})}},
      {"fc6-2", {convs + fc(9216, 2), with({})}},
      {"fc8-1000", {base, with({"fc6", "fc7", "fc8"})}},
      {"fc9-2", {base + fc(1000, 2), with({"fc6", "fc7", "fc8"})}},
  };
  bool pass = param_count(spec) == base;
  std::string detail;
  for (const auto& preset : preset_names()) {
    const auto it = expect.find(preset);
    if (it == expect.end()) {
      pass = false;
      detail += preset + ": no expectation; ";
      continue;
    }
    const SurgeryResult r = apply(preset_plan(preset, spec), spec, src, 17);
    bool exact = true;
    for (const auto& name : it->second.retained) {
      const auto got = r.checkpoint.entries.find(name);
      exact &= got != r.checkpoint.entries.end() && same_bytes(got->second.weights, src.entries.at(name).weights) &&
               same_bytes(got->second.bias, src.entries.at(name).bias);
    }
    const long count = param_count(r.checkpoint);
    const bool ok = exact && count == it->second.params && param_count(r.spec) == count;
    pass &= ok;
    detail += strf("%s %ld%s; ", preset.c_str(), count, ok ? "" : exact ? " (count mismatch)" : " (bytes differ)");
  }
  const double secs = seconds_since(t0);
  pass &= secs < 10;
  return {pass, detail + strf("%.1f s < 10 s", secs)};
}

// ---- 9: oversampling contract -------------------------------------------------------------

Outcome oversampling_contract() {
  bool pass = true;
  std::string detail;
  // pixel-exact crop and mirror geometry
  PreprocessConfig p;
  p.resize_to = 20;
  p.crop = 15;
  p.mean = {10, 20, 30};
  p.scale = 0.5f;
  const Tensor img = oracle::random_tensor({3, 20, 20}, 5, 0, 255);
  const auto views = ten_crop(img, p);
  const int slack = p.resize_to - p.crop;
  const int origins[5][2] = {{0, 0}, {0, slack}, {slack, 0}, {slack, slack}, {slack / 2, slack / 2}};
  long bad = 0;
  for (int v = 0; v < 10; ++v) {
    const int row = origins[v % 5][0], col = origins[v % 5][1];
    const bool mirror = v >= 5;
    if (views[v].pixels.shape() != Shape{3, 15, 15} || views[v].flipped != mirror) ++bad;
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 15; ++i)
        for (int j = 0; j < 15; ++j) {
          const int sj = mirror ? 14 - j : j;
          const float want = (img.at({c, row + i, col + sj}) - p.mean[c]) * p.scale;
          if (views[v].pixels.at({c, i, j}) != want) ++bad;
        }
  }
  pass &= views.size() == 10 && bad == 0;
  detail += strf("10 views, %ld pixel mismatches; ", bad);

  // fused score against a manual per-view mean
  const NetworkSpec spec = reference_spec_small(2);
  const Checkpoint ck = init_params(spec, 8, {InitScheme::kHe});
  const SyntheticSet set = make_binary_set(6, 72, 12);
  EvalOptions over;
  over.oversample = true;
  const EvalResult r = evaluate(spec, ck, set.images, set.labels, desk_prep(), over, {});
  double worst = 0;
  for (std::size_t i = 0; i < set.images.size(); ++i) {
    const auto vs = ten_crop(set.images[i], desk_prep());
    double sum[2] = {0, 0};
    for (const auto& v : vs) {
      const Tensor out = forward(spec, ck, v.pixels.reshaped({1, 3, 64, 64}), {}).output;
      sum[0] += out[0];
      sum[1] += out[1];
    }
    worst = std::max({worst, std::abs(r.scores[i][0] - sum[0] / 10), std::abs(r.scores[i][1] - sum[1] / 10)});
  }
  pass &= worst <= 1e-6;
  detail += strf("fused vs manual mean max diff %.1e <= 1e-6; ", worst);

  // view-identical inputs: uniform colour images
  std::vector<Tensor> flat;
  std::vector<int> labels;
  std::mt19937_64 rng(4);
  for (int i = 0; i < 12; ++i) {
    Tensor t({3, 72, 72});
    for (int c = 0; c < 3; ++c)
      std::fill_n(t.raw() + c * 72 * 72, 72 * 72, static_cast<float>(std::uniform_int_distribution<int>(0, 255)(rng)));
    flat.push_back(std::move(t));
    labels.push_back(i % 2);
  }
  const EvalResult a = evaluate(spec, ck, flat, labels, desk_prep(), {}, {});
  const EvalResult b = evaluate(spec, ck, flat, labels, desk_prep(), over, {});
  const bool same = a.predictions == b.predictions && a.confusion.counts == b.confusion.counts && a.accuracy == b.accuracy;
  pass &= same;
  detail += strf("view-identical oversampled accuracy %.4f %s single-view %.4f", b.accuracy, same ? "==" : "!=",
                 a.accuracy);
  return {pass, detail};
}

// ---- 10: CV hygiene -----------------------------------------------------------------------

bool stratification_ok(const std::vector<int>& labels, int k, std::uint64_t seed, std::string& why) {
  const auto folds = stratified_kfold(labels, k, seed);
  if (folds.size() != labels.size()) return why = "fold vector size", false;
  const double n = static_cast<double>(labels.size());
  std::map<int, double> global;
  for (int l : labels) global[l] += 1;
  for (int f = 0; f < k; ++f) {
    const auto test = fold_indices(folds, f, true), train = fold_indices(folds, f, false);
    if (test.size() + train.size() != labels.size()) return why = "fold split is not a partition", false;
    std::map<int, double> counts;
    for (int i : test) counts[labels[i]] += 1;
    for (const auto& [label, total] : global) {
      const double expected = total / n * static_cast<double>(test.size());
      if (std::abs(counts[label] - expected) > 1.0) return why = strf("fold %d class %d off by > 1", f, label), false;
    }
  }
  return true;
}

Outcome cv_hygiene() {
  bool pass = true;
  std::string detail;
  // 580 positive / 301 negative, k = 5
  std::vector<int> labels(580, 1);
  labels.insert(labels.end(), 301, 0);
  std::shuffle(labels.begin(), labels.end(), std::mt19937_64(3));
  const auto folds = stratified_kfold(labels, 5, 11);
  std::vector<int> pos(5), neg(5);
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg)[folds[i]]++;
  for (int f = 0; f < 5; ++f) pass &= pos[f] == 116 && (neg[f] == 60 || neg[f] == 61);
  detail += "580/301 k=5 folds (pos/neg):";
  for (int f = 0; f < 5; ++f) detail += strf(" %d/%d", pos[f], neg[f]);
  detail += "; ";

  std::mt19937_64 rng(77);
  int configs = 0;
  std::string why;
  for (int t = 0; t < 50 && pass; ++t) {
    const int k = std::uniform_int_distribution<int>(2, 10)(rng);
    const int a = std::uniform_int_distribution<int>(k, 300)(rng), b = std::uniform_int_distribution<int>(k, 300)(rng);
    std::vector<int> l(a, 1);
    l.insert(l.end(), b, 0);
    std::shuffle(l.begin(), l.end(), rng);
    pass &= stratification_ok(l, k, rng(), why);
    ++configs;
  }
  pass &= stratification_ok(labels, 5, 11, why);
  detail += strf("%d random label sets within 1 sample%s; ", configs, why.empty() ? "" : (" (" + why + ")").c_str());

  // index audit of an actual cross-validation run
  const fs::path dir = work_root() / "audit";
  const std::string manifest = write_binary_dataset((dir / "data").string(), 30, 72, 5, 1.0, 20);
  ExperimentConfig c = desk_config();
  c.seed = 4;
  c.dataset.manifest = manifest;
  c.dataset.folds = 3;
  c.train.epochs = 1;
  c.train.batch_size = 8;
  c.experiment.oversample = false;
  const CVSummary s = cross_validate(c, dir.string());
  const PreparedData data = prepare_dataset(c);
  std::set<int> seen;
  int leaks = 0;
  double worst_mean = 0;
  for (const auto& f : s.folds) {
    const fs::path fold_dir = dir / s.name / ("fold_" + std::to_string(f.fold));
    const auto lines = split(read_text_file((fold_dir / "predictions.csv").string()), '\n');
    std::set<int> tested;
    for (std::size_t i = 1; i < lines.size(); ++i)
      if (!trim(lines[i]).empty()) tested.insert(parse_int(split(lines[i], ',')[0]));
    const auto train_idx = fold_indices(data.folds, f.fold, false);
    for (int i : train_idx) leaks += tested.count(i);
    for (int i : tested) leaks += !seen.insert(i).second;
    // the stored mean must come from the training images alone
    double m[3] = {0, 0, 0};
    double px = 0;
    for (int i : train_idx) {
      const Tensor& im = data.images.images[i];
      const std::int64_t plane = im.size() / 3;
      for (int ch = 0; ch < 3; ++ch)
        for (std::int64_t j = 0; j < plane; ++j) m[ch] += im[ch * plane + j];
      px += static_cast<double>(plane);
    }
    const auto stored = split(load_checkpoint((fold_dir / "model.nsrg").string()).metadata.at("mean"), ',');
    for (int ch = 0; ch < 3; ++ch)
      worst_mean = std::max(worst_mean, std::abs(parse_double(stored[ch]) - m[ch] / px));
  }
  const bool audit = leaks == 0 && seen.size() == data.images.size() && worst_mean < 1e-3;
  pass &= audit;
  detail += strf("audit: %d leaked indices, %zu/%zu tested once, train-only mean diff %.1e", leaks, seen.size(),
                 data.images.size(), worst_mean);
  return {pass, detail};
}

// ---- 11: determinism ------------------------------------------------------------------------

Outcome determinism() {
  std::string csv[2], md[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = work_root() / ("determinism_" + std::to_string(run));
    const std::string manifest = write_binary_dataset((dir / "data").string(), 24, 72, 21, 1.0, -1);
    ExperimentConfig c = desk_config();
    c.seed = 5;
    c.dataset.manifest = manifest;
    c.dataset.folds = 3;
    c.train.epochs = 2;
    c.train.batch_size = 8;
    c.train.base_lr = 0.005;
    c.base_lr_explicit = true;
    c.experiment.kind = "finetune";
    cross_validate(c, dir.string());
    c.experiment.kind = "surgery";
    c.experiment.preset = "fc7-2";
    cross_validate(c, dir.string());
    c.experiment.kind = "probe";
    c.experiment.endpoints = {"pool5", "fc7"};
    run_probe(c, dir.string());
    write_report(dir.string());
    csv[run] = read_text_file((dir / "report.csv").string());
    md[run] = read_text_file((dir / "report.md").string());
  }
  const bool pass = csv[0] == csv[1] && md[0] == md[1] && !csv[0].empty();
  return {pass, strf("report.csv %zu bytes %s, report.md %s", csv[0].size(), csv[0] == csv[1] ? "identical" : "differs",
                     md[0] == md[1] ? "identical" : "differs")};
}

// ---- 12: optional full-scale replication ------------------------------------------------------

Outcome full_scale() {
  const char* manifest = std::getenv("CONVPROBE_FULL_MANIFEST");
  const char* weights = std::getenv("CONVPROBE_FULL_WEIGHTS");
  if (!manifest || !weights)
    return {true, "not gating; set CONVPROBE_FULL_MANIFEST and CONVPROBE_FULL_WEIGHTS to run", true};
  ExperimentConfig c;
  c.dataset.manifest = manifest;
  c.experiment.init_checkpoint = weights;
  c.preprocess.auto_mean = true;
  c.seed = 1;
  const fs::path dir = work_root() / "full_scale";
  fs::create_directories(dir);
  auto run = [&](const std::string& kind, const std::string& preset) {
    ExperimentConfig x = c;
    x.experiment.kind = kind;
    x.experiment.preset = preset;
    return cross_validate(x, dir.string()).oversampled.value_or(MeanStd{});
  };
  const MeanStd ft = run("finetune", "finetune");
  const MeanStd f72 = run("surgery", "fc7-2"), f62 = run("surgery", "fc6-2");
  const MeanStd f92 = run("surgery", "fc9-2"), f81 = run("surgery", "fc8-1000");
  const bool pass = std::abs(ft.mean - 0.830) <= 0.05 && f72.mean > f62.mean && f92.mean > f81.mean;
  return {pass, strf("finetune %.3f (0.830 +/- 0.05), fc7-2 %.3f > fc6-2 %.3f, fc9-2 %.3f > fc8-1000 %.3f", ft.mean,
                     f72.mean, f62.mean, f92.mean, f81.mean)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient integrity", gradient_integrity},       {"convolution oracle", convolution_oracle},
      {"shape fidelity", shape_fidelity},               {"schedule exactness", schedule_exactness},
      {"overfit capacity", overfit_capacity},           {"transfer direction", transfer_direction},
      {"probe depth trend", probe_depth_trend},         {"surgery bit-exactness", surgery_bit_exactness},
      {"oversampling contract", oversampling_contract}, {"cv hygiene", cv_hygiene},
      {"determinism", determinism},                     {"full-scale replication (optional)", full_scale},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const char* tag = o.skipped ? "SKIP" : o.pass ? "PASS" : "FAIL";
    failed += !o.pass;
    std::printf("%s %2d %s: %s\n", tag, id, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(work_root());
  return failed ? 1 : 0;
}
