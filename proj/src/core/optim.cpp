#include "optim.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>

namespace convprobe {

void TrainConfig::validate() const {
  require(base_lr > 0, ErrorCode::kInvalidArgument, "base_lr must be positive");
  require(gamma > 0 && gamma <= 1, ErrorCode::kInvalidArgument, "gamma must lie in (0, 1]");
  require(step_epochs >= 1, ErrorCode::kInvalidArgument, "step_epochs must be at least 1");
  require(epochs >= 1, ErrorCode::kInvalidArgument, "epochs must be at least 1");
  require(momentum >= 0 && momentum < 1, ErrorCode::kInvalidArgument, "momentum must lie in [0, 1)");
  require(weight_decay >= 0, ErrorCode::kInvalidArgument, "weight_decay must be non-negative");
  require(batch_size >= 1, ErrorCode::kInvalidArgument, "batch_size must be at least 1");
}

namespace {

// v * 10^-places, rounded once from the shortest decimal form of v.
double decimal_shift(double v, int places) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific);
  const std::string s(buf, res.ptr);
  const auto e = s.find('e');
  const long exp = std::strtol(s.c_str() + e + 1, nullptr, 10);
  return std::strtod((s.substr(0, e) + "e" + std::to_string(exp - places)).c_str(), nullptr);
}

}  // namespace

double lr_at(const TrainConfig& config, int epoch) {
  require(epoch >= 0, ErrorCode::kInvalidArgument, "epoch must be non-negative");
  const int k = epoch / config.step_epochs;
  if (k == 0 || config.gamma == 1.0) return config.base_lr;
  const int q = static_cast<int>(std::lround(-std::log10(config.gamma)));
  if (q >= 1 && decimal_shift(1.0, q) == config.gamma) return decimal_shift(config.base_lr, q * k);
  return static_cast<double>(config.base_lr * std::pow(static_cast<long double>(config.gamma), k));
}

OptState make_opt_state(const Checkpoint& params, std::uint64_t seed) {
  OptState s;
  s.rng.seed(seed);
  for (const auto& [name, p] : params.entries)
    s.velocity[name] = ParamPair{Tensor(p.weights.shape()), Tensor(p.bias.shape())};
  return s;
}

std::map<std::string, float> lr_mults(const NetworkSpec& spec) {
  std::map<std::string, float> out;
  for (const auto& l : spec.layers)
    if (l.has_params()) out[l.name] = l.lr_mult;
  return out;
}

namespace {

void update(Tensor& w, const Tensor& g, Tensor& v, float rate, float momentum, float decay) {
  require(w.shape() == g.shape() && w.shape() == v.shape(), ErrorCode::kShapeMismatch,
          "gradient shape " + shape_str(g.shape()) + " does not match parameter shape " + shape_str(w.shape()));
  float* pw = w.raw();
  const float* pg = g.raw();
  float* pv = v.raw();
  for (std::int64_t i = 0; i < w.size(); ++i) {
    pv[i] = momentum * pv[i] - rate * (pg[i] + decay * pw[i]);
    pw[i] += pv[i];
  }
}

}  // namespace

void sgd_step(Checkpoint& params, const std::map<std::string, ParamPair>& grads, OptState& state, double lr,
              const std::map<std::string, float>& lr_mult, double momentum, double weight_decay) {
  for (auto& [name, p] : params.entries) {
    const auto m = lr_mult.find(name);
    if (m == lr_mult.end() || m->second == 0.0f) continue;
    const auto g = grads.find(name);
    require(g != grads.end(), ErrorCode::kInvalidArgument, "no gradient for layer " + name);
    auto v = state.velocity.find(name);
    if (v == state.velocity.end())
      v = state.velocity.emplace(name, ParamPair{Tensor(p.weights.shape()), Tensor(p.bias.shape())}).first;
    const float rate = static_cast<float>(lr * m->second);
    update(p.weights, g->second.weights, v->second.weights, rate, static_cast<float>(momentum),
           static_cast<float>(weight_decay));
    update(p.bias, g->second.bias, v->second.bias, rate, static_cast<float>(momentum),
           static_cast<float>(weight_decay));
  }
}

namespace {

std::int64_t argmax_row(const Tensor& t, std::int64_t row) {
  const std::int64_t c = t.dim(1);
  const float* p = t.raw() + row * c;
  return std::max_element(p, p + c) - p;
}

void check_set(const TrainSet& data, const char* what) {
  require(data.images != nullptr && !data.images->empty(), ErrorCode::kData, std::string(what) + " set is empty");
  require(data.images->size() == data.targets.size(), ErrorCode::kInvalidArgument,
          std::string(what) + " set has mismatched image and target counts");
}

}  // namespace

double accuracy(const NetworkSpec& spec, const Checkpoint& params, const TrainSet& data,
                const PreprocessConfig& prep, int batch_size) {
  check_set(data, "evaluation");
  const std::size_t n = data.images->size();
  std::size_t correct = 0;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    std::vector<ImageView> views;
    for (std::size_t i = start; i < end; ++i)
      views.push_back(preprocess(data.images->at(i), prep, Mode::kTest, nullptr));
    std::vector<const Tensor*> ptrs;
    for (const auto& v : views) ptrs.push_back(&v.pixels);
    const ForwardResult r = forward(spec, params, stack_views(ptrs), {});
    for (std::size_t i = start; i < end; ++i)
      correct += argmax_row(r.output, static_cast<std::int64_t>(i - start)) == data.targets[i];
  }
  return static_cast<double>(correct) / n;
}

TrainResult train(const NetworkSpec& spec, const Checkpoint& initial, const TrainSet& data,
                  const PreprocessConfig& prep, const TrainConfig& config, const TrainSet* validation,
                  const EpochCallback& on_epoch) {
  config.validate();
  prep.validate();
  check_set(data, "training");
  if (validation) check_set(*validation, "validation");
  validate_checkpoint(spec, initial);

  TrainResult result{initial, {}};
  Checkpoint& params = result.checkpoint;
  OptState state = make_opt_state(params, config.seed);
  const auto mults = lr_mults(spec);
  const std::size_t n = data.images->size();
  std::vector<std::size_t> order(n);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    state.epoch = epoch;
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr_at(config, epoch);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), state.rng);

    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(config.batch_size));
      std::vector<ImageView> views;
      std::vector<int> targets;
      for (std::size_t i = start; i < end; ++i) {
        views.push_back(preprocess(data.images->at(order[i]), prep, Mode::kTrain, &state.rng));
        targets.push_back(data.targets[order[i]]);
      }
      std::vector<const Tensor*> ptrs;
      for (const auto& v : views) ptrs.push_back(&v.pixels);
      ForwardResult fwd = forward(spec, params, stack_views(ptrs), {}, ForwardOptions{true, true});
      const auto loss = cross_entropy_loss(fwd.logits, targets);
      const double l = loss.value[0];
      require(std::isfinite(l) && fwd.logits.all_finite(), ErrorCode::kDivergence,
              "training diverged at epoch " + std::to_string(epoch) + " (non-finite loss)");
      loss_sum += l * static_cast<double>(end - start);
      for (std::size_t i = start; i < end; ++i)
        correct += argmax_row(fwd.logits, static_cast<std::int64_t>(i - start)) == targets[i - start];
      const Tensor dlogits = loss.pullback(Tensor({1}, {1.0f}))[0];
      const auto grads = backward(spec, params, fwd.state, dlogits);
      sgd_step(params, grads, state, rec.lr, mults, config.momentum, config.weight_decay);
    }
    for (const auto& [name, p] : params.entries)
      require(p.weights.all_finite() && p.bias.all_finite(), ErrorCode::kDivergence,
              "training diverged at epoch " + std::to_string(epoch) + " (non-finite weights in " + name + ")");
    rec.loss = loss_sum / n;
    rec.train_acc = static_cast<double>(correct) / n;
    if (validation) rec.val_acc = accuracy(spec, params, *validation, prep);
    result.history.push_back(rec);
    if (on_epoch && !on_epoch(rec)) break;
  }
  params.metadata["epoch"] = std::to_string(result.history.size());
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,loss,train_acc,val_acc\n";
  char buf[160];
  for (const auto& r : history) {
    if (std::isnan(r.val_acc))
      std::snprintf(buf, sizeof buf, "%d,%.9g,%.6f,\n", r.epoch, r.loss, r.train_acc);
    else
      std::snprintf(buf, sizeof buf, "%d,%.9g,%.6f,%.6f\n", r.epoch, r.loss, r.train_acc, r.val_acc);
    out += buf;
  }
  return out;
}

}  // namespace convprobe
