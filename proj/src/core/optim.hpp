#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "data.hpp"
#include "net.hpp"

namespace convprobe {

struct TrainConfig {
  double base_lr = 0.001;
  int step_epochs = 6;
  double gamma = 0.1;
  int epochs = 65;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  int batch_size = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

// base_lr * gamma^floor(epoch / step_epochs).
double lr_at(const TrainConfig& config, int epoch);

struct OptState {
  std::map<std::string, ParamPair> velocity;
  int epoch = 0;
  std::mt19937_64 rng;
};

// Zero velocities shaped like the checkpoint's parameters.
OptState make_opt_state(const Checkpoint& params, std::uint64_t seed);

std::map<std::string, float> lr_mults(const NetworkSpec& spec);

// v <- momentum*v - lr*mult*(g + weight_decay*w); w <- w + v.
// Layers with multiplier 0 (or absent from lr_mult) are left untouched.
void sgd_step(Checkpoint& params, const std::map<std::string, ParamPair>& grads, OptState& state, double lr,
              const std::map<std::string, float>& lr_mult, double momentum, double weight_decay);

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  double loss = 0;       // mean training loss over the epoch
  double train_acc = 0;  // on the augmented training views
  double val_acc = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochRecord> history;
};

// Class-index targets in [0, C) for the spec's top layer.
struct TrainSet {
  const std::vector<Tensor>* images = nullptr;  // resized squares
  std::vector<int> targets;
};

// Returning false stops training after that epoch.
using EpochCallback = std::function<bool(const EpochRecord&)>;

// One epoch is one full pass in a seeded shuffled order. Throws kDivergence
// naming the epoch when the loss stops being finite.
TrainResult train(const NetworkSpec& spec, const Checkpoint& initial, const TrainSet& data,
                  const PreprocessConfig& prep, const TrainConfig& config, const TrainSet* validation = nullptr,
                  const EpochCallback& on_epoch = {});

// Single-view (center crop) accuracy of argmax predictions against targets.
double accuracy(const NetworkSpec& spec, const Checkpoint& params, const TrainSet& data,
                const PreprocessConfig& prep, int batch_size = 64);

std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace convprobe
