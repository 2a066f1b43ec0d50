#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "data.hpp"
#include "net.hpp"
#include "optim.hpp"
#include "probe.hpp"

namespace convprobe {

struct DatasetSection {
  std::string manifest;  // CSV path,label[,fold]
  int folds = 5;
  // Synthetic two-class replica written by prepare-data.
  int synthetic_count = 200;
  int synthetic_size = 72;
  double synthetic_contrast = 1.0;
  int synthetic_positives = -1;  // -1: half
};

struct PreprocessSection {
  PreprocessConfig config;
  bool auto_mean = true;  // per-channel mean over the training folds
};

struct PretrainSection {
  int images = 5000;
  int image_size = 72;
  TrainConfig train;
};

struct ExperimentSection {
  std::string kind = "finetune";  // finetune | surgery | scratch | probe
  std::string preset = "finetune";
  std::string name;               // output subdirectory; defaults from kind/preset
  bool oversample = true;
  std::string network = "reference";  // reference | small
  int source_classes = 1000;          // top width of the source network
  std::string init_checkpoint;        // empty: random initialization
  InitConfig init;
  bool fuse_probabilities = true;  // false: average logits
  std::vector<std::string> endpoints;
  std::vector<ProbeKind> probe_kinds{ProbeKind::kSvm, ProbeKind::kSoftmax};
  ProbeOptions probe;
  bool post_activation = true;
};

struct ExperimentConfig {
  DatasetSection dataset;
  PreprocessSection preprocess;
  TrainConfig train;
  bool base_lr_explicit = false;
  PretrainSection pretrain;
  ExperimentSection experiment;
  std::uint64_t seed = 0;

  static ExperimentConfig from_json(const std::string& text, bool check = true);
  static ExperimentConfig load(const std::string& path);
  std::string to_json() const;
  void validate() const;

  NetworkSpec source_spec() const;
  std::string output_name() const;
  // Training settings for this experiment, including any rate suggested by the surgery preset.
  TrainConfig effective_train(const std::optional<double>& preset_base_lr) const;
};

}  // namespace convprobe
