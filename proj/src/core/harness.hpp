#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "summary.hpp"

namespace convprobe {

using LogFn = std::function<void(const std::string&)>;

// counts[true label][predicted label]
struct Confusion {
  std::array<std::array<std::int64_t, 2>, 2> counts{};

  std::int64_t total() const;
  double accuracy() const;
  double class_accuracy(int label) const;  // NaN when the class is absent
  // Some class is never predicted.
  bool degenerate() const;
};

// Network class index for each binary label (0 negative, 1 positive).
struct LabelMap {
  std::array<int, 2> class_of_label{0, 1};

  static LabelMap for_preset(const std::string& preset);
  std::string to_text() const;
  static LabelMap from_text(const std::string& text);
};

struct EvalOptions {
  bool oversample = false;
  bool fuse_probabilities = true;  // false: average logits
  int batch_size = 32;
};

struct EvalResult {
  Confusion confusion;
  double accuracy = 0;
  std::vector<int> predictions;              // binary labels
  std::vector<std::array<double, 2>> scores;  // fused (negative, positive) scores
};

// Elementwise mean over the rows of a [views, C] score tensor.
std::vector<double> fuse_scores(const Tensor& view_scores);

// argmax over the mapped classes; ties go to the lower network class index.
int decide(const std::vector<double>& class_scores, const LabelMap& map);

EvalResult evaluate(const NetworkSpec& spec, const Checkpoint& ckpt, const std::vector<Tensor>& images,
                    const std::vector<int>& labels, const PreprocessConfig& prep, const EvalOptions& options,
                    const LabelMap& map = {});

struct FoldResult {
  int fold = 0;
  bool diverged = false;
  std::string error;
  int epochs = 0;
  Confusion single;
  Confusion oversampled;
};

struct CVSummary {
  std::string name;
  std::string family;  // finetune | ablation | addition | scratch
  bool oversample = true;
  std::vector<FoldResult> folds;
  std::optional<MeanStd> single;
  std::optional<MeanStd> oversampled;
  bool degenerate_single = false;
  bool degenerate_oversampled = false;
  std::vector<std::string> notes;

  // Recomputes the aggregates from the fold list.
  void finalize();
  std::string to_json() const;
  static CVSummary from_json(const std::string& text);
};

std::string family_of(const ExperimentConfig& config);

// Loaded dataset with fold assignment.
struct PreparedData {
  DatasetManifest manifest;
  LabeledImages images;
  std::vector<int> folds;
  int k = 0;
};

PreparedData prepare_dataset(const ExperimentConfig& config, const LogFn& log = {});

// Generates the synthetic replica when no manifest is configured, assigns
// folds and writes <out>/manifest.csv plus <out>/mean.txt. Returns the manifest path.
std::string prepare_data(const ExperimentConfig& config, const std::string& out_dir, const LogFn& log = {});

// Trains the source network on the synthetic pretext task; writes
// <out>/pretrained.nsrg and <out>/pretrain_history.csv.
Checkpoint pretrain(const ExperimentConfig& config, const std::string& out_dir, const LogFn& log = {});

// Per fold: train on the other folds, evaluate on this one with and without
// oversampling. Writes <out>/<name>/fold_<i>/{model.nsrg,history.csv,predictions.csv}
// and <out>/<name>/summary.json. A diverged fold is recorded, not fatal.
CVSummary cross_validate(const ExperimentConfig& config, const std::string& out_dir, const LogFn& log = {});

// Rebuilds a summary from the persisted per-fold predictions.
CVSummary recompute_summary(const std::string& experiment_dir);

// Layer-wise probes; writes <out>/<name>/{probe.csv,probe.md,summary.json}.
ProbeReport run_probe(const ExperimentConfig& config, const std::string& out_dir, const LogFn& log = {});

// Collects every <out>/*/summary.json into <out>/report.md and <out>/report.csv.
void write_report(const std::string& out_dir);

// Fills an empty manifest / init_checkpoint from out_dir/manifest.csv and
// out_dir/pretrained.nsrg when those exist.
ExperimentConfig with_out_defaults(const ExperimentConfig& config, const std::string& out_dir, const LogFn& log = {});

// Evaluates a saved model on every image of a manifest. The network, mean and
// label map come from the checkpoint metadata.
EvalResult evaluate_saved(const ExperimentConfig& config, const std::string& checkpoint_path,
                          const std::string& manifest_path, bool oversample);

std::string report_markdown(const std::vector<CVSummary>& summaries,
                            const std::vector<std::pair<std::string, ProbeReport>>& probes,
                            const std::vector<std::string>& footnotes);
std::string report_csv(const std::vector<CVSummary>& summaries,
                       const std::vector<std::pair<std::string, ProbeReport>>& probes);

}  // namespace convprobe
