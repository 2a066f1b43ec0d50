#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "data.hpp"
#include "net.hpp"
#include "summary.hpp"

namespace convprobe {

// Row-major n x d feature matrix, rows in input order.
struct FeatureMatrix {
  std::string endpoint;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<float> values;

  const float* row(std::int64_t i) const { return values.data() + i * cols; }
  FeatureMatrix subset(const std::vector<int>& indices) const;
};

// One single-view (center crop) forward pass per image; activations are
// flattened row-major.
FeatureMatrix extract_features(const NetworkSpec& spec, const Checkpoint& ckpt, const std::vector<Tensor>& images,
                               const std::string& endpoint, const PreprocessConfig& prep,
                               bool post_activation = true, int batch_size = 32);

enum class ProbeKind { kSvm, kSoftmax };
const char* probe_kind_name(ProbeKind kind);

struct ProbeOptions {
  std::vector<double> lambda_grid{1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0};
  int inner_folds = 3;
  int svm_steps = 2000;
  int softmax_steps = 500;
  bool standardize = true;
  std::uint64_t seed = 0;
};

struct ProbeModel {
  ProbeKind kind = ProbeKind::kSvm;
  double lambda = 0;
  std::int64_t dims = 0;
  // One row of dims+1 values (weights then bias) per output: 1 for the
  // SVM, 2 for the softmax probe.
  std::vector<std::vector<double>> weights;
  std::vector<double> mean;  // per-column standardization, empty when off
  std::vector<double> scale;
  double inner_cv_accuracy = 0;

  // Decision values: one score for the SVM, class scores for softmax.
  std::vector<double> scores(const float* x) const;
  int predict(const float* x) const;
};

// Fits at a fixed lambda on all rows.
ProbeModel fit_probe_fixed(const FeatureMatrix& X, const std::vector<int>& y, ProbeKind kind, double lambda,
                           const ProbeOptions& options);

// Picks lambda by inner stratified CV (ties go to the smaller lambda), then
// refits on all rows.
ProbeModel fit_probe(const FeatureMatrix& X, const std::vector<int>& y, ProbeKind kind, const ProbeOptions& options);

double probe_accuracy(const ProbeModel& model, const FeatureMatrix& X, const std::vector<int>& y);

struct ProbeRow {
  std::string endpoint;
  ProbeKind kind = ProbeKind::kSvm;
  std::vector<double> fold_accuracy;
  std::vector<double> fold_lambda;
  MeanStd summary;
};

struct ProbeReport {
  std::vector<ProbeRow> rows;
  bool standardized = true;
  bool post_activation = true;

  const ProbeRow& row(const std::string& endpoint, ProbeKind kind) const;
  std::string csv() const;       // endpoint,kind,fold,accuracy,lambda
  std::string markdown() const;  // Layer | SVM | Softmax
};

// For each endpoint and kind: train on every fold but one, test on the held
// out fold, rotate.
ProbeReport probe_all_layers(const NetworkSpec& spec, const Checkpoint& ckpt, const std::vector<Tensor>& images,
                             const std::vector<int>& labels, const std::vector<int>& folds,
                             const std::vector<std::string>& endpoints, const std::vector<ProbeKind>& kinds,
                             const PreprocessConfig& prep, const ProbeOptions& options = {},
                             bool post_activation = true);

}  // namespace convprobe
