#include "probe.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>

#include "util.hpp"

namespace convprobe {

using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VecF = Eigen::VectorXf;

FeatureMatrix FeatureMatrix::subset(const std::vector<int>& indices) const {
  FeatureMatrix out{endpoint, static_cast<std::int64_t>(indices.size()), cols, {}};
  out.values.reserve(static_cast<std::size_t>(out.rows * cols));
  for (int i : indices) {
    require(i >= 0 && i < rows, ErrorCode::kInvalidArgument, "feature row index out of range");
    out.values.insert(out.values.end(), row(i), row(i) + cols);
  }
  return out;
}

FeatureMatrix extract_features(const NetworkSpec& spec, const Checkpoint& ckpt, const std::vector<Tensor>& images,
                               const std::string& endpoint, const PreprocessConfig& prep, bool post_activation,
                               int batch_size) {
  require(!images.empty(), ErrorCode::kData, "no images to extract features from");
  const ShapeInfo info = infer_shapes(spec);
  const int at = resolve_endpoint(spec, endpoint, post_activation);
  FeatureMatrix fm{endpoint, static_cast<std::int64_t>(images.size()), shape_numel(info.outputs[at]), {}};
  fm.values.reserve(static_cast<std::size_t>(fm.rows * fm.cols));
  const ForwardOptions opts{false, post_activation};
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    const std::size_t end = std::min(images.size(), start + batch_size);
    std::vector<ImageView> views;
    for (std::size_t i = start; i < end; ++i) views.push_back(preprocess(images[i], prep, Mode::kTest));
    std::vector<const Tensor*> ptrs;
    for (const auto& v : views) ptrs.push_back(&v.pixels);
    const ForwardResult r = forward(spec, ckpt, stack_views(ptrs), {endpoint}, opts);
    const Tensor& act = r.activations.at(endpoint);
    require(act.all_finite(), ErrorCode::kData, "non-finite activations at endpoint " + endpoint);
    fm.values.insert(fm.values.end(), act.data().begin(), act.data().end());
  }
  return fm;
}

const char* probe_kind_name(ProbeKind kind) { return kind == ProbeKind::kSvm ? "svm" : "softmax"; }

namespace {

// Standardized rows with a trailing constant-1 bias column.
MatF design(const FeatureMatrix& X, const std::vector<double>& mean, const std::vector<double>& scale) {
  MatF D(X.rows, X.cols + 1);
  for (std::int64_t i = 0; i < X.rows; ++i) {
    const float* r = X.row(i);
    for (std::int64_t j = 0; j < X.cols; ++j)
      D(i, j) = mean.empty() ? r[j] : static_cast<float>((r[j] - mean[j]) * scale[j]);
    D(i, X.cols) = 1.0f;
  }
  return D;
}

void column_stats(const FeatureMatrix& X, std::vector<double>& mean, std::vector<double>& scale) {
  mean.assign(X.cols, 0.0);
  scale.assign(X.cols, 0.0);
  for (std::int64_t i = 0; i < X.rows; ++i)
    for (std::int64_t j = 0; j < X.cols; ++j) mean[j] += X.row(i)[j];
  for (auto& m : mean) m /= X.rows;
  for (std::int64_t i = 0; i < X.rows; ++i)
    for (std::int64_t j = 0; j < X.cols; ++j) {
      const double d = X.row(i)[j] - mean[j];
      scale[j] += d * d;
    }
  for (auto& s : scale) {
    const double sd = std::sqrt(s / X.rows);
    s = sd > 1e-12 ? 1.0 / sd : 1.0;
  }
}

// Full-batch projected subgradient descent on
//   mean hinge + (lambda/2)||w||^2 with step 1/(lambda t),
// averaging the iterates of the second half.
VecF train_svm(const MatF& D, const std::vector<int>& y, double lambda, int steps) {
  const Eigen::Index n = D.rows(), d = D.cols();
  VecF ys(n);
  for (Eigen::Index i = 0; i < n; ++i) ys[i] = y[i] ? 1.0f : -1.0f;
  VecF w = VecF::Zero(d), avg = VecF::Zero(d);
  const float radius = static_cast<float>(1.0 / std::sqrt(lambda));
  const int burn = steps / 2;
  VecF coef(n);
  for (int t = 1; t <= steps; ++t) {
    const float eta = static_cast<float>(1.0 / (lambda * t));
    const VecF margin = (D * w).cwiseProduct(ys);
    for (Eigen::Index i = 0; i < n; ++i) coef[i] = margin[i] < 1.0f ? ys[i] / static_cast<float>(n) : 0.0f;
    w = (1.0f - eta * static_cast<float>(lambda)) * w + eta * (D.transpose() * coef);
    const float norm = w.norm();
    if (norm > radius) w *= radius / norm;
    if (t > burn) avg += w;
  }
  return avg / static_cast<float>(steps - burn);
}

// Accelerated gradient descent on mean cross-entropy + (lambda/2)||W||^2,
// bias row unregularized.
MatF train_softmax(const MatF& D, const std::vector<int>& y, double lambda, int steps) {
  const Eigen::Index n = D.rows(), d = D.cols(), C = 2;
  // Largest eigenvalue of D^T D / n by power iteration.
  VecF v = VecF::Ones(d) / std::sqrt(static_cast<float>(d));
  float sigma = 0;
  for (int it = 0; it < 50; ++it) {
    VecF u = D.transpose() * (D * v) / static_cast<float>(n);
    sigma = u.norm();
    if (sigma == 0) break;
    v = u / sigma;
  }
  const float L = 0.5f * sigma * 1.05f + static_cast<float>(lambda);
  MatF Y = MatF::Zero(n, C);
  for (Eigen::Index i = 0; i < n; ++i) Y(i, y[i]) = 1.0f;
  MatF W = MatF::Zero(d, C), Z = W;
  double t = 1.0;
  for (int k = 0; k < steps; ++k) {
    MatF P = D * Z;
    for (Eigen::Index i = 0; i < n; ++i) {
      const float m = P.row(i).maxCoeff();
      P.row(i) = (P.row(i).array() - m).exp();
      P.row(i) /= P.row(i).sum();
    }
    MatF G = D.transpose() * (P - Y) / static_cast<float>(n);
    G.topRows(d - 1) += static_cast<float>(lambda) * Z.topRows(d - 1);
    const MatF Wn = Z - G / L;
    const double tn = (1 + std::sqrt(1 + 4 * t * t)) / 2;
    Z = Wn + static_cast<float>((t - 1) / tn) * (Wn - W);
    W = Wn;
    t = tn;
  }
  return W;
}

void check_labels(const FeatureMatrix& X, const std::vector<int>& y) {
  require(static_cast<std::int64_t>(y.size()) == X.rows, ErrorCode::kInvalidArgument,
          "probe label count does not match feature rows");
  bool pos = false, neg = false;
  for (int v : y) {
    require(v == 0 || v == 1, ErrorCode::kInvalidArgument, "probe labels must be 0 or 1");
    (v ? pos : neg) = true;
  }
  require(pos && neg, ErrorCode::kDegenerate, "probe training data contains a single class");
}

}  // namespace

std::vector<double> ProbeModel::scores(const float* x) const {
  std::vector<double> out;
  for (const auto& w : weights) {
    double s = w[dims];
    for (std::int64_t j = 0; j < dims; ++j) {
      const double v = mean.empty() ? x[j] : (x[j] - mean[j]) * scale[j];
      s += w[j] * v;
    }
    out.push_back(s);
  }
  return out;
}

int ProbeModel::predict(const float* x) const {
  const auto s = scores(x);
  if (kind == ProbeKind::kSvm) return s[0] > 0 ? 1 : 0;
  return s[1] > s[0] ? 1 : 0;
}

ProbeModel fit_probe_fixed(const FeatureMatrix& X, const std::vector<int>& y, ProbeKind kind, double lambda,
                           const ProbeOptions& options) {
  check_labels(X, y);
  require(lambda > 0, ErrorCode::kInvalidArgument, "lambda must be positive");
  ProbeModel m;
  m.kind = kind;
  m.lambda = lambda;
  m.dims = X.cols;
  if (options.standardize) column_stats(X, m.mean, m.scale);
  const MatF D = design(X, m.mean, m.scale);
  if (kind == ProbeKind::kSvm) {
    const VecF w = train_svm(D, y, lambda, options.svm_steps);
    m.weights.emplace_back(w.data(), w.data() + w.size());
  } else {
    const MatF W = train_softmax(D, y, lambda, options.softmax_steps);
    for (Eigen::Index c = 0; c < W.cols(); ++c) {
      std::vector<double> col(W.rows());
      for (Eigen::Index j = 0; j < W.rows(); ++j) col[j] = W(j, c);
      m.weights.push_back(std::move(col));
    }
  }
  return m;
}

double probe_accuracy(const ProbeModel& model, const FeatureMatrix& X, const std::vector<int>& y) {
  require(X.rows > 0 && static_cast<std::int64_t>(y.size()) == X.rows, ErrorCode::kInvalidArgument,
          "probe evaluation needs matching, non-empty features and labels");
  require(X.cols == model.dims, ErrorCode::kShapeMismatch, "feature width does not match the probe");
  std::int64_t correct = 0;
  for (std::int64_t i = 0; i < X.rows; ++i) correct += model.predict(X.row(i)) == y[i];
  return static_cast<double>(correct) / X.rows;
}

ProbeModel fit_probe(const FeatureMatrix& X, const std::vector<int>& y, ProbeKind kind, const ProbeOptions& options) {
  check_labels(X, y);
  require(!options.lambda_grid.empty(), ErrorCode::kInvalidArgument, "lambda grid is empty");
  std::vector<double> grid = options.lambda_grid;
  std::sort(grid.begin(), grid.end());
  if (grid.size() == 1) return fit_probe_fixed(X, y, kind, grid[0], options);

  const int minority = std::min(static_cast<int>(std::count(y.begin(), y.end(), 1)),
                                static_cast<int>(std::count(y.begin(), y.end(), 0)));
  const int k = std::min(options.inner_folds, minority);
  require(k >= 2, ErrorCode::kData, "too few samples per class for inner cross-validation");
  const std::vector<int> folds = stratified_kfold(y, k, mix_seed(options.seed, "inner"));

  double best_acc = -1, best_lambda = grid[0];
  for (double lambda : grid) {
    double acc = 0;
    for (int f = 0; f < k; ++f) {
      const auto tr = fold_indices(folds, f, false), te = fold_indices(folds, f, true);
      std::vector<int> ytr, yte;
      for (int i : tr) ytr.push_back(y[i]);
      for (int i : te) yte.push_back(y[i]);
      const ProbeModel m = fit_probe_fixed(X.subset(tr), ytr, kind, lambda, options);
      acc += probe_accuracy(m, X.subset(te), yte) * te.size();
    }
    acc /= static_cast<double>(y.size());
    if (acc > best_acc) {
      best_acc = acc;
      best_lambda = lambda;
    }
  }
  ProbeModel m = fit_probe_fixed(X, y, kind, best_lambda, options);
  m.inner_cv_accuracy = best_acc;
  return m;
}

const ProbeRow& ProbeReport::row(const std::string& endpoint, ProbeKind kind) const {
  for (const auto& r : rows)
    if (r.endpoint == endpoint && r.kind == kind) return r;
  fail(ErrorCode::kInvalidArgument, "no probe row for " + endpoint + "/" + probe_kind_name(kind));
}

std::string ProbeReport::csv() const {
  std::string out = "endpoint,kind,fold,accuracy,lambda\n";
  char buf[128];
  for (const auto& r : rows)
    for (std::size_t f = 0; f < r.fold_accuracy.size(); ++f) {
      std::snprintf(buf, sizeof buf, "%s,%s,%zu,%.6f,%g\n", r.endpoint.c_str(), probe_kind_name(r.kind), f,
                    r.fold_accuracy[f], r.fold_lambda[f]);
      out += buf;
    }
  return out;
}

std::string ProbeReport::markdown() const {
  std::vector<std::string> order;
  for (const auto& r : rows)
    if (std::find(order.begin(), order.end(), r.endpoint) == order.end()) order.push_back(r.endpoint);
  std::string out = "| Layer | SVM | Softmax |\n|---|---|---|\n";
  for (const auto& e : order) {
    out += "| " + e;
    for (ProbeKind k : {ProbeKind::kSvm, ProbeKind::kSoftmax}) {
      std::string cell = "-";
      for (const auto& r : rows)
        if (r.endpoint == e && r.kind == k) cell = format_mean_std(r.summary);
      out += " | " + cell;
    }
    out += " |\n";
  }
  out += std::string("\nFeatures: ") + (post_activation ? "post-activation" : "pre-activation") + ", " +
         (standardized ? "standardized per column on the training folds" : "unstandardized") +
         ", single center-crop view.\n";
  return out;
}

ProbeReport probe_all_layers(const NetworkSpec& spec, const Checkpoint& ckpt, const std::vector<Tensor>& images,
                             const std::vector<int>& labels, const std::vector<int>& folds,
                             const std::vector<std::string>& endpoints, const std::vector<ProbeKind>& kinds,
                             const PreprocessConfig& prep, const ProbeOptions& options, bool post_activation) {
  require(images.size() == labels.size() && labels.size() == folds.size(), ErrorCode::kInvalidArgument,
          "images, labels and folds must align");
  const int k = folds.empty() ? 0 : *std::max_element(folds.begin(), folds.end()) + 1;
  require(k >= 2, ErrorCode::kInvalidArgument, "probing needs at least 2 folds");
  ProbeReport report;
  report.standardized = options.standardize;
  report.post_activation = post_activation;
  for (const auto& endpoint : endpoints) {
    const FeatureMatrix F = extract_features(spec, ckpt, images, endpoint, prep, post_activation);
    for (ProbeKind kind : kinds) {
      ProbeRow row{endpoint, kind, {}, {}, {}};
      for (int f = 0; f < k; ++f) {
        const auto tr = fold_indices(folds, f, false), te = fold_indices(folds, f, true);
        std::vector<int> ytr, yte;
        for (int i : tr) ytr.push_back(labels[i]);
        for (int i : te) yte.push_back(labels[i]);
        ProbeOptions inner = options;
        inner.seed = mix_seed(options.seed, static_cast<std::uint64_t>(f));
        const ProbeModel m = fit_probe(F.subset(tr), ytr, kind, inner);
        row.fold_accuracy.push_back(probe_accuracy(m, F.subset(te), yte));
        row.fold_lambda.push_back(m.lambda);
      }
      row.summary = summarize(row.fold_accuracy);
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

}  // namespace convprobe
