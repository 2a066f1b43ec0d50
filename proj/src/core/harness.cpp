#include "harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <json.hpp>
#include <limits>
#include <map>
#include <sstream>

#include "surgery.hpp"
#include "synthetic.hpp"
#include "util.hpp"

namespace convprobe {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- Confusion and label maps ------------------------------------------------

std::int64_t Confusion::total() const {
  return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1];
}

double Confusion::accuracy() const {
  const auto n = total();
  return n ? static_cast<double>(counts[0][0] + counts[1][1]) / n : 0.0;
}

double Confusion::class_accuracy(int label) const {
  const auto n = counts[label][0] + counts[label][1];
  return n ? static_cast<double>(counts[label][label]) / n : std::numeric_limits<double>::quiet_NaN();
}

bool Confusion::degenerate() const {
  return counts[0][0] + counts[1][0] == 0 || counts[0][1] + counts[1][1] == 0;
}

LabelMap LabelMap::for_preset(const std::string& preset) {
  // The original top keeps its classes: positive -> class 0, negative -> class 1.
  if (preset == "fc8-1000") return LabelMap{{1, 0}};
  return LabelMap{};
}

std::string LabelMap::to_text() const {
  return std::to_string(class_of_label[0]) + "," + std::to_string(class_of_label[1]);
}

LabelMap LabelMap::from_text(const std::string& text) {
  const auto parts = split(text, ',');
  require(parts.size() == 2, ErrorCode::kInvalidArgument, "label map must be 'negative_class,positive_class'");
  return LabelMap{{parse_int(parts[0]), parse_int(parts[1])}};
}

// ---- Evaluation --------------------------------------------------------------

std::vector<double> fuse_scores(const Tensor& view_scores) {
  require(view_scores.rank() == 2 && view_scores.dim(0) >= 1, ErrorCode::kInvalidArgument,
          "view scores must be [views, classes]");
  const std::int64_t V = view_scores.dim(0), C = view_scores.dim(1);
  std::vector<double> out(C, 0.0);
  for (std::int64_t v = 0; v < V; ++v)
    for (std::int64_t c = 0; c < C; ++c) out[c] += view_scores[v * C + c];
  for (double& s : out) s /= static_cast<double>(V);
  return out;
}

int decide(const std::vector<double>& class_scores, const LabelMap& map) {
  const int a = map.class_of_label[0], b = map.class_of_label[1];
  require(a >= 0 && b >= 0 && a < static_cast<int>(class_scores.size()) && b < static_cast<int>(class_scores.size()),
          ErrorCode::kInvalidArgument, "label map refers to a class the network does not have");
  const int lo = std::min(a, b), hi = std::max(a, b);
  const int winner = class_scores[hi] > class_scores[lo] ? hi : lo;
  return winner == b ? 1 : 0;
}

EvalResult evaluate(const NetworkSpec& spec, const Checkpoint& ckpt, const std::vector<Tensor>& images,
                    const std::vector<int>& labels, const PreprocessConfig& prep, const EvalOptions& options,
                    const LabelMap& map) {
  require(!images.empty(), ErrorCode::kData, "cannot evaluate on an empty subset");
  require(images.size() == labels.size(), ErrorCode::kInvalidArgument, "image and label counts differ");
  EvalResult res;
  const int per_image = options.oversample ? 10 : 1;
  const std::size_t chunk = std::max<std::size_t>(1, options.batch_size / per_image);
  for (std::size_t start = 0; start < images.size(); start += chunk) {
    const std::size_t end = std::min(images.size(), start + chunk);
    std::vector<ImageView> views;
    for (std::size_t i = start; i < end; ++i) {
      if (options.oversample) {
        auto ten = ten_crop(images[i], prep);
        views.insert(views.end(), std::make_move_iterator(ten.begin()), std::make_move_iterator(ten.end()));
      } else {
        views.push_back(preprocess(images[i], prep, Mode::kTest));
      }
    }
    std::vector<const Tensor*> ptrs;
    for (const auto& v : views) ptrs.push_back(&v.pixels);
    const ForwardResult r = forward(spec, ckpt, stack_views(ptrs), {});
    const Tensor& scores = options.fuse_probabilities ? r.output : r.logits;
    const std::int64_t C = scores.dim(1);
    for (std::size_t i = start; i < end; ++i) {
      const std::int64_t first = static_cast<std::int64_t>(i - start) * per_image;
      Tensor block({per_image, C});
      std::copy_n(scores.raw() + first * C, per_image * C, block.raw());
      const auto fused = fuse_scores(block);
      const int pred = decide(fused, map);
      res.predictions.push_back(pred);
      res.scores.push_back({fused[map.class_of_label[0]], fused[map.class_of_label[1]]});
      require(labels[i] == 0 || labels[i] == 1, ErrorCode::kInvalidArgument, "labels must be 0 or 1");
      res.confusion.counts[labels[i]][pred]++;
    }
  }
  res.accuracy = res.confusion.accuracy();
  return res;
}

// ---- Summaries ---------------------------------------------------------------

void CVSummary::finalize() {
  std::vector<double> s, o;
  degenerate_single = degenerate_oversampled = false;
  for (const auto& f : folds) {
    if (f.diverged) continue;
    s.push_back(f.single.accuracy());
    degenerate_single |= f.single.degenerate();
    if (oversample) {
      o.push_back(f.oversampled.accuracy());
      degenerate_oversampled |= f.oversampled.degenerate();
    }
  }
  single = s.size() >= 2 ? std::optional<MeanStd>(summarize(s)) : std::nullopt;
  oversampled = o.size() >= 2 ? std::optional<MeanStd>(summarize(o)) : std::nullopt;
}

namespace {

json confusion_json(const Confusion& c) { return json(c.counts); }

Confusion confusion_from(const json& j) {
  Confusion c;
  c.counts = j.get<std::array<std::array<std::int64_t, 2>, 2>>();
  return c;
}

}  // namespace

std::string CVSummary::to_json() const {
  json j;
  j["name"] = name;
  j["family"] = family;
  j["oversample"] = oversample;
  j["notes"] = notes;
  json fj = json::array();
  for (const auto& f : folds) {
    json x = {{"fold", f.fold}, {"diverged", f.diverged}, {"error", f.error}, {"epochs", f.epochs},
              {"single", confusion_json(f.single)}};
    if (oversample) x["oversampled"] = confusion_json(f.oversampled);
    fj.push_back(x);
  }
  j["folds"] = fj;
  auto agg = [](const std::optional<MeanStd>& m) { return m ? json{{"mean", m->mean}, {"std", m->std}} : json(); };
  j["single"] = agg(single);
  j["oversampled"] = agg(oversampled);
  j["degenerate_single"] = degenerate_single;
  j["degenerate_oversampled"] = degenerate_oversampled;
  return j.dump(2) + "\n";
}

CVSummary CVSummary::from_json(const std::string& text) {
  CVSummary s;
  try {
    const json j = json::parse(text);
    s.name = j.at("name");
    s.family = j.at("family");
    s.oversample = j.at("oversample");
    s.notes = j.value("notes", std::vector<std::string>{});
    for (const auto& x : j.at("folds")) {
      FoldResult f;
      f.fold = x.at("fold");
      f.diverged = x.at("diverged");
      f.error = x.value("error", "");
      f.epochs = x.value("epochs", 0);
      f.single = confusion_from(x.at("single"));
      if (s.oversample) f.oversampled = confusion_from(x.at("oversampled"));
      s.folds.push_back(f);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kData, std::string("malformed summary: ") + e.what());
  }
  s.finalize();
  return s;
}

std::string family_of(const ExperimentConfig& config) {
  const auto& x = config.experiment;
  if (x.kind == "probe") return "probe";
  if (x.kind == "scratch") return "scratch";
  if (x.preset == "finetune") return "finetune";
  if (x.preset == "fc8-1000" || x.preset == "fc9-2") return "addition";
  return "ablation";
}

// ---- Data --------------------------------------------------------------------

namespace {

void say(const LogFn& log, const std::string& msg) {
  if (log) log(msg);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<Tensor> pick(const std::vector<Tensor>& all, const std::vector<int>& idx) {
  std::vector<Tensor> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(all[i]);
  return out;
}

std::vector<int> pick(const std::vector<int>& all, const std::vector<int>& idx) {
  std::vector<int> out;
  for (int i : idx) out.push_back(all[i]);
  return out;
}

std::string mean_text(const std::array<float, 3>& m) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g", m[0], m[1], m[2]);
  return buf;
}

std::vector<std::string> assumption_notes(const TrainConfig& t) {
  std::vector<std::string> notes;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "Unstated training hyperparameters use assumed values: momentum %g, weight decay %g, batch size %d.",
                t.momentum, t.weight_decay, t.batch_size);
  notes.push_back(buf);
  return notes;
}

}  // namespace

PreparedData prepare_dataset(const ExperimentConfig& config, const LogFn& log) {
  require(!config.dataset.manifest.empty(), ErrorCode::kData, "no dataset manifest configured (dataset.manifest)");
  PreparedData d;
  d.manifest = load_manifest(config.dataset.manifest);
  say(log, "manifest " + config.dataset.manifest + ": " + std::to_string(d.manifest.records.size()) + " images (" +
               std::to_string(d.manifest.positives) + " positive, " + std::to_string(d.manifest.negatives) +
               " negative)");
  d.images = load_images(d.manifest, config.preprocess.config.resize_to);
  if (d.manifest.has_folds) {
    d.folds = d.manifest.folds();
    d.k = d.manifest.num_folds;
    require(d.k >= 2, ErrorCode::kData, "manifest fold column must use at least 2 folds");
  } else {
    d.k = config.dataset.folds;
    d.folds = stratified_kfold(d.images.labels, d.k, mix_seed(config.seed, "folds"));
  }
  return d;
}

std::string prepare_data(const ExperimentConfig& config, const std::string& out_dir, const LogFn& log) {
  ExperimentConfig c = config;
  if (c.dataset.manifest.empty()) {
    const std::string dir = (fs::path(out_dir) / "data").string();
    c.dataset.manifest =
        write_binary_dataset(dir, c.dataset.synthetic_count, c.dataset.synthetic_size, mix_seed(c.seed, "synthetic"),
                             c.dataset.synthetic_contrast, c.dataset.synthetic_positives);
    say(log, "wrote synthetic dataset to " + dir);
  }
  const PreparedData d = prepare_dataset(c, log);
  DatasetManifest m = d.manifest;
  for (std::size_t i = 0; i < m.records.size(); ++i) m.records[i].fold = d.folds[i];
  const std::string path = (fs::path(out_dir) / "manifest.csv").string();
  write_manifest(m, path, true);
  write_mean_file(channel_mean(d.images.images, c.preprocess.config.order), (fs::path(out_dir) / "mean.txt").string());
  say(log, "wrote " + path + " with " + std::to_string(d.k) + " folds");
  return path;
}

Checkpoint pretrain(const ExperimentConfig& config, const std::string& out_dir, const LogFn& log) {
  const NetworkSpec spec = config.source_spec();
  require(config.experiment.source_classes >= kPretextClasses, ErrorCode::kInvalidArgument,
          "pretraining needs experiment.source_classes >= " + std::to_string(kPretextClasses));
  say(log, "rendering " + std::to_string(config.pretrain.images) + " pretext images");
  const SyntheticSet set = make_pretext_set(config.pretrain.images, config.pretrain.image_size,
                                            mix_seed(config.seed, "pretext"));
  std::vector<Tensor> squares;
  squares.reserve(set.images.size());
  for (const auto& img : set.images) squares.push_back(resize_square(img, config.preprocess.config.resize_to));
  PreprocessConfig prep = config.preprocess.config;
  if (config.preprocess.auto_mean) prep.mean = channel_mean(squares, prep.order);

  TrainConfig tc = config.pretrain.train;
  tc.seed = mix_seed(config.seed, "pretrain");
  const Checkpoint init = init_params(spec, mix_seed(config.seed, "init"), config.experiment.init);
  TrainResult r = train(spec, init, TrainSet{&squares, set.labels}, prep, tc, nullptr, [&](const EpochRecord& e) {
    say(log, "pretrain epoch " + std::to_string(e.epoch) + " loss " + fmt("%.4f", e.loss) + " acc " +
                 fmt("%.3f", e.train_acc));
    return true;
  });
  r.checkpoint.metadata["mean"] = mean_text(prep.mean);
  r.checkpoint.metadata["seed"] = std::to_string(config.seed);
  save_checkpoint(r.checkpoint, (fs::path(out_dir) / "pretrained.nsrg").string());
  write_text_file((fs::path(out_dir) / "pretrain_history.csv").string(), history_csv(r.history));
  return r.checkpoint;
}

namespace {

Checkpoint source_checkpoint(const ExperimentConfig& config, const NetworkSpec& spec, std::vector<std::string>& notes) {
  if (!config.experiment.init_checkpoint.empty()) {
    require(fs::exists(config.experiment.init_checkpoint), ErrorCode::kData,
            "checkpoint not found: " + config.experiment.init_checkpoint);
    return load_checkpoint(config.experiment.init_checkpoint, spec);
  }
  notes.push_back("No source checkpoint was given; source weights are randomly initialized.");
  return init_params(spec, mix_seed(config.seed, "source"), config.experiment.init);
}

std::array<float, 3> parse_mean(const std::string& text) {
  const auto parts = split(text, ',');
  require(parts.size() == 3, ErrorCode::kData, "checkpoint mean must hold three values");
  return {static_cast<float>(parse_double(parts[0])), static_cast<float>(parse_double(parts[1])),
          static_cast<float>(parse_double(parts[2]))};
}

}  // namespace

CVSummary cross_validate(const ExperimentConfig& config, const std::string& out_dir, const LogFn& log) {
  config.validate();
  const auto& x = config.experiment;
  require(x.kind != "probe", ErrorCode::kInvalidArgument, "probe experiments run through run_probe");
  const PreparedData data = prepare_dataset(config, log);
  const NetworkSpec source = config.source_spec();

  CVSummary summary;
  summary.name = config.output_name();
  summary.family = family_of(config);
  summary.oversample = x.oversample;

  std::optional<Checkpoint> source_ckpt;
  SurgeryPlan plan;
  LabelMap map;
  if (x.kind != "scratch") {
    source_ckpt = source_checkpoint(config, source, summary.notes);
    plan = preset_plan(x.preset, source);
    map = LabelMap::for_preset(x.preset);
  }
  const TrainConfig base_train = config.effective_train(plan.base_lr);
  for (const auto& n : assumption_notes(base_train)) summary.notes.push_back(n);
  if (plan.base_lr && !config.base_lr_explicit)
    summary.notes.push_back("Preset " + plan.name + " trains with base_lr " + fmt("%g", *plan.base_lr) + ".");
  if (x.preset == "fc8-1000" && x.kind != "scratch")
    summary.notes.push_back("fc8-1000 maps positive to class 0 and negative to class 1; other outputs are unused.");

  say(log, summary.name + ": base_lr " + fmt("%g", base_train.base_lr) + ", " + std::to_string(base_train.epochs) +
               " epochs, " + std::to_string(data.k) + " folds");
  const fs::path exp_dir = fs::path(out_dir) / summary.name;
  fs::create_directories(exp_dir);

  for (int f = 0; f < data.k; ++f) {
    const std::uint64_t fold_seed = mix_seed(config.seed, "fold" + std::to_string(f));
    const auto tr = fold_indices(data.folds, f, false), te = fold_indices(data.folds, f, true);
    const fs::path fold_dir = exp_dir / ("fold_" + std::to_string(f));
    fs::create_directories(fold_dir);
    FoldResult fr;
    fr.fold = f;
    const std::vector<Tensor> train_images = pick(data.images.images, tr), test_images = pick(data.images.images, te);
    const std::vector<int> train_labels = pick(data.images.labels, tr), test_labels = pick(data.images.labels, te);

    PreprocessConfig prep = config.preprocess.config;
    if (config.preprocess.auto_mean) prep.mean = channel_mean(train_images, prep.order);

    NetworkSpec spec;
    Checkpoint ckpt;
    if (x.kind == "scratch") {
      spec = x.network == "small" ? reference_spec_small(2) : reference_spec(2);
      ckpt = init_params(spec, mix_seed(fold_seed, "init"), x.init);
    } else {
      SurgeryResult s = apply(plan, source, *source_ckpt, mix_seed(fold_seed, "surgery"), x.init);
      spec = std::move(s.spec);
      ckpt = std::move(s.checkpoint);
    }
    TrainSet ts{&train_images, {}};
    for (int l : train_labels) ts.targets.push_back(map.class_of_label[l]);
    TrainConfig tc = base_train;
    tc.seed = mix_seed(fold_seed, "train");

    say(log, summary.name + " fold " + std::to_string(f) + ": training on " + std::to_string(tr.size()) +
                 " images, testing on " + std::to_string(te.size()));
    try {
      TrainResult r = train(spec, ckpt, ts, prep, tc);
      ckpt = std::move(r.checkpoint);
      fr.epochs = static_cast<int>(r.history.size());
      write_text_file((fold_dir / "history.csv").string(), history_csv(r.history));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDivergence) throw;
      fr.diverged = true;
      fr.error = e.what();
      write_text_file((fold_dir / "error.txt").string(), fr.error + "\n");
      say(log, summary.name + " fold " + std::to_string(f) + ": " + fr.error);
      summary.folds.push_back(fr);
      continue;
    }
    ckpt.metadata["mean"] = mean_text(prep.mean);
    ckpt.metadata["label_map"] = map.to_text();
    ckpt.metadata["fold"] = std::to_string(f);
    ckpt.metadata["seed"] = std::to_string(config.seed);
    save_checkpoint(ckpt, (fold_dir / "model.nsrg").string());

    EvalOptions eo;
    eo.fuse_probabilities = x.fuse_probabilities;
    const EvalResult single = evaluate(spec, ckpt, test_images, test_labels, prep, eo, map);
    fr.single = single.confusion;
    std::optional<EvalResult> over;
    if (x.oversample) {
      eo.oversample = true;
      over = evaluate(spec, ckpt, test_images, test_labels, prep, eo, map);
      fr.oversampled = over->confusion;
    }
    std::string pred = x.oversample ? "index,label,single,oversampled\n" : "index,label,single\n";
    for (std::size_t i = 0; i < te.size(); ++i) {
      pred += std::to_string(te[i]) + "," + std::to_string(test_labels[i]) + "," +
              std::to_string(single.predictions[i]);
      if (over) pred += "," + std::to_string(over->predictions[i]);
      pred += "\n";
    }
    write_text_file((fold_dir / "predictions.csv").string(), pred);
    say(log, summary.name + " fold " + std::to_string(f) + ": accuracy " + fmt("%.3f", single.accuracy) +
                 (over ? " / oversampled " + fmt("%.3f", over->accuracy) : std::string()));
    summary.folds.push_back(fr);
  }
  summary.finalize();
  write_text_file((exp_dir / "summary.json").string(), summary.to_json());
  write_text_file((exp_dir / "config.json").string(), config.to_json());
  return summary;
}

CVSummary recompute_summary(const std::string& experiment_dir) {
  const fs::path dir(experiment_dir);
  CVSummary s = CVSummary::from_json(read_text_file((dir / "summary.json").string()));
  for (auto& f : s.folds) {
    if (f.diverged) continue;
    f.single = Confusion{};
    f.oversampled = Confusion{};
    const auto lines = split(read_text_file((dir / ("fold_" + std::to_string(f.fold)) / "predictions.csv").string()), '\n');
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (trim(lines[i]).empty()) continue;
      const auto cols = split(lines[i], ',');
      require(cols.size() >= 3, ErrorCode::kData, "malformed predictions row in fold " + std::to_string(f.fold));
      const int label = parse_int(cols[1]);
      f.single.counts[label][parse_int(cols[2])]++;
      if (s.oversample) {
        require(cols.size() >= 4, ErrorCode::kData, "missing oversampled prediction");
        f.oversampled.counts[label][parse_int(cols[3])]++;
      }
    }
  }
  s.finalize();
  return s;
}

// ---- Probe experiments ---------------------------------------------------------

namespace {

std::string probe_json(const std::string& name, const ProbeReport& rep, const std::vector<std::string>& notes) {
  json j;
  j["name"] = name;
  j["family"] = "probe";
  j["standardized"] = rep.standardized;
  j["post_activation"] = rep.post_activation;
  j["notes"] = notes;
  json rows = json::array();
  for (const auto& r : rep.rows)
    rows.push_back({{"endpoint", r.endpoint},
                    {"kind", probe_kind_name(r.kind)},
                    {"fold_accuracy", r.fold_accuracy},
                    {"fold_lambda", r.fold_lambda}});
  j["rows"] = rows;
  return j.dump(2) + "\n";
}

ProbeReport probe_from_json(const json& j) {
  ProbeReport rep;
  rep.standardized = j.at("standardized");
  rep.post_activation = j.at("post_activation");
  for (const auto& r : j.at("rows")) {
    ProbeRow row;
    row.endpoint = r.at("endpoint");
    row.kind = r.at("kind") == "svm" ? ProbeKind::kSvm : ProbeKind::kSoftmax;
    row.fold_accuracy = r.at("fold_accuracy").get<std::vector<double>>();
    row.fold_lambda = r.at("fold_lambda").get<std::vector<double>>();
    row.summary = summarize(row.fold_accuracy);
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

}  // namespace

ProbeReport run_probe(const ExperimentConfig& config, const std::string& out_dir, const LogFn& log) {
  config.validate();
  const auto& x = config.experiment;
  const PreparedData data = prepare_dataset(config, log);
  const NetworkSpec spec = config.source_spec();
  std::vector<std::string> notes;
  const Checkpoint ckpt = source_checkpoint(config, spec, notes);

  PreprocessConfig prep = config.preprocess.config;
  if (config.preprocess.auto_mean) {
    const auto it = ckpt.metadata.find("mean");
    if (it != ckpt.metadata.end()) {
      prep.mean = parse_mean(it->second);
      notes.push_back("Probe inputs subtract the source network's stored channel mean.");
    } else {
      prep.mean = {127.5f, 127.5f, 127.5f};
      notes.push_back("Probe inputs subtract a neutral mean of 127.5; the source checkpoint stores none.");
    }
  }
  std::vector<std::string> endpoints = x.endpoints;
  if (endpoints.empty())
    for (const auto& e : probe_endpoints())
      if (spec.find(e) >= 0) endpoints.push_back(e);
  ProbeOptions po = x.probe;
  po.seed = mix_seed(config.seed, "probe");

  ProbeReport rep;
  rep.standardized = po.standardize;
  rep.post_activation = x.post_activation;
  for (const auto& e : endpoints) {
    say(log, "probing " + e);
    const ProbeReport one = probe_all_layers(spec, ckpt, data.images.images, data.images.labels, data.folds, {e},
                                             x.probe_kinds, prep, po, x.post_activation);
    for (const auto& r : one.rows) {
      say(log, "  " + e + " " + probe_kind_name(r.kind) + " " + format_mean_std(r.summary));
      rep.rows.push_back(r);
    }
  }
  notes.push_back("Probes use a single center-crop view per image.");
  const fs::path dir = fs::path(out_dir) / config.output_name();
  fs::create_directories(dir);
  write_text_file((dir / "probe.csv").string(), rep.csv());
  write_text_file((dir / "probe.md").string(), rep.markdown());
  write_text_file((dir / "summary.json").string(), probe_json(config.output_name(), rep, notes));
  write_text_file((dir / "config.json").string(), config.to_json());
  return rep;
}

// ---- Reports -----------------------------------------------------------------

namespace {

int family_rank(const std::string& f) {
  static const std::vector<std::string> order{"finetune", "ablation", "addition", "scratch", "probe"};
  const auto it = std::find(order.begin(), order.end(), f);
  return static_cast<int>(it - order.begin());
}

int name_rank(const std::string& n) {
  static const std::vector<std::string> order{"fc7-4096", "fc6-4096", "fc7-2", "fc6-2", "fc8-1000", "fc9-2"};
  const auto it = std::find(order.begin(), order.end(), n);
  return static_cast<int>(it - order.begin());
}

const char* family_title(const std::string& f) {
  if (f == "finetune") return "Fine-tuning";
  if (f == "ablation") return "Layer ablation";
  if (f == "addition") return "Layer addition";
  if (f == "scratch") return "Training from scratch";
  return "Other";
}

std::string cell(const std::optional<MeanStd>& m, bool degenerate) {
  if (!m) return "n/a";
  return format_mean_std(*m) + (degenerate ? " †" : "");
}

std::string csv_num(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string report_markdown(const std::vector<CVSummary>& summaries,
                            const std::vector<std::pair<std::string, ProbeReport>>& probes,
                            const std::vector<std::string>& footnotes) {
  std::vector<const CVSummary*> sorted;
  for (const auto& s : summaries) sorted.push_back(&s);
  std::stable_sort(sorted.begin(), sorted.end(), [](const CVSummary* a, const CVSummary* b) {
    if (family_rank(a->family) != family_rank(b->family)) return family_rank(a->family) < family_rank(b->family);
    if (name_rank(a->name) != name_rank(b->name)) return name_rank(a->name) < name_rank(b->name);
    return a->name < b->name;
  });
  std::string out = "# Results\n";
  std::string current;
  bool any_degenerate = false, any_diverged = false;
  for (const CVSummary* s : sorted) {
    if (s->family != current) {
      current = s->family;
      out += std::string("\n## ") + family_title(current) + "\n\n";
      out += "| Model | Without oversampling | With oversampling |\n|---|---|---|\n";
    }
    int diverged = 0;
    for (const auto& f : s->folds) diverged += f.diverged;
    any_diverged |= diverged > 0;
    any_degenerate |= s->degenerate_single || s->degenerate_oversampled;
    std::string name = s->name;
    if (diverged) name += " (" + std::to_string(diverged) + " diverged)";
    out += "| " + name + " | " + cell(s->single, s->degenerate_single) + " | " +
           (s->oversample ? cell(s->oversampled, s->degenerate_oversampled) : std::string("-")) + " |\n";
  }
  for (const auto& [name, rep] : probes) {
    out += "\n## Layer-wise probes: " + name + "\n\n" + rep.markdown();
  }
  out += "\nValues are mean ± sample standard deviation over cross-validation folds.\n";
  if (any_degenerate) out += "† at least one fold predicted a single class for every test image.\n";
  if (any_diverged) out += "Diverged folds are excluded from the mean and listed in the model column.\n";
  for (const auto& n : footnotes) out += "- " + n + "\n";
  return out;
}

std::string report_csv(const std::vector<CVSummary>& summaries,
                       const std::vector<std::pair<std::string, ProbeReport>>& probes) {
  std::string out = "family,model,variant,fold,accuracy,negative_accuracy,positive_accuracy,degenerate,diverged\n";
  for (const auto& s : summaries)
    for (const auto& f : s.folds) {
      const std::string head = s.family + "," + s.name + ",";
      auto row = [&](const char* variant, const Confusion& c) {
        out += head + variant + "," + std::to_string(f.fold) + ",";
        if (f.diverged) {
          out += ",,,,1\n";
          return;
        }
        out += csv_num(c.accuracy()) + "," + csv_num(c.class_accuracy(0)) + "," + csv_num(c.class_accuracy(1)) + "," +
               (c.degenerate() ? "1" : "0") + ",0\n";
      };
      row("single", f.single);
      if (s.oversample) row("oversampled", f.oversampled);
    }
  for (const auto& [name, rep] : probes)
    for (const auto& r : rep.rows)
      for (std::size_t f = 0; f < r.fold_accuracy.size(); ++f)
        out += "probe," + name + "/" + r.endpoint + "," + probe_kind_name(r.kind) + "," + std::to_string(f) + "," +
               csv_num(r.fold_accuracy[f]) + ",,,,0\n";
  return out;
}

void write_report(const std::string& out_dir) {
  require(fs::is_directory(out_dir), ErrorCode::kData, "output directory not found: " + out_dir);
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(out_dir))
    if (entry.is_directory() && fs::exists(entry.path() / "summary.json")) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  require(!dirs.empty(), ErrorCode::kData, "no completed experiments under " + out_dir);

  std::vector<CVSummary> summaries;
  std::vector<std::pair<std::string, ProbeReport>> probes;
  std::vector<std::string> notes;
  auto add_notes = [&](const std::vector<std::string>& ns) {
    for (const auto& n : ns)
      if (std::find(notes.begin(), notes.end(), n) == notes.end()) notes.push_back(n);
  };
  for (const auto& d : dirs) {
    const std::string text = read_text_file((d / "summary.json").string());
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      fail(ErrorCode::kData, "malformed " + (d / "summary.json").string() + ": " + e.what());
    }
    if (j.value("family", "") == "probe") {
      probes.emplace_back(j.value("name", d.filename().string()), probe_from_json(j));
      add_notes(j.value("notes", std::vector<std::string>{}));
    } else {
      summaries.push_back(CVSummary::from_json(text));
      add_notes(summaries.back().notes);
    }
  }
  write_text_file((fs::path(out_dir) / "report.md").string(), report_markdown(summaries, probes, notes));
  write_text_file((fs::path(out_dir) / "report.csv").string(), report_csv(summaries, probes));
}

ExperimentConfig with_out_defaults(const ExperimentConfig& config, const std::string& out_dir, const LogFn& log) {
  ExperimentConfig c = config;
  const fs::path manifest = fs::path(out_dir) / "manifest.csv";
  if (c.dataset.manifest.empty() && fs::exists(manifest)) {
    c.dataset.manifest = manifest.string();
    say(log, "using manifest " + c.dataset.manifest);
  }
  const fs::path pretrained = fs::path(out_dir) / "pretrained.nsrg";
  if (c.experiment.init_checkpoint.empty() && c.experiment.kind != "scratch" && fs::exists(pretrained)) {
    c.experiment.init_checkpoint = pretrained.string();
    say(log, "using source checkpoint " + c.experiment.init_checkpoint);
  }
  return c;
}

EvalResult evaluate_saved(const ExperimentConfig& config, const std::string& checkpoint_path,
                          const std::string& manifest_path, bool oversample) {
  require(fs::exists(checkpoint_path), ErrorCode::kData, "checkpoint not found: " + checkpoint_path);
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const auto spec_it = ckpt.metadata.find("spec");
  require(spec_it != ckpt.metadata.end(), ErrorCode::kSpecMismatch, "checkpoint does not record its network");
  const NetworkSpec spec = NetworkSpec::from_text(spec_it->second);
  validate_checkpoint(spec, ckpt);

  PreprocessConfig prep = config.preprocess.config;
  const auto mean_it = ckpt.metadata.find("mean");
  if (mean_it != ckpt.metadata.end())
    prep.mean = parse_mean(mean_it->second);
  else if (config.preprocess.auto_mean)
    prep.mean = {127.5f, 127.5f, 127.5f};
  const auto map_it = ckpt.metadata.find("label_map");
  const LabelMap map = map_it != ckpt.metadata.end() ? LabelMap::from_text(map_it->second) : LabelMap{};

  const DatasetManifest m = load_manifest(manifest_path);
  const LabeledImages data = load_images(m, prep.resize_to);
  EvalOptions eo;
  eo.oversample = oversample;
  eo.fuse_probabilities = config.experiment.fuse_probabilities;
  return evaluate(spec, ckpt, data.images, data.labels, prep, eo, map);
}

}  // namespace convprobe
