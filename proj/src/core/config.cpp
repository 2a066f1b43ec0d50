#include "config.hpp"

#include <json.hpp>

#include "surgery.hpp"
#include "synthetic.hpp"
#include "util.hpp"

namespace convprobe {

using nlohmann::json;

namespace {

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_train(const json& j, TrainConfig& t, bool* base_lr_explicit) {
  if (base_lr_explicit) *base_lr_explicit = j.contains("base_lr");
  take(j, "base_lr", t.base_lr);
  take(j, "step_epochs", t.step_epochs);
  take(j, "gamma", t.gamma);
  take(j, "epochs", t.epochs);
  take(j, "momentum", t.momentum);
  take(j, "weight_decay", t.weight_decay);
  take(j, "batch_size", t.batch_size);
}

json write_train(const TrainConfig& t) {
  return {{"base_lr", t.base_lr},         {"step_epochs", t.step_epochs}, {"gamma", t.gamma},
          {"epochs", t.epochs},           {"momentum", t.momentum},       {"weight_decay", t.weight_decay},
          {"batch_size", t.batch_size}};
}

ProbeKind parse_kind(const std::string& s) {
  if (s == "svm") return ProbeKind::kSvm;
  if (s == "softmax") return ProbeKind::kSoftmax;
  fail(ErrorCode::kInvalidArgument, "unknown probe kind '" + s + "'");
}

void reject_unknown(const json& given, const json& known, const std::string& prefix) {
  if (!given.is_object() || !known.is_object()) return;
  for (const auto& [key, value] : given.items()) {
    require(known.contains(key), ErrorCode::kInvalidArgument, "unknown config key '" + prefix + key + "'");
    reject_unknown(value, known[key], prefix + key + ".");
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const std::string& text, bool check) {
  ExperimentConfig c;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidArgument, std::string("config is not valid JSON: ") + e.what());
  }
  require(root.is_object(), ErrorCode::kInvalidArgument, "config must be a JSON object");
  try {
    for (const auto& [key, _] : root.items())
      require(key == "dataset" || key == "preprocess" || key == "train" || key == "pretrain" ||
                  key == "experiment" || key == "seeds",
              ErrorCode::kInvalidArgument, "unknown config section '" + key + "'");
    if (root.contains("dataset")) {
      const json& d = root["dataset"];
      take(d, "manifest", c.dataset.manifest);
      take(d, "folds", c.dataset.folds);
      if (d.contains("synthetic")) {
        const json& s = d["synthetic"];
        take(s, "count", c.dataset.synthetic_count);
        take(s, "size", c.dataset.synthetic_size);
        take(s, "contrast", c.dataset.synthetic_contrast);
        take(s, "positives", c.dataset.synthetic_positives);
      }
    }
    if (root.contains("preprocess")) {
      const json& p = root["preprocess"];
      take(p, "resize_to", c.preprocess.config.resize_to);
      take(p, "crop", c.preprocess.config.crop);
      take(p, "scale", c.preprocess.config.scale);
      if (p.contains("mean")) {
        if (p["mean"].is_string()) {
          require(p["mean"] == "auto", ErrorCode::kInvalidArgument, "preprocess.mean must be \"auto\" or [r,g,b]");
          c.preprocess.auto_mean = true;
        } else {
          c.preprocess.config.mean = p["mean"].get<std::array<float, 3>>();
          c.preprocess.auto_mean = false;
        }
      }
      if (p.contains("channel_order")) {
        const std::string o = p["channel_order"];
        require(o == "rgb" || o == "bgr", ErrorCode::kInvalidArgument, "channel_order must be rgb or bgr");
        c.preprocess.config.order = o == "rgb" ? ChannelOrder::kRgb : ChannelOrder::kBgr;
      }
    }
    if (root.contains("train")) read_train(root["train"], c.train, &c.base_lr_explicit);
    if (root.contains("pretrain")) {
      const json& p = root["pretrain"];
      take(p, "images", c.pretrain.images);
      take(p, "image_size", c.pretrain.image_size);
      read_train(p, c.pretrain.train, nullptr);
    }
    if (root.contains("experiment")) {
      const json& e = root["experiment"];
      auto& x = c.experiment;
      take(e, "kind", x.kind);
      take(e, "preset", x.preset);
      take(e, "name", x.name);
      take(e, "oversample", x.oversample);
      take(e, "network", x.network);
      take(e, "source_classes", x.source_classes);
      take(e, "init_checkpoint", x.init_checkpoint);
      if (e.contains("init")) {
        const std::string s = e["init"];
        require(s == "gaussian" || s == "he", ErrorCode::kInvalidArgument, "experiment.init must be gaussian or he");
        x.init.scheme = s == "he" ? InitScheme::kHe : InitScheme::kGaussian;
      }
      take(e, "init_std", x.init.std);
      if (e.contains("fusion")) {
        const std::string s = e["fusion"];
        require(s == "softmax" || s == "logits", ErrorCode::kInvalidArgument,
                "experiment.fusion must be softmax or logits");
        x.fuse_probabilities = s == "softmax";
      }
      take(e, "endpoints", x.endpoints);
      take(e, "post_activation", x.post_activation);
      if (e.contains("probe")) {
        const json& p = e["probe"];
        if (p.contains("kinds")) {
          x.probe_kinds.clear();
          for (const auto& k : p["kinds"]) x.probe_kinds.push_back(parse_kind(k.get<std::string>()));
        }
        take(p, "lambda_grid", x.probe.lambda_grid);
        take(p, "inner_folds", x.probe.inner_folds);
        take(p, "svm_steps", x.probe.svm_steps);
        take(p, "softmax_steps", x.probe.softmax_steps);
        take(p, "standardize", x.probe.standardize);
      }
    }
    if (root.contains("seeds")) take(root["seeds"], "base", c.seed);
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidArgument, std::string("bad config value: ") + e.what());
  }
  reject_unknown(root, json::parse(c.to_json()), "");
  if (check) c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error&) {
    fail(ErrorCode::kData, "cannot read config '" + path + "'");
  }
  return from_json(text);
}

std::string ExperimentConfig::to_json() const {
  json root;
  root["dataset"] = {{"manifest", dataset.manifest},
                     {"folds", dataset.folds},
                     {"synthetic",
                      {{"count", dataset.synthetic_count},
                       {"size", dataset.synthetic_size},
                       {"contrast", dataset.synthetic_contrast},
                       {"positives", dataset.synthetic_positives}}}};
  json mean = preprocess.auto_mean ? json("auto") : json(preprocess.config.mean);
  root["preprocess"] = {{"resize_to", preprocess.config.resize_to},
                        {"crop", preprocess.config.crop},
                        {"scale", preprocess.config.scale},
                        {"mean", mean},
                        {"channel_order", preprocess.config.order == ChannelOrder::kRgb ? "rgb" : "bgr"}};
  root["train"] = write_train(train);
  if (!base_lr_explicit) root["train"].erase("base_lr");
  json pre = write_train(pretrain.train);
  pre["images"] = pretrain.images;
  pre["image_size"] = pretrain.image_size;
  root["pretrain"] = pre;
  const auto& x = experiment;
  json kinds = json::array();
  for (ProbeKind k : x.probe_kinds) kinds.push_back(probe_kind_name(k));
  root["experiment"] = {{"kind", x.kind},
                        {"preset", x.preset},
                        {"name", x.name},
                        {"oversample", x.oversample},
                        {"network", x.network},
                        {"source_classes", x.source_classes},
                        {"init_checkpoint", x.init_checkpoint},
                        {"init", x.init.scheme == InitScheme::kHe ? "he" : "gaussian"},
                        {"init_std", x.init.std},
                        {"fusion", x.fuse_probabilities ? "softmax" : "logits"},
                        {"endpoints", x.endpoints},
                        {"post_activation", x.post_activation},
                        {"probe",
                         {{"kinds", kinds},
                          {"lambda_grid", x.probe.lambda_grid},
                          {"inner_folds", x.probe.inner_folds},
                          {"svm_steps", x.probe.svm_steps},
                          {"softmax_steps", x.probe.softmax_steps},
                          {"standardize", x.probe.standardize}}}};
  root["seeds"] = {{"base", seed}};
  return root.dump(2) + "\n";
}

void ExperimentConfig::validate() const {
  require(dataset.folds >= 2, ErrorCode::kInvalidArgument, "dataset.folds must be at least 2");
  require(dataset.synthetic_count >= 2 * dataset.folds, ErrorCode::kInvalidArgument,
          "dataset.synthetic.count is too small for the fold count");
  preprocess.config.validate();
  train.validate();
  pretrain.train.validate();
  require(pretrain.images >= kPretextClasses, ErrorCode::kInvalidArgument, "pretrain.images is too small");
  const auto& x = experiment;
  require(x.kind == "finetune" || x.kind == "surgery" || x.kind == "scratch" || x.kind == "probe",
          ErrorCode::kInvalidArgument, "experiment.kind must be finetune, surgery, scratch or probe");
  if (x.kind == "surgery" || x.kind == "finetune") {
    const auto& names = preset_names();
    require(std::find(names.begin(), names.end(), x.preset) != names.end(), ErrorCode::kInvalidArgument,
            "unknown surgery preset '" + x.preset + "'");
  }
  require(x.network == "reference" || x.network == "small", ErrorCode::kInvalidArgument,
          "experiment.network must be reference or small");
  require(x.source_classes >= 2, ErrorCode::kInvalidArgument, "experiment.source_classes must be at least 2");
  require(!x.probe.lambda_grid.empty(), ErrorCode::kInvalidArgument, "probe.lambda_grid is empty");
  for (double l : x.probe.lambda_grid) require(l > 0, ErrorCode::kInvalidArgument, "probe lambdas must be positive");
}

NetworkSpec ExperimentConfig::source_spec() const {
  NetworkSpec s = experiment.network == "small" ? reference_spec_small(experiment.source_classes)
                                                : reference_spec(experiment.source_classes);
  require(s.input_shape[1] == preprocess.config.crop && s.input_shape[2] == preprocess.config.crop,
          ErrorCode::kInvalidArgument,
          "preprocess.crop " + std::to_string(preprocess.config.crop) + " does not match the " + experiment.network +
              " network input " + std::to_string(s.input_shape[1]));
  return s;
}

std::string ExperimentConfig::output_name() const {
  if (!experiment.name.empty()) return experiment.name;
  if (experiment.kind == "surgery") return experiment.preset;
  return experiment.kind;
}

TrainConfig ExperimentConfig::effective_train(const std::optional<double>& preset_base_lr) const {
  TrainConfig t = train;
  if (preset_base_lr && !base_lr_explicit) t.base_lr = *preset_base_lr;
  t.seed = seed;
  return t;
}

}  // namespace convprobe
