#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "convprobe/convprobe.h"

namespace {

enum Exit { kOk = 0, kUsage = 1, kDataError = 2, kDiverged = 3 };

struct Failure {
  cp_status status;
};

int exit_code(cp_status s) {
  if (s == CP_OK) return kOk;
  if (s == CP_INVALID_ARGUMENT) return kUsage;
  if (s == CP_DIVERGENCE) return kDiverged;
  return kDataError;
}

void check(cp_status s) {
  if (s != CP_OK) throw Failure{s};
}

std::string json_string(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

void stderr_log(const char* line, void*) { std::fprintf(stderr, "%s\n", line); }

struct Globals {
  std::string config;
  long long seed = -1;
  std::string out = "runs";
  std::vector<std::string> sets;
  bool quiet = false;
};

struct Config {
  cp_config* handle = nullptr;
  ~Config() { cp_config_free(handle); }
  void set(const std::string& key, const std::string& json_value) { check(cp_config_set(handle, key.c_str(), json_value.c_str())); }
};

void load(Config& c, const Globals& g) {
  check(g.config.empty() ? cp_config_default(&c.handle) : cp_config_load(g.config.c_str(), &c.handle));
  if (g.seed >= 0) c.set("seeds.base", std::to_string(g.seed));
  for (const auto& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::fprintf(stderr, "--set expects KEY=VALUE, got '%s'\n", kv.c_str());
      throw Failure{CP_INVALID_ARGUMENT};
    }
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
}

void print_means(const char* name, double single, double over) {
  std::printf("%s: accuracy", name);
  if (std::isnan(single))
    std::printf(" n/a");
  else
    std::printf(" %.3f", single);
  if (!std::isnan(over)) std::printf(", oversampled %.3f", over);
  std::printf("\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transfer-learning and probing experiments for small convolutional networks", "convprobe"};
  app.fallthrough();
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Base seed (overrides seeds.base)")->check(CLI::NonNegativeNumber);
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--set", g.sets, "Config override KEY=JSON, e.g. train.epochs=10");
  app.add_flag("-q,--quiet", g.quiet, "No progress output");

  auto* prepare = app.add_subcommand("prepare-data", "Load or generate the labeled dataset and assign folds");
  std::string manifest;
  int count = 0, folds = 0;
  prepare->add_option("--manifest", manifest, "Existing manifest CSV (path,label[,fold])");
  prepare->add_option("--count", count, "Synthetic image count")->check(CLI::PositiveNumber);
  prepare->add_option("--folds", folds, "Number of cross-validation folds")->check(CLI::Range(2, 1000));

  auto* pre = app.add_subcommand("pretrain", "Train the source network on the synthetic pretext task");
  int pre_images = 0, pre_epochs = 0;
  pre->add_option("--images", pre_images, "Pretext image count")->check(CLI::PositiveNumber);
  pre->add_option("--epochs", pre_epochs, "Training epochs")->check(CLI::PositiveNumber);

  std::string init_checkpoint;
  int epochs = 0;
  double base_lr = 0;
  bool no_oversample = false;
  auto training_options = [&](CLI::App* sub) {
    sub->add_option("--init-checkpoint", init_checkpoint, "Source network checkpoint");
    sub->add_option("--epochs", epochs, "Training epochs")->check(CLI::PositiveNumber);
    sub->add_option("--base-lr", base_lr, "Base learning rate")->check(CLI::PositiveNumber);
    sub->add_flag("--no-oversample", no_oversample, "Skip ten-crop evaluation");
  };

  auto* finetune = app.add_subcommand("finetune", "Cross-validated fine-tuning with a new two-way top layer");
  bool scratch = false;
  training_options(finetune);
  finetune->add_flag("--from-scratch", scratch, "Train a randomly initialized network instead");

  auto* surgery = app.add_subcommand("surgery", "Cross-validated training after layer ablation or addition");
  std::string preset, save_path;
  training_options(surgery);
  surgery->add_option("--preset", preset, "fc7-4096, fc6-4096, fc7-2, fc6-2, fc8-1000, fc9-2 or finetune")->required();
  surgery->add_option("--save", save_path, "Only apply the preset to the source network and write it here");

  auto* probe = app.add_subcommand("probe", "Linear probes on frozen activations, per layer");
  std::vector<std::string> endpoints, kinds;
  probe->add_option("--init-checkpoint", init_checkpoint, "Network to probe");
  probe->add_option("--endpoints", endpoints, "Layers to probe (default: all)")->delimiter(',');
  probe->add_option("--kinds", kinds, "svm and/or softmax")->delimiter(',');

  auto* eval = app.add_subcommand("evaluate", "Evaluate a saved model on a manifest");
  std::string checkpoint, eval_manifest;
  bool oversample = false;
  eval->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  eval->add_option("--manifest", eval_manifest, "Manifest CSV (default: config or <out>/manifest.csv)");
  eval->add_flag("--oversample", oversample, "Average scores over ten crops");

  auto* report = app.add_subcommand("report", "Write report.md and report.csv from completed experiments");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n\n%s", e.what(), app.help().c_str());
    return kUsage;
  }
  if (!g.quiet) cp_set_log(stderr_log, nullptr);

  try {
    Config c;
    load(c, g);
    const char* out = g.out.c_str();
    if (*prepare) {
      if (!manifest.empty()) c.set("dataset.manifest", json_string(manifest));
      if (count) c.set("dataset.synthetic.count", std::to_string(count));
      if (folds) c.set("dataset.folds", std::to_string(folds));
      char* path = nullptr;
      check(cp_prepare_data(c.handle, out, &path));
      std::printf("%s\n", path);
      cp_free_string(path);
    } else if (*pre) {
      if (pre_images) c.set("pretrain.images", std::to_string(pre_images));
      if (pre_epochs) c.set("pretrain.epochs", std::to_string(pre_epochs));
      check(cp_pretrain(c.handle, out));
      std::printf("%s\n", (std::filesystem::path(g.out) / "pretrained.nsrg").string().c_str());
    } else if (*finetune || *surgery) {
      if (!init_checkpoint.empty()) c.set("experiment.init_checkpoint", json_string(init_checkpoint));
      if (epochs) c.set("train.epochs", std::to_string(epochs));
      if (base_lr > 0) c.set("train.base_lr", CLI::detail::to_string(base_lr));
      if (no_oversample) c.set("experiment.oversample", "false");
      if (*finetune) {
        c.set("experiment.kind", scratch ? "\"scratch\"" : "\"finetune\"");
        c.set("experiment.preset", "\"finetune\"");
      } else {
        c.set("experiment.kind", "\"surgery\"");
        c.set("experiment.preset", json_string(preset));
      }
      if (*surgery && !save_path.empty()) {
        std::string source = init_checkpoint;
        if (source.empty()) source = (std::filesystem::path(g.out) / "pretrained.nsrg").string();
        cp_network* net = nullptr;
        cp_network* result = nullptr;
        char* text = nullptr;
        check(cp_network_load(source.c_str(), &net));
        const cp_status s = cp_network_apply_preset(net, preset.c_str(), 0, &result, &text);
        cp_network_free(net);
        check(s);
        const cp_status saved = cp_network_save(result, save_path.c_str());
        cp_network_free(result);
        check(saved);
        std::printf("%s", text);
        cp_free_string(text);
        return kOk;
      }
      double single = NAN, over = NAN;
      check(cp_run_experiment(c.handle, out, &single, &over));
      print_means(*finetune ? (scratch ? "scratch" : "finetune") : preset.c_str(), single, over);
    } else if (*probe) {
      if (!init_checkpoint.empty()) c.set("experiment.init_checkpoint", json_string(init_checkpoint));
      c.set("experiment.kind", "\"probe\"");
      if (!endpoints.empty()) {
        std::string list = "[";
        for (const auto& e : endpoints) list += (list.size() > 1 ? "," : "") + json_string(e);
        c.set("experiment.endpoints", list + "]");
      }
      if (!kinds.empty()) {
        std::string list = "[";
        for (const auto& k : kinds) list += (list.size() > 1 ? "," : "") + json_string(k);
        c.set("experiment.probe.kinds", list + "]");
      }
      check(cp_run_experiment(c.handle, out, nullptr, nullptr));
      std::printf("%s\n", (std::filesystem::path(g.out) / "probe" / "probe.md").string().c_str());
    } else if (*eval) {
      if (eval_manifest.empty()) {
        char* json = nullptr;
        check(cp_config_to_json(c.handle, &json));
        const std::string text = json;
        cp_free_string(json);
        const auto key = text.find("\"manifest\": \"");
        if (key != std::string::npos) {
          const auto start = key + 13;
          eval_manifest = text.substr(start, text.find('"', start) - start);
        }
        if (eval_manifest.empty()) eval_manifest = (std::filesystem::path(g.out) / "manifest.csv").string();
      }
      double acc = 0;
      int64_t conf[4] = {0, 0, 0, 0};
      check(cp_evaluate(c.handle, checkpoint.c_str(), eval_manifest.c_str(), oversample ? 1 : 0, &acc, conf));
      std::printf("accuracy %.4f\n", acc);
      std::printf("confusion (rows true negative/positive, columns predicted negative/positive)\n");
      std::printf("%lld %lld\n%lld %lld\n", static_cast<long long>(conf[0]), static_cast<long long>(conf[1]),
                  static_cast<long long>(conf[2]), static_cast<long long>(conf[3]));
    } else if (*report) {
      check(cp_report(out));
      std::printf("%s\n", (std::filesystem::path(g.out) / "report.md").string().c_str());
    }
  } catch (const Failure& f) {
    const char* msg = cp_last_error();
    std::fprintf(stderr, "error: %s\n", *msg ? msg : cp_status_name(f.status));
    return exit_code(f.status);
  }
  return kOk;
}
