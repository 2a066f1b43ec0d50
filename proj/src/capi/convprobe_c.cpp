#include "convprobe/convprobe.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <json.hpp>
#include <limits>
#include <new>
#include <sstream>
#include <string>

#include "harness.hpp"
#include "surgery.hpp"
#include "util.hpp"

using namespace convprobe;

struct cp_config {
  ExperimentConfig config;
};

struct cp_network {
  NetworkSpec spec;
  Checkpoint checkpoint;
};

namespace {

thread_local std::string g_last_error;
cp_log_fn g_log = nullptr;
void* g_log_user = nullptr;

cp_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return CP_INVALID_ARGUMENT;
    case ErrorCode::kShapeMismatch: return CP_SHAPE_MISMATCH;
    case ErrorCode::kBadMagic: return CP_BAD_MAGIC;
    case ErrorCode::kTruncated: return CP_TRUNCATED;
    case ErrorCode::kSpecMismatch: return CP_SPEC_MISMATCH;
    case ErrorCode::kIo: return CP_IO_ERROR;
    case ErrorCode::kData: return CP_DATA_ERROR;
    case ErrorCode::kDivergence: return CP_DIVERGENCE;
    case ErrorCode::kDegenerate: return CP_DEGENERATE;
  }
  return CP_INTERNAL;
}

template <typename F>
cp_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return CP_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown failure";
  }
  return CP_INTERNAL;
}

void need(const void* p, const char* what) {
  require(p != nullptr, ErrorCode::kInvalidArgument, std::string(what) + " must not be NULL");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

LogFn logger() {
  if (!g_log) return {};
  cp_log_fn fn = g_log;
  void* user = g_log_user;
  return [fn, user](const std::string& line) { fn(line.c_str(), user); };
}

NetworkSpec spec_of(const Checkpoint& ckpt) {
  const auto it = ckpt.metadata.find("spec");
  require(it != ckpt.metadata.end(), ErrorCode::kSpecMismatch, "checkpoint does not record its network");
  return NetworkSpec::from_text(it->second);
}

void make_dirs(const char* dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorCode::kIo, std::string("cannot create directory '") + dir + "': " + ec.message());
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ",") + s;
  return out.empty() ? "-" : out;
}

}  // namespace

extern "C" {

const char* cp_version(void) { return "0.1.0"; }

const char* cp_status_name(cp_status status) {
  switch (status) {
    case CP_OK: return "ok";
    case CP_INVALID_ARGUMENT: return "invalid argument";
    case CP_SHAPE_MISMATCH: return "shape mismatch";
    case CP_BAD_MAGIC: return "bad magic";
    case CP_TRUNCATED: return "truncated";
    case CP_SPEC_MISMATCH: return "spec mismatch";
    case CP_IO_ERROR: return "io error";
    case CP_DATA_ERROR: return "data error";
    case CP_DIVERGENCE: return "divergence";
    case CP_DEGENERATE: return "degenerate";
    case CP_INTERNAL: return "internal error";
  }
  return "unknown";
}

const char* cp_last_error(void) { return g_last_error.c_str(); }

void cp_set_log(cp_log_fn fn, void* user) {
  g_log = fn;
  g_log_user = user;
}

void cp_free_string(char* s) { std::free(s); }

cp_status cp_config_default(cp_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new cp_config{};
  });
}

cp_status cp_config_load(const char* path, cp_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new cp_config{ExperimentConfig::load(path)};
  });
}

cp_status cp_config_parse(const char* json, cp_config** out) {
  return guarded([&] {
    need(json, "json");
    need(out, "out");
    *out = new cp_config{ExperimentConfig::from_json(json)};
  });
}

cp_status cp_config_set(cp_config* config, const char* key, const char* json_value) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    need(json_value, "value");
    nlohmann::json root = nlohmann::json::parse(config->config.to_json());
    nlohmann::json value;
    try {
      value = nlohmann::json::parse(json_value);
    } catch (const nlohmann::json::exception&) {
      // bare words are taken as strings
      value = std::string(json_value);
    }
    nlohmann::json* node = &root;
    const auto parts = split(key, '.');
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      require(!parts[i].empty(), ErrorCode::kInvalidArgument, std::string("bad config key '") + key + "'");
      node = &(*node)[parts[i]];
    }
    (*node)[parts.back()] = value;
    config->config = ExperimentConfig::from_json(root.dump(), false);
  });
}

cp_status cp_config_to_json(const cp_config* config, char** out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    *out = dup(config->config.to_json());
  });
}

void cp_config_free(cp_config* config) { delete config; }

cp_status cp_prepare_data(const cp_config* config, const char* out_dir, char** manifest_path) {
  return guarded([&] {
    need(config, "config");
    need(out_dir, "out_dir");
    config->config.validate();
    make_dirs(out_dir);
    const std::string path = prepare_data(config->config, out_dir, logger());
    if (manifest_path) *manifest_path = dup(path);
  });
}

cp_status cp_pretrain(const cp_config* config, const char* out_dir) {
  return guarded([&] {
    need(config, "config");
    need(out_dir, "out_dir");
    config->config.validate();
    make_dirs(out_dir);
    pretrain(config->config, out_dir, logger());
  });
}

cp_status cp_run_experiment(const cp_config* config, const char* out_dir, double* mean_single,
                            double* mean_oversampled) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (mean_single) *mean_single = nan;
  if (mean_oversampled) *mean_oversampled = nan;
  return guarded([&] {
    need(config, "config");
    need(out_dir, "out_dir");
    config->config.validate();
    make_dirs(out_dir);
    const ExperimentConfig c = with_out_defaults(config->config, out_dir, logger());
    if (c.experiment.kind == "probe") {
      run_probe(c, out_dir, logger());
      return;
    }
    const CVSummary s = cross_validate(c, out_dir, logger());
    bool any = false;
    for (const auto& f : s.folds) any |= !f.diverged;
    require(any, ErrorCode::kDivergence, "training diverged in all " + std::to_string(s.folds.size()) + " folds");
    if (mean_single && s.single) *mean_single = s.single->mean;
    if (mean_oversampled && s.oversampled) *mean_oversampled = s.oversampled->mean;
  });
}

cp_status cp_evaluate(const cp_config* config, const char* checkpoint_path, const char* manifest_path,
                      int oversample, double* accuracy, int64_t confusion[4]) {
  return guarded([&] {
    need(config, "config");
    need(checkpoint_path, "checkpoint_path");
    need(manifest_path, "manifest_path");
    config->config.validate();
    const EvalResult r = evaluate_saved(config->config, checkpoint_path, manifest_path, oversample != 0);
    if (accuracy) *accuracy = r.accuracy;
    if (confusion)
      for (int i = 0; i < 4; ++i) confusion[i] = r.confusion.counts[i / 2][i % 2];
  });
}

cp_status cp_report(const char* out_dir) {
  return guarded([&] {
    need(out_dir, "out_dir");
    write_report(out_dir);
  });
}

cp_status cp_network_load(const char* path, cp_network** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    Checkpoint ckpt = load_checkpoint(path);
    NetworkSpec spec = spec_of(ckpt);
    validate_checkpoint(spec, ckpt);
    *out = new cp_network{std::move(spec), std::move(ckpt)};
  });
}

cp_status cp_network_create(const char* kind, int top_units, uint64_t seed, cp_network** out) {
  return guarded([&] {
    need(kind, "kind");
    need(out, "out");
    const std::string k = kind;
    require(k == "reference" || k == "small", ErrorCode::kInvalidArgument, "network kind must be reference or small");
    require(top_units >= 1, ErrorCode::kInvalidArgument, "top_units must be positive");
    NetworkSpec spec = k == "small" ? reference_spec_small(top_units) : reference_spec(top_units);
    Checkpoint ckpt = init_params(spec, seed);
    *out = new cp_network{std::move(spec), std::move(ckpt)};
  });
}

int64_t cp_network_param_count(const cp_network* net) { return net ? param_count(net->checkpoint) : -1; }

cp_status cp_network_describe(const cp_network* net, char** out) {
  return guarded([&] {
    need(net, "net");
    need(out, "out");
    *out = dup(net->spec.to_text());
  });
}

cp_status cp_network_apply_preset(const cp_network* net, const char* preset, uint64_t seed, cp_network** out,
                                  char** report) {
  return guarded([&] {
    need(net, "net");
    need(preset, "preset");
    need(out, "out");
    const SurgeryPlan plan = preset_plan(preset, net->spec);
    SurgeryResult r = apply(plan, net->spec, net->checkpoint, seed);
    if (report) {
      std::ostringstream o;
      o << "preset " << plan.name << "\n"
        << "retained " << join(r.report.retained) << "\n"
        << "added " << join(r.report.added) << "\n"
        << "removed " << join(r.report.removed) << "\n"
        << "params_before " << r.report.params_before << "\n"
        << "params_after " << r.report.params_after << "\n"
        << "retained_bit_exact " << (r.report.retained_bit_exact ? "yes" : "no") << "\n";
      if (plan.base_lr) o << "suggested_base_lr " << *plan.base_lr << "\n";
      *report = dup(o.str());
    }
    *out = new cp_network{std::move(r.spec), std::move(r.checkpoint)};
  });
}

cp_status cp_network_save(const cp_network* net, const char* path) {
  return guarded([&] {
    need(net, "net");
    need(path, "path");
    save_checkpoint(net->checkpoint, path);
  });
}

void cp_network_free(cp_network* net) { delete net; }

}  // extern "C"
