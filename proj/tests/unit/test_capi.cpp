#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include "convprobe/convprobe.h"

namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) { return (fs::temp_directory_path() / ("convprobe_capi_" + name)).string(); }

}  // namespace

TEST_CASE("status names and errors") {
  CHECK(std::string(cp_version()) == "0.1.0");
  CHECK(std::string(cp_status_name(CP_DATA_ERROR)) == "data error");
  CHECK(cp_config_default(nullptr) == CP_INVALID_ARGUMENT);
  CHECK(std::string(cp_last_error()).find("NULL") != std::string::npos);
  cp_config* c = nullptr;
  CHECK(cp_config_load("/nonexistent.json", &c) == CP_DATA_ERROR);
  CHECK(c == nullptr);
  CHECK(cp_config_parse("{\"nope\": 1}", &c) == CP_INVALID_ARGUMENT);
  CHECK(cp_report("/nonexistent_dir") == CP_DATA_ERROR);
}

TEST_CASE("config keys can be set and serialized") {
  cp_config* c = nullptr;
  REQUIRE(cp_config_default(&c) == CP_OK);
  CHECK(cp_config_set(c, "train.epochs", "7") == CP_OK);
  CHECK(cp_config_set(c, "experiment.preset", "fc7-2") == CP_OK);
  CHECK(cp_config_set(c, "preprocess.mean", "\"median\"") == CP_INVALID_ARGUMENT);
  CHECK(cp_config_set(c, "bogus.key", "1") == CP_INVALID_ARGUMENT);
  CHECK(cp_config_set(c, "train.epochz", "1") == CP_INVALID_ARGUMENT);
  CHECK(std::string(cp_last_error()).find("train.epochz") != std::string::npos);
  char* json = nullptr;
  REQUIRE(cp_config_to_json(c, &json) == CP_OK);
  const std::string text = json;
  cp_free_string(json);
  CHECK(text.find("\"epochs\": 7") != std::string::npos);
  CHECK(text.find("\"fc7-2\"") != std::string::npos);
  cp_config* again = nullptr;
  REQUIRE(cp_config_parse(text.c_str(), &again) == CP_OK);
  cp_config_free(again);
  cp_config_free(c);
}

TEST_CASE("network surgery through handles") {
  cp_network* net = nullptr;
  REQUIRE(cp_network_create("small", 10, 5, &net) == CP_OK);
  const int64_t before = cp_network_param_count(net);
  CHECK(before > 0);
  cp_network* cut = nullptr;
  char* report = nullptr;
  REQUIRE(cp_network_apply_preset(net, "fc7-2", 1, &cut, &report) == CP_OK);
  const std::string rep = report;
  cp_free_string(report);
  CHECK(rep.find("retained_bit_exact yes") != std::string::npos);
  CHECK(cp_network_param_count(cut) < before);
  CHECK(cp_network_apply_preset(net, "fc5-3", 1, &cut, nullptr) == CP_INVALID_ARGUMENT);

  const std::string path = temp_path("net.nsrg");
  REQUIRE(cp_network_save(cut, path.c_str()) == CP_OK);
  cp_network* loaded = nullptr;
  REQUIRE(cp_network_load(path.c_str(), &loaded) == CP_OK);
  CHECK(cp_network_param_count(loaded) == cp_network_param_count(cut));
  char* desc = nullptr;
  REQUIRE(cp_network_describe(loaded, &desc) == CP_OK);
  CHECK(std::string(desc).find("fc7") != std::string::npos);
  cp_free_string(desc);
  CHECK(cp_network_param_count(nullptr) == -1);
  cp_network_free(loaded);
  cp_network_free(cut);
  cp_network_free(net);
  fs::remove(path);

  std::FILE* f = std::fopen(path.c_str(), "wb");
  std::fputs("not a checkpoint", f);
  std::fclose(f);
  CHECK(cp_network_load(path.c_str(), &loaded) == CP_BAD_MAGIC);
  fs::remove(path);
}

TEST_CASE("pipeline through the C API") {
  const std::string out = temp_path("pipeline");
  fs::remove_all(out);
  cp_config* c = nullptr;
  REQUIRE(cp_config_default(&c) == CP_OK);
  for (const auto& [k, v] : {std::pair{"dataset.synthetic.count", "16"}, {"dataset.folds", "2"},
                             {"preprocess.resize_to", "72"}, {"preprocess.crop", "64"},
                             {"preprocess.scale", "0.0078125"}, {"train.epochs", "1"}, {"train.batch_size", "8"},
                             {"experiment.network", "\"small\""}, {"experiment.source_classes", "10"},
                             {"experiment.init", "\"he\""}})
    REQUIRE(cp_config_set(c, k, v) == CP_OK);
  char* manifest = nullptr;
  REQUIRE(cp_prepare_data(c, out.c_str(), &manifest) == CP_OK);
  CHECK(fs::exists(manifest));
  double single = 0, over = 0;
  REQUIRE(cp_run_experiment(c, out.c_str(), &single, &over) == CP_OK);
  CHECK(single >= 0.0);
  CHECK(single <= 1.0);
  CHECK(!std::isnan(over));
  double acc = -1;
  int64_t conf[4];
  const std::string model = out + "/finetune/fold_0/model.nsrg";
  REQUIRE(cp_evaluate(c, model.c_str(), manifest, 0, &acc, conf) == CP_OK);
  CHECK(conf[0] + conf[1] + conf[2] + conf[3] == 16);
  CHECK(acc == doctest::Approx(static_cast<double>(conf[0] + conf[3]) / 16));
  REQUIRE(cp_report(out.c_str()) == CP_OK);
  CHECK(fs::exists(out + "/report.md"));

  REQUIRE(cp_config_set(c, "train.base_lr", "1e30") == CP_OK);
  REQUIRE(cp_config_set(c, "train.epochs", "3") == CP_OK);
  CHECK(cp_run_experiment(c, out.c_str(), &single, nullptr) == CP_DIVERGENCE);
  CHECK(std::isnan(single));
  cp_free_string(manifest);
  cp_config_free(c);
  fs::remove_all(out);
}
