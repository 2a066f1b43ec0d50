#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "net.hpp"

namespace convprobe {

// Drops the named layer and everything above it, keeping the top SOFTMAX.
// Rectifiers left dangling directly below the SOFTMAX are dropped too.
struct RemoveTop {
  std::string layer;
};
// Swaps the topmost FC for a freshly initialized one with `units` outputs.
struct ReplaceTop {
  int units = 2;
  std::uint64_t init_seed = 0;
};
// Adds a new FC directly below the SOFTMAX, on top of the current top FC.
struct Append {
  std::string name;
  int units = 2;
  std::uint64_t init_seed = 0;
};

using SurgeryAction = std::variant<RemoveTop, ReplaceTop, Append>;

struct SurgeryPlan {
  std::string name;
  std::vector<SurgeryAction> actions;
  float new_lr_mult = 10.0f;
  // Training base rate suggested for the resulting architecture.
  std::optional<double> base_lr;
};

enum class AblationMode { kRaw, kReplace2 };
enum class AdditionMode { kKeepTop, kAppend2 };

SurgeryPlan finetune_plan(int num_classes = 2);
SurgeryPlan ablation_plan(const NetworkSpec& spec, int depth, AblationMode mode);
SurgeryPlan addition_plan(AdditionMode mode);

// finetune, fc7-4096, fc6-4096, fc7-2, fc6-2, fc8-1000, fc9-2.
const std::vector<std::string>& preset_names();
SurgeryPlan preset_plan(const std::string& preset, const NetworkSpec& spec);

struct SurgeryReport {
  std::vector<std::string> retained;  // parameterized layers copied from the source
  std::vector<std::string> added;     // freshly initialized layers
  std::vector<std::string> removed;
  std::int64_t params_before = 0;
  std::int64_t params_after = 0;
  std::int64_t params_after_recount = 0;  // summed from the output tensors
  bool retained_bit_exact = false;
};

struct SurgeryResult {
  NetworkSpec spec;
  Checkpoint checkpoint;
  SurgeryReport report;
};

// Pure transformation; the source pair is never modified.
SurgeryResult apply(const SurgeryPlan& plan, const NetworkSpec& spec, const Checkpoint& checkpoint,
                    std::uint64_t seed, const InitConfig& init = {});

}  // namespace convprobe
