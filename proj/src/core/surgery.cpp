#include "surgery.hpp"

#include <algorithm>
#include <set>

#include "util.hpp"

namespace convprobe {

SurgeryPlan finetune_plan(int num_classes) {
  require(num_classes >= 2, ErrorCode::kInvalidArgument, "a classification head needs at least 2 classes");
  return {"finetune", {ReplaceTop{num_classes, 1}}, 10.0f, std::nullopt};
}

namespace {

std::vector<int> fc_layers(const NetworkSpec& spec) {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(spec.layers.size()); ++i)
    if (spec.layers[i].kind() == LayerKind::kFc) out.push_back(i);
  return out;
}

int units_of(const LayerSpec& l) { return std::get<FcParams>(l.params).units; }

}  // namespace

SurgeryPlan ablation_plan(const NetworkSpec& spec, int depth, AblationMode mode) {
  const auto fcs = fc_layers(spec);
  require(depth >= 1, ErrorCode::kInvalidArgument, "ablation depth must be at least 1");
  require(depth < static_cast<int>(fcs.size()), ErrorCode::kInvalidArgument,
          "ablation depth " + std::to_string(depth) + " leaves no FC layer (network has " +
              std::to_string(fcs.size()) + ")");
  const LayerSpec& first_removed = spec.layers[fcs[fcs.size() - depth]];
  const LayerSpec& new_top = spec.layers[fcs[fcs.size() - depth - 1]];
  SurgeryPlan plan;
  plan.actions.push_back(RemoveTop{first_removed.name});
  if (mode == AblationMode::kRaw) {
    plan.name = new_top.name + "-" + std::to_string(units_of(new_top));
  } else {
    plan.actions.push_back(ReplaceTop{2, 1});
    plan.name = new_top.name + "-2";
    if (depth >= 2) plan.base_lr = 0.0001;
  }
  return plan;
}

SurgeryPlan addition_plan(AdditionMode mode) {
  if (mode == AdditionMode::kKeepTop) return {"fc8-1000", {}, 10.0f, std::nullopt};
  return {"fc9-2", {Append{"fc9", 2, 1}}, 10.0f, std::nullopt};
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"finetune", "fc7-4096", "fc6-4096", "fc7-2",
                                              "fc6-2",    "fc8-1000", "fc9-2"};
  return names;
}

SurgeryPlan preset_plan(const std::string& preset, const NetworkSpec& spec) {
  SurgeryPlan plan;
  if (preset == "finetune") return finetune_plan(2);
  if (preset == "fc7-4096") plan = ablation_plan(spec, 1, AblationMode::kRaw);
  else if (preset == "fc6-4096") plan = ablation_plan(spec, 2, AblationMode::kRaw);
  else if (preset == "fc7-2") plan = ablation_plan(spec, 1, AblationMode::kReplace2);
  else if (preset == "fc6-2") plan = ablation_plan(spec, 2, AblationMode::kReplace2);
  else if (preset == "fc8-1000") plan = addition_plan(AdditionMode::kKeepTop);
  else if (preset == "fc9-2") plan = addition_plan(AdditionMode::kAppend2);
  else fail(ErrorCode::kInvalidArgument, "unknown surgery preset '" + preset + "'");
  // Preset names are fixed regardless of the spec's layer widths.
  plan.name = preset;
  return plan;
}

SurgeryResult apply(const SurgeryPlan& plan, const NetworkSpec& spec, const Checkpoint& checkpoint,
                    std::uint64_t seed, const InitConfig& init) {
  infer_shapes(spec);
  validate_checkpoint(spec, checkpoint);
  NetworkSpec out = spec;
  std::set<std::string> fresh;
  std::vector<std::string> removed;

  for (const SurgeryAction& action : plan.actions) {
    require(out.has_softmax(), ErrorCode::kInvalidArgument, "surgery needs a SOFTMAX at the top");
    if (const auto* rm = std::get_if<RemoveTop>(&action)) {
      const int at = out.find(rm->layer);
      require(at >= 0, ErrorCode::kInvalidArgument, "cannot remove unknown layer '" + rm->layer + "'");
      require(at < static_cast<int>(out.layers.size()) - 1, ErrorCode::kInvalidArgument,
              "cannot remove the SOFTMAX layer '" + rm->layer + "'");
      const LayerSpec top = out.layers.back();
      int keep = at;
      while (keep > 0 && out.layers[keep - 1].kind() == LayerKind::kRelu) --keep;
      for (int i = keep; i < static_cast<int>(out.layers.size()) - 1; ++i) {
        removed.push_back(out.layers[i].name);
        fresh.erase(out.layers[i].name);
      }
      out.layers.resize(keep);
      out.layers.push_back(top);
    } else if (const auto* rep = std::get_if<ReplaceTop>(&action)) {
      const int at = out.top_fc();
      require(at >= 0, ErrorCode::kInvalidArgument, "ReplaceTop needs an FC layer");
      out.layers[at].params = FcParams{rep->units};
      out.layers[at].lr_mult = plan.new_lr_mult;
      fresh.insert(out.layers[at].name);
    } else if (const auto* app = std::get_if<Append>(&action)) {
      require(out.find(app->name) < 0, ErrorCode::kInvalidArgument, "layer '" + app->name + "' already exists");
      require(out.top_fc() >= 0, ErrorCode::kInvalidArgument, "Append needs an FC layer below");
      out.layers.insert(out.layers.end() - 1, LayerSpec{app->name, FcParams{app->units}, plan.new_lr_mult});
      fresh.insert(app->name);
    }
  }
  infer_shapes(out);

  SurgeryResult result{out, {}, {}};
  result.checkpoint.metadata = checkpoint.metadata;
  SurgeryReport& rep = result.report;
  const auto shapes = param_shapes(out);
  for (const auto& l : out.layers) {
    if (!l.has_params()) continue;
    const auto& [wshape, bshape] = shapes.at(l.name);
    if (fresh.count(l.name)) {
      std::uint64_t init_seed = 0;
      for (const auto& a : plan.actions) {
        if (const auto* r = std::get_if<ReplaceTop>(&a)) init_seed = r->init_seed;
        if (const auto* p = std::get_if<Append>(&a); p && p->name == l.name) init_seed = p->init_seed;
      }
      result.checkpoint.entries[l.name] = init_layer(wshape, bshape, init, mix_seed(mix_seed(seed, init_seed), l.name));
      rep.added.push_back(l.name);
    } else {
      result.checkpoint.entries[l.name] = checkpoint.entries.at(l.name);
      rep.retained.push_back(l.name);
    }
  }
  for (const auto& name : removed)
    if (spec.find(name) >= 0 && out.find(name) < 0) rep.removed.push_back(name);
  stamp_spec(result.checkpoint, out);
  result.checkpoint.metadata["surgery"] = plan.name.empty() ? "custom" : plan.name;

  rep.params_before = param_count(spec);
  rep.params_after = param_count(out);
  rep.params_after_recount = param_count(result.checkpoint);
  rep.retained_bit_exact = std::all_of(rep.retained.begin(), rep.retained.end(), [&](const std::string& n) {
    return result.checkpoint.entries.at(n) == checkpoint.entries.at(n);
  });
  validate_checkpoint(out, result.checkpoint);
  return result;
}

}  // namespace convprobe
