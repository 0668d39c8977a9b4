#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "slotbench/data/dataset.hpp"
#include "slotbench/eval/probe.hpp"
#include "slotbench/model.hpp"
#include "slotbench/monet/monet.hpp"
#include "slotbench/slot_attention/slot_attention.hpp"
#include "slotbench/style/style_transfer.hpp"

namespace slotbench::runner {

/// YAML file to JSON. A top-level `base: <file>` key names a parent config
/// (relative to this file) that is loaded first and deep-merged underneath.
nlohmann::json load_config_file(const std::filesystem::path& path);

/// Parses a YAML document held in a string.
nlohmann::json parse_yaml(const std::string& text);

/// Objects merge key by key; anything else in `overlay` replaces `base`.
void deep_merge(nlohmann::json& base, const nlohmann::json& overlay);

/// "a.b.c=value" with value parsed as YAML.
void apply_override(nlohmann::json& config, const std::string& assignment);
void set_path(nlohmann::json& config, const std::string& dotted_path, const nlohmann::json& value);
const nlohmann::json* find_path(const nlohmann::json& config, const std::string& dotted_path);

/// Merges `profiles.<name>` over the config and drops the `profiles` table.
/// "desk" is the default and may be absent; other names must exist.
void apply_profile(nlohmann::json& config, const std::string& profile);

struct OptimizerConfig {
  std::string kind = "adam";  // adam | rmsprop
  double learning_rate = 4e-4;
  int warmup_steps = 10000;
  double decay_rate = 0.5;
  int decay_steps = 100000;
  double clip_norm = 1.0;  // 0 disables clipping

  /// Learning rate at `step` (0-based): linear warmup then exponential decay.
  double rate_at(std::int64_t step) const;
};

struct GuardConfig {
  double spike_factor = 100.0;
  int window = 100;
  int min_history = 20;
};

struct ProbeSettings {
  std::vector<eval::ProbeModel> models{eval::ProbeModel::kLinear, eval::ProbeModel::kMlp256};
  std::vector<eval::MatchMode> matchings{eval::MatchMode::kLoss, eval::MatchMode::kMask};
  eval::ProbeConfig base;
  data::Split train_split = data::Split::kVal;
  data::Split eval_split = data::Split::kTest;
  std::size_t train_limit = 0;  // 0 = whole split
  std::size_t eval_limit = 0;
};

struct ExperimentConfig {
  std::string name = "run";
  std::vector<std::uint64_t> seeds{0};
  int max_steps = 20000;
  int batch_size = 16;
  int eval_every = 1000;
  int checkpoint_every = 1000;
  int eval_samples = 256;
  int log_every = 1;
  std::filesystem::path dataset_root;
  data::Split train_split = data::Split::kTrain;
  data::Split eval_split = data::Split::kTest;
  std::size_t train_limit = 0;  // 0 = whole split
  nlohmann::json model;
  OptimizerConfig optimizer;
  GuardConfig guard;
  ProbeSettings probe;
  nlohmann::json raw;  // the merged config this was parsed from

  /// Seeds non-empty; max_steps >= eval_every unless max_steps = 0 (evaluation only).
  void validate() const;
  static ExperimentConfig from_json(const nlohmann::json& config);
};

monet::MonetConfig monet_config_from_json(const nlohmann::json& model, int height, int width);
slot_attention::SlotAttentionConfig slot_attention_config_from_json(const nlohmann::json& model, int height, int width);

/// Builds the model named by `model.kind` for images of the given size.
std::shared_ptr<SlotModel> build_model(const nlohmann::json& model, int height, int width);

/// `dataset:` section of a data preset: name, splits{train, val, test} and
/// generator{min_objects, max_objects, scale, position, background, resolution}.
struct DatasetPreset {
  std::string name = "sprites";
  data::SplitSizes sizes{5000, 1000, 1000};
  data::GeneratorConfig generator;
};
DatasetPreset dataset_preset_from_json(const nlohmann::json& config);

/// `style:` section of a style preset. The style image itself comes from the
/// caller, or from `procedural_style{size, seed}` when none is given.
struct StylePreset {
  style::StyleConfig config;
  int procedural_size = 64;
  std::uint64_t procedural_seed = 0;
};
StylePreset style_preset_from_json(const nlohmann::json& config);

}  // namespace slotbench::runner
