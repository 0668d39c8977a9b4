#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace slotbench::runner {

struct SweepAxis {
  std::string path;  // dotted config path
  std::vector<nlohmann::json> values;
};

/// One base config with its own axes. Axes listed together in `paired` vary
/// jointly (zipped); every other axis, and every paired group, spans a full grid.
struct SweepVariant {
  std::string label;
  nlohmann::json base;
  std::vector<SweepAxis> axes;
  std::vector<std::vector<std::string>> paired;
};

struct SweepSpec {
  std::string name;
  std::string mode = "full-grid";  // full-grid | paired (all axes of a variant zipped)
  std::vector<std::uint64_t> seeds{0};
  std::vector<std::string> stages{"train"};  // subset of train, evaluate, probe
  std::vector<SweepVariant> variants;

  /// Paired axes must have equal lengths; every axis path must be unique per variant.
  void validate() const;
  /// Reads `sweep:` from a preset; variant `base` files resolve against `base_dir`.
  static SweepSpec from_json(const nlohmann::json& preset, const std::filesystem::path& base_dir);
};

struct RunPlan {
  std::string id;
  std::string variant;
  std::uint64_t seed = 0;
  nlohmann::json overrides;  // path -> value
  nlohmann::json config;     // merged config for this run
};

/// Every run of the sweep in a stable order: variants, then combinations, then seeds.
std::vector<RunPlan> expand(const SweepSpec& spec);

struct SweepOptions {
  int parallelism = 1;
  bool plan_only = false;
  std::filesystem::path executable;  // CLI used for each run; default /proc/self/exe
  std::string profile = "desk";
  bool deterministic = false;
  std::vector<std::string> overrides;  // applied to every run after the axes
};

/// Writes plan.json, runs each stage as a separate process (up to `parallelism`
/// at once), records failures without stopping, and writes aggregate.{json,csv}.
nlohmann::json run_sweep(const SweepSpec& spec, const std::filesystem::path& out_dir, const SweepOptions& options);

/// Aggregate table over run directories under `out_dir/runs`.
nlohmann::json aggregate_sweep(const std::filesystem::path& out_dir, const std::vector<RunPlan>& plan);

}  // namespace slotbench::runner
