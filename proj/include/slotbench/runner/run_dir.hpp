#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include <json.hpp>

#include "slotbench/model.hpp"
#include "slotbench/nn/checkpoint.hpp"
#include "slotbench/runner/config.hpp"

namespace slotbench::runner {

/// Run directory layout:
///   manifest.json          config echo, seed, status, determinism notes
///   loss_trace.jsonl       one line per training step
///   eval.jsonl             periodic evaluation snapshots
///   checkpoints/latest.ckpt, checkpoints/step_%08d.ckpt
///   metrics.json           final evaluation
///   report.json, dumps/    written by evaluate
///   probe_report.json      written by probe
namespace files {
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kLossTrace = "loss_trace.jsonl";
inline constexpr const char* kEvalTrace = "eval.jsonl";
inline constexpr const char* kMetrics = "metrics.json";
inline constexpr const char* kReport = "report.json";
inline constexpr const char* kProbeReport = "probe_report.json";
inline constexpr const char* kCheckpoints = "checkpoints";
inline constexpr const char* kLatest = "latest.ckpt";
}  // namespace files

std::filesystem::path latest_checkpoint_path(const std::filesystem::path& run_dir);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& value);
nlohmann::json read_json_file(const std::filesystem::path& path);

/// A trained (or initialised) model restored from a run directory.
struct LoadedRun {
  nlohmann::json manifest;
  ExperimentConfig config;
  std::uint64_t seed = 0;
  std::shared_ptr<SlotModel> model;
  nn::Checkpoint checkpoint;
};

/// Missing run directory, manifest or checkpoint raises InputError.
LoadedRun load_run(const std::filesystem::path& run_dir);

/// Resolution of the dataset a config points at.
data::Resolution dataset_resolution(const ExperimentConfig& config);

}  // namespace slotbench::runner
