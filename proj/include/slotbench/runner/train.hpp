#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "slotbench/runner/config.hpp"
#include "slotbench/runner/evaluate.hpp"

namespace slotbench::runner {

struct StepRecord {
  std::int64_t step = 0;  // number of updates applied after this record
  double loss = 0.0;
  std::vector<std::pair<std::string, double>> terms;
  double learning_rate = 0.0;
  double grad_norm = 0.0;

  nlohmann::json to_json() const;
};

struct TrainOptions {
  bool resume = true;
  bool deterministic = false;
  /// Stop after this many updates in this invocation (simulated interruption); -1 = run to max_steps.
  std::int64_t stop_after = -1;
  std::function<void(const StepRecord&)> on_step;
};

struct TrainResult {
  std::filesystem::path run_dir;
  std::string status;  // completed | interrupted | unstable
  std::int64_t steps = 0;
  EvalMetrics metrics;
  std::string message;
};

/// Batch indices for `step`: a fixed permutation per epoch derived from the seed,
/// so the data order is a pure function of (seed, step) and resumes exactly.
std::vector<std::size_t> batch_indices(std::uint64_t seed, std::int64_t step, std::size_t dataset_size,
                                       int batch_size);

/// Trains one seed into `run_dir`, resuming from checkpoints/latest.ckpt when present.
/// A loss spike above guard.spike_factor x the trailing median, or a non-finite loss,
/// stops the run with status "unstable" and keeps every artifact.
TrainResult train(const ExperimentConfig& config, std::uint64_t seed, const std::filesystem::path& run_dir,
                  const TrainOptions& options = {});

/// Median of the trailing window; used by the spike guard.
double trailing_median(std::vector<double> window);

}  // namespace slotbench::runner
