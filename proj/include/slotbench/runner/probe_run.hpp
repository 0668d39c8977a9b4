#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "slotbench/data/dataset.hpp"
#include "slotbench/eval/probe.hpp"
#include "slotbench/model.hpp"
#include "slotbench/runner/config.hpp"

namespace slotbench::runner {

/// Frozen representations and mask-matching assignments for the first `limit`
/// samples (0 = all) of a split.
std::vector<eval::ProbeScene> extract_probe_scenes(SlotModel& model, const data::Dataset& dataset, std::size_t limit,
                                                   const eval::TargetSchema& schema, double min_visibility,
                                                   int batch_size);

/// Trains and evaluates every (probe model x matching) combination of
/// `settings` on the run's latest checkpoint; writes probe_report.json.
nlohmann::json probe_run(const std::filesystem::path& run_dir, const ProbeSettings& settings);

}  // namespace slotbench::runner
