#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace slotbench::runner {

struct ProbeScore {
  std::string metric;  // accuracy | r2
  double value = 0.0;
  double baseline = 0.0;
};

/// What the report needs from one run directory.
struct RunSummary {
  std::filesystem::path dir;
  std::string name;  // experiment name; seeds of one configuration share it
  std::string kind;  // monet | slot_attention
  std::uint64_t seed = 0;
  std::string status;
  std::int64_t steps = 0;
  int latent_size = 0;
  std::optional<double> ari;
  std::optional<double> mse;
  // "<probe>/<matching>" -> feature -> score
  std::map<std::string, std::map<std::string, ProbeScore>> probes;

  static RunSummary load(const std::filesystem::path& run_dir);
};

/// Run directories found under `inputs`: a run directory itself, a sweep root
/// (its runs/ subdirectory) or any directory whose children are runs.
std::vector<RunSummary> collect_runs(const std::vector<std::filesystem::path>& inputs);

enum class Statistic { kMedian, kMean };

struct Interval {
  double center = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

inline constexpr std::uint64_t kCiSeed = 20240229;

/// Percentile bootstrap over `values`. Identical values give a zero-width interval.
Interval bootstrap_ci(const std::vector<double>& values, Statistic statistic, int resamples = 10000,
                      std::uint64_t seed = kCiSeed, double level = 0.95);

double median(std::vector<double> values);

struct ReportResult {
  nlohmann::json summary;
  std::vector<std::string> warnings;
  std::vector<std::filesystem::path> artifacts;
};

/// Bar charts (median over seeds, 95% CI), correlation heatmaps, latent-size
/// lines and scatter plots plus report.json and correlations.json in `out_dir`.
/// Parts that lack data are skipped with a warning.
ReportResult write_report(const std::vector<RunSummary>& runs, const std::filesystem::path& out_dir);

}  // namespace slotbench::runner
