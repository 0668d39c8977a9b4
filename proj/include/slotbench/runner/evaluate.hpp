#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "slotbench/data/dataset.hpp"
#include "slotbench/model.hpp"

namespace slotbench::runner {

struct EvalMetrics {
  double ari = 0.0;  // mean foreground ARI
  double mse = 0.0;  // mean per-image MSE
  std::size_t samples = 0;
  std::vector<double> per_sample_ari;
  std::vector<double> per_sample_mse;

  nlohmann::json to_json(bool per_sample = false) const;
};

/// [B, 3, H, W] float images in [0, 1] for dataset indices [first, first + count).
torch::Tensor load_image_batch(const data::Dataset& dataset, std::size_t first, std::size_t count);

using DecompositionVisitor =
    std::function<void(std::size_t index, const data::RenderedSample& sample, const SlotDecomposition& batch,
                       std::int64_t position)>;

/// Foreground ARI and MSE over the first `limit` samples (0 = all) in eval mode.
/// The model's train/eval mode is restored afterwards.
EvalMetrics evaluate_model(SlotModel& model, const data::Dataset& dataset, std::size_t limit, int batch_size,
                           const DecompositionVisitor& visit = {});

enum class GridKind {
  kMasked,      // input, reconstruction, mask_k * appearance_k
  kAppearance,  // input, reconstruction, appearance_k before masking
};

/// One row of 2 + K panels separated by 2-pixel white gutters.
data::RgbImage slot_grid(const SlotDecomposition& decomposition, std::int64_t position, const torch::Tensor& image,
                         GridKind kind);

/// How a model of `kind` initialises its latents at evaluation, for reports.
std::string eval_initialisation(const std::string& kind);

struct EvaluateOptions {
  data::Split split = data::Split::kTest;
  std::size_t limit = 0;  // 0 = experiment.eval_samples
  int dumps = 4;          // samples rendered as qualitative grids
};

/// Loads the run's latest checkpoint, evaluates it and writes report.json plus
/// dumps/sample_%03d_{masked,appearance}.png. Returns the report.
nlohmann::json evaluate_run(const std::filesystem::path& run_dir, const EvaluateOptions& options);

}  // namespace slotbench::runner
