#include "slotbench/runner/evaluate.hpp"

#include <algorithm>
#include <cstdio>

#include "slotbench/errors.hpp"
#include "slotbench/eval/metrics.hpp"
#include "slotbench/runner/run_dir.hpp"
#include "slotbench/style/style_transfer.hpp"

namespace fs = std::filesystem;

namespace slotbench::runner {

nlohmann::json EvalMetrics::to_json(bool per_sample) const {
  nlohmann::json j{{"ari", ari}, {"mse", mse}, {"samples", samples}};
  if (per_sample) {
    j["per_sample_ari"] = per_sample_ari;
    j["per_sample_mse"] = per_sample_mse;
  }
  return j;
}

torch::Tensor load_image_batch(const data::Dataset& dataset, std::size_t first, std::size_t count) {
  std::vector<torch::Tensor> images;
  images.reserve(count);
  for (std::size_t i = first; i < first + count; ++i) {
    images.push_back(style::image_to_tensor(data::read_rgb_png(data::image_path(dataset.root(), dataset.split(), i))));
  }
  return torch::stack(images);
}

EvalMetrics evaluate_model(SlotModel& model, const data::Dataset& dataset, std::size_t limit, int batch_size,
                           const DecompositionVisitor& visit) {
  const std::size_t n = limit == 0 ? dataset.size() : std::min(limit, dataset.size());
  if (n == 0) throw InputError("evaluation split is empty");
  const bool was_training = model.is_training();
  model.eval();
  torch::NoGradGuard guard;
  EvalMetrics m;
  for (std::size_t first = 0; first < n; first += batch_size) {
    const std::size_t count = std::min<std::size_t>(batch_size, n - first);
    std::vector<data::RenderedSample> samples;
    std::vector<torch::Tensor> images;
    for (std::size_t i = first; i < first + count; ++i) {
      samples.push_back(dataset.at(i));
      images.push_back(style::image_to_tensor(samples.back().image));
    }
    auto batch = torch::stack(images);
    auto d = model.decompose(batch);
    auto labels = eval::masks_to_labels(d.masks);
    for (std::size_t b = 0; b < count; ++b) {
      const auto pos = static_cast<std::int64_t>(b);
      m.per_sample_ari.push_back(eval::ari_foreground(samples[b].label_map, labels[pos]));
      m.per_sample_mse.push_back(eval::mse(batch[pos], d.reconstruction[pos]));
      if (visit) visit(first + b, samples[b], d, pos);
    }
  }
  m.samples = n;
  for (std::size_t i = 0; i < n; ++i) {
    m.ari += m.per_sample_ari[i];
    m.mse += m.per_sample_mse[i];
  }
  m.ari /= static_cast<double>(n);
  m.mse /= static_cast<double>(n);
  if (was_training) model.train();
  return m;
}

data::RgbImage slot_grid(const SlotDecomposition& d, std::int64_t position, const torch::Tensor& image, GridKind kind) {
  constexpr int kGutter = 2;
  const auto k = d.masks.size(1);
  const int h = static_cast<int>(image.size(1));
  const int w = static_cast<int>(image.size(2));
  std::vector<torch::Tensor> panels{image, d.reconstruction[position]};
  for (std::int64_t s = 0; s < k; ++s) {
    auto app = d.appearance[position][s];
    panels.push_back(kind == GridKind::kMasked ? app * d.masks[position][s].unsqueeze(0) : app);
  }
  const int n = static_cast<int>(panels.size());
  data::RgbImage grid(h, n * w + (n - 1) * kGutter);
  std::fill(grid.pixels.begin(), grid.pixels.end(), 255);
  for (int p = 0; p < n; ++p) {
    const auto tile = style::tensor_to_image(panels[p].detach().clamp(0.0, 1.0));
    const int x0 = p * (w + kGutter);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) grid.at(y, x0 + x, c) = tile.at(y, x, c);
      }
    }
  }
  return grid;
}

std::string eval_initialisation(const std::string& kind) {
  if (kind == "slot_attention") return "fixed-seed slot noise shared by every image";
  return "posterior mean";
}

nlohmann::json evaluate_run(const fs::path& run_dir, const EvaluateOptions& options) {
  LoadedRun run = load_run(run_dir);
  const auto dataset = data::Dataset::open(run.config.dataset_root, options.split);
  const std::size_t limit = options.limit == 0 ? static_cast<std::size_t>(run.config.eval_samples) : options.limit;
  const fs::path dumps = run_dir / "dumps";
  fs::create_directories(dumps);
  int written = 0;
  auto visit = [&](std::size_t index, const data::RenderedSample& sample, const SlotDecomposition& d,
                   std::int64_t pos) {
    if (written >= options.dumps) return;
    const auto image = style::image_to_tensor(sample.image);
    char name[64];
    std::snprintf(name, sizeof(name), "sample_%03zu_masked.png", index);
    data::write_rgb_png(dumps / name, slot_grid(d, pos, image, GridKind::kMasked));
    std::snprintf(name, sizeof(name), "sample_%03zu_appearance.png", index);
    data::write_rgb_png(dumps / name, slot_grid(d, pos, image, GridKind::kAppearance));
    ++written;
  };
  const auto metrics = evaluate_model(*run.model, dataset, limit, run.config.batch_size, visit);
  nlohmann::json report{{"run", run.manifest.value("name", "")},
                        {"seed", run.seed},
                        {"model", run.model->kind()},
                        {"step", run.checkpoint.meta.value("step", 0)},
                        {"split", std::string(data::split_name(options.split))},
                        {"metrics", metrics.to_json(true)},
                        {"eval_initialisation", eval_initialisation(run.model->kind())},
                        {"dumps", {{"count", written}, {"panels_per_sample", 2 + run.model->num_slots()}}},
                        {"architecture", run.model->architecture()},
                        {"config", run.config.raw}};
  write_json_file(run_dir / files::kReport, report);
  return report;
}

}  // namespace slotbench::runner
