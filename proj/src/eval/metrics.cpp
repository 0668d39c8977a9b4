#include "slotbench/eval/metrics.hpp"

#include <map>
#include <utility>
#include <vector>

#include "slotbench/errors.hpp"

namespace slotbench::eval {

torch::Tensor masks_to_labels(const torch::Tensor& masks) {
  if (masks.dim() != 3 && masks.dim() != 4) throw ShapeError("masks_to_labels expects [K, H, W] or [B, K, H, W]");
  const int64_t axis = masks.dim() - 3;
  // torch::argmax does not document its tie rule, so scan slots explicitly.
  auto best = masks.select(axis, 0).clone();
  auto labels = torch::zeros_like(best, torch::kInt64);
  for (int64_t k = 1; k < masks.size(axis); ++k) {
    auto m = masks.select(axis, k);
    auto better = m > best;
    best = torch::where(better, m, best);
    labels.masked_fill_(better, k);
  }
  return labels;
}

namespace {

double choose2(double n) { return n * (n - 1.0) / 2.0; }

}  // namespace

double ari_foreground(std::span<const std::int64_t> truth, std::span<const std::int64_t> pred) {
  if (truth.size() != pred.size()) {
    throw ShapeError("ARI: label maps differ in size (" + std::to_string(truth.size()) + " vs " +
                     std::to_string(pred.size()) + ")");
  }
  std::map<std::pair<std::int64_t, std::int64_t>, double> table;
  std::map<std::int64_t, double> rows;
  std::map<std::int64_t, double> cols;
  double n = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] <= 0) continue;
    table[{truth[i], pred[i]}] += 1;
    rows[truth[i]] += 1;
    cols[pred[i]] += 1;
    n += 1;
  }
  if (n < 2) return 0.0;
  // Identical partitions: every row maps to a single column and vice versa.
  if (table.size() == rows.size() && table.size() == cols.size()) return 1.0;

  double index = 0, sum_rows = 0, sum_cols = 0;
  for (const auto& [key, count] : table) index += choose2(count);
  for (const auto& [key, count] : rows) sum_rows += choose2(count);
  for (const auto& [key, count] : cols) sum_cols += choose2(count);
  const double expected = sum_rows * sum_cols / choose2(n);
  const double max_index = 0.5 * (sum_rows + sum_cols);
  const double denominator = max_index - expected;
  if (denominator == 0.0) return 0.0;
  return (index - expected) / denominator;
}

double ari_foreground(const torch::Tensor& truth, const torch::Tensor& pred) {
  if (truth.sizes() != pred.sizes()) {
    throw ShapeError("ARI: shapes " + c10::str(truth.sizes()) + " and " + c10::str(pred.sizes()) + " differ");
  }
  auto t = truth.to(torch::kInt64).contiguous();
  auto p = pred.to(torch::kInt64).contiguous();
  return ari_foreground(std::span<const std::int64_t>(t.data_ptr<std::int64_t>(), t.numel()),
                        std::span<const std::int64_t>(p.data_ptr<std::int64_t>(), p.numel()));
}

double ari_foreground(const data::LabelMap& truth, const torch::Tensor& pred) {
  return ari_foreground(label_tensor(truth), pred);
}

double mse(const torch::Tensor& image, const torch::Tensor& reconstruction) {
  if (image.sizes() != reconstruction.sizes()) {
    throw ShapeError("MSE: shapes " + c10::str(image.sizes()) + " and " + c10::str(reconstruction.sizes()) +
                     " differ");
  }
  return (image.to(torch::kFloat64) - reconstruction.to(torch::kFloat64)).pow(2).mean().item<double>();
}

torch::Tensor label_tensor(const data::LabelMap& labels) {
  auto t = torch::empty({labels.height, labels.width}, torch::kInt64);
  auto* out = t.data_ptr<std::int64_t>();
  for (std::size_t i = 0; i < labels.labels.size(); ++i) out[i] = labels.labels[i];
  return t;
}

}  // namespace slotbench::eval
