#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "slotbench/data/dataset.hpp"

namespace slotbench::style {

/// Gram statistics of a C x H x W activation: F F^T / (C H W), F the C x HW flattening.
torch::Tensor gram_matrix(const torch::Tensor& features);

/// Five-stage convolutional pyramid exposing "conv1" ... "conv5". Each stage is
/// 3x3 conv + ReLU; stages 2-5 start with a 2x2 average pool.
class FeatureExtractorImpl : public torch::nn::Module {
 public:
  static constexpr std::array<int, 5> kWidths{16, 32, 64, 128, 128};

  /// Random weights drawn from a private generator seeded with `seed`.
  explicit FeatureExtractorImpl(std::uint64_t seed = 0);

  /// Named activations for a batch [B, 3, H, W] with values in [0, 1].
  std::map<std::string, torch::Tensor> forward(const torch::Tensor& images);

  /// Loads weights written by save_weights (a pretrained pyramid of the same shape).
  void load_weights(const std::filesystem::path& path);
  void save_weights(const std::filesystem::path& path);

  std::string weight_source() const { return weight_source_; }

 private:
  std::vector<torch::nn::Conv2d> convs_;
  std::string weight_source_;
};
TORCH_MODULE(FeatureExtractor);

struct StyleConfig {
  data::RgbImage style_image;
  double content_weight = 1.0;
  double style_weight = 1e4;
  int iterations = 300;
  std::vector<std::string> content_layers{"conv4"};
  std::vector<std::string> style_layers{"conv1", "conv2", "conv3", "conv4", "conv5"};
  /// Largest per-pixel change of one step; the gradient is max-normalised.
  double step_size = 0.02;
  /// Backtracking safeguard: halve the step while the loss would increase.
  int max_halvings = 10;

  void validate() const;
  nlohmann::json to_json() const;
};

struct StyleResult {
  torch::Tensor image;  // [3, H, W] in [0, 1]
  /// loss_trace[0] is the initial loss, loss_trace[i] the loss after step i.
  std::vector<double> loss_trace;
  double initial_style_loss = 0.0;
  double initial_content_loss = 0.0;
};

/// [3, H, W] float tensor in [0, 1] from an 8-bit image, and back (rounded).
torch::Tensor image_to_tensor(const data::RgbImage& image);
data::RgbImage tensor_to_image(const torch::Tensor& chw);

/// Pixel-space gradient descent from the content image on
/// content_weight * L_content + style_weight * L_style. A step is only taken when
/// it does not increase the loss (up to max_halvings halvings), so the trace is
/// non-increasing. Throws OptimizationError on a non-finite loss.
StyleResult stylize_image(const torch::Tensor& content, const StyleConfig& config, FeatureExtractor& extractor);

/// Stylises the whole image, then keeps the styled pixels only where label > 0.
/// Labels and metadata are copied untouched.
data::RenderedSample stylize_sample(const data::RenderedSample& sample, const StyleConfig& config,
                                    FeatureExtractor& extractor);

struct StylizeOptions {
  std::uint64_t seed = 0;
  /// Stop after stylising this many new samples (simulates an interruption).
  std::optional<std::size_t> max_new_samples;
  std::function<void(data::Split, std::size_t)> on_sample;
};

struct StylizeOutcome {
  std::size_t stylized = 0;
  std::size_t resumed = 0;
  bool complete = false;
};

/// Stylises every sample of every split of root_in into root_out. Each finished
/// image is renamed into place atomically and acts as its own checkpoint, so a
/// rerun skips finished samples. Label PNGs and metadata.jsonl are copied byte for byte.
StylizeOutcome stylize_dataset(const std::filesystem::path& root_in, const std::filesystem::path& root_out,
                               const StyleConfig& config, FeatureExtractor& extractor,
                               const StylizeOptions& options = {});

/// FNV-1a hex digest over the style image dimensions and bytes.
std::string style_hash(const data::RgbImage& image);

/// Deterministic textured style image (oriented strokes and swirls) for tests
/// and offline runs where no style asset is available.
data::RgbImage procedural_style_image(int height, int width, std::uint64_t seed);

}  // namespace slotbench::style
