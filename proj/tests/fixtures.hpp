#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

#include <json.hpp>

#include "slotbench/data/dataset.hpp"
#include "slotbench/style/style_transfer.hpp"

namespace fixtures {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("slotbench_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline slotbench::data::GeneratorConfig small_generator(int size = 32, int max_objects = 4) {
  slotbench::data::GeneratorConfig g;
  g.min_objects = 1;
  g.max_objects = max_objects;
  g.resolution = {size, size};
  return g;
}

/// Raw sprites followed by a short stylisation pass, as the pipeline does.
inline std::filesystem::path styled_dataset(const std::filesystem::path& dir, slotbench::data::SplitSizes sizes,
                                            std::uint64_t seed, int size = 32, int iterations = 5,
                                            int max_objects = 4) {
  const auto raw = dir / "raw";
  const auto styled = dir / "styled";
  slotbench::data::generate_dataset(raw, small_generator(size, max_objects), sizes, seed);
  slotbench::style::StyleConfig cfg;
  cfg.style_image = slotbench::style::procedural_style_image(size, size, seed);
  cfg.iterations = iterations;
  slotbench::style::FeatureExtractor extractor(seed);
  slotbench::style::stylize_dataset(raw, styled, cfg, extractor);
  return styled;
}

/// Small Slot Attention experiment for `height` x `height` images.
inline nlohmann::json tiny_sa_config(const std::filesystem::path& root, int steps, int slot_size = 16) {
  return {{"experiment",
           {{"name", "tiny-sa"},
            {"seeds", {0}},
            {"max_steps", steps},
            {"batch_size", 4},
            {"eval_every", steps},
            {"checkpoint_every", steps},
            {"eval_samples", 8}}},
          {"dataset", {{"root", root.string()}}},
          {"model",
           {{"kind", "slot_attention"},
            {"num_slots", 4},
            {"slot_size", slot_size},
            {"iterations", 2},
            {"mlp_hidden", 32},
            {"conv", {{"channels", 16}, {"layers", 2}, {"kernel", 3}}}}},
          {"optimizer", {{"kind", "adam"}, {"learning_rate", 4e-4}, {"warmup_steps", 5}, {"decay_steps", 1000}}},
          {"probe", {{"epochs", 2}, {"train_limit", 8}, {"eval_limit", 8}}}};
}

/// Small MONet experiment for 32 x 32 images.
inline nlohmann::json tiny_monet_config(const std::filesystem::path& root, int steps) {
  return {{"experiment",
           {{"name", "tiny-monet"},
            {"seeds", {0}},
            {"max_steps", steps},
            {"batch_size", 4},
            {"eval_every", steps},
            {"checkpoint_every", steps},
            {"eval_samples", 8}}},
          {"dataset", {{"root", root.string()}}},
          {"model",
           {{"kind", "monet"},
            {"num_slots", 4},
            {"latent_size", 8},
            {"mlp_width", 32},
            {"unet", {{"depth", 3}, {"channels", {8, 16, 16}}, {"num_skip_connections", 3}, {"bottleneck_width", 32}}},
            {"encoder_channels", {8, 8, 16}},
            {"decoder_channels", 8},
            {"decoder_layers", 2}}},
          {"optimizer", {{"kind", "rmsprop"}, {"learning_rate", 1e-4}, {"warmup_steps", 0}, {"decay_rate", 1.0}}},
          {"probe", {{"epochs", 2}, {"train_limit", 8}, {"eval_limit", 8}}}};
}

}  // namespace fixtures
