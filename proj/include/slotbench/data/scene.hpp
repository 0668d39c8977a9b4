#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace slotbench::data {

enum class Shape : std::uint8_t { kSquare = 0, kEllipse = 1, kHeart = 2 };
inline constexpr int kNumShapes = 3;

std::string_view shape_name(Shape shape);
Shape parse_shape(std::string_view name);

/// Ground-truth factors of one sprite. Positions and scale are fractions of the
/// image; visibility and the two pixel counts are filled in by render_scene.
struct ObjectRecord {
  Shape shape = Shape::kSquare;
  std::array<double, 3> color{0.0, 0.0, 0.0};
  double x = 0.5;
  double y = 0.5;
  double scale = 0.25;
  double orientation = 0.0;
  int z_order = 1;
  double visibility = 1.0;
  std::int64_t visible_pixels = 0;
  std::int64_t unoccluded_pixels = 0;

  bool operator==(const ObjectRecord&) const = default;
};

/// Objects are stored back to front; objects[i] has z_order i + 1 and label i + 1.
struct SceneSpec {
  std::vector<ObjectRecord> objects;
  double background_gray = 0.5;

  int num_objects() const { return static_cast<int>(objects.size()); }
  bool operator==(const SceneSpec&) const = default;
};

struct Resolution {
  int height = 64;
  int width = 64;
  bool operator==(const Resolution&) const = default;
};

struct Range {
  double lo = 0.0;
  double hi = 1.0;
  bool operator==(const Range&) const = default;
};

struct GeneratorConfig {
  int min_objects = 1;
  int max_objects = 6;
  Range scale{0.1, 0.5};
  Range position{0.1, 0.9};
  Range background{0.0, 1.0};
  Resolution resolution{};

  /// Throws ConfigError when a range is empty, inverted or outside its domain.
  void validate() const;
};

/// 8-bit RGB image, row-major HWC.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0) {}

  std::uint8_t& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  float value(int y, int x, int c) const { return static_cast<float>(at(y, x, c)) / 255.0f; }
  bool operator==(const RgbImage&) const = default;
};

/// Per-pixel object label: 0 is background, k is objects[k - 1].
struct LabelMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;

  LabelMap() = default;
  LabelMap(int h, int w) : height(h), width(w), labels(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const LabelMap&) const = default;
};

struct RenderedSample {
  RgbImage image;
  LabelMap label_map;
  SceneSpec metadata;
  bool operator==(const RenderedSample&) const = default;
};

SceneSpec sample_scene(std::mt19937_64& rng, const GeneratorConfig& config);

/// Seeded convenience overload; equal seeds give equal scenes.
SceneSpec sample_scene(std::uint64_t seed, const GeneratorConfig& config);

/// Pixel-centre coverage test shared by rasterisation and label assignment.
bool covers(const ObjectRecord& object, double px, double py, Resolution resolution);

/// Rasterises back to front with 4x4 supersampled colour; labels use the
/// un-antialiased pixel-centre test so they stay a hard partition.
RenderedSample render_scene(const SceneSpec& spec, Resolution resolution);

void to_json(nlohmann::json& j, const ObjectRecord& o);
void from_json(const nlohmann::json& j, ObjectRecord& o);
void to_json(nlohmann::json& j, const SceneSpec& s);
void from_json(const nlohmann::json& j, SceneSpec& s);
void to_json(nlohmann::json& j, const GeneratorConfig& c);

}  // namespace slotbench::data
