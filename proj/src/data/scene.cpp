#include "slotbench/data/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "slotbench/errors.hpp"

namespace slotbench::data {

std::string_view shape_name(Shape shape) {
  switch (shape) {
    case Shape::kSquare:
      return "square";
    case Shape::kEllipse:
      return "ellipse";
    case Shape::kHeart:
      return "heart";
  }
  return "unknown";
}

Shape parse_shape(std::string_view name) {
  if (name == "square") return Shape::kSquare;
  if (name == "ellipse") return Shape::kEllipse;
  if (name == "heart") return Shape::kHeart;
  throw FormatError("unknown shape '" + std::string(name) + "'");
}

namespace {

void check_range(const Range& r, double lo, double hi, const char* name) {
  if (!(r.lo <= r.hi) || r.lo < lo || r.hi > hi) {
    throw ConfigError(std::string("generator range '") + name + "' must satisfy " + std::to_string(lo) +
                      " <= lo <= hi <= " + std::to_string(hi));
  }
}

}  // namespace

void GeneratorConfig::validate() const {
  if (min_objects < 1 || max_objects < min_objects || max_objects > 255) {
    throw ConfigError("object count range must satisfy 1 <= min_objects <= max_objects <= 255");
  }
  check_range(scale, 0.1, 0.5, "scale");
  check_range(position, 0.0, 1.0, "position");
  check_range(background, 0.0, 1.0, "background");
  if (resolution.height < 16 || resolution.width < 16) {
    throw ConfigError("resolution must be at least 16x16");
  }
}

SceneSpec sample_scene(std::mt19937_64& rng, const GeneratorConfig& config) {
  config.validate();
  auto uniform = [&rng](Range r) { return std::uniform_real_distribution<double>(r.lo, r.hi)(rng); };

  SceneSpec spec;
  const int n = std::uniform_int_distribution<int>(config.min_objects, config.max_objects)(rng);
  spec.background_gray = uniform(config.background);
  spec.objects.reserve(n);
  for (int i = 0; i < n; ++i) {
    ObjectRecord o;
    o.shape = static_cast<Shape>(std::uniform_int_distribution<int>(0, kNumShapes - 1)(rng));
    for (auto& c : o.color) c = uniform({0.0, 1.0});
    o.x = uniform(config.position);
    o.y = uniform(config.position);
    o.scale = uniform(config.scale);
    o.orientation = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
    o.z_order = i + 1;
    spec.objects.push_back(o);
  }
  return spec;
}

SceneSpec sample_scene(std::uint64_t seed, const GeneratorConfig& config) {
  std::mt19937_64 rng(seed);
  return sample_scene(rng, config);
}

bool covers(const ObjectRecord& object, double px, double py, Resolution resolution) {
  const double half = object.scale * std::min(resolution.height, resolution.width) / 2.0;
  const double dx = px - object.x * resolution.width;
  const double dy = py - object.y * resolution.height;
  const double c = std::cos(object.orientation);
  const double s = std::sin(object.orientation);
  // Rotate into the object frame and normalise to the [-1, 1] bounding box.
  const double u = (c * dx + s * dy) / half;
  const double v = (-s * dx + c * dy) / half;
  switch (object.shape) {
    case Shape::kSquare:
      return std::abs(u) <= 1.0 && std::abs(v) <= 1.0;
    case Shape::kEllipse:
      return u * u + 4.0 * v * v <= 1.0;
    case Shape::kHeart: {
      // (X^2 + Y^2 - 1)^3 - X^2 Y^3 <= 0 spans X in [-1.139, 1.139], Y in [-1, 1.236].
      const double hx = u * 1.139;
      const double hy = 0.118 - v * 1.118;
      const double a = hx * hx + hy * hy - 1.0;
      return a * a * a - hx * hx * hy * hy * hy <= 0.0;
    }
  }
  return false;
}

namespace {

constexpr int kSuper = 4;

struct PixelBox {
  int x0, x1, y0, y1;
};

PixelBox bounding_box(const ObjectRecord& o, Resolution res) {
  // The heart reaches slightly beyond its unit box, so pad by 1.5 on the diagonal.
  const double half = o.scale * std::min(res.height, res.width) / 2.0 * 1.5 * std::numbers::sqrt2;
  const double cx = o.x * res.width;
  const double cy = o.y * res.height;
  auto clampi = [](double v, int hi) { return std::clamp(static_cast<int>(std::floor(v)), 0, hi); };
  return {clampi(cx - half, res.width - 1), clampi(cx + half, res.width - 1), clampi(cy - half, res.height - 1),
          clampi(cy + half, res.height - 1)};
}

}  // namespace

RenderedSample render_scene(const SceneSpec& spec, Resolution resolution) {
  if (resolution.height < 16 || resolution.width < 16) {
    throw ConfigError("render resolution must be at least 16x16");
  }
  const int h = resolution.height;
  const int w = resolution.width;
  std::vector<double> canvas(static_cast<std::size_t>(h) * w * 3, spec.background_gray);
  LabelMap labels(h, w);
  RenderedSample out;
  out.metadata = spec;

  for (std::size_t k = 0; k < spec.objects.size(); ++k) {
    const ObjectRecord& o = spec.objects[k];
    const auto label = static_cast<std::uint8_t>(k + 1);
    const PixelBox box = bounding_box(o, resolution);
    std::int64_t unoccluded = 0;
    for (int y = box.y0; y <= box.y1; ++y) {
      for (int x = box.x0; x <= box.x1; ++x) {
        if (covers(o, x + 0.5, y + 0.5, resolution)) {
          labels.at(y, x) = label;
          ++unoccluded;
        }
        int hits = 0;
        for (int sy = 0; sy < kSuper; ++sy) {
          for (int sx = 0; sx < kSuper; ++sx) {
            hits += covers(o, x + (sx + 0.5) / kSuper, y + (sy + 0.5) / kSuper, resolution) ? 1 : 0;
          }
        }
        if (hits == 0) continue;
        const double coverage = static_cast<double>(hits) / (kSuper * kSuper);
        double* px = &canvas[(static_cast<std::size_t>(y) * w + x) * 3];
        for (int c = 0; c < 3; ++c) px[c] = coverage * o.color[c] + (1.0 - coverage) * px[c];
      }
    }
    out.metadata.objects[k].z_order = static_cast<int>(k + 1);
    out.metadata.objects[k].unoccluded_pixels = unoccluded;
  }

  std::vector<std::int64_t> visible(spec.objects.size() + 1, 0);
  for (auto l : labels.labels) ++visible[l];
  for (std::size_t k = 0; k < spec.objects.size(); ++k) {
    auto& o = out.metadata.objects[k];
    o.visible_pixels = visible[k + 1];
    o.visibility = o.unoccluded_pixels > 0
                       ? static_cast<double>(o.visible_pixels) / static_cast<double>(o.unoccluded_pixels)
                       : 0.0;
  }

  out.image = RgbImage(h, w);
  for (std::size_t i = 0; i < canvas.size(); ++i) {
    out.image.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(canvas[i], 0.0, 1.0) * 255.0));
  }
  out.label_map = std::move(labels);
  return out;
}

void to_json(nlohmann::json& j, const ObjectRecord& o) {
  j = nlohmann::json{{"shape", shape_name(o.shape)},
                     {"color", o.color},
                     {"x", o.x},
                     {"y", o.y},
                     {"scale", o.scale},
                     {"orientation", o.orientation},
                     {"z_order", o.z_order},
                     {"visibility", o.visibility},
                     {"visible_pixels", o.visible_pixels},
                     {"unoccluded_pixels", o.unoccluded_pixels}};
}

void from_json(const nlohmann::json& j, ObjectRecord& o) {
  o.shape = parse_shape(j.at("shape").get<std::string>());
  o.color = j.at("color").get<std::array<double, 3>>();
  o.x = j.at("x").get<double>();
  o.y = j.at("y").get<double>();
  o.scale = j.at("scale").get<double>();
  o.orientation = j.at("orientation").get<double>();
  o.z_order = j.at("z_order").get<int>();
  o.visibility = j.at("visibility").get<double>();
  o.visible_pixels = j.at("visible_pixels").get<std::int64_t>();
  o.unoccluded_pixels = j.at("unoccluded_pixels").get<std::int64_t>();
}

void to_json(nlohmann::json& j, const SceneSpec& s) {
  j = nlohmann::json{{"background_gray", s.background_gray}, {"objects", s.objects}};
}

void from_json(const nlohmann::json& j, SceneSpec& s) {
  s.background_gray = j.at("background_gray").get<double>();
  s.objects = j.at("objects").get<std::vector<ObjectRecord>>();
}

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = nlohmann::json{{"min_objects", c.min_objects},
                     {"max_objects", c.max_objects},
                     {"scale", {c.scale.lo, c.scale.hi}},
                     {"position", {c.position.lo, c.position.hi}},
                     {"background", {c.background.lo, c.background.hi}},
                     {"resolution", {c.resolution.height, c.resolution.width}}};
}

}  // namespace slotbench::data
