#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "../fixtures.hpp"
#include "slotbench/data/dataset.hpp"
#include "slotbench/errors.hpp"

using namespace slotbench;
using namespace slotbench::data;

TEST_CASE("sample_scene is a pure function of the seed") {
  const auto cfg = fixtures::small_generator(32, 6);
  CHECK(sample_scene(42, cfg) == sample_scene(42, cfg));
  CHECK_FALSE(sample_scene(42, cfg) == sample_scene(43, cfg));
}

TEST_CASE("sampled factors stay inside the configured ranges") {
  GeneratorConfig cfg = fixtures::small_generator(32, 6);
  cfg.min_objects = 2;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto s = sample_scene(seed, cfg);
    REQUIRE(s.num_objects() >= 2);
    REQUIRE(s.num_objects() <= 6);
    CHECK(s.background_gray >= cfg.background.lo);
    CHECK(s.background_gray <= cfg.background.hi);
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
      const auto& o = s.objects[i];
      CHECK(o.x >= cfg.position.lo);
      CHECK(o.x <= cfg.position.hi);
      CHECK(o.y >= cfg.position.lo);
      CHECK(o.y <= cfg.position.hi);
      CHECK(o.scale >= cfg.scale.lo);
      CHECK(o.scale <= cfg.scale.hi);
      CHECK(o.z_order == static_cast<int>(i) + 1);
    }
  }
}

TEST_CASE("render_scene labels agree with visibility bookkeeping") {
  const auto cfg = fixtures::small_generator(32, 6);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto r = render_scene(sample_scene(seed, cfg), cfg.resolution);
    REQUIRE(r.image.height == 32);
    REQUIRE(r.label_map.width == 32);
    std::vector<std::int64_t> counts(r.metadata.objects.size() + 1, 0);
    for (auto l : r.label_map.labels) {
      REQUIRE(l <= r.metadata.objects.size());
      ++counts[l];
    }
    for (std::size_t i = 0; i < r.metadata.objects.size(); ++i) {
      const auto& o = r.metadata.objects[i];
      CHECK(o.visible_pixels == counts[i + 1]);
      CHECK(o.visible_pixels <= o.unoccluded_pixels);
      if (o.unoccluded_pixels > 0) {
        CHECK(o.visibility == doctest::Approx(static_cast<double>(o.visible_pixels) / o.unoccluded_pixels));
      }
    }
  }
}

TEST_CASE("the topmost object owns the pixel under its centre") {
  SceneSpec s;
  ObjectRecord a;
  a.scale = 0.5;
  ObjectRecord b = a;
  b.shape = Shape::kEllipse;
  b.scale = 0.2;
  b.z_order = 2;
  s.objects = {a, b};
  const auto r = render_scene(s, {32, 32});
  CHECK(r.label_map.at(16, 16) == 2);
  CHECK(r.label_map.at(0, 0) == 0);
}

TEST_CASE("invalid generator ranges are rejected") {
  GeneratorConfig cfg;
  cfg.scale = {0.5, 0.1};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = GeneratorConfig{};
  cfg.min_objects = 4;
  cfg.max_objects = 2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("dataset round trip through the on-disk layout") {
  fixtures::TempDir tmp("data");
  const SplitSizes sizes{5, 3, 2};
  const auto cfg = fixtures::small_generator(24, 3);
  generate_dataset(tmp / "a", cfg, sizes, 7);
  generate_dataset(tmp / "b", cfg, sizes, 7);

  const auto manifest = read_manifest(tmp / "a");
  CHECK(manifest.splits == sizes);
  CHECK(manifest.resolution == Resolution{24, 24});
  CHECK((manifest.features == sprite_feature_schema(cfg)));

  for (auto split : kAllSplits) {
    const auto ds = Dataset::open(tmp / "a", split);
    REQUIRE(ds.size() == sizes.of(split));
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto expected = render_scene(sample_scene(sample_seed(7, split, i), cfg), cfg.resolution);
      const auto got = ds.at(i);
      CHECK(got.image == expected.image);
      CHECK(got.label_map == expected.label_map);
      CHECK(got.metadata == expected.metadata);
      CHECK(read_rgb_png(image_path(tmp / "b", split, i)) == got.image);
    }
  }
}

TEST_CASE("per-sample seeds differ across splits and indices") {
  std::set<std::uint64_t> seen;
  for (auto split : kAllSplits) {
    for (std::size_t i = 0; i < 100; ++i) seen.insert(sample_seed(3, split, i));
  }
  CHECK(seen.size() == 300);
}

TEST_CASE("opening an incomplete dataset fails") {
  fixtures::TempDir tmp("data_missing");
  CHECK_THROWS(Dataset::open(tmp.path(), Split::kTrain));
}

TEST_CASE("split names round trip") {
  for (auto s : kAllSplits) CHECK(parse_split(split_name(s)) == s);
  CHECK_THROWS(parse_split("bogus"));
  for (int k = 0; k < kNumShapes; ++k) CHECK(parse_shape(shape_name(static_cast<Shape>(k))) == static_cast<Shape>(k));
}
