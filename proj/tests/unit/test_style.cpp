#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "../fixtures.hpp"
#include "slotbench/style/style_transfer.hpp"

using namespace slotbench;
using namespace slotbench::style;

TEST_CASE("gram matrix of a hand-sized activation") {
  auto f = torch::tensor({1.0, 2.0, 3.0, 4.0}).view({2, 1, 2});
  // F = [[1, 2], [3, 4]], F F^T = [[5, 11], [11, 25]], normalised by C H W = 4.
  auto g = gram_matrix(f);
  CHECK(torch::allclose(g, torch::tensor({{5.0, 11.0}, {11.0, 25.0}}) / 4.0));
}

TEST_CASE("feature pyramid shapes and seeded weights") {
  FeatureExtractor a(3), b(3), c(4);
  auto x = torch::rand({1, 3, 32, 32});
  auto fa = a->forward(x), fb = b->forward(x), fc = c->forward(x);
  REQUIRE(fa.size() == 5);
  CHECK(fa["conv1"].sizes() == torch::IntArrayRef({1, 16, 32, 32}));
  CHECK(fa["conv5"].sizes() == torch::IntArrayRef({1, 128, 2, 2}));
  CHECK(torch::equal(fa["conv3"], fb["conv3"]));
  CHECK_FALSE(torch::equal(fa["conv3"], fc["conv3"]));
}

TEST_CASE("weights survive a save/load round trip") {
  fixtures::TempDir tmp("style_w");
  FeatureExtractor a(1), b(2);
  a->save_weights(tmp / "w.pt");
  b->load_weights(tmp / "w.pt");
  auto x = torch::rand({1, 3, 16, 16});
  CHECK(torch::equal(a->forward(x)["conv2"], b->forward(x)["conv2"]));
}

TEST_CASE("image tensor conversion round trips 8-bit values") {
  const auto img = procedural_style_image(16, 20, 5);
  CHECK(img.height == 16);
  CHECK(img.width == 20);
  CHECK(tensor_to_image(image_to_tensor(img)) == img);
  CHECK(style_hash(img) == style_hash(procedural_style_image(16, 20, 5)));
  CHECK(style_hash(img) != style_hash(procedural_style_image(16, 20, 6)));
}

TEST_CASE("stylisation lowers the objective and keeps the background") {
  const auto gen = fixtures::small_generator(32, 3);
  const auto sample = data::render_scene(data::sample_scene(1, gen), gen.resolution);
  StyleConfig cfg;
  cfg.style_image = procedural_style_image(32, 32, 2);
  cfg.iterations = 15;
  FeatureExtractor extractor(0);
  const auto r = stylize_image(image_to_tensor(sample.image), cfg, extractor);
  REQUIRE(r.loss_trace.size() == 16);
  for (std::size_t i = 1; i < r.loss_trace.size(); ++i) CHECK(r.loss_trace[i] <= r.loss_trace[i - 1]);
  CHECK(r.loss_trace.back() < r.loss_trace.front());
  CHECK(r.image.min().item<float>() >= 0.0f);
  CHECK(r.image.max().item<float>() <= 1.0f);

  const auto styled = stylize_sample(sample, cfg, extractor);
  CHECK(styled.label_map == sample.label_map);
  CHECK(styled.metadata == sample.metadata);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      if (sample.label_map.at(y, x) == 0) {
        for (int c = 0; c < 3; ++c) REQUIRE(styled.image.at(y, x, c) == sample.image.at(y, x, c));
      }
    }
  }
}

TEST_CASE("an interrupted stylisation resumes to the same bytes") {
  fixtures::TempDir tmp("style_resume");
  data::generate_dataset(tmp / "raw", fixtures::small_generator(16, 2), {3, 1, 1}, 4);
  StyleConfig cfg;
  cfg.style_image = procedural_style_image(16, 16, 1);
  cfg.iterations = 3;
  FeatureExtractor extractor(0);

  StylizeOptions partial;
  partial.max_new_samples = 2;
  const auto first = stylize_dataset(tmp / "raw", tmp / "a", cfg, extractor, partial);
  CHECK(first.stylized == 2);
  CHECK_FALSE(first.complete);
  const auto second = stylize_dataset(tmp / "raw", tmp / "a", cfg, extractor);
  CHECK(second.resumed == 2);
  CHECK(second.stylized == 3);
  CHECK(second.complete);

  stylize_dataset(tmp / "raw", tmp / "b", cfg, extractor);
  for (auto split : data::kAllSplits) {
    const auto a = data::Dataset::open(tmp / "a", split), b = data::Dataset::open(tmp / "b", split);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.at(i).image == b.at(i).image);
  }
  const auto m = data::read_manifest(tmp / "a");
  CHECK(m.style.applied);
  CHECK(m.style.style_hash == style_hash(cfg.style_image));
}

TEST_CASE("invalid style settings are rejected") {
  StyleConfig cfg;
  cfg.style_image = procedural_style_image(8, 8, 0);
  cfg.style_layers = {"conv9"};
  CHECK_THROWS(cfg.validate());
  cfg.style_layers = {"conv1"};
  cfg.iterations = -1;
  CHECK_THROWS(cfg.validate());
}
