#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <limits>
#include <random>

#include "../fixtures.hpp"
#include "../oracles.hpp"
#include "slotbench/errors.hpp"
#include "slotbench/eval/correlation.hpp"
#include "slotbench/eval/hungarian.hpp"
#include "slotbench/eval/metrics.hpp"
#include "slotbench/eval/probe.hpp"

using namespace slotbench;
using namespace slotbench::eval;

TEST_CASE("ARI on small hand-checked partitions") {
  using V = std::vector<std::int64_t>;
  auto ari = [](const V& t, const V& p) { return ari_foreground(std::span<const std::int64_t>(t), std::span<const std::int64_t>(p)); };
  // Background pixels (label 0) are ignored whatever the prediction.
  CHECK(ari({0, 0, 1, 1, 2, 2}, {5, 6, 0, 0, 1, 1}) == 1.0);
  CHECK(ari({1, 1, 2, 2}, {0, 0, 0, 0}) == 0.0);
  CHECK(ari({0, 0, 1}, {0, 1, 2}) == 0.0);
  const V t{1, 1, 1, 2, 2, 2}, p{1, 1, 2, 2, 3, 3};
  CHECK(ari(t, p) == doctest::Approx(oracle::ari_pair_counting(t, p)).epsilon(1e-12));
  CHECK(ari(t, p) < 1.0);
}

TEST_CASE("ARI overloads agree") {
  const auto gen = fixtures::small_generator(16, 4);
  const auto r = data::render_scene(data::sample_scene(3, gen), gen.resolution);
  torch::manual_seed(0);
  auto masks = torch::softmax(torch::randn({4, 16, 16}), 0);
  auto pred = masks_to_labels(masks);
  auto truth = label_tensor(r.label_map);
  const double a = ari_foreground(truth, pred), b = ari_foreground(r.label_map, pred);
  CHECK(a == b);
  CHECK(ari_foreground(truth, truth) == doctest::Approx(1.0));
}

TEST_CASE("masks_to_labels ties go to the lowest slot") {
  auto m = torch::full({3, 1, 2}, 1.0 / 3);
  m[2][0][1] = 0.9;
  auto l = masks_to_labels(m);
  CHECK(l[0][0].item<std::int64_t>() == 0);
  CHECK(l[0][1].item<std::int64_t>() == 2);
  CHECK(masks_to_labels(m.unsqueeze(0).expand({2, 3, 1, 2})).sizes() == torch::IntArrayRef({2, 1, 2}));
}

TEST_CASE("mse is the per-element mean") {
  auto a = torch::zeros({3, 2, 2}), b = torch::ones({3, 2, 2}) * 0.5;
  CHECK(mse(a, b) == doctest::Approx(0.25));
}

TEST_CASE("hungarian on rectangular and degenerate inputs") {
  const CostMatrix c{{4, 1, 3}, {2, 0, 5}};
  const auto a = hungarian_match(c);
  REQUIRE(a.pairs.size() == 2);
  CHECK(a.cost == 3.0);
  CHECK(a.cost == oracle::brute_force_assignment(c));
  CHECK(hungarian_match({}).pairs.empty());
  CHECK_THROWS_AS(hungarian_match({{1, 2}, {3}}), InputError);
  CHECK_THROWS_AS(hungarian_match({{1, std::numeric_limits<double>::infinity()}}), InputError);
  const CostMatrix tall{{1}, {0}, {2}};
  const auto t = hungarian_match(tall);
  REQUIRE(t.pairs.size() == 1);
  CHECK((t.pairs[0] == std::pair{1, 0}));
}

TEST_CASE("ranks, Pearson and Spearman") {
  CHECK((average_ranks({10, 20, 20, 5}) == std::vector<double>{2, 3.5, 3.5, 1}));
  const std::vector<double> x{1, 2, 3, 4, 5}, y{2, 4, 6, 8, 10}, z{5, 4, 3, 2, 1};
  CHECK(pearson(x, y) == doctest::Approx(1.0));
  CHECK(spearman(x, z) == doctest::Approx(-1.0));
  CHECK(rank_correlation(x, y, CorrelationKind::kSpearman) == doctest::Approx(1.0));
  CHECK_THROWS_AS(pearson({1, 2}, {1, 2}), InputError);
  CHECK_THROWS_AS(pearson({1, 2, 3}, {1, 2}), InputError);
  CHECK_THROWS_AS(pearson({1, 1, 1}, {1, 2, 3}), UndefinedResultError);
}

TEST_CASE("r_squared conventions") {
  auto t = torch::tensor({1.0, 2.0, 3.0});
  CHECK(r_squared(t, t) == 1.0);
  CHECK(r_squared(torch::full({3}, 2.0), t) == doctest::Approx(0.0));
  auto c = torch::full({3}, 4.0);
  CHECK(r_squared(c, c) == 1.0);
  CHECK(r_squared(t, c) == 0.0);
}

TEST_CASE("target schema encodes categorical and numeric factors") {
  const auto gen = fixtures::small_generator(16, 3);
  const TargetSchema schema(data::sprite_feature_schema(gen), {"shape", "x", "scale"});
  CHECK(schema.num_categorical() == 1);
  CHECK(schema.num_numeric() == 2);
  CHECK(schema.output_size() == data::kNumShapes + 2);
  data::SceneSpec s;
  data::ObjectRecord o;
  o.shape = data::Shape::kHeart;
  o.x = 0.3;
  o.scale = 0.2;
  s.objects = {o};
  const auto [cat, num] = schema.encode(s, {0});
  CHECK(cat[0][0].item<std::int64_t>() == 2);
  CHECK(num[0][0].item<double>() == 0.3);
  CHECK(num[0][1].item<double>() == 0.2);
  CHECK_THROWS(TargetSchema(data::sprite_feature_schema(gen), {"weight"}));
}

TEST_CASE("mask matching pairs each object with the slot covering it") {
  data::LabelMap labels(2, 2);
  labels.labels = {1, 1, 2, 0};
  auto masks = torch::zeros({3, 2, 2});
  masks[2][0][0] = 1;
  masks[2][0][1] = 1;
  masks[0][1][0] = 1;
  masks[1][1][1] = 1;
  const auto cost = mask_cost(labels, masks, {0, 1});
  const auto a = hungarian_match(cost);
  CHECK((a.pairs == std::vector<std::pair<int, int>>{{0, 2}, {1, 0}}));
  CHECK(a.cost == 0.0);
  CHECK_THROWS_AS(mask_cost(labels, torch::zeros({3, 3, 3}), {0}), ShapeError);
}

TEST_CASE("probe recovers a linear code and reports chance baselines") {
  const auto gen = fixtures::small_generator(16, 3);
  const TargetSchema schema(data::sprite_feature_schema(gen), {"shape", "x"});
  std::vector<ProbeScene> train, test;
  torch::manual_seed(0);
  for (std::uint64_t i = 0; i < 300; ++i) {
    const auto r = data::render_scene(data::sample_scene(i, gen), gen.resolution);
    auto slots = torch::randn({4, 6});
    const auto visible = visible_objects(r.metadata, 0.05);
    for (std::size_t j = 0; j < visible.size(); ++j) {
      const auto& o = r.metadata.objects[visible[j]];
      auto row = torch::zeros({6});
      row[static_cast<int>(o.shape)] = 1;
      row[3] = (o.x - 0.1) / 0.8;
      slots[static_cast<std::int64_t>(j)] = row;
    }
    (i < 200 ? train : test).push_back(make_probe_scene(slots, r.metadata, schema, 0.05));
  }
  ProbeConfig cfg;
  cfg.features = {"shape", "x"};
  cfg.epochs = 60;
  cfg.batch_size = 16;
  auto probe = probe_train(train, schema, cfg);
  const auto report = probe_eval(probe, test);
  CHECK(report.feature("shape").value > 0.95);
  CHECK(report.feature("shape").baseline == doctest::Approx(1.0 / 3).epsilon(0.3));
  CHECK(report.feature("x").value > 0.95);
  CHECK(report.matched == report.objects);
  CHECK_THROWS_AS(probe_train({}, schema, cfg), InputError);
}

TEST_CASE("probe names round trip") {
  CHECK(parse_probe_model(probe_model_name(ProbeModel::kMlp256)) == ProbeModel::kMlp256);
  CHECK(parse_match_mode(match_mode_name(MatchMode::kMask)) == MatchMode::kMask);
  CHECK_THROWS(parse_match_mode("greedy"));
}
