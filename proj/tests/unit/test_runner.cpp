#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <set>

#include "../fixtures.hpp"
#include "slotbench/errors.hpp"
#include "slotbench/runner/config.hpp"
#include "slotbench/runner/evaluate.hpp"
#include "slotbench/runner/probe_run.hpp"
#include "slotbench/runner/report.hpp"
#include "slotbench/runner/run_dir.hpp"
#include "slotbench/runner/sweep.hpp"
#include "slotbench/runner/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace slotbench;
using namespace slotbench::runner;

namespace {

const fs::path kPresets = fs::path(SLOTBENCH_SOURCE_DIR) / "presets";

std::string read_text(const fs::path& p) {
  std::ifstream f(p);
  return {std::istreambuf_iterator<char>(f), {}};
}

// One small styled dataset shared by the training tests.
const fs::path& shared_dataset() {
  static fixtures::TempDir dir("runner_data");
  static const fs::path root = fixtures::styled_dataset(dir.path(), {24, 8, 8}, 5, 32, 3);
  return root;
}

}  // namespace

TEST_CASE("YAML parsing, base files and deep merge") {
  fixtures::TempDir tmp("cfg");
  std::ofstream(tmp / "parent.yaml") << "a: {b: 1, c: [1, 2]}\nname: parent\n";
  std::ofstream(tmp / "child.yaml") << "base: parent.yaml\na: {c: [3]}\nextra: true\n";
  const auto j = load_config_file(tmp / "child.yaml");
  CHECK(j["a"]["b"] == 1);
  CHECK(j["a"]["c"] == json::array({3}));
  CHECK(j["name"] == "parent");
  CHECK(j["extra"] == true);
  CHECK_FALSE(j.contains("base"));
  CHECK(parse_yaml("x: 1.5e-4")["x"].get<double>() == doctest::Approx(1.5e-4));
}

TEST_CASE("overrides parse values as YAML and create paths") {
  json j = {{"model", {{"kind", "monet"}}}};
  apply_override(j, "model.loss.gamma=0.05");
  apply_override(j, "experiment.seeds=[1, 2]");
  apply_override(j, "model.kind=slot_attention");
  CHECK(j["model"]["loss"]["gamma"].get<double>() == 0.05);
  CHECK(j["experiment"]["seeds"] == json::array({1, 2}));
  CHECK(*find_path(j, "model.kind") == "slot_attention");
  CHECK(find_path(j, "model.missing") == nullptr);
  CHECK_THROWS_AS(apply_override(j, "no-equals-sign"), ConfigError);
}

TEST_CASE("profiles merge over the base config") {
  json j = parse_yaml("experiment: {max_steps: 10, batch_size: 4}\nprofiles: {paper: {experiment: {max_steps: 500}}}");
  json desk = j;
  apply_profile(desk, "desk");
  CHECK(desk["experiment"]["max_steps"] == 10);
  apply_profile(j, "paper");
  CHECK(j["experiment"]["max_steps"] == 500);
  CHECK(j["experiment"]["batch_size"] == 4);
  CHECK_FALSE(j.contains("profiles"));
  json k = parse_yaml("a: 1");
  CHECK_THROWS_AS(apply_profile(k, "cluster"), ConfigError);
}

TEST_CASE("every shipped preset parses") {
  for (const auto* name : {"monet-baseline", "sa-baseline", "sa-improved", "overfit-sa", "overfit-monet"}) {
    CAPTURE(name);
    const int size = std::string(name).starts_with("overfit") ? 32 : 64;
    for (const auto* profile : {"desk", "paper"}) {
      json j = load_config_file(kPresets / (std::string(name) + ".yaml"));
      apply_profile(j, profile);
      const auto cfg = ExperimentConfig::from_json(j);
      CHECK_NOTHROW(build_model(cfg.model, size, size));
    }
  }
  for (const auto* name : {"data-sprites", "data-sprites-2obj", "data-overfit"}) {
    CHECK_NOTHROW(dataset_preset_from_json(load_config_file(kPresets / (std::string(name) + ".yaml"))));
  }
  CHECK_NOTHROW(style_preset_from_json(load_config_file(kPresets / "style.yaml")));
  for (const auto* name : {"monet-grid", "latent-sweep", "baselines", "trend-check"}) {
    CHECK_NOTHROW(SweepSpec::from_json(load_config_file(kPresets / (std::string(name) + ".yaml")), kPresets));
  }
}

TEST_CASE("invalid experiment settings are rejected with the offending key") {
  json j = fixtures::tiny_sa_config("/nonexistent", 10);
  j["model"]["kind"] = "transformer";
  CHECK_THROWS_AS(build_model(ExperimentConfig::from_json(j).model, 32, 32), ConfigError);
  j = fixtures::tiny_sa_config("/nonexistent", 10);
  j["experiment"]["seeds"] = json::array();
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);
  j = fixtures::tiny_sa_config("/nonexistent", 10);
  j["optimizer"]["kind"] = "sgd";
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);
}

TEST_CASE("learning rate schedule") {
  OptimizerConfig o;
  o.learning_rate = 4e-4;
  o.warmup_steps = 10;
  o.decay_rate = 0.5;
  o.decay_steps = 100;
  CHECK(o.rate_at(0) == doctest::Approx(4e-5 * std::pow(0.5, 0.0)));
  CHECK(o.rate_at(9) == doctest::Approx(4e-4 * std::pow(0.5, 0.09)));
  CHECK(o.rate_at(100) == doctest::Approx(2e-4));
  CHECK(o.rate_at(200) == doctest::Approx(1e-4));
  OptimizerConfig flat;
  flat.warmup_steps = 0;
  flat.decay_rate = 1.0;
  CHECK(flat.rate_at(12345) == flat.learning_rate);
}

TEST_CASE("batch order is a pure function of seed and step") {
  const auto a = batch_indices(3, 7, 20, 4), b = batch_indices(3, 7, 20, 4);
  CHECK((a == b));
  CHECK(a.size() == 4);
  std::set<std::size_t> epoch;
  for (int step = 0; step < 5; ++step) {
    for (auto i : batch_indices(3, step, 20, 4)) epoch.insert(i);
  }
  CHECK(epoch.size() == 20);
  CHECK((batch_indices(3, 0, 20, 4) != batch_indices(4, 0, 20, 4)));
}

TEST_CASE("trailing median") {
  CHECK(trailing_median({3, 1, 2}) == 2);
  CHECK(trailing_median({4, 1, 3, 2}) == 2.5);
}

TEST_CASE("interrupted training resumes to identical weights and traces") {
  fixtures::TempDir tmp("resume");
  auto j = fixtures::tiny_sa_config(shared_dataset(), 12);
  j["experiment"]["checkpoint_every"] = 3;
  j["experiment"]["eval_every"] = 6;
  const auto cfg = ExperimentConfig::from_json(j);
  TrainOptions opts;
  opts.deterministic = true;
  const auto straight = train(cfg, 1, tmp / "straight", opts);
  CHECK(straight.status == "completed");
  CHECK(straight.steps == 12);

  TrainOptions partial = opts;
  partial.stop_after = 5;
  const auto first = train(cfg, 1, tmp / "resumed", partial);
  CHECK(first.status == "interrupted");
  const auto second = train(cfg, 1, tmp / "resumed", opts);
  CHECK(second.status == "completed");

  CHECK(read_text(tmp / "straight" / files::kLossTrace) == read_text(tmp / "resumed" / files::kLossTrace));
  const auto a = load_run(tmp / "straight"), b = load_run(tmp / "resumed");
  auto pa = a.model->named_parameters(), pb = b.model->named_parameters();
  for (const auto& p : pa) CHECK(torch::equal(p.value(), pb[p.key()]));
  CHECK(second.metrics.ari == straight.metrics.ari);
}

TEST_CASE("a loss spike stops the run as unstable and keeps its artifacts") {
  fixtures::TempDir tmp("spike");
  auto j = fixtures::tiny_sa_config(shared_dataset(), 40);
  j["optimizer"]["learning_rate"] = 50.0;
  j["optimizer"]["warmup_steps"] = 0;
  j["optimizer"]["clip_norm"] = 0.0;
  j["guard"] = {{"spike_factor", 2.0}, {"window", 5}, {"min_history", 2}};
  const auto result = train(ExperimentConfig::from_json(j), 0, tmp / "run");
  CHECK(result.status == "unstable");
  CHECK(result.steps < 40);
  CHECK(fs::exists(tmp / "run" / files::kLossTrace));
  CHECK(read_json_file(tmp / "run" / files::kManifest)["status"] == "unstable");
}

TEST_CASE("evaluating an untrained MONet gives finite metrics and dumps") {
  fixtures::TempDir tmp("eval");
  auto j = fixtures::tiny_monet_config(shared_dataset(), 0);
  j["experiment"]["eval_every"] = 1;
  j["experiment"]["checkpoint_every"] = 1;
  const auto cfg = ExperimentConfig::from_json(j);
  train(cfg, 0, tmp / "run");
  EvaluateOptions opts;
  opts.limit = 4;
  opts.dumps = 2;
  const auto report = evaluate_run(tmp / "run", opts);
  CHECK(std::isfinite(report["metrics"]["ari"].get<double>()));
  CHECK(std::isfinite(report["metrics"]["mse"].get<double>()));
  CHECK(report["metrics"]["samples"] == 4);
  CHECK(report["eval_initialisation"] == eval_initialisation("monet"));
  CHECK(fs::exists(tmp / "run" / "dumps" / "sample_000_masked.png"));
  CHECK(fs::exists(tmp / "run" / "dumps" / "sample_001_appearance.png"));
  CHECK_THROWS_AS(load_run(tmp / "missing"), InputError);
}

TEST_CASE("probe_run writes one result per probe and matching") {
  fixtures::TempDir tmp("probe");
  const auto cfg = ExperimentConfig::from_json(fixtures::tiny_sa_config(shared_dataset(), 4));
  train(cfg, 0, tmp / "run");
  const auto report = probe_run(tmp / "run", cfg.probe);
  CHECK(report["results"].size() == 4);
  CHECK(fs::exists(tmp / "run" / files::kProbeReport));
}

TEST_CASE("sweep expansion: grids, pairing and run names") {
  const json preset = parse_yaml(R"(
sweep:
  name: demo
  seeds: [0, 1]
  variants:
    - label: v
      config: {model: {kind: monet}}
      axes:
        - {path: model.loss.sigma_fg, values: [0.05, 0.5]}
        - {path: model.loss.sigma_bg, values: [0.03, 0.3]}
        - {path: model.loss.gamma, values: [1, 5, 9]}
      paired: [[model.loss.sigma_fg, model.loss.sigma_bg]]
)");
  const auto runs = expand(SweepSpec::from_json(preset, "."));
  REQUIRE(runs.size() == 12);
  std::set<std::string> ids;
  for (const auto& r : runs) {
    ids.insert(r.id);
    const double fg = r.config["model"]["loss"]["sigma_fg"], bg = r.config["model"]["loss"]["sigma_bg"];
    CHECK(((fg == 0.05 && bg == 0.03) || (fg == 0.5 && bg == 0.3)));
    CHECK(r.config["experiment"]["seeds"] == json::array({r.seed}));
  }
  CHECK(ids.size() == 12);

  json bad = preset;
  bad["sweep"]["variants"][0]["axes"][1]["values"] = json::array({1});
  CHECK_THROWS_AS(SweepSpec::from_json(bad, "."), ConfigError);
}

TEST_CASE("sweep plan and aggregate without launching") {
  fixtures::TempDir tmp("sweep");
  const auto spec = SweepSpec::from_json(load_config_file(kPresets / "baselines.yaml"), kPresets);
  SweepOptions opts;
  opts.plan_only = true;
  const auto plan = run_sweep(spec, tmp / "out", opts);
  CHECK(plan["run_count"] == 9);
  CHECK(fs::exists(tmp / "out" / "plan.json"));
  const auto table = aggregate_sweep(tmp / "out", expand(spec));
  CHECK(table["rows"].size() == 9);
  for (const auto& r : table["rows"]) CHECK(r["status"] == "missing");
}

TEST_CASE("bootstrap intervals") {
  const std::vector<double> same{2, 2, 2, 2};
  const auto flat = bootstrap_ci(same, Statistic::kMedian, 1000, kCiSeed, 0.95);
  CHECK(flat.center == 2);
  CHECK(flat.lo == 2);
  CHECK(flat.hi == 2);
  const std::vector<double> spread{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const auto a = bootstrap_ci(spread, Statistic::kMean, 2000, kCiSeed, 0.95);
  const auto b = bootstrap_ci(spread, Statistic::kMean, 2000, kCiSeed, 0.95);
  CHECK(a.center == doctest::Approx(5.5));
  CHECK(a.lo < 5.5);
  CHECK(a.hi > 5.5);
  CHECK(a.lo == b.lo);
  CHECK(median({3, 1, 2, 10}) == 2.5);
}

TEST_CASE("report over a single run warns instead of failing") {
  fixtures::TempDir tmp("report");
  const auto cfg = ExperimentConfig::from_json(fixtures::tiny_sa_config(shared_dataset(), 4));
  train(cfg, 0, tmp / "run");
  const auto runs = collect_runs({tmp / "run"});
  REQUIRE(runs.size() == 1);
  CHECK(runs[0].kind == "slot_attention");
  CHECK(runs[0].ari.has_value());
  const auto result = write_report(runs, tmp / "report");
  CHECK_FALSE(result.warnings.empty());
  CHECK(fs::exists(tmp / "report" / "ari_by_config.svg"));
  CHECK(fs::exists(tmp / "report" / "summary.json"));
}
