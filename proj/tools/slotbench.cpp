// slotbench command line: dataset generation, stylisation, training, evaluation,
// probing, sweeps and reports.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "slotbench/data/dataset.hpp"
#include "slotbench/errors.hpp"
#include "slotbench/runner/config.hpp"
#include "slotbench/runner/evaluate.hpp"
#include "slotbench/runner/probe_run.hpp"
#include "slotbench/runner/report.hpp"
#include "slotbench/runner/run_dir.hpp"
#include "slotbench/runner/sweep.hpp"
#include "slotbench/runner/train.hpp"
#include "slotbench/style/style_transfer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace slotbench;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string profile = "desk";
  bool deterministic = false;
  std::vector<std::string> overrides;
};

json load_experiment_json(const Globals& g) {
  if (g.config.empty()) throw ConfigError("--config is required");
  json cfg = runner::load_config_file(g.config);
  runner::apply_profile(cfg, g.profile);
  for (const auto& o : g.overrides) runner::apply_override(cfg, o);
  return cfg;
}

int cmd_generate(const Globals& g) {
  if (g.config.empty() || g.out.empty()) throw ConfigError("generate needs --config and --out");
  json cfg = runner::load_config_file(g.config);
  for (const auto& o : g.overrides) runner::apply_override(cfg, o);
  const auto preset = runner::dataset_preset_from_json(cfg);
  data::generate_dataset(g.out, preset.generator, preset.sizes, g.seed.value_or(0), preset.name);
  std::printf("generated %s: %zu/%zu/%zu samples at %dx%d\n", g.out.c_str(), preset.sizes.train, preset.sizes.val,
              preset.sizes.test, preset.generator.resolution.height, preset.generator.resolution.width);
  return 0;
}

int cmd_stylize(const Globals& g, const std::string& in, const std::string& style_path, int limit) {
  if (in.empty() || g.out.empty()) throw ConfigError("stylize needs --in and --out");
  json cfg = g.config.empty() ? json{{"style", json::object()}} : runner::load_config_file(g.config);
  for (const auto& o : g.overrides) runner::apply_override(cfg, o);
  auto preset = runner::style_preset_from_json(cfg);
  preset.config.style_image = style_path.empty()
                                  ? style::procedural_style_image(preset.procedural_size, preset.procedural_size,
                                                                  preset.procedural_seed)
                                  : data::read_rgb_png(style_path);
  style::FeatureExtractor extractor(g.seed.value_or(0));
  style::StylizeOptions opts;
  opts.seed = g.seed.value_or(0);
  if (limit > 0) opts.max_new_samples = static_cast<std::size_t>(limit);
  std::size_t done = 0;
  opts.on_sample = [&](data::Split split, std::size_t i) {
    if (++done % 100 == 0) std::printf("stylized %zu (%s %zu)\n", done, std::string(data::split_name(split)).c_str(), i);
  };
  const auto outcome = style::stylize_dataset(in, g.out, preset.config, extractor, opts);
  std::printf("stylize %s: %zu new, %zu resumed, %s\n", g.out.c_str(), outcome.stylized, outcome.resumed,
              outcome.complete ? "complete" : "incomplete");
  return 0;
}

int cmd_train(const Globals& g, bool fresh, long stop_after) {
  if (g.out.empty()) throw ConfigError("train needs --out");
  const auto config = runner::ExperimentConfig::from_json(load_experiment_json(g));
  std::vector<std::pair<std::uint64_t, fs::path>> jobs;
  if (g.seed) {
    jobs.emplace_back(*g.seed, g.out);
  } else if (config.seeds.size() == 1) {
    jobs.emplace_back(config.seeds.front(), g.out);
  } else {
    for (auto s : config.seeds) jobs.emplace_back(s, fs::path(g.out) / ("seed_" + std::to_string(s)));
  }
  runner::TrainOptions opts;
  opts.resume = !fresh;
  opts.deterministic = g.deterministic;
  opts.stop_after = stop_after;
  opts.on_step = [](const runner::StepRecord& r) {
    if (r.step % 100 == 0) {
      std::printf("step %lld loss %.6g lr %.3g grad %.3g\n", static_cast<long long>(r.step), r.loss, r.learning_rate,
                  r.grad_norm);
      std::fflush(stdout);
    }
  };
  for (const auto& [seed, dir] : jobs) {
    const auto result = runner::train(config, seed, dir, opts);
    std::printf("%s seed %llu: %s after %lld steps, ari %.4f mse %.6f %s\n", dir.c_str(),
                static_cast<unsigned long long>(seed), result.status.c_str(), static_cast<long long>(result.steps),
                result.metrics.ari, result.metrics.mse, result.message.c_str());
  }
  return 0;
}

int cmd_evaluate(const std::string& run, const std::string& split, std::size_t limit, int dumps) {
  runner::EvaluateOptions opts;
  opts.split = data::parse_split(split);
  opts.limit = limit;
  opts.dumps = dumps;
  const auto report = runner::evaluate_run(run, opts);
  std::printf("%s: ari %.4f mse %.6f over %zu samples\n", run.c_str(), report["metrics"]["ari"].get<double>(),
              report["metrics"]["mse"].get<double>(), report["metrics"]["samples"].get<std::size_t>());
  return 0;
}

int cmd_probe(const Globals& g, const std::string& run) {
  json cfg = runner::read_json_file(fs::path(run) / runner::files::kManifest).at("config");
  if (!g.config.empty()) runner::deep_merge(cfg, runner::load_config_file(g.config));
  for (const auto& o : g.overrides) runner::apply_override(cfg, o);
  const auto config = runner::ExperimentConfig::from_json(cfg);
  const auto report = runner::probe_run(run, config.probe);
  for (const auto& r : report["results"]) {
    std::printf("%s/%s:", r["probe"].get<std::string>().c_str(), r["matching"].get<std::string>().c_str());
    for (const auto& f : r["report"]["features"]) {
      std::printf(" %s %s=%.3f (baseline %.3f)", f["name"].get<std::string>().c_str(),
                  f["metric"].get<std::string>().c_str(), f["value"].get<double>(), f["baseline"].get<double>());
    }
    std::printf("\n");
  }
  return 0;
}

int cmd_sweep(const Globals& g, int parallel, bool plan_only) {
  if (g.config.empty() || g.out.empty()) throw ConfigError("sweep needs --config and --out");
  const auto preset = runner::load_config_file(g.config);
  const auto spec = runner::SweepSpec::from_json(preset, fs::path(g.config).parent_path());
  runner::SweepOptions opts;
  opts.parallelism = parallel;
  opts.plan_only = plan_only;
  opts.profile = g.profile;
  opts.deterministic = g.deterministic;
  opts.overrides = g.overrides;
  const auto out = runner::run_sweep(spec, g.out, opts);
  if (plan_only) {
    std::printf("%s: %zu runs\n", spec.name.c_str(), out["run_count"].get<std::size_t>());
    for (const auto& r : out["runs"]) std::printf("  %s %s\n", r["id"].get<std::string>().c_str(), r["overrides"].dump().c_str());
    return 0;
  }
  std::size_t failed = 0;
  for (const auto& r : out["rows"]) failed += r["status"] == "failed";
  std::printf("%s: %zu runs, %zu failed; aggregate in %s\n", spec.name.c_str(), out["rows"].size(), failed,
              (fs::path(g.out) / "aggregate.csv").c_str());
  return 0;
}

int cmd_report(const Globals& g, const std::vector<std::string>& inputs) {
  if (inputs.empty() || g.out.empty()) throw ConfigError("report needs --in and --out");
  std::vector<fs::path> paths(inputs.begin(), inputs.end());
  const auto runs = runner::collect_runs(paths);
  const auto result = runner::write_report(runs, g.out);
  for (const auto& w : result.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("report over %zu runs: %zu artifacts in %s\n", runs.size(), result.artifacts.size(), g.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slotbench: object-centric segmentation benchmark"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "YAML config or preset");
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--profile", g.profile, "config profile")->check(CLI::IsMember({"desk", "paper"}));
  app.add_flag("--deterministic", g.deterministic, "deterministic kernels, single thread");
  app.add_option("--set", g.overrides, "config override path=value (repeatable)");

  auto* generate = app.add_subcommand("generate", "render a sprite dataset")->fallthrough();

  std::string in, style_path;
  int style_limit = 0;
  auto* stylize = app.add_subcommand("stylize", "stylise a dataset")->fallthrough();
  stylize->add_option("--in", in, "source dataset root")->required();
  stylize->add_option("--style", style_path, "style image (PNG); procedural when omitted");
  stylize->add_option("--limit", style_limit, "stop after this many new samples");

  bool fresh = false;
  long stop_after = -1;
  auto* train = app.add_subcommand("train", "train a model")->fallthrough();
  train->add_flag("--fresh", fresh, "ignore existing checkpoints");
  train->add_option("--stop-after", stop_after, "stop after this many updates");

  std::string run, split = "test";
  std::size_t limit = 0;
  int dumps = 4;
  auto* evaluate = app.add_subcommand("evaluate", "evaluate a run")->fallthrough();
  evaluate->add_option("--run", run, "run directory")->required();
  evaluate->add_option("--split", split, "dataset split");
  evaluate->add_option("--limit", limit, "samples (0 = experiment.eval_samples)");
  evaluate->add_option("--dumps", dumps, "qualitative grids to write");

  auto* probe = app.add_subcommand("probe", "probe frozen slot representations")->fallthrough();
  probe->add_option("--run", run, "run directory")->required();

  int parallel = 1;
  bool plan_only = false;
  auto* sweep = app.add_subcommand("sweep", "run a sweep preset")->fallthrough();
  sweep->add_option("--parallel", parallel, "concurrent runs");
  sweep->add_flag("--plan-only", plan_only, "write plan.json and list runs without training");

  std::vector<std::string> inputs;
  auto* report = app.add_subcommand("report", "figures and correlation tables")->fallthrough();
  report->add_option("--in", inputs, "run directories or sweep roots")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*generate) return cmd_generate(g);
    if (*stylize) return cmd_stylize(g, in, style_path, style_limit);
    if (*train) return cmd_train(g, fresh, stop_after);
    if (*evaluate) return cmd_evaluate(run, split, limit, dumps);
    if (*probe) return cmd_probe(g, run);
    if (*sweep) return cmd_sweep(g, parallel, plan_only);
    if (*report) return cmd_report(g, inputs);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
