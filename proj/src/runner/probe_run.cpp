#include "slotbench/runner/probe_run.hpp"

#include "slotbench/errors.hpp"
#include "slotbench/runner/evaluate.hpp"
#include "slotbench/runner/run_dir.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace slotbench::runner {

std::vector<eval::ProbeScene> extract_probe_scenes(SlotModel& model, const data::Dataset& dataset, std::size_t limit,
                                                   const eval::TargetSchema& schema, double min_visibility,
                                                   int batch_size) {
  std::vector<eval::ProbeScene> scenes;
  evaluate_model(model, dataset, limit, batch_size,
                 [&](std::size_t, const data::RenderedSample& sample, const SlotDecomposition& d, std::int64_t pos) {
                   scenes.push_back(eval::make_probe_scene(d.representations()[pos], sample.metadata, schema,
                                                           min_visibility, d.masks[pos], &sample.label_map));
                 });
  return scenes;
}

json probe_run(const fs::path& run_dir, const ProbeSettings& settings) {
  LoadedRun run = load_run(run_dir);
  const auto train_set = data::Dataset::open(run.config.dataset_root, settings.train_split);
  const auto eval_set = data::Dataset::open(run.config.dataset_root, settings.eval_split);
  if (train_set.size() == 0 || eval_set.size() == 0) throw InputError("probe splits must not be empty");
  const eval::TargetSchema schema(train_set.manifest().features, settings.base.features);
  const auto train_scenes = extract_probe_scenes(*run.model, train_set, settings.train_limit, schema,
                                                 settings.base.min_visibility, run.config.batch_size);
  const auto eval_scenes = extract_probe_scenes(*run.model, eval_set, settings.eval_limit, schema,
                                                settings.base.min_visibility, run.config.batch_size);

  json results = json::array();
  for (auto model : settings.models) {
    for (auto matching : settings.matchings) {
      eval::ProbeConfig cfg = settings.base;
      cfg.model = model;
      cfg.matching = matching;
      auto probe = eval::probe_train(train_scenes, schema, cfg);
      const auto report = eval::probe_eval(probe, eval_scenes);
      results.push_back({{"probe", eval::probe_model_name(model)},
                         {"matching", eval::match_mode_name(matching)},
                         {"report", report.to_json()}});
    }
  }
  json out{{"run", run.manifest.value("name", "")},
           {"seed", run.seed},
           {"model", run.model->kind()},
           {"representation", run.model->kind() == "monet" ? "posterior_mean" : "final_slots"},
           {"train_split", std::string(data::split_name(settings.train_split))},
           {"eval_split", std::string(data::split_name(settings.eval_split))},
           {"train_scenes", train_scenes.size()},
           {"eval_scenes", eval_scenes.size()},
           {"results", results}};
  write_json_file(run_dir / files::kProbeReport, out);
  return out;
}

}  // namespace slotbench::runner
