#include "slotbench/runner/run_dir.hpp"

#include <fstream>

#include "slotbench/errors.hpp"

namespace fs = std::filesystem;

namespace slotbench::runner {

fs::path latest_checkpoint_path(const fs::path& run_dir) { return run_dir / files::kCheckpoints / files::kLatest; }

void write_json_file(const fs::path& path, const nlohmann::json& value) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw StorageError("cannot write " + tmp.string());
    out << value.dump(2) << '\n';
    if (!out) throw StorageError("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw StorageError("cannot move " + tmp.string() + " into place: " + ec.message());
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

data::Resolution dataset_resolution(const ExperimentConfig& config) {
  return data::read_manifest(config.dataset_root).resolution;
}

LoadedRun load_run(const fs::path& run_dir) {
  if (!fs::is_directory(run_dir)) throw InputError("run directory not found: " + run_dir.string());
  const fs::path manifest_path = run_dir / files::kManifest;
  if (!fs::exists(manifest_path)) throw InputError("run directory has no manifest.json: " + run_dir.string());
  const fs::path ckpt = latest_checkpoint_path(run_dir);
  if (!fs::exists(ckpt)) throw InputError("run has no checkpoint: " + ckpt.string());

  LoadedRun run;
  run.manifest = read_json_file(manifest_path);
  run.config = ExperimentConfig::from_json(run.manifest.at("config"));
  run.seed = run.manifest.at("seed").get<std::uint64_t>();
  run.checkpoint = nn::load_checkpoint(ckpt);
  const auto res = run.manifest.at("resolution");
  run.model = build_model(run.config.model, res.at(0).get<int>(), res.at(1).get<int>());
  nn::load_module_state(run.checkpoint, *run.model);
  run.model->eval();
  return run;
}

}  // namespace slotbench::runner
