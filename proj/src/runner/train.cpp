#include "slotbench/runner/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <ATen/Context.h>

#include "slotbench/errors.hpp"
#include "slotbench/nn/checkpoint.hpp"
#include "slotbench/runner/run_dir.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace slotbench::runner {

nlohmann::json StepRecord::to_json() const {
  json t = json::object();
  for (const auto& [name, value] : terms) t[name] = value;
  return {{"step", step}, {"loss", loss}, {"terms", t}, {"lr", learning_rate}, {"grad_norm", grad_norm}};
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, std::int64_t step, std::size_t dataset_size,
                                       int batch_size) {
  if (dataset_size == 0) throw InputError("training split is empty");
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  std::int64_t cached_epoch = -1;
  std::vector<std::size_t> perm(dataset_size);
  const auto start = static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    const std::uint64_t q = start + i;
    const auto epoch = static_cast<std::int64_t>(q / dataset_size);
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), 0);
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(epoch), 0x5eedu};
      std::mt19937_64 rng(seq);
      std::shuffle(perm.begin(), perm.end(), rng);
      cached_epoch = epoch;
    }
    out.push_back(perm[q % dataset_size]);
  }
  return out;
}

double trailing_median(std::vector<double> window) {
  if (window.empty()) return 0.0;
  const auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
  std::nth_element(window.begin(), mid, window.end());
  if (window.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(window.begin(), mid);
  return 0.5 * (lower + upper);
}

namespace {

std::unique_ptr<torch::optim::Optimizer> make_optimizer(const OptimizerConfig& c, SlotModel& model) {
  if (c.kind == "rmsprop") {
    return std::make_unique<torch::optim::RMSprop>(model.parameters(),
                                                   torch::optim::RMSpropOptions(c.learning_rate));
  }
  return std::make_unique<torch::optim::Adam>(model.parameters(), torch::optim::AdamOptions(c.learning_rate));
}

torch::Tensor optimizer_bytes(torch::optim::Optimizer& optimizer) {
  torch::serialize::OutputArchive archive;
  optimizer.save(archive);
  std::ostringstream os;
  archive.save_to(os);
  const std::string s = os.str();
  return torch::from_blob(const_cast<char*>(s.data()), {static_cast<std::int64_t>(s.size())}, torch::kUInt8).clone();
}

void load_optimizer_bytes(torch::optim::Optimizer& optimizer, const torch::Tensor& bytes) {
  torch::serialize::InputArchive archive;
  auto b = bytes.contiguous();
  archive.load_from(reinterpret_cast<const char*>(b.data_ptr<std::uint8_t>()), static_cast<std::size_t>(b.numel()));
  optimizer.load(archive);
}

void save_state(const fs::path& run_dir, SlotModel& model, torch::optim::Optimizer& optimizer, std::int64_t step,
                const std::deque<double>& window, std::uint64_t seed, const std::string& status) {
  nn::Checkpoint ckpt;
  ckpt.architecture = model.architecture();
  ckpt.meta = {{"step", step},
               {"seed", seed},
               {"status", status},
               {"kind", model.kind()},
               {"loss_window", std::vector<double>(window.begin(), window.end())}};
  nn::append_module_state(ckpt, model);
  ckpt.tensors.emplace_back("optimizer", optimizer_bytes(optimizer));
  ckpt.tensors.emplace_back("rng/model", model.rng_state());
  const fs::path dir = run_dir / files::kCheckpoints;
  nn::save_checkpoint(dir / files::kLatest, ckpt);
  char name[32];
  std::snprintf(name, sizeof(name), "step_%08lld.ckpt", static_cast<long long>(step));
  std::error_code ec;
  fs::copy_file(dir / files::kLatest, dir / name, fs::copy_options::overwrite_existing, ec);
  if (ec) throw StorageError("cannot copy checkpoint to " + (dir / name).string() + ": " + ec.message());
  // Keep the two most recent step checkpoints next to latest.ckpt.
  std::vector<fs::path> steps;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().filename().string().rfind("step_", 0) == 0) steps.push_back(e.path());
  }
  std::sort(steps.begin(), steps.end());
  for (std::size_t i = 0; i + 2 < steps.size(); ++i) fs::remove(steps[i]);
}

// Drops trace lines written after the checkpoint being resumed from.
void truncate_trace(const fs::path& path, std::int64_t last_step) {
  if (!fs::exists(path)) return;
  std::ifstream in(path);
  std::vector<std::string> keep;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      if (json::parse(line).at("step").get<std::int64_t>() <= last_step) keep.push_back(line);
    } catch (const json::exception&) {
      break;  // a torn final line from an interrupted write
    }
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
}

torch::Tensor load_bank(const data::Dataset& dataset, std::size_t limit) {
  const std::size_t n = limit == 0 ? dataset.size() : std::min(limit, dataset.size());
  if (n == 0) throw InputError("training split is empty");
  const auto res = dataset.manifest().resolution;
  auto bank = torch::empty({static_cast<std::int64_t>(n), res.height, res.width, 3}, torch::kUInt8);
  for (std::size_t i = 0; i < n; ++i) {
    const auto img = data::read_rgb_png(data::image_path(dataset.root(), dataset.split(), i));
    std::memcpy(bank[static_cast<std::int64_t>(i)].data_ptr<std::uint8_t>(), img.pixels.data(), img.pixels.size());
  }
  return bank.permute({0, 3, 1, 2}).contiguous();
}

json run_manifest(const ExperimentConfig& config, std::uint64_t seed, const SlotModel& model,
                  const data::DatasetManifest& dm, bool deterministic, const std::string& status, std::int64_t steps,
                  const std::string& message) {
  return {{"name", config.name},
          {"seed", seed},
          {"status", status},
          {"message", message},
          {"steps_completed", steps},
          {"max_steps", config.max_steps},
          {"model_kind", model.kind()},
          {"architecture", model.architecture()},
          {"resolution", {dm.resolution.height, dm.resolution.width}},
          {"dataset",
           {{"root", config.dataset_root.string()},
            {"name", dm.name},
            {"styled", dm.style.applied},
            {"style_hash", dm.style.style_hash}}},
          {"config", config.raw},
          {"deterministic", deterministic},
          {"threads", torch::get_num_threads()},
          {"nondeterminism",
           deterministic ? "deterministic algorithms enforced, single thread"
                         : "multi-threaded CPU reductions may differ in the last bits between runs"},
          {"eval_initialisation", eval_initialisation(model.kind())},
          {"torch_version", TORCH_VERSION}};
}

}  // namespace

TrainResult train(const ExperimentConfig& config, std::uint64_t seed, const fs::path& run_dir,
                  const TrainOptions& options) {
  config.validate();
  if (options.deterministic) {
    at::globalContext().setDeterministicAlgorithms(true, false);
    torch::set_num_threads(1);
  }
  fs::create_directories(run_dir / files::kCheckpoints);
  const auto train_set = data::Dataset::open(config.dataset_root, config.train_split);
  const auto eval_set = data::Dataset::open(config.dataset_root, config.eval_split);
  const auto& dm = train_set.manifest();

  torch::manual_seed(seed);
  auto model = build_model(config.model, dm.resolution.height, dm.resolution.width);
  model->reseed(seed ^ 0x9e3779b97f4a7c15ULL);
  model->train();
  auto optimizer = make_optimizer(config.optimizer, *model);

  std::int64_t step = 0;
  std::deque<double> window;
  const fs::path trace_path = run_dir / files::kLossTrace;
  const fs::path eval_path = run_dir / files::kEvalTrace;
  const fs::path latest = latest_checkpoint_path(run_dir);
  if (options.resume && fs::exists(latest)) {
    const auto ckpt = nn::load_checkpoint(latest);
    if (ckpt.architecture != model->architecture()) {
      throw ConfigError("cannot resume " + run_dir.string() + ": checkpoint architecture differs from the config");
    }
    nn::load_module_state(ckpt, *model);
    if (const auto* opt = ckpt.find("optimizer")) load_optimizer_bytes(*optimizer, *opt);
    if (const auto* rng = ckpt.find("rng/model")) model->set_rng_state(*rng);
    step = ckpt.meta.at("step").get<std::int64_t>();
    for (double v : ckpt.meta.value("loss_window", std::vector<double>{})) window.push_back(v);
    truncate_trace(trace_path, step);
    truncate_trace(eval_path, step);
  } else {
    fs::remove(trace_path);
    fs::remove(eval_path);
    fs::remove(run_dir / files::kMetrics);
  }

  write_json_file(run_dir / files::kManifest,
                  run_manifest(config, seed, *model, dm, options.deterministic, "running", step, ""));

  const auto bank = config.max_steps > step ? load_bank(train_set, config.train_limit) : torch::Tensor();
  const std::size_t n_train = bank.defined() ? static_cast<std::size_t>(bank.size(0)) : 0;
  std::ofstream trace(trace_path, std::ios::app);
  std::ofstream eval_trace(eval_path, std::ios::app);

  TrainResult result;
  result.run_dir = run_dir;
  result.status = "completed";
  std::int64_t done_here = 0;
  const auto started = std::chrono::steady_clock::now();

  while (step < config.max_steps) {
    if (options.stop_after >= 0 && done_here >= options.stop_after) {
      result.status = "interrupted";
      break;
    }
    const auto idx = batch_indices(seed, step, n_train, config.batch_size);
    std::vector<std::int64_t> idx64(idx.begin(), idx.end());
    auto images = bank.index_select(0, torch::tensor(idx64)).to(torch::kFloat32).div(255.0);
    const double lr = config.optimizer.rate_at(step);
    for (auto& group : optimizer->param_groups()) group.options().set_lr(lr);

    LossTerms loss;
    try {
      auto d = model->decompose(images);
      loss = model->loss(d, images);
    } catch (const NumericalError& e) {
      result.status = "unstable";
      result.message = std::string("non-finite loss at step ") + std::to_string(step + 1) + ": " + e.what();
      break;
    }
    const double value = loss.total.item<double>();
    if (static_cast<int>(window.size()) >= config.guard.min_history) {
      const double median = trailing_median(std::vector<double>(window.begin(), window.end()));
      if (value > config.guard.spike_factor * std::abs(median)) {
        result.status = "unstable";
        result.message = "loss spike at step " + std::to_string(step + 1) + ": " + std::to_string(value) + " > " +
                         std::to_string(config.guard.spike_factor) + " x trailing median " + std::to_string(median);
        break;
      }
    }

    optimizer->zero_grad();
    loss.total.backward();
    const double max_norm =
        config.optimizer.clip_norm > 0 ? config.optimizer.clip_norm : std::numeric_limits<double>::infinity();
    const double grad_norm = torch::nn::utils::clip_grad_norm_(model->parameters(), max_norm);
    optimizer->step();
    ++step;
    ++done_here;

    StepRecord rec;
    rec.step = step;
    rec.loss = value;
    for (const auto& [name, t] : loss.terms) rec.terms.emplace_back(name, t.item<double>());
    rec.learning_rate = lr;
    rec.grad_norm = grad_norm;
    if (step % config.log_every == 0 || step == config.max_steps) trace << rec.to_json().dump() << '\n' << std::flush;
    if (options.on_step) options.on_step(rec);
    window.push_back(value);
    while (static_cast<int>(window.size()) > config.guard.window) window.pop_front();

    if (step % config.eval_every == 0 && step < config.max_steps) {
      const auto m = evaluate_model(*model, eval_set, config.eval_samples, config.batch_size);
      json snap = m.to_json();
      snap["step"] = step;
      eval_trace << snap.dump() << '\n' << std::flush;
    }
    if (step % config.checkpoint_every == 0 && step < config.max_steps) {
      save_state(run_dir, *model, *optimizer, step, window, seed, "running");
    }
  }

  result.steps = step;
  save_state(run_dir, *model, *optimizer, step, window, seed, result.status);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  json metrics{{"status", result.status}, {"steps", step}, {"message", result.message}, {"seconds", seconds}};
  if (result.status != "interrupted") {
    try {
      result.metrics = evaluate_model(*model, eval_set, config.eval_samples, config.batch_size);
      metrics["eval"] = result.metrics.to_json();
      metrics["eval"]["split"] = std::string(data::split_name(config.eval_split));
      json snap = result.metrics.to_json();
      snap["step"] = step;
      eval_trace << snap.dump() << '\n' << std::flush;
    } catch (const NumericalError& e) {
      metrics["eval_error"] = e.what();
    }
    write_json_file(run_dir / files::kMetrics, metrics);
  }
  write_json_file(run_dir / files::kManifest, run_manifest(config, seed, *model, dm, options.deterministic,
                                                           result.status, step, result.message));
  return result;
}

}  // namespace slotbench::runner
