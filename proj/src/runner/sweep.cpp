#include "slotbench/runner/sweep.hpp"

#include <spawn.h>
#include <sys/wait.h>
#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <deque>
#include <fstream>
#include <map>
#include <set>

#include "slotbench/errors.hpp"
#include "slotbench/runner/config.hpp"
#include "slotbench/runner/run_dir.hpp"

extern char** environ;

namespace fs = std::filesystem;
using nlohmann::json;

namespace slotbench::runner {

void SweepSpec::validate() const {
  if (name.empty()) throw ConfigError("sweep.name is required");
  if (mode != "full-grid" && mode != "paired") throw ConfigError("sweep.mode must be full-grid or paired");
  if (seeds.empty()) throw ConfigError("sweep.seeds must not be empty");
  if (variants.empty()) throw ConfigError("sweep needs at least one variant");
  for (const auto& s : stages) {
    if (s != "train" && s != "evaluate" && s != "probe") throw ConfigError("unknown sweep stage '" + s + "'");
  }
  for (const auto& v : variants) {
    std::map<std::string, std::size_t> lengths;
    for (const auto& a : v.axes) {
      if (a.values.empty()) throw ConfigError("sweep axis '" + a.path + "' has no values");
      if (!lengths.emplace(a.path, a.values.size()).second) {
        throw ConfigError("sweep axis '" + a.path + "' listed twice in variant '" + v.label + "'");
      }
    }
    std::vector<std::vector<std::string>> groups = v.paired;
    if (mode == "paired" && !v.axes.empty()) {
      groups.assign(1, {});
      for (const auto& a : v.axes) groups[0].push_back(a.path);
    }
    std::set<std::string> seen;
    for (const auto& g : groups) {
      for (const auto& p : g) {
        if (!lengths.count(p)) throw ConfigError("paired axis '" + p + "' is not an axis of '" + v.label + "'");
        if (!seen.insert(p).second) throw ConfigError("axis '" + p + "' appears in two paired groups");
        if (lengths.at(p) != lengths.at(g.front())) {
          throw ConfigError("paired axes '" + g.front() + "' and '" + p + "' differ in length");
        }
      }
    }
  }
}

SweepSpec SweepSpec::from_json(const json& preset, const fs::path& base_dir) {
  if (!preset.contains("sweep")) throw ConfigError("preset has no 'sweep' section");
  const json& s = preset.at("sweep");
  SweepSpec spec;
  try {
    spec.name = s.at("name").get<std::string>();
    spec.mode = s.value("mode", spec.mode);
    spec.seeds = s.value("seeds", spec.seeds);
    spec.stages = s.value("stages", spec.stages);
    for (const auto& vj : s.at("variants")) {
      SweepVariant v;
      v.label = vj.at("label").get<std::string>();
      v.base = vj.contains("base") ? load_config_file(base_dir / vj.at("base").get<std::string>()) : json::object();
      if (vj.contains("config")) deep_merge(v.base, vj.at("config"));
      for (const auto& aj : vj.value("axes", json::array())) {
        v.axes.push_back({aj.at("path").get<std::string>(), aj.at("values").get<std::vector<json>>()});
      }
      v.paired = vj.value("paired", v.paired);
      spec.variants.push_back(std::move(v));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed sweep preset: ") + e.what());
  }
  spec.validate();
  return spec;
}

namespace {

std::string value_tag(const json& v) {
  std::string s = v.is_string() ? v.get<std::string>() : v.dump();
  if (v.is_string()) s = fs::path(s).filename().string();
  return s;
}

std::string last_component(const std::string& path) {
  const auto dot = path.rfind('.');
  return dot == std::string::npos ? path : path.substr(dot + 1);
}

}  // namespace

std::vector<RunPlan> expand(const SweepSpec& spec) {
  spec.validate();
  std::vector<RunPlan> plan;
  for (const auto& v : spec.variants) {
    // Build groups: each paired group is one dimension, remaining axes are singletons.
    std::vector<std::vector<std::string>> groups = v.paired;
    if (spec.mode == "paired" && !v.axes.empty()) {
      groups.assign(1, {});
      for (const auto& a : v.axes) groups[0].push_back(a.path);
    }
    std::set<std::string> grouped;
    for (const auto& g : groups) grouped.insert(g.begin(), g.end());
    std::vector<std::vector<std::string>> dims;
    for (const auto& a : v.axes) {
      if (grouped.count(a.path)) {
        for (const auto& g : groups) {
          if (g.front() == a.path) dims.push_back(g);
        }
      } else {
        dims.push_back({a.path});
      }
    }
    auto axis = [&](const std::string& path) -> const SweepAxis& {
      for (const auto& a : v.axes) {
        if (a.path == path) return a;
      }
      throw ConfigError("unknown axis " + path);
    };
    std::size_t total = 1;
    for (const auto& d : dims) total *= axis(d.front()).values.size();

    for (std::size_t combo = 0; combo < total; ++combo) {
      json overrides = json::object();
      std::size_t rest = combo;
      // Last dimension varies fastest.
      std::vector<std::size_t> pick(dims.size());
      for (std::size_t d = dims.size(); d-- > 0;) {
        const std::size_t n = axis(dims[d].front()).values.size();
        pick[d] = rest % n;
        rest /= n;
      }
      std::string name = v.label;
      for (std::size_t d = 0; d < dims.size(); ++d) {
        for (const auto& path : dims[d]) {
          const json& value = axis(path).values[pick[d]];
          overrides[path] = value;
          name += "-" + last_component(path) + "=" + value_tag(value);
        }
      }
      for (auto seed : spec.seeds) {
        RunPlan r;
        char id[160];
        std::snprintf(id, sizeof(id), "%s-%03zu-s%llu", v.label.c_str(), combo, static_cast<unsigned long long>(seed));
        r.id = id;
        r.variant = v.label;
        r.seed = seed;
        r.overrides = overrides;
        r.config = v.base;
        for (const auto& [path, value] : overrides.items()) set_path(r.config, path, value);
        set_path(r.config, "experiment.name", name);
        set_path(r.config, "experiment.seeds", json::array({seed}));
        plan.push_back(std::move(r));
      }
    }
  }
  return plan;
}

namespace {

struct Job {
  std::size_t run = 0;
  std::size_t stage = 0;
};

pid_t spawn(const std::vector<std::string>& args, const fs::path& log) {
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, log.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  posix_spawn_file_actions_adddup2(&actions, STDOUT_FILENO, STDERR_FILENO);
  std::vector<char*> argv;
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  pid_t pid = 0;
  const int rc = posix_spawn(&pid, argv[0], &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) throw StorageError("cannot start " + args[0] + ": " + std::strerror(rc));
  return pid;
}

}  // namespace

json run_sweep(const SweepSpec& spec, const fs::path& out_dir, const SweepOptions& options) {
  auto plan = expand(spec);
  for (auto& r : plan) {
    for (const auto& o : options.overrides) apply_override(r.config, o);
  }
  fs::create_directories(out_dir / "runs");
  json list = json::array();
  for (const auto& r : plan) {
    list.push_back({{"id", r.id}, {"variant", r.variant}, {"seed", r.seed}, {"overrides", r.overrides}});
  }
  write_json_file(out_dir / "plan.json", {{"sweep", spec.name},
                                          {"mode", spec.mode},
                                          {"seeds", spec.seeds},
                                          {"stages", spec.stages},
                                          {"run_count", plan.size()},
                                          {"runs", list}});
  if (options.plan_only) return {{"sweep", spec.name}, {"run_count", plan.size()}, {"runs", list}};

  const fs::path exe = options.executable.empty() ? fs::read_symlink("/proc/self/exe") : options.executable;
  for (const auto& r : plan) {
    const fs::path dir = out_dir / "runs" / r.id;
    fs::create_directories(dir);
    write_json_file(dir / "config.json", r.config);
  }
  auto stage_args = [&](const RunPlan& r, const std::string& stage) {
    const fs::path dir = out_dir / "runs" / r.id;
    std::vector<std::string> args{exe.string(), stage};
    if (stage == "train") {
      args.insert(args.end(), {"--config", (dir / "config.json").string(), "--seed", std::to_string(r.seed), "--out",
                               dir.string(), "--profile", options.profile});
      if (options.deterministic) args.push_back("--deterministic");
    } else {
      args.insert(args.end(), {"--run", dir.string()});
    }
    return args;
  };

  std::map<pid_t, Job> running;
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < plan.size(); ++i) queue.push_back(i);
  std::vector<std::string> failure(plan.size());
  const int parallel = std::max(1, options.parallelism);
  auto start = [&](const Job& job) {
    const auto& r = plan[job.run];
    const auto& stage = spec.stages[job.stage];
    const pid_t pid = spawn(stage_args(r, stage), out_dir / "runs" / r.id / (stage + ".log"));
    running.emplace(pid, job);
  };
  while (!queue.empty() || !running.empty()) {
    while (!queue.empty() && static_cast<int>(running.size()) < parallel) {
      const std::size_t i = queue.front();
      queue.pop_front();
      if (spec.stages.empty()) continue;
      try {
        start({i, 0});
      } catch (const Error& e) {
        failure[i] = e.what();
      }
    }
    if (running.empty()) continue;
    int status = 0;
    const pid_t pid = waitpid(-1, &status, 0);
    if (pid < 0) break;
    auto it = running.find(pid);
    if (it == running.end()) continue;
    const Job job = it->second;
    running.erase(it);
    const bool ok = WIFEXITED(status) && WEXITSTATUS(status) == 0;
    if (!ok) {
      failure[job.run] = spec.stages[job.stage] + " failed (" +
                         (WIFEXITED(status) ? "exit " + std::to_string(WEXITSTATUS(status))
                                            : "signal " + std::to_string(WTERMSIG(status))) +
                         "), see " + spec.stages[job.stage] + ".log";
    } else if (job.stage + 1 < spec.stages.size()) {
      try {
        start({job.run, job.stage + 1});
      } catch (const Error& e) {
        failure[job.run] = e.what();
      }
    }
  }
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (!failure[i].empty()) {
      write_json_file(out_dir / "runs" / plan[i].id / "failure.json", {{"id", plan[i].id}, {"error", failure[i]}});
    }
  }
  return aggregate_sweep(out_dir, plan);
}

json aggregate_sweep(const fs::path& out_dir, const std::vector<RunPlan>& plan) {
  std::vector<std::string> axes;
  for (const auto& r : plan) {
    for (const auto& [path, value] : r.overrides.items()) {
      if (std::find(axes.begin(), axes.end(), path) == axes.end()) axes.push_back(path);
    }
  }
  json rows = json::array();
  for (const auto& r : plan) {
    const fs::path dir = out_dir / "runs" / r.id;
    json row{{"id", r.id}, {"variant", r.variant}, {"seed", r.seed}, {"overrides", r.overrides}};
    row["status"] = "missing";
    if (fs::exists(dir / files::kManifest)) {
      const auto m = read_json_file(dir / files::kManifest);
      row["status"] = m.value("status", "unknown");
      row["steps"] = m.value("steps_completed", 0);
    }
    if (fs::exists(dir / files::kMetrics)) {
      const auto m = read_json_file(dir / files::kMetrics);
      if (m.contains("eval")) {
        row["ari"] = m["eval"].value("ari", 0.0);
        row["mse"] = m["eval"].value("mse", 0.0);
      }
    }
    if (fs::exists(dir / "failure.json")) {
      row["status"] = "failed";
      row["error"] = read_json_file(dir / "failure.json").value("error", "");
    }
    rows.push_back(row);
  }
  json table{{"axes", axes}, {"rows", rows}};
  write_json_file(out_dir / "aggregate.json", table);

  std::ofstream csv(out_dir / "aggregate.csv", std::ios::trunc);
  csv << "id,variant,seed";
  for (const auto& a : axes) csv << ',' << a;
  csv << ",status,steps,ari,mse\n";
  for (const auto& row : rows) {
    csv << row["id"].get<std::string>() << ',' << row["variant"].get<std::string>() << ',' << row["seed"].dump();
    for (const auto& a : axes) {
      csv << ',';
      if (row["overrides"].contains(a)) {
        const auto& v = row["overrides"][a];
        csv << (v.is_string() ? v.get<std::string>() : v.dump());
      }
    }
    csv << ',' << row["status"].get<std::string>() << ',' << (row.contains("steps") ? row["steps"].dump() : "")
        << ',' << (row.contains("ari") ? row["ari"].dump() : "") << ','
        << (row.contains("mse") ? row["mse"].dump() : "") << '\n';
  }
  return table;
}

}  // namespace slotbench::runner
