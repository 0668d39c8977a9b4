#include "slotbench/runner/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "slotbench/errors.hpp"
#include "slotbench/eval/correlation.hpp"
#include "slotbench/runner/plot.hpp"
#include "slotbench/runner/run_dir.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace slotbench::runner {

RunSummary RunSummary::load(const fs::path& run_dir) {
  const auto manifest = read_json_file(run_dir / files::kManifest);
  RunSummary r;
  r.dir = run_dir;
  r.name = manifest.value("name", run_dir.filename().string());
  r.kind = manifest.value("model_kind", "");
  r.seed = manifest.value("seed", std::uint64_t{0});
  r.status = manifest.value("status", "unknown");
  r.steps = manifest.value("steps_completed", std::int64_t{0});
  if (manifest.contains("config") && manifest["config"].contains("model")) {
    const auto& m = manifest["config"]["model"];
    r.latent_size = m.value(r.kind == "monet" ? "latent_size" : "slot_size", 0);
  }
  // The evaluate verb's report takes precedence over the end-of-training snapshot.
  if (fs::exists(run_dir / files::kReport)) {
    const auto rep = read_json_file(run_dir / files::kReport);
    r.ari = rep.at("metrics").at("ari").get<double>();
    r.mse = rep.at("metrics").at("mse").get<double>();
  } else if (fs::exists(run_dir / files::kMetrics)) {
    const auto m = read_json_file(run_dir / files::kMetrics);
    if (m.contains("eval")) {
      r.ari = m["eval"].at("ari").get<double>();
      r.mse = m["eval"].at("mse").get<double>();
    }
  }
  if (fs::exists(run_dir / files::kProbeReport)) {
    const auto p = read_json_file(run_dir / files::kProbeReport);
    for (const auto& res : p.at("results")) {
      auto& scores = r.probes[res.at("probe").get<std::string>() + "/" + res.at("matching").get<std::string>()];
      for (const auto& f : res.at("report").at("features")) {
        scores[f.at("name").get<std::string>()] = {f.at("metric").get<std::string>(), f.at("value").get<double>(),
                                                   f.at("baseline").get<double>()};
      }
    }
  }
  return r;
}

std::vector<RunSummary> collect_runs(const std::vector<fs::path>& inputs) {
  std::vector<fs::path> dirs;
  for (const auto& in : inputs) {
    if (!fs::is_directory(in)) throw InputError("report input is not a directory: " + in.string());
    if (fs::exists(in / files::kManifest)) {
      dirs.push_back(in);
      continue;
    }
    const fs::path root = fs::is_directory(in / "runs") ? in / "runs" : in;
    std::vector<fs::path> found;
    for (const auto& e : fs::directory_iterator(root)) {
      if (e.is_directory() && fs::exists(e.path() / files::kManifest)) found.push_back(e.path());
    }
    std::sort(found.begin(), found.end());
    dirs.insert(dirs.end(), found.begin(), found.end());
  }
  std::vector<RunSummary> runs;
  for (const auto& d : dirs) runs.push_back(RunSummary::load(d));
  return runs;
}

double median(std::vector<double> values) {
  if (values.empty()) throw InputError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

double statistic_of(const std::vector<double>& v, Statistic s) {
  if (s == Statistic::kMedian) return median(v);
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

double quantile(std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const std::size_t j = std::min(i + 1, sorted.size() - 1);
  return sorted[i] + (pos - static_cast<double>(i)) * (sorted[j] - sorted[i]);
}

}  // namespace

Interval bootstrap_ci(const std::vector<double>& values, Statistic statistic, int resamples, std::uint64_t seed,
                      double level) {
  if (values.empty()) throw InputError("bootstrap over an empty set");
  if (resamples < 1 || !(level > 0.0 && level < 1.0)) throw InputError("invalid bootstrap settings");
  Interval out;
  out.center = statistic_of(values, statistic);
  if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); })) {
    out.lo = out.hi = out.center;
    return out;
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> stats(resamples), draw(values.size());
  for (int r = 0; r < resamples; ++r) {
    for (auto& d : draw) d = values[pick(rng)];
    stats[r] = statistic_of(draw, statistic);
  }
  std::sort(stats.begin(), stats.end());
  const double tail = (1.0 - level) / 2.0;
  out.lo = quantile(stats, tail);
  out.hi = quantile(stats, 1.0 - tail);
  return out;
}

namespace {

json interval_json(const Interval& i, std::size_t n) {
  return {{"center", i.center}, {"lo", i.lo}, {"hi", i.hi}, {"seeds", n}};
}

struct Group {
  std::string name;
  std::string kind;
  int latent_size = 0;
  std::vector<const RunSummary*> runs;
};

std::string safe(std::string s) {
  for (auto& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return s;
}

}  // namespace

ReportResult write_report(const std::vector<RunSummary>& runs, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  ReportResult result;
  auto warn = [&](std::string w) { result.warnings.push_back(std::move(w)); };

  std::vector<const RunSummary*> done;
  for (const auto& r : runs) {
    if (r.status == "completed" && r.ari && r.mse) {
      done.push_back(&r);
    } else {
      warn("skipping " + r.dir.string() + " (status " + r.status + ")");
    }
  }
  if (done.size() < 3) warn("only " + std::to_string(done.size()) + " completed runs; correlations need at least 3");

  std::vector<Group> groups;
  for (const auto* r : done) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) { return g.name == r->name; });
    if (it == groups.end()) {
      groups.push_back({r->name, r->kind, r->latent_size, {}});
      it = std::prev(groups.end());
    }
    it->runs.push_back(r);
  }

  std::set<std::string> combos, features;
  for (const auto* r : done) {
    for (const auto& [combo, scores] : r->probes) {
      combos.insert(combo);
      for (const auto& [f, s] : scores) features.insert(f);
    }
  }

  // Segmentation bars and probe bars: median over seeds with bootstrap CI.
  json group_json = json::array();
  plot::BarChart ari_chart{"Foreground ARI (median over seeds, 95% CI)", "ARI", {}, {}, {}, {}};
  plot::BarChart mse_chart{"MSE (median over seeds, 95% CI)", "MSE", {}, {}, {}, {}};
  std::map<std::string, plot::BarChart> probe_charts;
  for (const auto& g : groups) {
    std::vector<double> ari, mse;
    for (const auto* r : g.runs) {
      ari.push_back(*r->ari);
      mse.push_back(*r->mse);
    }
    const auto ci_ari = bootstrap_ci(ari, Statistic::kMedian);
    const auto ci_mse = bootstrap_ci(mse, Statistic::kMedian);
    ari_chart.bars.push_back({g.name, ci_ari.center, ci_ari.lo, ci_ari.hi});
    mse_chart.bars.push_back({g.name, ci_mse.center, ci_mse.lo, ci_mse.hi});
    json gj{{"name", g.name},
            {"kind", g.kind},
            {"latent_size", g.latent_size},
            {"ari", interval_json(ci_ari, ari.size())},
            {"mse", interval_json(ci_mse, mse.size())}};
    json probes = json::object();
    for (const auto& combo : combos) {
      for (const auto& f : features) {
        std::vector<double> v;
        ProbeScore last;
        for (const auto* r : g.runs) {
          auto c = r->probes.find(combo);
          if (c == r->probes.end() || !c->second.count(f)) continue;
          last = c->second.at(f);
          v.push_back(last.value);
        }
        if (v.empty()) continue;
        const auto ci = bootstrap_ci(v, Statistic::kMedian);
        auto j = interval_json(ci, v.size());
        j["metric"] = last.metric;
        j["baseline"] = last.baseline;
        probes[combo][f] = j;
        auto& chart = probe_charts[combo + ":" + f];
        chart.title = f + " (" + combo + ")";
        chart.y_label = last.metric;
        chart.baseline = last.baseline;
        if (last.metric == "accuracy") {
          chart.y_min = 0.0;
          chart.y_max = 1.0;
        }
        chart.bars.push_back({g.name, ci.center, ci.lo, ci.hi});
      }
    }
    gj["probes"] = probes;
    group_json.push_back(gj);
  }
  if (!groups.empty()) {
    plot::write_svg(out_dir / "ari_by_config.svg", ari_chart);
    plot::write_svg(out_dir / "mse_by_config.svg", mse_chart);
    result.artifacts.push_back(out_dir / "ari_by_config.svg");
    result.artifacts.push_back(out_dir / "mse_by_config.svg");
  }
  if (combos.empty()) warn("no probe reports found; probe bars and correlations skipped");
  for (const auto& [key, chart] : probe_charts) {
    const auto p = out_dir / ("probe_" + safe(key) + ".svg");
    plot::write_svg(p, chart);
    result.artifacts.push_back(p);
  }

  // Correlation of segmentation metrics with probe performance over all runs.
  json correlations = json::array();
  for (auto kind : {eval::CorrelationKind::kSpearman, eval::CorrelationKind::kPearson}) {
    plot::Heatmap map;
    map.title = eval::correlation_name(kind) + " correlation with downstream performance";
    map.cols.assign(features.begin(), features.end());
    for (const std::string metric : {"ARI", "MSE"}) {
      for (const auto& combo : combos) {
        map.rows.push_back(metric + " | " + combo);
        std::vector<std::optional<double>> row;
        for (const auto& f : features) {
          std::vector<double> x, y;
          for (const auto* r : done) {
            auto c = r->probes.find(combo);
            if (c == r->probes.end() || !c->second.count(f)) continue;
            x.push_back(metric == "ARI" ? *r->ari : *r->mse);
            y.push_back(c->second.at(f).value);
          }
          json entry{{"correlation", eval::correlation_name(kind)},
                     {"metric", metric},
                     {"combo", combo},
                     {"feature", f},
                     {"runs", x.size()},
                     {"value", nullptr}};
          std::optional<double> value;
          if (x.size() >= 3) {
            try {
              value = eval::rank_correlation(x, y, kind);
              entry["value"] = *value;
            } catch (const UndefinedResultError& e) {
              entry["note"] = e.what();
            }
          } else {
            entry["note"] = "fewer than 3 runs";
          }
          row.push_back(value);
          correlations.push_back(entry);
        }
        map.values.push_back(row);
      }
    }
    if (!combos.empty() && done.size() >= 3) {
      const auto p = out_dir / (kind == eval::CorrelationKind::kSpearman ? "spearman_heatmap.svg" : "pearson_heatmap.svg");
      plot::write_svg(p, map);
      result.artifacts.push_back(p);
    }
  }
  write_json_file(out_dir / "correlations.json", correlations);
  result.artifacts.push_back(out_dir / "correlations.json");

  // Metric against latent size: mean over seeds with bootstrap CI per model kind.
  std::map<std::string, std::map<int, std::vector<const RunSummary*>>> by_latent;
  for (const auto* r : done) {
    if (r->latent_size > 0) by_latent[r->kind][r->latent_size].push_back(r);
  }
  bool any_sweep = false;
  for (const auto& [kind, sizes] : by_latent) any_sweep = any_sweep || sizes.size() >= 2;
  if (any_sweep) {
    for (const std::string metric : {"ari", "mse"}) {
      plot::LinePlot line{metric == "ari" ? "Foreground ARI vs latent size" : "MSE vs latent size", "latent size",
                          metric == "ari" ? "ARI" : "MSE", true, {}};
      for (const auto& [kind, sizes] : by_latent) {
        if (sizes.size() < 2) continue;
        plot::Series s;
        s.name = kind;
        for (const auto& [size, rs] : sizes) {
          std::vector<double> v;
          for (const auto* r : rs) v.push_back(metric == "ari" ? *r->ari : *r->mse);
          const auto ci = bootstrap_ci(v, Statistic::kMean);
          s.x.push_back(size);
          s.y.push_back(ci.center);
          s.lo.push_back(ci.lo);
          s.hi.push_back(ci.hi);
        }
        line.series.push_back(s);
      }
      const auto p = out_dir / ("latent_size_" + metric + ".svg");
      plot::write_svg(p, line);
      result.artifacts.push_back(p);
    }
  } else {
    warn("fewer than two latent sizes per model; latent-size plot skipped");
  }

  // Downstream performance against ARI, one panel per feature.
  if (!combos.empty()) {
    std::vector<plot::ScatterPanel> panels;
    for (const auto& f : features) {
      plot::ScatterPanel panel{f, "ARI", "", {}};
      for (const auto& combo : combos) {
        plot::Series s;
        s.name = combo;
        for (const auto* r : done) {
          auto c = r->probes.find(combo);
          if (c == r->probes.end() || !c->second.count(f)) continue;
          s.x.push_back(*r->ari);
          s.y.push_back(c->second.at(f).value);
          panel.y_label = c->second.at(f).metric;
        }
        panel.series.push_back(s);
      }
      panels.push_back(panel);
    }
    plot::write_svg(out_dir / "ari_vs_probe_scatter.svg", panels);
    result.artifacts.push_back(out_dir / "ari_vs_probe_scatter.svg");
  }

  json run_list = json::array();
  for (const auto& r : runs) {
    json j{{"dir", r.dir.string()}, {"name", r.name},     {"kind", r.kind},
           {"seed", r.seed},        {"status", r.status}, {"steps", r.steps}};
    if (r.ari) j["ari"] = *r.ari;
    if (r.mse) j["mse"] = *r.mse;
    run_list.push_back(j);
  }
  std::vector<std::string> artifact_names;
  for (const auto& a : result.artifacts) artifact_names.push_back(a.filename().string());
  artifact_names.push_back("summary.json");
  result.summary = {{"runs", run_list},
                    {"completed_runs", done.size()},
                    {"groups", group_json},
                    {"aggregation", "median over seeds"},
                    {"ci", {{"method", "percentile bootstrap over seeds"},
                            {"resamples", 10000},
                            {"level", 0.95},
                            {"seed", kCiSeed}}},
                    {"warnings", result.warnings},
                    {"artifacts", artifact_names}};
  write_json_file(out_dir / "summary.json", result.summary);
  result.artifacts.push_back(out_dir / "summary.json");
  return result;
}

}  // namespace slotbench::runner
