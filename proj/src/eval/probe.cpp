#include "slotbench/eval/probe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "slotbench/errors.hpp"

namespace slotbench::eval {

std::string probe_model_name(ProbeModel model) { return model == ProbeModel::kLinear ? "linear" : "mlp-256"; }

ProbeModel parse_probe_model(const std::string& name) {
  if (name == "linear") return ProbeModel::kLinear;
  if (name == "mlp-256" || name == "mlp") return ProbeModel::kMlp256;
  throw ConfigError("unknown probe model '" + name + "' (expected linear or mlp-256)");
}

std::string match_mode_name(MatchMode mode) { return mode == MatchMode::kLoss ? "loss" : "mask"; }

MatchMode parse_match_mode(const std::string& name) {
  if (name == "loss") return MatchMode::kLoss;
  if (name == "mask") return MatchMode::kMask;
  throw ConfigError("unknown matching mode '" + name + "' (expected loss or mask)");
}

void ProbeConfig::validate() const {
  if (features.empty()) throw ConfigError("probe needs at least one feature");
  if (epochs < 1 || batch_size < 1) throw ConfigError("probe epochs and batch size must be positive");
  if (!(learning_rate > 0)) throw ConfigError("probe learning rate must be positive");
  if (min_visibility < 0 || min_visibility > 1) throw ConfigError("probe min_visibility must be in [0, 1]");
}

nlohmann::json ProbeConfig::to_json() const {
  return {{"model", probe_model_name(model)},
          {"hidden_width", hidden_width()},
          {"matching", match_mode_name(matching)},
          {"features", features},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"min_visibility", min_visibility},
          {"seed", seed}};
}

TargetSchema::TargetSchema(const std::vector<data::FeatureSpec>& schema, const std::vector<std::string>& names) {
  for (const auto& name : names) {
    auto it = std::find_if(schema.begin(), schema.end(), [&](const data::FeatureSpec& f) { return f.name == name; });
    if (it == schema.end()) throw ConfigError("probe feature '" + name + "' is not in the dataset schema");
    Head h;
    h.name = name;
    h.output = output_size_;
    if (it->kind == data::FeatureSpec::Kind::kCategorical) {
      if (it->cardinality < 2) throw ConfigError("categorical feature '" + name + "' needs >= 2 classes");
      h.categorical = true;
      h.cardinality = it->cardinality;
      h.offset = num_categorical_++;
      output_size_ += h.cardinality;
    } else {
      h.dims = it->dims;
      h.offset = num_numeric_;
      num_numeric_ += h.dims;
      output_size_ += h.dims;
    }
    heads_.push_back(h);
  }
}

namespace {

std::vector<double> feature_values(const data::ObjectRecord& o, const std::string& name) {
  if (name == "shape") return {static_cast<double>(static_cast<int>(o.shape))};
  if (name == "color") return {o.color[0], o.color[1], o.color[2]};
  if (name == "x") return {o.x};
  if (name == "y") return {o.y};
  if (name == "scale") return {o.scale};
  if (name == "orientation") return {o.orientation};
  throw ConfigError("no object factor named '" + name + "'");
}

}  // namespace

std::pair<torch::Tensor, torch::Tensor> TargetSchema::encode(const data::SceneSpec& scene,
                                                             const std::vector<int>& objects) const {
  const auto n = static_cast<std::int64_t>(objects.size());
  auto cat = torch::zeros({n, num_categorical_}, torch::kInt64);
  auto num = torch::zeros({n, num_numeric_}, torch::kFloat64);
  auto c = cat.accessor<std::int64_t, 2>();
  auto v = num.accessor<double, 2>();
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& o = scene.objects.at(objects[i]);
    for (const auto& h : heads_) {
      const auto values = feature_values(o, h.name);
      if (h.categorical) {
        c[i][h.offset] = static_cast<std::int64_t>(values[0]);
      } else {
        if (static_cast<int>(values.size()) != h.dims) throw ConfigError("feature '" + h.name + "' has wrong dims");
        for (int d = 0; d < h.dims; ++d) v[i][h.offset + d] = values[d];
      }
    }
  }
  return {cat, num};
}

std::vector<int> visible_objects(const data::SceneSpec& scene, double min_visibility) {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(scene.objects.size()); ++i) {
    if (scene.objects[i].visibility >= min_visibility && scene.objects[i].visible_pixels > 0) out.push_back(i);
  }
  return out;
}

CostMatrix mask_cost(const data::LabelMap& labels, const torch::Tensor& masks, const std::vector<int>& objects) {
  if (masks.dim() != 3 || masks.size(1) != labels.height || masks.size(2) != labels.width) {
    throw ShapeError("mask_cost: masks " + c10::str(masks.sizes()) + " do not match the " +
                     std::to_string(labels.height) + "x" + std::to_string(labels.width) + " label map");
  }
  auto m = masks.to(torch::kFloat64).flatten(1);  // [K, P]
  auto lab = torch::from_blob(const_cast<std::uint8_t*>(labels.labels.data()),
                              {static_cast<std::int64_t>(labels.labels.size())}, torch::kUInt8)
                 .to(torch::kInt64);
  CostMatrix cost;
  for (int obj : objects) {
    auto gt = (lab == obj + 1).to(torch::kFloat64).unsqueeze(0);  // [1, P]
    auto row = (gt - m).abs().sum(1);
    auto acc = row.accessor<double, 1>();
    std::vector<double> r(acc.size(0));
    for (std::int64_t j = 0; j < acc.size(0); ++j) r[j] = acc[j];
    cost.push_back(std::move(r));
  }
  return cost;
}

ProbeScene make_probe_scene(const torch::Tensor& slots, const data::SceneSpec& scene, const TargetSchema& schema,
                            double min_visibility, const torch::Tensor& masks, const data::LabelMap* labels) {
  ProbeScene ps;
  ps.slots = slots.detach().to(torch::kFloat32).contiguous();
  ps.objects = visible_objects(scene, min_visibility);
  std::tie(ps.categorical, ps.numeric) = schema.encode(scene, ps.objects);
  if (masks.defined()) {
    if (labels == nullptr) throw InputError("mask matching needs the ground-truth label map");
    ps.mask_slot.assign(ps.objects.size(), -1);
    for (const auto& [i, j] : hungarian_match(mask_cost(*labels, masks, ps.objects)).pairs) ps.mask_slot[i] = j;
  }
  return ps;
}

ProbeNetImpl::ProbeNetImpl(int input_size, int hidden_width, int output_size) {
  int in = input_size;
  if (hidden_width > 0) {
    hidden_ = register_module("hidden", torch::nn::Linear(input_size, hidden_width));
    in = hidden_width;
  }
  head_ = register_module("head", torch::nn::Linear(in, output_size));
}

torch::Tensor ProbeNetImpl::forward(const torch::Tensor& x) {
  return head_->forward(hidden_ ? torch::relu(hidden_->forward(x)) : x);
}

TrainedProbe::TrainedProbe(ProbeConfig cfg, TargetSchema s, int input_size)
    : config(std::move(cfg)), schema(std::move(s)) {
  torch::manual_seed(config.seed);
  net = ProbeNet(input_size, config.hidden_width(), schema.output_size());
  numeric_mean = torch::zeros({schema.num_numeric()});
  numeric_std = torch::ones({schema.num_numeric()});
  input_mean = torch::zeros({input_size});
  input_std = torch::ones({input_size});
}

torch::Tensor TrainedProbe::forward(const torch::Tensor& slots) {
  return net->forward((slots - input_mean) / input_std);
}

torch::Tensor TrainedProbe::standardise(const torch::Tensor& numeric) const {
  return ((numeric.to(torch::kFloat32) - numeric_mean) / numeric_std);
}

torch::Tensor TrainedProbe::pair_losses(const torch::Tensor& predictions, const torch::Tensor& categorical,
                                        const torch::Tensor& numeric_std) const {
  // predictions [K, out], categorical [n, C], numeric_std [n, M] -> [n, K]
  const auto n = categorical.size(0);
  const auto k = predictions.size(0);
  auto total = torch::zeros({n, k}, predictions.options());
  for (const auto& h : schema.heads()) {
    if (h.categorical) {
      auto logp = torch::log_softmax(predictions.narrow(1, h.output, h.cardinality), 1);  // [K, c]
      total = total - logp.index_select(1, categorical.select(1, h.offset)).transpose(0, 1);
    } else {
      auto pred = predictions.narrow(1, h.output, h.dims);                 // [K, d]
      auto target = numeric_std.narrow(1, h.offset, h.dims);               // [n, d]
      total = total + (target.unsqueeze(1) - pred.unsqueeze(0)).pow(2).sum(2);
    }
  }
  return total;
}

namespace {

CostMatrix to_cost(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat64).contiguous();
  auto a = c.accessor<double, 2>();
  CostMatrix out(a.size(0), std::vector<double>(a.size(1)));
  for (std::int64_t i = 0; i < a.size(0); ++i) {
    for (std::int64_t j = 0; j < a.size(1); ++j) out[i][j] = a[i][j];
  }
  return out;
}

Assignment from_mask_slots(const ProbeScene& scene) {
  if (scene.mask_slot.size() != scene.objects.size()) {
    throw InputError("mask matching requested but the scene carries no mask assignment");
  }
  Assignment a;
  for (int i = 0; i < static_cast<int>(scene.mask_slot.size()); ++i) {
    if (scene.mask_slot[i] >= 0) a.pairs.emplace_back(i, scene.mask_slot[i]);
  }
  return a;
}

}  // namespace

CostMatrix TrainedProbe::loss_cost(const ProbeScene& scene) {
  torch::NoGradGuard guard;
  auto pred = forward(scene.slots);
  return to_cost(pair_losses(pred, scene.categorical, standardise(scene.numeric)));
}

Assignment TrainedProbe::match(const ProbeScene& scene) {
  if (config.matching == MatchMode::kMask) return from_mask_slots(scene);
  return hungarian_match(loss_cost(scene));
}

const FeatureMetric& ProbeReport::feature(const std::string& name) const {
  for (const auto& f : features) {
    if (f.name == name) return f;
  }
  throw InputError("probe report has no feature '" + name + "'");
}

nlohmann::json ProbeReport::to_json(bool include_assignments) const {
  nlohmann::json feats = nlohmann::json::array();
  for (const auto& f : features) {
    feats.push_back({{"name", f.name}, {"metric", f.metric}, {"value", f.value}, {"baseline", f.baseline}});
  }
  nlohmann::json j{{"config", config.to_json()},
                   {"features", feats},
                   {"scenes", scenes},
                   {"objects", objects},
                   {"matched", matched},
                   {"unmatched", unmatched},
                   {"mean_assignment_cost", mean_assignment_cost}};
  if (include_assignments) j["assignments"] = assignments;
  return j;
}

TrainedProbe probe_train(const std::vector<ProbeScene>& scenes, const TargetSchema& schema, const ProbeConfig& config) {
  config.validate();
  if (scenes.empty()) throw InputError("probe training split is empty");
  const auto input_size = static_cast<int>(scenes.front().slots.size(1));
  TrainedProbe probe(config, schema, input_size);

  std::vector<torch::Tensor> all_numeric, all_slots;
  for (const auto& s : scenes) {
    if (s.slots.dim() != 2 || s.slots.size(1) != input_size) throw ShapeError("probe scenes differ in slot size");
    if (s.numeric.size(0) > 0) all_numeric.push_back(s.numeric);
    all_slots.push_back(s.slots);
  }
  {
    auto stacked = torch::cat(all_slots);
    probe.input_mean = stacked.mean(0);
    auto sd = stacked.size(0) > 1 ? stacked.std(0) : torch::ones({input_size});
    probe.input_std = torch::where(sd > 1e-6, sd, torch::ones_like(sd));
  }
  if (all_numeric.empty()) throw InputError("probe training split has no visible objects");
  if (schema.num_numeric() > 0) {
    auto stacked = torch::cat(all_numeric).to(torch::kFloat32);
    probe.numeric_mean = stacked.mean(0);
    auto sd = stacked.size(0) > 1 ? stacked.std(0) : torch::ones({schema.num_numeric()});
    probe.numeric_std = torch::where(sd > 1e-12, sd, torch::ones_like(sd));
  }

  torch::optim::Adam optimizer(probe.net->parameters(), torch::optim::AdamOptions(config.learning_rate));
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), 0);
  probe.net->train();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Cosine schedule over epochs, so the final probe is not sitting on Adam noise.
    const double lr = config.learning_rate * 0.5 * (1.0 + std::cos(M_PI * epoch / config.epochs));
    for (auto& group : optimizer.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<torch::Tensor> losses;
      for (std::size_t b = start; b < end; ++b) {
        const auto& s = scenes[order[b]];
        if (s.objects.empty()) continue;
        auto pred = probe.forward(s.slots);
        auto pair = probe.pair_losses(pred, s.categorical, probe.standardise(s.numeric));
        Assignment a = config.matching == MatchMode::kLoss ? hungarian_match(to_cost(pair)) : from_mask_slots(s);
        for (const auto& [i, j] : a.pairs) losses.push_back(pair[i][j]);
      }
      if (losses.empty()) continue;
      auto loss = torch::stack(losses).mean();
      optimizer.zero_grad();
      loss.backward();
      optimizer.step();
    }
  }
  probe.net->eval();
  return probe;
}

Assignment match_slots(const SlotDecomposition& decomposition, std::int64_t index, const data::RenderedSample& sample,
                       MatchMode mode, TrainedProbe* probe, double min_visibility) {
  Assignment a;
  std::vector<int> objects;
  if (mode == MatchMode::kMask) {
    objects = visible_objects(sample.metadata, min_visibility);
    a = hungarian_match(mask_cost(sample.label_map, decomposition.masks[index], objects));
  } else {
    if (probe == nullptr) throw InputError("loss matching needs a trained probe");
    auto scene = make_probe_scene(decomposition.representations()[index], sample.metadata, probe->schema,
                                  min_visibility);
    objects = scene.objects;
    a = hungarian_match(probe->loss_cost(scene));
  }
  for (auto& [i, j] : a.pairs) i = objects[i];
  return a;
}

double r_squared(const torch::Tensor& prediction, const torch::Tensor& target) {
  auto p = prediction.to(torch::kFloat64);
  auto t = target.to(torch::kFloat64);
  const double ss_res = (t - p).pow(2).sum().item<double>();
  const double ss_tot = (t - t.mean()).pow(2).sum().item<double>();
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

ProbeReport probe_eval(TrainedProbe& probe, const std::vector<ProbeScene>& scenes) {
  if (scenes.empty()) throw InputError("probe evaluation split is empty");
  torch::NoGradGuard guard;
  probe.net->eval();
  ProbeReport report;
  report.config = probe.config;
  report.scenes = scenes.size();

  std::vector<torch::Tensor> preds, cats, nums;
  double cost_sum = 0.0;
  for (const auto& s : scenes) {
    report.objects += s.objects.size();
    std::vector<std::pair<int, int>> pairs;
    if (!s.objects.empty()) {
      auto pred = probe.forward(s.slots);
      Assignment a = probe.match(s);
      auto pair = probe.pair_losses(pred, s.categorical, probe.standardise(s.numeric));
      for (const auto& [i, j] : a.pairs) {
        preds.push_back(pred[j]);
        cats.push_back(s.categorical[i]);
        nums.push_back(s.numeric[i]);
        cost_sum += pair[i][j].item<double>();
        pairs.emplace_back(s.objects[i], j);
      }
      report.matched += a.pairs.size();
    }
    report.assignments.push_back(std::move(pairs));
  }
  report.unmatched = report.objects - report.matched;
  if (report.matched == 0) throw InputError("probe evaluation found no matched objects");
  report.mean_assignment_cost = cost_sum / static_cast<double>(report.matched);

  auto p = torch::stack(preds);
  auto c = torch::stack(cats);
  auto n = torch::stack(nums).to(torch::kFloat32);
  for (const auto& h : probe.schema.heads()) {
    FeatureMetric m;
    m.name = h.name;
    if (h.categorical) {
      auto predicted = p.narrow(1, h.output, h.cardinality).argmax(1);
      m.metric = "accuracy";
      m.value = (predicted == c.select(1, h.offset)).to(torch::kFloat64).mean().item<double>();
      m.baseline = 1.0 / h.cardinality;
    } else {
      // Predictions live in standardised units; map back before scoring.
      auto raw = p.narrow(1, h.output, h.dims) * probe.numeric_std.narrow(0, h.offset, h.dims) +
                 probe.numeric_mean.narrow(0, h.offset, h.dims);
      double sum = 0.0;
      for (int d = 0; d < h.dims; ++d) sum += r_squared(raw.select(1, d), n.select(1, h.offset + d));
      m.metric = "r2";
      m.value = sum / h.dims;
      m.baseline = 0.0;
    }
    report.features.push_back(m);
  }
  return report;
}

}  // namespace slotbench::eval
