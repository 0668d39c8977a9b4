#include "slotbench/runner/config.hpp"

#include <cmath>
#include <set>

#include <yaml-cpp/yaml.h>

#include "slotbench/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace slotbench::runner {

namespace {

json scalar_to_json(const YAML::Node& node) {
  const std::string& text = node.Scalar();
  if (node.Tag() == "!") return text;  // quoted
  if (text == "~" || text == "null" || text == "Null" || text == "NULL" || text.empty()) return nullptr;
  if (text == "true" || text == "True" || text == "TRUE") return true;
  if (text == "false" || text == "False" || text == "FALSE") return false;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used, 10);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  return text;
}

json to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Scalar:
      return scalar_to_json(node);
    case YAML::NodeType::Sequence: {
      json out = json::array();
      for (const auto& item : node) out.push_back(to_json(item));
      return out;
    }
    case YAML::NodeType::Map: {
      json out = json::object();
      for (const auto& kv : node) out[kv.first.as<std::string>()] = to_json(kv.second);
      return out;
    }
  }
  return nullptr;
}

std::vector<std::string> split_path(const std::string& dotted) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : dotted) {
    if (c == '.') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  for (const auto& p : parts) {
    if (p.empty()) throw ConfigError("malformed config path '" + dotted + "'");
  }
  return parts;
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a mapping");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace

json parse_yaml(const std::string& text) {
  try {
    return to_json(YAML::Load(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("YAML parse error: ") + e.what());
  }
}

json load_config_file(const fs::path& path) {
  YAML::Node node;
  try {
    node = YAML::LoadFile(path.string());
  } catch (const YAML::BadFile&) {
    throw ConfigError("cannot read config file " + path.string());
  } catch (const YAML::Exception& e) {
    throw ConfigError("YAML parse error in " + path.string() + ": " + e.what());
  }
  json config = to_json(node);
  if (config.is_null()) config = json::object();
  if (!config.is_object()) throw ConfigError("config " + path.string() + " must be a mapping");
  if (config.contains("base")) {
    const fs::path parent = path.parent_path() / config.at("base").get<std::string>();
    json merged = load_config_file(parent);
    config.erase("base");
    deep_merge(merged, config);
    return merged;
  }
  return config;
}

void deep_merge(json& base, const json& overlay) {
  if (base.is_object() && overlay.is_object()) {
    for (const auto& [key, value] : overlay.items()) {
      if (base.contains(key)) {
        deep_merge(base[key], value);
      } else {
        base[key] = value;
      }
    }
  } else {
    base = overlay;
  }
}

void set_path(json& config, const std::string& dotted_path, const json& value) {
  json* node = &config;
  const auto parts = split_path(dotted_path);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) throw ConfigError("config path '" + dotted_path + "' crosses a non-mapping value");
    node = &(*node)[parts[i]];
    if (node->is_null()) *node = json::object();
  }
  if (!node->is_object()) throw ConfigError("config path '" + dotted_path + "' crosses a non-mapping value");
  (*node)[parts.back()] = value;
}

const json* find_path(const json& config, const std::string& dotted_path) {
  const json* node = &config;
  for (const auto& part : split_path(dotted_path)) {
    if (!node->is_object() || !node->contains(part)) return nullptr;
    node = &node->at(part);
  }
  return node;
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not of the form a.b=value");
  set_path(config, assignment.substr(0, eq), parse_yaml(assignment.substr(eq + 1)));
}

void apply_profile(json& config, const std::string& profile) {
  json profiles = config.contains("profiles") ? config.at("profiles") : json::object();
  config.erase("profiles");
  if (profiles.contains(profile)) {
    deep_merge(config, profiles.at(profile));
  } else if (profile != "desk") {
    throw ConfigError("config has no profile '" + profile + "'");
  }
  config["profile"] = profile;
}

double OptimizerConfig::rate_at(std::int64_t step) const {
  double rate = learning_rate;
  if (warmup_steps > 0 && step < warmup_steps) rate *= static_cast<double>(step + 1) / warmup_steps;
  if (decay_steps > 0) rate *= std::pow(decay_rate, static_cast<double>(step) / decay_steps);
  return rate;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("experiment.seeds must not be empty");
  if (max_steps < 0) throw ConfigError("experiment.max_steps must be >= 0");
  if (eval_every < 1 || checkpoint_every < 1) throw ConfigError("experiment cadences must be positive");
  if (max_steps > 0 && max_steps < eval_every) {
    throw ConfigError("experiment.max_steps (" + std::to_string(max_steps) + ") is below eval_every (" +
                      std::to_string(eval_every) + ")");
  }
  if (batch_size < 1) throw ConfigError("experiment.batch_size must be positive");
  if (eval_samples < 1) throw ConfigError("experiment.eval_samples must be positive");
  if (dataset_root.empty()) throw ConfigError("dataset.root is required");
  if (!model.is_object() || !model.contains("kind")) throw ConfigError("model.kind is required");
  if (optimizer.kind != "adam" && optimizer.kind != "rmsprop") {
    throw ConfigError("optimizer.kind must be adam or rmsprop, got '" + optimizer.kind + "'");
  }
  if (!(optimizer.learning_rate > 0)) throw ConfigError("optimizer.learning_rate must be positive");
}

ExperimentConfig ExperimentConfig::from_json(const json& config) {
  check_keys(config, {"experiment", "dataset", "model", "optimizer", "guard", "probe", "profile", "profiles"},
             "config");
  ExperimentConfig c;
  c.raw = config;
  const json exp = config.value("experiment", json::object());
  check_keys(exp,
             {"name", "seeds", "max_steps", "batch_size", "eval_every", "checkpoint_every", "eval_samples",
              "log_every"},
             "experiment");
  c.name = get_or<std::string>(exp, "name", c.name, "experiment");
  c.seeds = get_or<std::vector<std::uint64_t>>(exp, "seeds", c.seeds, "experiment");
  c.max_steps = get_or<int>(exp, "max_steps", c.max_steps, "experiment");
  c.batch_size = get_or<int>(exp, "batch_size", c.batch_size, "experiment");
  c.eval_every = get_or<int>(exp, "eval_every", c.eval_every, "experiment");
  c.checkpoint_every = get_or<int>(exp, "checkpoint_every", c.checkpoint_every, "experiment");
  c.eval_samples = get_or<int>(exp, "eval_samples", c.eval_samples, "experiment");
  c.log_every = get_or<int>(exp, "log_every", c.log_every, "experiment");

  const json ds = config.value("dataset", json::object());
  check_keys(ds, {"root", "train_split", "eval_split", "limit"}, "dataset");
  c.dataset_root = get_or<std::string>(ds, "root", "", "dataset");
  c.train_split = data::parse_split(get_or<std::string>(ds, "train_split", "train", "dataset"));
  c.eval_split = data::parse_split(get_or<std::string>(ds, "eval_split", "test", "dataset"));
  c.train_limit = get_or<std::size_t>(ds, "limit", 0, "dataset");

  c.model = config.value("model", json::object());

  const json opt = config.value("optimizer", json::object());
  check_keys(opt, {"kind", "learning_rate", "warmup_steps", "decay_rate", "decay_steps", "clip_norm"}, "optimizer");
  c.optimizer.kind = get_or<std::string>(opt, "kind", c.optimizer.kind, "optimizer");
  c.optimizer.learning_rate = get_or<double>(opt, "learning_rate", c.optimizer.learning_rate, "optimizer");
  c.optimizer.warmup_steps = get_or<int>(opt, "warmup_steps", c.optimizer.warmup_steps, "optimizer");
  c.optimizer.decay_rate = get_or<double>(opt, "decay_rate", c.optimizer.decay_rate, "optimizer");
  c.optimizer.decay_steps = get_or<int>(opt, "decay_steps", c.optimizer.decay_steps, "optimizer");
  c.optimizer.clip_norm = get_or<double>(opt, "clip_norm", c.optimizer.clip_norm, "optimizer");

  const json guard = config.value("guard", json::object());
  check_keys(guard, {"spike_factor", "window", "min_history"}, "guard");
  c.guard.spike_factor = get_or<double>(guard, "spike_factor", c.guard.spike_factor, "guard");
  c.guard.window = get_or<int>(guard, "window", c.guard.window, "guard");
  c.guard.min_history = get_or<int>(guard, "min_history", c.guard.min_history, "guard");

  const json probe = config.value("probe", json::object());
  check_keys(probe,
             {"models", "matchings", "features", "epochs", "batch_size", "learning_rate", "min_visibility",
              "train_split", "eval_split", "train_limit", "eval_limit", "seed"},
             "probe");
  if (probe.contains("models")) {
    c.probe.models.clear();
    for (const auto& m : probe.at("models")) c.probe.models.push_back(eval::parse_probe_model(m.get<std::string>()));
  }
  if (probe.contains("matchings")) {
    c.probe.matchings.clear();
    for (const auto& m : probe.at("matchings")) c.probe.matchings.push_back(eval::parse_match_mode(m.get<std::string>()));
  }
  auto& pb = c.probe.base;
  pb.features = get_or<std::vector<std::string>>(probe, "features", pb.features, "probe");
  pb.epochs = get_or<int>(probe, "epochs", pb.epochs, "probe");
  pb.batch_size = get_or<int>(probe, "batch_size", pb.batch_size, "probe");
  pb.learning_rate = get_or<double>(probe, "learning_rate", pb.learning_rate, "probe");
  pb.min_visibility = get_or<double>(probe, "min_visibility", pb.min_visibility, "probe");
  pb.seed = get_or<std::uint64_t>(probe, "seed", pb.seed, "probe");
  pb.validate();
  c.probe.train_split = data::parse_split(get_or<std::string>(probe, "train_split", "val", "probe"));
  c.probe.eval_split = data::parse_split(get_or<std::string>(probe, "eval_split", "test", "probe"));
  c.probe.train_limit = get_or<std::size_t>(probe, "train_limit", 0, "probe");
  c.probe.eval_limit = get_or<std::size_t>(probe, "eval_limit", 0, "probe");
  c.validate();
  return c;
}

monet::MonetConfig monet_config_from_json(const json& m, int height, int width) {
  check_keys(m,
             {"kind", "num_slots", "latent_size", "mlp_width", "unet", "encoder_channels", "decoder_channels",
              "decoder_layers", "loss"},
             "model");
  monet::MonetConfig c;
  c.num_slots = get_or<int>(m, "num_slots", c.num_slots, "model");
  c.latent_size = get_or<int>(m, "latent_size", c.latent_size, "model");
  c.mlp_width = get_or<int>(m, "mlp_width", c.mlp_width, "model");
  c.encoder_channels = get_or<std::vector<int>>(m, "encoder_channels", c.encoder_channels, "model");
  c.decoder_channels = get_or<int>(m, "decoder_channels", c.decoder_channels, "model");
  c.decoder_layers = get_or<int>(m, "decoder_layers", c.decoder_layers, "model");
  const json unet = m.value("unet", json::object());
  check_keys(unet, {"depth", "channels", "num_skip_connections", "bottleneck_width"}, "model.unet");
  c.unet.depth = get_or<int>(unet, "depth", c.unet.depth, "model.unet");
  c.unet.channels = get_or<std::vector<int>>(unet, "channels", c.unet.channels, "model.unet");
  c.unet.num_skip_connections = get_or<int>(unet, "num_skip_connections", c.unet.num_skip_connections, "model.unet");
  c.unet.bottleneck_width = get_or<int>(unet, "bottleneck_width", c.unet.bottleneck_width, "model.unet");
  const json loss = m.value("loss", json::object());
  check_keys(loss, {"beta", "gamma", "sigma_fg", "sigma_bg", "mask_kl"}, "model.loss");
  c.loss.beta = get_or<double>(loss, "beta", c.loss.beta, "model.loss");
  c.loss.gamma = get_or<double>(loss, "gamma", c.loss.gamma, "model.loss");
  c.loss.sigma_fg = get_or<double>(loss, "sigma_fg", c.loss.sigma_fg, "model.loss");
  c.loss.sigma_bg = get_or<double>(loss, "sigma_bg", c.loss.sigma_bg, "model.loss");
  const auto dir = get_or<std::string>(loss, "mask_kl", "attention_to_vae", "model.loss");
  if (dir == "attention_to_vae") {
    c.loss.direction = monet::MaskKlDirection::kAttentionToVae;
  } else if (dir == "vae_to_attention") {
    c.loss.direction = monet::MaskKlDirection::kVaeToAttention;
  } else {
    throw ConfigError("model.loss.mask_kl must be attention_to_vae or vae_to_attention");
  }
  c.height = height;
  c.width = width;
  c.validate();
  return c;
}

slot_attention::SlotAttentionConfig slot_attention_config_from_json(const json& m, int height, int width) {
  check_keys(m,
             {"kind", "num_slots", "slot_size", "iterations", "mlp_hidden", "epsilon", "encoder", "conv", "downscales",
              "broadcast_size"},
             "model");
  slot_attention::SlotAttentionConfig c;
  c.num_slots = get_or<int>(m, "num_slots", c.num_slots, "model");
  c.slot_size = get_or<int>(m, "slot_size", c.slot_size, "model");
  c.iterations = get_or<int>(m, "iterations", c.iterations, "model");
  c.mlp_hidden = get_or<int>(m, "mlp_hidden", c.mlp_hidden, "model");
  c.epsilon = get_or<double>(m, "epsilon", c.epsilon, "model");
  c.encoder = slot_attention::parse_encoder_kind(get_or<std::string>(m, "encoder", "baseline", "model"));
  const json conv = m.value("conv", json::object());
  check_keys(conv, {"channels", "layers", "kernel"}, "model.conv");
  c.conv_channels = get_or<int>(conv, "channels", c.conv_channels, "model.conv");
  c.conv_layers = get_or<int>(conv, "layers", c.conv_layers, "model.conv");
  c.conv_kernel = get_or<int>(conv, "kernel", c.conv_kernel, "model.conv");
  c.downscales = get_or<int>(m, "downscales", c.downscales, "model");
  c.broadcast_size = get_or<int>(m, "broadcast_size", c.broadcast_size, "model");
  c.height = height;
  c.width = width;
  c.validate();
  return c;
}

std::shared_ptr<SlotModel> build_model(const json& model, int height, int width) {
  const auto kind = get_or<std::string>(model, "kind", "", "model");
  if (kind == "monet") return std::make_shared<monet::MonetImpl>(monet_config_from_json(model, height, width));
  if (kind == "slot_attention") {
    return std::make_shared<slot_attention::SlotAttentionModelImpl>(
        slot_attention_config_from_json(model, height, width));
  }
  throw ConfigError("model.kind must be monet or slot_attention, got '" + kind + "'");
}

namespace {

data::Range range_from(const json& j, const char* key, data::Range fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  const auto v = get_or<std::vector<double>>(j, key, {}, where);
  if (v.size() != 2) throw ConfigError(where + "." + key + " must be [lo, hi]");
  return {v[0], v[1]};
}

}  // namespace

DatasetPreset dataset_preset_from_json(const json& config) {
  if (!config.contains("dataset")) throw ConfigError("data preset has no 'dataset' section");
  const json& ds = config.at("dataset");
  check_keys(ds, {"name", "splits", "generator"}, "dataset");
  DatasetPreset p;
  p.name = get_or<std::string>(ds, "name", p.name, "dataset");
  const json splits = ds.value("splits", json::object());
  check_keys(splits, {"train", "val", "test"}, "dataset.splits");
  p.sizes.train = get_or<std::size_t>(splits, "train", p.sizes.train, "dataset.splits");
  p.sizes.val = get_or<std::size_t>(splits, "val", p.sizes.val, "dataset.splits");
  p.sizes.test = get_or<std::size_t>(splits, "test", p.sizes.test, "dataset.splits");
  const json gen = ds.value("generator", json::object());
  check_keys(gen, {"min_objects", "max_objects", "scale", "position", "background", "resolution"},
             "dataset.generator");
  auto& g = p.generator;
  g.min_objects = get_or<int>(gen, "min_objects", g.min_objects, "dataset.generator");
  g.max_objects = get_or<int>(gen, "max_objects", g.max_objects, "dataset.generator");
  g.scale = range_from(gen, "scale", g.scale, "dataset.generator");
  g.position = range_from(gen, "position", g.position, "dataset.generator");
  g.background = range_from(gen, "background", g.background, "dataset.generator");
  if (gen.contains("resolution")) {
    const auto r = get_or<std::vector<int>>(gen, "resolution", {}, "dataset.generator");
    if (r.size() != 2) throw ConfigError("dataset.generator.resolution must be [height, width]");
    g.resolution = {r[0], r[1]};
  }
  g.validate();
  return p;
}

StylePreset style_preset_from_json(const json& config) {
  if (!config.contains("style")) throw ConfigError("style preset has no 'style' section");
  const json& st = config.at("style");
  check_keys(st,
             {"content_weight", "style_weight", "iterations", "content_layers", "style_layers", "step_size",
              "max_halvings", "procedural_style"},
             "style");
  StylePreset p;
  auto& c = p.config;
  c.content_weight = get_or<double>(st, "content_weight", c.content_weight, "style");
  c.style_weight = get_or<double>(st, "style_weight", c.style_weight, "style");
  c.iterations = get_or<int>(st, "iterations", c.iterations, "style");
  c.content_layers = get_or<std::vector<std::string>>(st, "content_layers", c.content_layers, "style");
  c.style_layers = get_or<std::vector<std::string>>(st, "style_layers", c.style_layers, "style");
  c.step_size = get_or<double>(st, "step_size", c.step_size, "style");
  c.max_halvings = get_or<int>(st, "max_halvings", c.max_halvings, "style");
  const json proc = st.value("procedural_style", json::object());
  check_keys(proc, {"size", "seed"}, "style.procedural_style");
  p.procedural_size = get_or<int>(proc, "size", p.procedural_size, "style.procedural_style");
  p.procedural_seed = get_or<std::uint64_t>(proc, "seed", p.procedural_seed, "style.procedural_style");
  return p;
}

}  // namespace slotbench::runner
