#include "slotbench/style/style_transfer.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>

#include <ATen/CPUGeneratorImpl.h>

#include "slotbench/errors.hpp"

namespace fs = std::filesystem;

namespace slotbench::style {

torch::Tensor gram_matrix(const torch::Tensor& features) {
  if (features.dim() != 3) throw ShapeError("gram_matrix expects a C x H x W tensor");
  const auto c = features.size(0);
  const auto hw = features.size(1) * features.size(2);
  auto f = features.reshape({c, hw});
  return torch::mm(f, f.t()) / static_cast<double>(c * hw);
}

FeatureExtractorImpl::FeatureExtractorImpl(std::uint64_t seed) : weight_source_("random-seeded:" + std::to_string(seed)) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  int in = 3;
  for (std::size_t i = 0; i < kWidths.size(); ++i) {
    auto conv = torch::nn::Conv2d(torch::nn::Conv2dOptions(in, kWidths[i], 3).padding(1));
    torch::NoGradGuard no_grad;
    const double bound = std::sqrt(6.0 / (in * 9));
    conv->weight.uniform_(-bound, bound, gen);
    conv->bias.zero_();
    convs_.push_back(register_module("conv" + std::to_string(i + 1), conv));
    in = kWidths[i];
  }
  for (auto& p : parameters()) p.set_requires_grad(false);
}

std::map<std::string, torch::Tensor> FeatureExtractorImpl::forward(const torch::Tensor& images) {
  std::map<std::string, torch::Tensor> out;
  torch::Tensor x = images;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    if (i > 0 && x.size(-1) >= 2 && x.size(-2) >= 2) x = torch::avg_pool2d(x, 2);
    x = torch::relu(convs_[i]->forward(x));
    out.emplace("conv" + std::to_string(i + 1), x);
  }
  return out;
}

void FeatureExtractorImpl::load_weights(const fs::path& path) {
  if (!fs::exists(path)) throw FormatError("feature extractor weights not found: " + path.string());
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  torch::NoGradGuard no_grad;
  for (auto& item : named_parameters()) {
    torch::Tensor t;
    if (!archive.try_read(item.key(), t)) {
      throw FormatError("feature extractor weights " + path.string() + " lack tensor " + item.key());
    }
    if (t.sizes() != item.value().sizes()) {
      throw FormatError("feature extractor tensor " + item.key() + " has the wrong shape in " + path.string());
    }
    item.value().copy_(t);
  }
  weight_source_ = "pretrained-file:" + path.string();
}

void FeatureExtractorImpl::save_weights(const fs::path& path) {
  torch::serialize::OutputArchive archive;
  for (auto& item : named_parameters()) archive.write(item.key(), item.value());
  archive.save_to(path.string());
}

void StyleConfig::validate() const {
  if (style_layers.empty()) throw ConfigError("style transfer needs at least one style layer");
  if (iterations < 1) throw ConfigError("style transfer iterations must be >= 1");
  if (content_weight < 0 || style_weight < 0) throw ConfigError("style transfer weights must be non-negative");
  if (!(step_size > 0)) throw ConfigError("style transfer step size must be positive");
  if (max_halvings < 0) throw ConfigError("max_halvings must be non-negative");
  if (style_image.pixels.empty()) throw ConfigError("style transfer needs a style image");
  auto known = [](const std::string& name) {
    return name.size() == 5 && name.rfind("conv", 0) == 0 && name[4] >= '1' && name[4] <= '5';
  };
  for (const auto& l : content_layers) {
    if (!known(l)) throw ConfigError("unknown content layer '" + l + "'");
  }
  for (const auto& l : style_layers) {
    if (!known(l)) throw ConfigError("unknown style layer '" + l + "'");
  }
}

nlohmann::json StyleConfig::to_json() const {
  return {{"content_weight", content_weight}, {"style_weight", style_weight}, {"iterations", iterations},
          {"content_layers", content_layers}, {"style_layers", style_layers},  {"step_size", step_size},
          {"max_halvings", max_halvings}};
}

torch::Tensor image_to_tensor(const data::RgbImage& image) {
  auto hwc = torch::from_blob(const_cast<std::uint8_t*>(image.pixels.data()), {image.height, image.width, 3},
                              torch::kUInt8);
  return hwc.permute({2, 0, 1}).to(torch::kFloat32).div(255.0).contiguous();
}

data::RgbImage tensor_to_image(const torch::Tensor& chw) {
  auto hwc = chw.detach().to(torch::kFloat32).clamp(0.0, 1.0).mul(255.0).round().to(torch::kUInt8).permute({1, 2, 0})
                 .contiguous();
  data::RgbImage out(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)));
  std::memcpy(out.pixels.data(), hwc.data_ptr<std::uint8_t>(), out.pixels.size());
  return out;
}

namespace {

struct Objective {
  std::map<std::string, torch::Tensor> content_targets;
  std::map<std::string, torch::Tensor> style_targets;
  const StyleConfig* config;

  struct Value {
    torch::Tensor total;
    double content;
    double style;
  };

  Value operator()(FeatureExtractor& extractor, const torch::Tensor& image) const {
    auto feats = extractor->forward(image.unsqueeze(0));
    auto content = torch::zeros({}, image.options());
    for (const auto& name : config->content_layers) {
      content = content + torch::mse_loss(feats.at(name)[0], content_targets.at(name));
    }
    auto style = torch::zeros({}, image.options());
    for (const auto& name : config->style_layers) {
      style = style + torch::mse_loss(gram_matrix(feats.at(name)[0]), style_targets.at(name));
    }
    auto total = content * config->content_weight + style * config->style_weight;
    return {total, content.item<double>(), style.item<double>()};
  }
};

}  // namespace

StyleResult stylize_image(const torch::Tensor& content, const StyleConfig& config, FeatureExtractor& extractor) {
  config.validate();
  if (content.dim() != 3 || content.size(0) != 3) throw ShapeError("stylize_image expects a 3 x H x W content image");
  const torch::Tensor style = image_to_tensor(config.style_image).to(content.dtype());

  Objective objective;
  objective.config = &config;
  {
    torch::NoGradGuard no_grad;
    auto cf = extractor->forward(content.unsqueeze(0));
    for (const auto& name : config.content_layers) objective.content_targets[name] = cf.at(name)[0].detach();
    auto sf = extractor->forward(style.unsqueeze(0));
    for (const auto& name : config.style_layers) objective.style_targets[name] = gram_matrix(sf.at(name)[0]).detach();
  }

  StyleResult result;
  torch::Tensor x = content.detach().clone().requires_grad_(true);
  auto value = objective(extractor, x);
  double loss = value.total.item<double>();
  if (!std::isfinite(loss)) throw OptimizationError("non-finite style-transfer loss at iteration 0", 0);
  result.loss_trace.push_back(loss);
  result.initial_content_loss = value.content;
  result.initial_style_loss = value.style;

  for (int it = 1; it <= config.iterations; ++it) {
    auto grad = torch::autograd::grad({value.total}, {x})[0];
    const double gmax = grad.abs().max().item<double>();
    if (!std::isfinite(gmax)) throw OptimizationError("non-finite gradient at iteration " + std::to_string(it), it);
    if (gmax == 0.0) {
      // Stationary point: every remaining step is a no-op.
      result.loss_trace.resize(static_cast<std::size_t>(config.iterations) + 1, loss);
      break;
    }
    const torch::Tensor direction = grad / gmax;
    double step = config.step_size;
    bool accepted = false;
    for (int h = 0; h <= config.max_halvings; ++h, step *= 0.5) {
      torch::Tensor candidate;
      {
        torch::NoGradGuard no_grad;
        candidate = (x.detach() - direction * step).clamp(0.0, 1.0);
      }
      candidate.requires_grad_(true);
      auto cand_value = objective(extractor, candidate);
      const double cand_loss = cand_value.total.item<double>();
      if (!std::isfinite(cand_loss)) {
        throw OptimizationError("non-finite style-transfer loss at iteration " + std::to_string(it), it);
      }
      if (cand_loss <= loss) {
        x = candidate;
        value = cand_value;
        loss = cand_loss;
        accepted = true;
        break;
      }
    }
    // No acceptable step: stay put, the loss is unchanged.
    if (!accepted) value = objective(extractor, x);
    result.loss_trace.push_back(loss);
  }
  result.image = x.detach().clamp(0.0, 1.0);
  return result;
}

data::RenderedSample stylize_sample(const data::RenderedSample& sample, const StyleConfig& config,
                                    FeatureExtractor& extractor) {
  data::RenderedSample out = sample;
  bool any_foreground = false;
  for (auto l : sample.label_map.labels) any_foreground = any_foreground || l > 0;
  if (!any_foreground) return out;

  const StyleResult styled = stylize_image(image_to_tensor(sample.image), config, extractor);
  const data::RgbImage styled_image = tensor_to_image(styled.image);
  for (int y = 0; y < sample.image.height; ++y) {
    for (int x = 0; x < sample.image.width; ++x) {
      if (sample.label_map.at(y, x) == 0) continue;
      for (int c = 0; c < 3; ++c) out.image.at(y, x, c) = styled_image.at(y, x, c);
    }
  }
  return out;
}

std::string style_hash(const data::RgbImage& image) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint8_t byte) {
    h ^= byte;
    h *= 1099511628211ULL;
  };
  for (int v : {image.height, image.width}) {
    for (int i = 0; i < 4; ++i) mix(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  for (auto b : image.pixels) mix(b);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

data::RgbImage procedural_style_image(int height, int width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  struct Wave {
    double fx, fy, phase;
    std::array<double, 3> color;
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 6; ++i) {
    waves.push_back({(u(rng) - 0.5) * 0.9, (u(rng) - 0.5) * 0.9, u(rng) * 6.283, {u(rng), u(rng), u(rng)}});
  }
  data::RgbImage img(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      std::array<double, 3> acc{0.1, 0.1, 0.2};
      for (const auto& w : waves) {
        // Swirl: bend the stroke direction with the distance from the centre.
        const double r = std::hypot(x - width / 2.0, y - height / 2.0) * 0.05;
        const double s = 0.5 + 0.5 * std::sin(w.fx * x + w.fy * y + w.phase + r);
        for (int c = 0; c < 3; ++c) acc[c] += s * w.color[c] / 3.0;
      }
      for (int c = 0; c < 3; ++c) {
        img.at(y, x, c) = static_cast<std::uint8_t>(std::lround(std::clamp(acc[c], 0.0, 1.0) * 255.0));
      }
    }
  }
  return img;
}

namespace {

void copy_bytes(const fs::path& from, const fs::path& to) {
  std::error_code ec;
  fs::copy_file(from, to, fs::copy_options::overwrite_existing, ec);
  if (ec) throw StorageError("cannot copy " + from.string() + " to " + to.string() + ": " + ec.message());
}

}  // namespace

StylizeOutcome stylize_dataset(const fs::path& root_in, const fs::path& root_out, const StyleConfig& config,
                               FeatureExtractor& extractor, const StylizeOptions& options) {
  config.validate();
  const data::DatasetManifest in_manifest = data::read_manifest(root_in);

  nlohmann::json echo = config.to_json();
  echo["seed"] = options.seed;
  echo["extractor"] = extractor->weight_source();
  const std::string hash = style_hash(config.style_image);

  // A state file ties partial outputs to one configuration; a mismatch restarts.
  const fs::path state_path = root_out / "stylize_state.json";
  const nlohmann::json state{{"style_hash", hash}, {"config", echo}};
  std::error_code ec;
  if (fs::exists(state_path)) {
    std::ifstream in(state_path);
    nlohmann::json previous = nlohmann::json::parse(in, nullptr, false);
    if (previous != state) {
      for (data::Split s : data::kAllSplits) fs::remove_all(root_out / data::split_name(s), ec);
      fs::remove(root_out / "manifest.json", ec);
    }
  }
  fs::create_directories(root_out, ec);
  if (ec) throw StorageError("cannot create " + root_out.string() + ": " + ec.message());
  {
    std::ofstream out(state_path);
    out << state.dump(2) << '\n';
    if (!out) throw StorageError("cannot write " + state_path.string());
  }

  StylizeOutcome outcome;
  for (data::Split split : data::kAllSplits) {
    const data::Dataset source = data::Dataset::open(root_in, split);
    fs::create_directories(root_out / data::split_name(split) / "images", ec);
    fs::create_directories(root_out / data::split_name(split) / "labels", ec);
    if (ec) throw StorageError("cannot create split directories under " + root_out.string());
    copy_bytes(data::metadata_path(root_in, split), data::metadata_path(root_out, split));
    for (std::size_t i = 0; i < source.size(); ++i) {
      const fs::path target = data::image_path(root_out, split, i);
      copy_bytes(data::label_path(root_in, split, i), data::label_path(root_out, split, i));
      if (fs::exists(target)) {
        ++outcome.resumed;
        continue;
      }
      if (options.max_new_samples && outcome.stylized >= *options.max_new_samples) return outcome;
      const data::RenderedSample styled = stylize_sample(source.at(i), config, extractor);
      fs::path tmp = target;
      tmp += ".tmp.png";
      data::write_rgb_png(tmp, styled.image);
      fs::rename(tmp, target, ec);
      if (ec) throw StorageError("cannot move " + tmp.string() + " into place: " + ec.message());
      ++outcome.stylized;
      if (options.on_sample) options.on_sample(split, i);
    }
  }

  data::DatasetManifest out_manifest = in_manifest;
  out_manifest.style.applied = true;
  out_manifest.style.style_hash = hash;
  out_manifest.style.config = echo;
  data::write_manifest(root_out, out_manifest);
  outcome.complete = true;
  return outcome;
}

}  // namespace slotbench::style
