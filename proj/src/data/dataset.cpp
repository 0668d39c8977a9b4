#include "slotbench/data/dataset.hpp"

#include <cstdio>
#include <numbers>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "slotbench/errors.hpp"

namespace fs = std::filesystem;

namespace slotbench::data {

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split '" + std::string(name) + "' (expected train, val or test)");
}

std::size_t SplitSizes::of(Split s) const {
  switch (s) {
    case Split::kTrain:
      return train;
    case Split::kVal:
      return val;
    case Split::kTest:
      return test;
  }
  return 0;
}

void DatasetManifest::validate() const {
  if (splits.train == 0 || splits.val == 0 || splits.test == 0) {
    throw ConfigError("dataset '" + name + "': every split size must be positive");
  }
  if (features.empty()) throw ConfigError("dataset '" + name + "': empty feature schema");
  if (resolution.height < 16 || resolution.width < 16) {
    throw ConfigError("dataset '" + name + "': resolution must be at least 16x16");
  }
}

std::vector<FeatureSpec> sprite_feature_schema(const GeneratorConfig& config) {
  using K = FeatureSpec::Kind;
  return {
      {"shape", K::kCategorical, kNumShapes, 1, 0.0, static_cast<double>(kNumShapes - 1)},
      {"color", K::kNumeric, 0, 3, 0.0, 1.0},
      {"x", K::kNumeric, 0, 1, config.position.lo, config.position.hi},
      {"y", K::kNumeric, 0, 1, config.position.lo, config.position.hi},
      {"scale", K::kNumeric, 0, 1, config.scale.lo, config.scale.hi},
      {"orientation", K::kNumeric, 0, 1, 0.0, 2.0 * std::numbers::pi},
  };
}

void to_json(nlohmann::json& j, const DatasetManifest& m) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& f : m.features) {
    nlohmann::json fj{{"name", f.name}};
    if (f.kind == FeatureSpec::Kind::kCategorical) {
      fj["kind"] = "categorical";
      fj["cardinality"] = f.cardinality;
    } else {
      fj["kind"] = "numeric";
      fj["dims"] = f.dims;
      fj["range"] = {f.lo, f.hi};
    }
    features.push_back(fj);
  }
  nlohmann::json style{{"applied", m.style.applied}};
  if (m.style.applied) {
    style["style_hash"] = m.style.style_hash;
    style["config"] = m.style.config;
  }
  j = nlohmann::json{{"name", m.name},
                     {"splits", {{"train", m.splits.train}, {"val", m.splits.val}, {"test", m.splits.test}}},
                     {"resolution", {{"height", m.resolution.height}, {"width", m.resolution.width}}},
                     {"features", features},
                     {"style", style},
                     {"generator", m.generator}};
}

void from_json(const nlohmann::json& j, DatasetManifest& m) {
  m.name = j.at("name").get<std::string>();
  const auto& s = j.at("splits");
  m.splits = {s.at("train").get<std::size_t>(), s.at("val").get<std::size_t>(), s.at("test").get<std::size_t>()};
  m.resolution = {j.at("resolution").at("height").get<int>(), j.at("resolution").at("width").get<int>()};
  m.features.clear();
  for (const auto& fj : j.at("features")) {
    FeatureSpec f;
    f.name = fj.at("name").get<std::string>();
    const auto kind = fj.at("kind").get<std::string>();
    if (kind == "categorical") {
      f.kind = FeatureSpec::Kind::kCategorical;
      f.cardinality = fj.at("cardinality").get<int>();
      f.lo = 0.0;
      f.hi = f.cardinality - 1.0;
    } else if (kind == "numeric") {
      f.kind = FeatureSpec::Kind::kNumeric;
      f.dims = fj.at("dims").get<int>();
      f.lo = fj.at("range").at(0).get<double>();
      f.hi = fj.at("range").at(1).get<double>();
    } else {
      throw FormatError("unknown feature kind '" + kind + "'");
    }
    m.features.push_back(f);
  }
  const auto& style = j.at("style");
  m.style.applied = style.at("applied").get<bool>();
  if (m.style.applied) {
    m.style.style_hash = style.at("style_hash").get<std::string>();
    m.style.config = style.at("config");
  }
  m.generator = j.value("generator", nlohmann::json::object());
}

fs::path image_path(const fs::path& root, Split split, std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof(name), "%06zu.png", index);
  return root / split_name(split) / "images" / name;
}

fs::path label_path(const fs::path& root, Split split, std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof(name), "%06zu.png", index);
  return root / split_name(split) / "labels" / name;
}

fs::path metadata_path(const fs::path& root, Split split) { return root / split_name(split) / "metadata.jsonl"; }

void write_rgb_png(const fs::path& path, const RgbImage& image) {
  cv::Mat rgb(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.pixels.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), bgr);
  } catch (const cv::Exception&) {
    ok = false;
  }
  if (!ok) throw StorageError("failed to write image " + path.string());
}

RgbImage read_rgb_png(const fs::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw FormatError("cannot read image " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  RgbImage out(rgb.rows, rgb.cols);
  for (int y = 0; y < rgb.rows; ++y) {
    std::copy_n(rgb.ptr<std::uint8_t>(y), rgb.cols * 3, out.pixels.data() + static_cast<std::size_t>(y) * rgb.cols * 3);
  }
  return out;
}

void write_label_png(const fs::path& path, const LabelMap& labels) {
  cv::Mat gray(labels.height, labels.width, CV_8UC1, const_cast<std::uint8_t*>(labels.labels.data()));
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), gray);
  } catch (const cv::Exception&) {
    ok = false;
  }
  if (!ok) throw StorageError("failed to write label map " + path.string());
}

LabelMap read_label_png(const fs::path& path) {
  cv::Mat gray = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (gray.empty()) throw FormatError("cannot read label map " + path.string());
  if (gray.type() != CV_8UC1) throw FormatError("label map is not 8-bit single-channel: " + path.string());
  LabelMap out(gray.rows, gray.cols);
  for (int y = 0; y < gray.rows; ++y) {
    std::copy_n(gray.ptr<std::uint8_t>(y), gray.cols, out.labels.data() + static_cast<std::size_t>(y) * gray.cols);
  }
  return out;
}

DatasetManifest read_manifest(const fs::path& root) {
  const fs::path path = root / "manifest.json";
  std::ifstream in(path);
  if (!in) throw FormatError("missing dataset manifest " + path.string());
  try {
    DatasetManifest m = nlohmann::json::parse(in).get<DatasetManifest>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed dataset manifest " + path.string() + ": " + e.what());
  }
}

void write_manifest(const fs::path& root, const DatasetManifest& manifest) {
  const fs::path path = root / "manifest.json";
  std::ofstream out(path);
  if (!out) throw StorageError("cannot write " + path.string());
  out << nlohmann::json(manifest).dump(2) << '\n';
  if (!out) throw StorageError("cannot write " + path.string());
}

DatasetWriter::DatasetWriter(fs::path root, DatasetManifest manifest)
    : root_(std::move(root)), manifest_(std::move(manifest)) {
  manifest_.validate();
  std::error_code ec;
  for (Split s : kAllSplits) {
    fs::create_directories(root_ / split_name(s) / "images", ec);
    if (!ec) fs::create_directories(root_ / split_name(s) / "labels", ec);
    if (ec) throw StorageError("cannot create dataset directories under " + root_.string() + ": " + ec.message());
    const fs::path meta = metadata_path(root_, s);
    metadata_[static_cast<int>(s)].open(meta, std::ios::trunc);
    if (!metadata_[static_cast<int>(s)]) throw StorageError("cannot write " + meta.string());
  }
}

DatasetWriter::~DatasetWriter() = default;

void DatasetWriter::append(Split split, const RenderedSample& sample) {
  if (closed_) throw StorageError("dataset writer for " + root_.string() + " is closed");
  const int s = static_cast<int>(split);
  const std::size_t index = counts_[s];
  if (index >= manifest_.splits.of(split)) {
    throw StorageError("split '" + std::string(split_name(split)) + "' already holds its manifest count");
  }
  write_rgb_png(image_path(root_, split, index), sample.image);
  write_label_png(label_path(root_, split, index), sample.label_map);
  nlohmann::json line = sample.metadata;
  line["index"] = index;
  metadata_[s] << line.dump() << '\n';
  if (!metadata_[s]) throw StorageError("cannot append to " + metadata_path(root_, split).string());
  ++counts_[s];
}

void DatasetWriter::close() {
  if (closed_) return;
  for (Split s : kAllSplits) {
    const int i = static_cast<int>(s);
    metadata_[i].close();
    if (counts_[i] != manifest_.splits.of(s)) {
      throw StorageError("split '" + std::string(split_name(s)) + "' received " + std::to_string(counts_[i]) +
                         " samples, manifest declares " + std::to_string(manifest_.splits.of(s)));
    }
  }
  write_manifest(root_, manifest_);
  closed_ = true;
}

Dataset Dataset::open(const fs::path& root, Split split) {
  if (!fs::is_directory(root)) throw FormatError("dataset root does not exist: " + root.string());
  Dataset ds;
  ds.root_ = root;
  ds.split_ = split;
  ds.manifest_ = read_manifest(root);

  const fs::path meta = metadata_path(root, split);
  std::ifstream in(meta);
  if (!in) throw FormatError("missing metadata index " + meta.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.at("index").get<std::size_t>() != ds.scenes_.size()) {
        throw FormatError("out-of-order index");
      }
      ds.scenes_.push_back(j.get<SceneSpec>());
    } catch (const std::exception& e) {
      throw FormatError("corrupt metadata index " + meta.string() + " line " + std::to_string(lineno) + ": " +
                        e.what());
    }
  }
  if (ds.scenes_.size() != ds.manifest_.splits.of(split)) {
    throw FormatError("metadata index " + meta.string() + " has " + std::to_string(ds.scenes_.size()) +
                      " entries, manifest declares " + std::to_string(ds.manifest_.splits.of(split)));
  }
  return ds;
}

RenderedSample Dataset::at(std::size_t index) const {
  if (index >= scenes_.size()) {
    throw InputError("sample index " + std::to_string(index) + " out of range for split of size " +
                     std::to_string(scenes_.size()));
  }
  RenderedSample s;
  s.image = read_rgb_png(image_path(root_, split_, index));
  s.label_map = read_label_png(label_path(root_, split_, index));
  s.metadata = scenes_[index];
  const Resolution& r = manifest_.resolution;
  if (s.image.height != r.height || s.image.width != r.width || s.label_map.height != r.height ||
      s.label_map.width != r.width) {
    throw FormatError("sample " + std::to_string(index) + " of " + root_.string() +
                      " does not match the manifest resolution");
  }
  return s;
}

std::uint64_t sample_seed(std::uint64_t seed, Split split, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(split), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(static_cast<std::uint64_t>(index) >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

void generate_dataset(const fs::path& root, const GeneratorConfig& config, const SplitSizes& sizes,
                      std::uint64_t seed, const std::string& name) {
  config.validate();
  DatasetManifest manifest;
  manifest.name = name;
  manifest.splits = sizes;
  manifest.resolution = config.resolution;
  manifest.features = sprite_feature_schema(config);
  manifest.generator = config;
  manifest.generator["seed"] = seed;

  DatasetWriter writer(root, manifest);
  for (Split split : kAllSplits) {
    for (std::size_t i = 0; i < sizes.of(split); ++i) {
      const SceneSpec spec = sample_scene(sample_seed(seed, split, i), config);
      writer.append(split, render_scene(spec, config.resolution));
    }
  }
  writer.close();
}

}  // namespace slotbench::data
