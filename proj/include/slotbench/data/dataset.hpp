#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "slotbench/data/scene.hpp"

namespace slotbench::data {

enum class Split { kTrain = 0, kVal = 1, kTest = 2 };
inline constexpr Split kAllSplits[] = {Split::kTrain, Split::kVal, Split::kTest};

std::string_view split_name(Split split);
Split parse_split(std::string_view name);

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;

  std::size_t of(Split s) const;
  bool operator==(const SplitSizes&) const = default;
};

/// One probe-able factor. Categorical features carry a cardinality, numeric
/// ones the closed range of their values.
struct FeatureSpec {
  enum class Kind { kCategorical, kNumeric };
  std::string name;
  Kind kind = Kind::kNumeric;
  int cardinality = 0;
  int dims = 1;
  double lo = 0.0;
  double hi = 1.0;
  bool operator==(const FeatureSpec&) const = default;
};

struct StyleMetadata {
  bool applied = false;
  std::string style_hash;
  nlohmann::json config = nlohmann::json::object();
  bool operator==(const StyleMetadata&) const = default;
};

struct DatasetManifest {
  std::string name = "sprites";
  SplitSizes splits;
  Resolution resolution;
  std::vector<FeatureSpec> features;
  StyleMetadata style;
  nlohmann::json generator = nlohmann::json::object();

  /// Split sizes positive, schema non-empty.
  void validate() const;
  bool operator==(const DatasetManifest&) const = default;
};

/// Schema covering every ObjectRecord factor exported to probes.
std::vector<FeatureSpec> sprite_feature_schema(const GeneratorConfig& config);

void to_json(nlohmann::json& j, const DatasetManifest& m);
void from_json(const nlohmann::json& j, DatasetManifest& m);

/// Streams samples into the container layout:
///   <root>/manifest.json
///   <root>/<split>/images/%06d.png   8-bit RGB
///   <root>/<split>/labels/%06d.png   8-bit gray, value = label
///   <root>/<split>/metadata.jsonl    one SceneSpec per line
/// The manifest is written last by close(), so its presence marks a complete dataset.
class DatasetWriter {
 public:
  DatasetWriter(std::filesystem::path root, DatasetManifest manifest);
  ~DatasetWriter();
  DatasetWriter(const DatasetWriter&) = delete;
  DatasetWriter& operator=(const DatasetWriter&) = delete;

  void append(Split split, const RenderedSample& sample);
  /// Verifies every split received exactly its manifest count, then writes manifest.json.
  void close();

 private:
  std::filesystem::path root_;
  DatasetManifest manifest_;
  std::ofstream metadata_[3];
  std::size_t counts_[3] = {0, 0, 0};
  bool closed_ = false;
};

/// Read-only random access to one split. Metadata is parsed up front; images
/// and labels are decoded on demand, so a Dataset can be shared across threads.
class Dataset {
 public:
  static Dataset open(const std::filesystem::path& root, Split split);

  std::size_t size() const { return scenes_.size(); }
  RenderedSample at(std::size_t index) const;
  const SceneSpec& scene(std::size_t index) const { return scenes_.at(index); }
  const DatasetManifest& manifest() const { return manifest_; }
  const std::filesystem::path& root() const { return root_; }
  Split split() const { return split_; }

 private:
  std::filesystem::path root_;
  Split split_ = Split::kTrain;
  DatasetManifest manifest_;
  std::vector<SceneSpec> scenes_;
};

DatasetManifest read_manifest(const std::filesystem::path& root);
void write_manifest(const std::filesystem::path& root, const DatasetManifest& manifest);

std::filesystem::path image_path(const std::filesystem::path& root, Split split, std::size_t index);
std::filesystem::path label_path(const std::filesystem::path& root, Split split, std::size_t index);
std::filesystem::path metadata_path(const std::filesystem::path& root, Split split);

void write_rgb_png(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_rgb_png(const std::filesystem::path& path);
void write_label_png(const std::filesystem::path& path, const LabelMap& labels);
LabelMap read_label_png(const std::filesystem::path& path);

/// Generates a full dataset. Sample (split, i) depends only on (seed, split, i),
/// so output bytes are a pure function of (seed, config, sizes).
void generate_dataset(const std::filesystem::path& root, const GeneratorConfig& config, const SplitSizes& sizes,
                      std::uint64_t seed, const std::string& name = "sprites");

/// Deterministic per-sample seed derived from the dataset seed.
std::uint64_t sample_seed(std::uint64_t seed, Split split, std::size_t index);

}  // namespace slotbench::data
