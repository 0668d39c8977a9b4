#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "slotbench/data/dataset.hpp"
#include "slotbench/eval/hungarian.hpp"
#include "slotbench/model.hpp"

namespace slotbench::eval {

enum class ProbeModel { kLinear, kMlp256 };
enum class MatchMode { kLoss, kMask };

std::string probe_model_name(ProbeModel model);
ProbeModel parse_probe_model(const std::string& name);
std::string match_mode_name(MatchMode mode);
MatchMode parse_match_mode(const std::string& name);

inline constexpr int kMlpHiddenWidth = 256;

struct ProbeConfig {
  ProbeModel model = ProbeModel::kLinear;
  MatchMode matching = MatchMode::kLoss;
  std::vector<std::string> features{"shape", "x", "y", "scale"};
  int epochs = 40;
  int batch_size = 64;
  double learning_rate = 1e-2;
  double min_visibility = 0.05;
  std::uint64_t seed = 0;

  int hidden_width() const { return model == ProbeModel::kMlp256 ? kMlpHiddenWidth : 0; }
  void validate() const;
  nlohmann::json to_json() const;
};

/// Named features resolved against a dataset schema. Categorical features
/// become class indices, numeric ones a block of `dims` columns.
class TargetSchema {
 public:
  struct Head {
    std::string name;
    bool categorical = false;
    int cardinality = 0;  // categorical
    int dims = 1;         // numeric
    int offset = 0;       // column in the categorical or numeric target block
    int output = 0;       // first column of the probe output
  };

  TargetSchema(const std::vector<data::FeatureSpec>& schema, const std::vector<std::string>& names);

  const std::vector<Head>& heads() const { return heads_; }
  int num_categorical() const { return num_categorical_; }
  int num_numeric() const { return num_numeric_; }
  int output_size() const { return output_size_; }

  /// [n, C] int64 class indices and [n, M] float64 values for `objects`.
  std::pair<torch::Tensor, torch::Tensor> encode(const data::SceneSpec& scene, const std::vector<int>& objects) const;

 private:
  std::vector<Head> heads_;
  int num_categorical_ = 0;
  int num_numeric_ = 0;
  int output_size_ = 0;
};

/// Frozen slot representations of one scene with its probe targets.
struct ProbeScene {
  torch::Tensor slots;          // [K, D]
  std::vector<int> objects;     // kept objects (visibility >= threshold), indices into the scene
  torch::Tensor categorical;    // [n, C]
  torch::Tensor numeric;        // [n, M], raw units
  std::vector<int> mask_slot;   // per kept object: slot from mask matching or -1; empty without masks
};

/// Objects eligible as probe targets.
std::vector<int> visible_objects(const data::SceneSpec& scene, double min_visibility);

/// cost[i][j] = sum over pixels of |1[label = objects[i] + 1] - masks[j]|, masks [K, H, W].
CostMatrix mask_cost(const data::LabelMap& labels, const torch::Tensor& masks, const std::vector<int>& objects);

/// Builds a ProbeScene; when `masks` is defined the mask-matching assignment is stored.
ProbeScene make_probe_scene(const torch::Tensor& slots, const data::SceneSpec& scene, const TargetSchema& schema,
                            double min_visibility, const torch::Tensor& masks = {},
                            const data::LabelMap* labels = nullptr);

class ProbeNetImpl : public torch::nn::Module {
 public:
  ProbeNetImpl(int input_size, int hidden_width, int output_size);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Linear hidden_{nullptr};
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(ProbeNet);

class TrainedProbe {
 public:
  TrainedProbe(ProbeConfig config, TargetSchema schema, int input_size);

  /// [n, K] loss of every (object, slot) pair.
  torch::Tensor pair_losses(const torch::Tensor& predictions, const torch::Tensor& categorical,
                            const torch::Tensor& numeric_std) const;
  /// Probe-loss cost matrix for loss matching.
  CostMatrix loss_cost(const ProbeScene& scene);
  /// Object -> slot assignment under the configured matching mode.
  Assignment match(const ProbeScene& scene);

  torch::Tensor standardise(const torch::Tensor& numeric) const;
  /// Probe outputs for slots [K, D]; inputs are standardised with training statistics.
  torch::Tensor forward(const torch::Tensor& slots);

  ProbeConfig config;
  TargetSchema schema;
  ProbeNet net{nullptr};
  torch::Tensor numeric_mean;  // [M]
  torch::Tensor numeric_std;   // [M]
  torch::Tensor input_mean;    // [D]
  torch::Tensor input_std;     // [D]
};

struct FeatureMetric {
  std::string name;
  std::string metric;  // "accuracy" or "r2"
  double value = 0.0;
  double baseline = 0.0;
};

struct ProbeReport {
  ProbeConfig config;
  std::vector<FeatureMetric> features;
  std::size_t scenes = 0;
  std::size_t objects = 0;
  std::size_t matched = 0;
  std::size_t unmatched = 0;
  double mean_assignment_cost = 0.0;
  std::vector<std::vector<std::pair<int, int>>> assignments;  // per scene (object index, slot)

  const FeatureMetric& feature(const std::string& name) const;
  nlohmann::json to_json(bool include_assignments = true) const;
};

/// Trains a probe on frozen representations. In loss mode the pairing is
/// recomputed per batch from the current probe. Empty input raises InputError.
TrainedProbe probe_train(const std::vector<ProbeScene>& scenes, const TargetSchema& schema, const ProbeConfig& config);

/// Accuracy per categorical feature, R^2 per numeric feature (per dimension,
/// then averaged within the feature) on matched pairs.
ProbeReport probe_eval(TrainedProbe& probe, const std::vector<ProbeScene>& scenes);

/// Pairs the visible objects of `sample` with the slots of batch entry `index`.
/// Mask mode needs no probe; loss mode requires one (InputError otherwise).
/// Pairs are (scene object index, slot); objects beyond the slot count stay unmatched.
Assignment match_slots(const SlotDecomposition& decomposition, std::int64_t index, const data::RenderedSample& sample,
                       MatchMode mode, TrainedProbe* probe = nullptr, double min_visibility = 0.05);

/// 1 - SS_res / SS_tot; 1 for a perfect fit of constant targets, else 0 when SS_tot = 0.
double r_squared(const torch::Tensor& prediction, const torch::Tensor& target);

}  // namespace slotbench::eval
