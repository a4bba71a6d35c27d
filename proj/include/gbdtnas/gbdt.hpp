#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gbdtnas/space.hpp"

namespace gbdtnas {

enum class NormMode { MinMax, Standardize };

NormMode parse_norm_mode(const std::string& s);
std::string to_string(NormMode m);

// Affine rescaling of raw accuracies. MinMax: (y - min) / (max - min).
// Standardize: (y - mean) / std with the population std.
class Normalizer {
 public:
  Normalizer() = default;
  Normalizer(NormMode mode, double shift, double scale);

  // Throws DegenerateSpread when the targets have zero spread.
  static Normalizer fit(std::span<const double> targets, NormMode mode);

  double normalize(double y) const { return (y - shift_) / scale_; }
  double denormalize(double z) const { return z * scale_ + shift_; }

  NormMode mode() const { return mode_; }
  // (y_min, y_max - y_min) for MinMax, (y_mean, y_std) for Standardize.
  double shift() const { return shift_; }
  double scale() const { return scale_; }

  nlohmann::json to_json() const;
  static Normalizer from_json(const nlohmann::json& j);

 private:
  NormMode mode_ = NormMode::Standardize;
  double shift_ = 0.0;
  double scale_ = 1.0;
};

struct TrainConfig {
  std::size_t num_trees = 100;
  std::size_t max_leaves = 31;
  double learning_rate = 0.1;
  std::size_t min_samples_per_leaf = 20;
  double l2_reg = 0.0;
  double min_gain = 0.0;

  // Throws ConfigError on non-positive counts or a learning rate outside (0, 1].
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// Architectures with their raw (unnormalized) accuracies.
struct ArchPool {
  std::vector<FeatureVector> vectors;
  std::vector<double> targets;

  std::size_t size() const { return vectors.size(); }
  bool empty() const { return vectors.empty(); }
  void add(FeatureVector v, double y) {
    vectors.push_back(std::move(v));
    targets.push_back(y);
  }
};

// CSV with one 0/1 column per feature (header = labels) and a final
// `accuracy` column.
void save_pool_csv(const ArchPool& pool, const FeatureSchema& schema, const std::string& path);
ArchPool load_pool_csv(const std::string& path, const FeatureSchema& schema);

struct TreeNode {
  int split_feature = -1;  // -1 marks a leaf
  double threshold = 0.5;
  int left = -1;   // x[split_feature] < threshold
  int right = -1;  // x[split_feature] >= threshold
  double leaf_value = 0.0;
  double cover = 0.0;
  double gain = 0.0;

  bool is_leaf() const { return split_feature < 0; }
};

class RegressionTree {
 public:
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  template <typename Bits>
  double predict(const Bits& x) const {
    return nodes[leaf_index(x)].leaf_value;
  }

  template <typename Bits>
  std::size_t leaf_index(const Bits& x) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf()) {
      const auto& n = nodes[i];
      i = static_cast<std::size_t>(static_cast<double>(x[n.split_feature]) < n.threshold ? n.left : n.right);
    }
    return i;
  }

  std::size_t num_leaves() const;
  std::size_t depth() const;
  // Throws InvariantError on dangling children or cover(parent) != cover(left) + cover(right).
  void check(std::size_t dim) const;
};

// Sum of regression trees over a shared base score; leaf values already carry
// the learning-rate scaling, so prediction is a plain sum.
class GbdtModel {
 public:
  std::vector<RegressionTree> trees;
  double base_score = 0.0;
  double learning_rate = 0.1;
  Normalizer normalizer;
  std::size_t dim = 0;
  TrainConfig config;

  // Prediction on the normalized scale.
  double predict(const FeatureVector& x) const;
  std::vector<double> predict_batch(std::span<const FeatureVector> xs) const;
  // Prediction mapped back to the raw accuracy scale.
  double predict_raw(const FeatureVector& x) const { return normalizer.denormalize(predict(x)); }

  // Mean split gain per feature over every split in every tree; 0 when a
  // feature is never used.
  std::vector<double> feature_importance() const;

  nlohmann::json to_json() const;
  static GbdtModel from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static GbdtModel load(const std::string& path);
};

struct FitTrace {
  std::vector<double> train_mse;  // entry t: normalized-scale MSE after t trees
};

// Least-squares boosting with leaf-wise growth over 0/1 features.
// Throws ConfigError on an empty pool and DegenerateSpread when all targets
// coincide.
GbdtModel fit(const ArchPool& pool, const TrainConfig& config, NormMode mode, FitTrace* trace = nullptr);

}  // namespace gbdtnas
