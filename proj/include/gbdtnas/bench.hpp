#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gbdtnas/space.hpp"

namespace gbdtnas {

// Source of architecture accuracies. Every call to query() is one counted
// evaluation.
class Oracle {
 public:
  Oracle() = default;
  Oracle(const Oracle& other) : queries_(other.query_count()) {}
  Oracle& operator=(const Oracle& other) {
    queries_.store(other.query_count());
    return *this;
  }
  virtual ~Oracle() = default;

  double query(const FeatureVector& x) {
    const double y = evaluate(x);
    queries_.fetch_add(1, std::memory_order_relaxed);
    return y;
  }
  std::uint64_t query_count() const { return queries_.load(std::memory_order_relaxed); }
  void reset_count() { queries_.store(0); }

  // Accuracy without touching the counter (ground-truth bookkeeping).
  virtual double evaluate(const FeatureVector& x) const = 0;

 private:
  std::atomic<std::uint64_t> queries_{0};
};

// Exact-match lookup table; unknown architectures are an error.
class TabularOracle : public Oracle {
 public:
  TabularOracle() = default;
  explicit TabularOracle(FeatureSchema schema) : schema_(std::move(schema)) {}

  // Idempotent for identical rows; throws OracleError on a conflicting one.
  void insert(const FeatureVector& x, double accuracy);
  double evaluate(const FeatureVector& x) const override;

  std::size_t size() const { return table_.size(); }
  const FeatureSchema& schema() const { return schema_; }
  // Rows in file order.
  const std::vector<std::pair<FeatureVector, double>>& rows() const { return rows_; }

 private:
  FeatureSchema schema_;
  std::unordered_map<FeatureVector, double, FeatureVectorHash> table_;
  std::vector<std::pair<FeatureVector, double>> rows_;
};

// Reads a pool-format CSV (feature columns + `accuracy`). Throws ConfigError
// on malformed rows and OracleError on conflicting duplicates.
TabularOracle load_table(const std::string& path, const FeatureSchema& schema);

// accuracy(x) = clamp(base + sum_j w_j x_j + sum_(a,b) w_ab x_a x_b + noise(seed, x), 0, 1)
// The noise term is a deterministic hash-seeded gaussian per architecture.
class SyntheticOracle : public Oracle {
 public:
  SyntheticOracle(FeatureSchema schema, std::vector<double> unary, std::map<std::pair<std::size_t, std::size_t>, double> pairs,
                  double base, double noise_std, std::uint64_t seed);

  double evaluate(const FeatureVector& x) const override;
  double noiseless(const FeatureVector& x) const;
  double noise(const FeatureVector& x) const;

  const FeatureSchema& schema() const { return schema_; }
  const std::vector<double>& unary_weights() const { return unary_; }
  const std::map<std::pair<std::size_t, std::size_t>, double>& pair_weights() const { return pairs_; }
  double base() const { return base_; }
  double noise_std() const { return noise_std_; }
  std::uint64_t seed() const { return seed_; }

  nlohmann::json to_json() const;
  static SyntheticOracle from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static SyntheticOracle load(const std::string& path);

 private:
  double surface(const FeatureVector& x) const;

  FeatureSchema schema_;
  std::vector<double> unary_;
  std::map<std::pair<std::size_t, std::size_t>, double> pairs_;
  double base_;
  double noise_std_;
  std::uint64_t seed_;
};

struct PlantedEffects {
  std::vector<std::pair<std::size_t, double>> unary;  // overrides the drawn weight
  std::vector<std::tuple<std::size_t, std::size_t, double>> pairs;
  double weight_low = -0.02;  // unary weights drawn uniformly in [low, high]
  double weight_high = 0.02;
  double target_mean = 0.90;  // base is chosen so the uniform-sampling mean lands here
};

SyntheticOracle make_synthetic(const FeatureSchema& schema, const PlantedEffects& planted, double noise_std,
                               std::uint64_t seed);

// Exhaustive argmax of the noiseless surface (first in enumeration order on
// ties). Throws CapExceeded above `cap` points.
std::pair<Architecture, double> true_optimum(const SyntheticOracle& oracle, std::size_t cap,
                                             const PrunedSet& z = {});

// Exhaustive argmax of what the oracle actually returns (noise included).
std::pair<Architecture, double> observed_optimum(const Oracle& oracle, const FeatureSchema& schema, std::size_t cap);

// --- NASBench-style cell conversion ------------------------------------------

// Schema for cells of up to `max_nodes` nodes (input and output included).
// Node i >= 1 gets a binary group of incoming edges from nodes 0..i-1; each
// interior node gets a one-hot operation group over `ops` plus "absent".
FeatureSchema make_cell_schema(std::size_t max_nodes, const std::vector<std::string>& ops);

// Encodes one cell: `matrix` is the upper-triangular adjacency of n <= max
// nodes, `ops` the per-node operation names (first and last are the
// input/output markers and are not encoded). Smaller cells are padded: the
// output node moves to slot max_nodes-1 and missing interior nodes are
// marked "absent".
FeatureVector encode_cell(const std::vector<std::vector<int>>& matrix, const std::vector<std::string>& ops,
                          const FeatureSchema& cell_schema, std::size_t max_nodes);

}  // namespace gbdtnas
