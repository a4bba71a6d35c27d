#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace gbdtnas {

using Rng = std::mt19937_64;

enum class GroupKind { OneHot, Binary };

struct FeatureGroup {
  GroupKind kind = GroupKind::OneHot;
  std::string name;
  std::vector<std::string> labels;

  std::size_t width() const { return labels.size(); }
};

// A search space as an ordered list of one-hot groups and free binary slots.
// Feature index = position in the flattened label list.
class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<FeatureGroup> groups);

  static FeatureSchema from_json(const nlohmann::json& j);
  static FeatureSchema load(const std::string& path);
  nlohmann::json to_json() const;

  const std::vector<FeatureGroup>& groups() const { return groups_; }
  const FeatureGroup& group(std::size_t g) const { return groups_.at(g); }
  std::size_t num_groups() const { return groups_.size(); }
  std::size_t dim() const { return dim_; }

  // First feature index of group g.
  std::size_t offset(std::size_t g) const { return offsets_.at(g); }
  std::size_t group_of(std::size_t feature) const { return owner_.at(feature); }
  const std::string& label(std::size_t feature) const { return labels_.at(feature); }
  const std::vector<std::string>& labels() const { return labels_; }
  // Index of the feature carrying `label`; throws ConfigError if absent.
  std::size_t feature_index(const std::string& label) const;

  bool operator==(const FeatureSchema& other) const;

 private:
  std::vector<FeatureGroup> groups_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> owner_;
  std::vector<std::string> labels_;
  std::size_t dim_ = 0;
};

// `layers` one-hot groups over the same operation list, labelled
// "layer i is <op>" (1-based layers).
FeatureSchema make_chain_schema(std::size_t layers, const std::vector<std::string>& ops);

// Flat 0/1 encoding of an architecture.
struct FeatureVector {
  std::vector<std::uint8_t> bits;

  FeatureVector() = default;
  explicit FeatureVector(std::vector<std::uint8_t> b) : bits(std::move(b)) {}

  std::size_t size() const { return bits.size(); }
  std::uint8_t operator[](std::size_t i) const { return bits[i]; }
  std::uint8_t& operator[](std::size_t i) { return bits[i]; }
  auto operator<=>(const FeatureVector&) const = default;
};

struct FeatureVectorHash {
  std::size_t operator()(const FeatureVector& v) const noexcept;
};

// Per group: a one-element list holding the chosen index (OneHot) or one bit
// per feature (Binary).
struct Architecture {
  std::vector<std::vector<std::uint32_t>> groups;

  auto operator<=>(const Architecture&) const = default;
};

FeatureVector encode(const Architecture& arch, const FeatureSchema& schema);
Architecture decode(const FeatureVector& vec, const FeatureSchema& schema);

// Throws ConfigError unless every one-hot group has exactly one set bit and
// every entry is 0 or 1.
void validate(const FeatureVector& vec, const FeatureSchema& schema);

// Labels of the active features, joined by "; ".
std::string describe(const FeatureVector& vec, const FeatureSchema& schema);

// Accumulated pruning constraints: features forced to 0 and unordered pairs
// that may not both be 1. Additions that would leave no valid architecture are
// refused.
class PrunedSet {
 public:
  enum class AddResult { Added, AlreadyPresent, Refused };

  using Pair = std::pair<std::size_t, std::size_t>;

  AddResult forbid_feature(const FeatureSchema& schema, std::size_t feature);
  AddResult forbid_pair(const FeatureSchema& schema, std::size_t a, std::size_t b);
  // Applies every constraint of `delta`; returns how many were newly added.
  std::size_t merge(const FeatureSchema& schema, const PrunedSet& delta);

  bool feature_forbidden(std::size_t feature) const { return features_.count(feature) != 0; }
  bool pair_forbidden(std::size_t a, std::size_t b) const;
  const std::set<std::size_t>& forbidden_features() const { return features_; }
  const std::set<Pair>& forbidden_pairs() const { return pairs_; }
  std::size_t size() const { return features_.size() + pairs_.size(); }
  bool empty() const { return features_.empty() && pairs_.empty(); }

  bool admits(const FeatureVector& vec) const;
  // Surviving choice indices of a one-hot group.
  std::vector<std::uint32_t> surviving_choices(const FeatureSchema& schema, std::size_t g) const;
  // True when at least one architecture satisfies every constraint.
  bool satisfiable(const FeatureSchema& schema) const;

  nlohmann::json to_json(const FeatureSchema& schema) const;
  static PrunedSet from_json(const nlohmann::json& j);

  bool operator==(const PrunedSet&) const = default;

 private:
  std::set<std::size_t> features_;
  std::set<Pair> pairs_;
};

inline constexpr std::size_t kDefaultMaxAttempts = 1000;

Architecture sample_uniform(const FeatureSchema& schema, Rng& rng);
Architecture sample_uniform(const FeatureSchema& schema, std::uint64_t seed);

// Per-group uniform proposal over surviving choices, rejected until no
// forbidden pair is fully set. Throws OverPruned after `max_attempts`.
Architecture sample_constrained(const FeatureSchema& schema, const PrunedSet& z, Rng& rng,
                                std::size_t max_attempts = kDefaultMaxAttempts);
Architecture sample_constrained(const FeatureSchema& schema, const PrunedSet& z, std::uint64_t seed,
                                std::size_t max_attempts = kDefaultMaxAttempts);

// Size of the space under the feature constraints of z (pair constraints not
// subtracted). Returned as double since real spaces overflow 64 bits.
double space_size_bound(const FeatureSchema& schema, const PrunedSet& z);

// Visits every valid architecture once, lexicographically in group order.
// Throws CapExceeded when space_size_bound exceeds `cap`.
void for_each_architecture(const FeatureSchema& schema, const PrunedSet& z, std::size_t cap,
                           const std::function<void(const Architecture&)>& visit);
std::vector<Architecture> enumerate(const FeatureSchema& schema, const PrunedSet& z, std::size_t cap);

}  // namespace gbdtnas
