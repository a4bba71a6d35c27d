#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gbdtnas/gbdt.hpp"
#include "gbdtnas/space.hpp"

namespace gbdtnas {

enum class PruneMode { None, FirstOrder, SecondOrder, Importance };

PruneMode parse_prune_mode(const std::string& s);
std::string to_string(PruneMode m);

enum class PruneDecision {
  Pruned,          // constraint added to the delta
  Kept,            // statistic not below the threshold
  Refused,         // would leave the space empty
  AlreadyPresent,  // constraint (or an implying one) already in force
};

std::string to_string(PruneDecision d);

// One examined candidate. `second < 0` marks a single feature. For pairs,
// `target_a`/`target_b` name the constraint the cascade settled on.
struct ExaminedEntry {
  std::size_t first = 0;
  long second = -1;
  double statistic = 0.0;            // ranking statistic
  std::size_t support = 0;           // samples behind the statistic
  double s11 = 0.0, s10 = 0.0, s01 = 0.0;  // second-order partition means
  std::size_t n11 = 0, n10 = 0, n01 = 0;
  double mean_with = 0.0, mean_without = 0.0;  // importance baseline only
  long target_a = -1, target_b = -1;
  PruneDecision decision = PruneDecision::Kept;
};

struct PruneReport {
  PruneMode mode = PruneMode::None;
  std::vector<ExaminedEntry> examined;
  PrunedSet delta;  // newly added constraints only

  std::size_t pruned_count() const { return delta.size(); }
  nlohmann::json to_json(const FeatureSchema& schema) const;
};

// Ranks not-yet-forbidden features by their mean SHAP value over the pool
// samples where the feature is 1 (most negative first) and forbids each of
// the first n_pf whose mean is below 0. Features never set in the pool are
// not ranked. Constraints go into `z` as well as the report's delta.
PruneReport prune_first_order(const GbdtModel& model, const ArchPool& pool, const FeatureSchema& schema,
                              std::size_t n_pf, PrunedSet& z);

// Ranks feature pairs by their mean interaction value over samples where both
// are 1, then applies the S11 / S10 / S01 cascade to the first n_pf.
PruneReport prune_second_order(const GbdtModel& model, const ArchPool& pool, const FeatureSchema& schema,
                               std::size_t n_pf, PrunedSet& z);

inline constexpr double kDefaultImportanceMargin = 0.01;

// Baseline: walks the n_pf most important features and forbids a feature when
// the pool's mean accuracy with it trails the mean without it by more than
// `margin`.
PruneReport prune_by_importance(const GbdtModel& model, const ArchPool& pool, const FeatureSchema& schema,
                                std::size_t n_pf, PrunedSet& z, double margin = kDefaultImportanceMargin);

PruneReport prune(PruneMode mode, const GbdtModel& model, const ArchPool& pool, const FeatureSchema& schema,
                  std::size_t n_pf, PrunedSet& z);

}  // namespace gbdtnas
