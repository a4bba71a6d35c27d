#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gbdtnas/bench.hpp"
#include "gbdtnas/gbdt.hpp"
#include "gbdtnas/prune.hpp"
#include "gbdtnas/space.hpp"

namespace gbdtnas {

struct SearchConfig {
  std::size_t n_init = 1000;                     // N
  std::optional<std::size_t> m_candidates = 5000;  // M; nullopt = the whole (constrained) space
  std::size_t k_top = 300;                       // K
  std::size_t t_iters = 3;                       // T
  std::size_t n_pf = 20;
  PruneMode prune_mode = PruneMode::None;
  NormMode norm = NormMode::Standardize;
  std::uint64_t seed = 0;
  TrainConfig train;
  std::size_t max_attempts = kDefaultMaxAttempts;
  std::size_t enumeration_cap = 10'000'000;

  void validate() const;
  nlohmann::json to_json() const;
  static SearchConfig from_json(const nlohmann::json& j);
};

struct IterationRecord {
  std::size_t iteration = 0;
  std::size_t pool_size = 0;
  std::size_t constraints_added = 0;
  std::size_t constraints_total = 0;
  std::uint64_t queries = 0;
  double best_accuracy = 0.0;
  std::vector<double> topk_predicted;  // raw accuracy scale
  std::vector<double> topk_realized;
  bool fallback = false;  // degenerate normalizer: top-K chosen at random
};

struct SearchTrace {
  std::string algorithm;
  std::vector<IterationRecord> iterations;
  std::vector<double> query_log;  // accuracy of every oracle query, in order
  std::vector<std::string> warnings;

  // Columns: iteration,queries,best_accuracy,pruned_count
  void write_csv(std::ostream& out) const;
  void write_csv(const std::string& path) const;
  // 1-based index of the first query reaching `target`, if any.
  std::optional<std::size_t> queries_to_reach(double target) const;
};

struct SearchResult {
  Architecture best;
  double best_accuracy = 0.0;
  SearchTrace trace;
  PrunedSet constraints;
  std::vector<PruneReport> reports;
  ArchPool pool;
};

// GBDT-NAS-S3; with PruneMode::None it is plain GBDT-NAS. Candidates are
// de-duplicated against the evaluated pool, so the oracle sees N + T*K
// queries unless the unexplored constrained space runs out first.
SearchResult gbdt_nas_s3(const FeatureSchema& schema, Oracle& oracle, const SearchConfig& cfg);

// Uniform sampling without replacement. Budgets above the space size are
// clipped to it; shuffled enumeration is used whenever the budget is at
// least half the (enumerable) space.
SearchResult random_search(const FeatureSchema& schema, Oracle& oracle, std::size_t budget, std::uint64_t seed,
                           const PrunedSet& z = {}, std::size_t enumeration_cap = 10'000'000);

struct EvolutionConfig {
  std::size_t population = 50;
  std::size_t sample_size = 10;
  std::size_t max_attempts = kDefaultMaxAttempts;
};

// Aging evolution: tournament selection, single-group mutation, oldest
// member evicted each step.
SearchResult regularized_evolution(const FeatureSchema& schema, Oracle& oracle, std::size_t budget,
                                   const EvolutionConfig& cfg, std::uint64_t seed, const PrunedSet& z = {});

// Re-draws one uniformly chosen group: a different surviving choice for a
// one-hot group, one flipped free bit for a binary group.
Architecture mutate(const Architecture& parent, const FeatureSchema& schema, const PrunedSet& z, Rng& rng,
                    std::size_t max_attempts = kDefaultMaxAttempts);

struct PairwiseAccuracy {
  double value = 0.0;
  std::size_t prediction_ties = 0;  // unordered pairs with equal predictions
  std::size_t target_ties = 0;      // unordered pairs with equal targets
};

// sum over ordered pairs x1 != x2 of 1[f1 >= f2] * 1[y1 >= y2], divided by
// n(n-1)/2. Ties count in both orders, so the value can exceed 1.
PairwiseAccuracy pairwise_accuracy_detail(std::span<const double> predictions, std::span<const double> targets);
double pairwise_accuracy(std::span<const double> predictions, std::span<const double> targets);

}  // namespace gbdtnas
