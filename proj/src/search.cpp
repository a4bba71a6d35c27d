#include "gbdtnas/search.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <fstream>
#include <iostream>
#include <numeric>
#include <unordered_set>

#include "gbdtnas/errors.hpp"

namespace gbdtnas {

// --- config -------------------------------------------------------------------

void SearchConfig::validate() const {
  if (n_init == 0 || k_top == 0 || t_iters == 0) throw ConfigError("N, K and T must be positive");
  if (m_candidates && *m_candidates == 0) throw ConfigError("M must be positive");
  if (m_candidates && k_top > *m_candidates) throw ConfigError("K must not exceed M");
  if (prune_mode != PruneMode::None && n_pf == 0) throw ConfigError("n_pf must be positive when pruning");
  if (max_attempts == 0) throw ConfigError("max_attempts must be positive");
  train.validate();
}

nlohmann::json SearchConfig::to_json() const {
  return {{"n_init", n_init},
          {"m_candidates", m_candidates ? nlohmann::json(*m_candidates) : nlohmann::json("all")},
          {"k_top", k_top},
          {"t_iters", t_iters},
          {"n_pf", n_pf},
          {"prune_mode", to_string(prune_mode)},
          {"norm", to_string(norm)},
          {"seed", seed},
          {"train", train.to_json()},
          {"max_attempts", max_attempts},
          {"enumeration_cap", enumeration_cap}};
}

SearchConfig SearchConfig::from_json(const nlohmann::json& j) {
  SearchConfig c;
  try {
    c.n_init = j.value("n_init", c.n_init);
    if (j.contains("m_candidates")) {
      const auto& m = j.at("m_candidates");
      if (m.is_string()) {
        if (m.get<std::string>() != "all") throw ConfigError("m_candidates must be a count or \"all\"");
        c.m_candidates.reset();
      } else {
        c.m_candidates = m.get<std::size_t>();
      }
    }
    c.k_top = j.value("k_top", c.k_top);
    c.t_iters = j.value("t_iters", c.t_iters);
    c.n_pf = j.value("n_pf", c.n_pf);
    if (j.contains("prune_mode")) c.prune_mode = parse_prune_mode(j.at("prune_mode").get<std::string>());
    if (j.contains("norm")) c.norm = parse_norm_mode(j.at("norm").get<std::string>());
    c.seed = j.value("seed", c.seed);
    if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
    c.max_attempts = j.value("max_attempts", c.max_attempts);
    c.enumeration_cap = j.value("enumeration_cap", c.enumeration_cap);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("search config: ") + e.what());
  }
  return c;
}

// --- trace --------------------------------------------------------------------

void SearchTrace::write_csv(std::ostream& out) const {
  out << "iteration,queries,best_accuracy,pruned_count\n";
  char buf[32];
  for (const auto& r : iterations) {
    std::snprintf(buf, sizeof buf, "%.17g", r.best_accuracy);
    out << r.iteration << ',' << r.queries << ',' << buf << ',' << r.constraints_total << '\n';
  }
}

void SearchTrace::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  write_csv(out);
}

std::optional<std::size_t> SearchTrace::queries_to_reach(double target) const {
  for (std::size_t i = 0; i < query_log.size(); ++i)
    if (query_log[i] >= target) return i + 1;
  return std::nullopt;
}

// --- shared helpers -----------------------------------------------------------

namespace {

class PoolBuilder {
 public:
  PoolBuilder(const FeatureSchema& schema, Oracle& oracle, SearchResult& result)
      : schema_(schema), oracle_(oracle), result_(result) {}

  bool seen(const FeatureVector& v) const { return seen_.count(v) != 0; }

  double evaluate(const FeatureVector& v) {
    const double y = oracle_.query(v);
    result_.trace.query_log.push_back(y);
    if (result_.pool.empty() || y > best_) {
      best_ = y;
      best_index_ = result_.pool.size();
    }
    seen_.insert(v);
    result_.pool.add(v, y);
    return y;
  }

  double best() const { return best_; }

  void finish() {
    if (result_.pool.empty()) return;
    result_.best = decode(result_.pool.vectors[best_index_], schema_);
    result_.best_accuracy = best_;
  }

 private:
  const FeatureSchema& schema_;
  Oracle& oracle_;
  SearchResult& result_;
  std::unordered_set<FeatureVector, FeatureVectorHash> seen_;
  double best_ = 0.0;
  std::size_t best_index_ = 0;
};

}  // namespace

// --- GBDT-NAS(-S3) ------------------------------------------------------------

SearchResult gbdt_nas_s3(const FeatureSchema& schema, Oracle& oracle, const SearchConfig& cfg) {
  cfg.validate();
  SearchResult result;
  result.trace.algorithm = cfg.prune_mode == PruneMode::None ? "gbdt-nas" : "gbdt-nas-s3";
  PoolBuilder pool(schema, oracle, result);
  Rng rng(cfg.seed);
  PrunedSet& z = result.constraints;

  if (space_size_bound(schema, z) < static_cast<double>(cfg.n_init))
    throw ConfigError("N exceeds the size of the search space");

  // Initial pool: N distinct uniform samples.
  const std::size_t init_attempts = std::max<std::size_t>(cfg.max_attempts, 1000 * cfg.n_init);
  std::vector<FeatureVector> init;
  std::unordered_set<FeatureVector, FeatureVectorHash> init_seen;
  for (std::size_t a = 0; init.size() < cfg.n_init; ++a) {
    if (a == init_attempts) throw OverPruned("could not draw N distinct architectures");
    auto v = encode(sample_uniform(schema, rng), schema);
    if (init_seen.insert(v).second) init.push_back(std::move(v));
  }
  for (const auto& v : init) pool.evaluate(v);

  IterationRecord r0;
  r0.pool_size = result.pool.size();
  r0.queries = result.trace.query_log.size();
  r0.best_accuracy = pool.best();
  result.trace.iterations.push_back(r0);

  for (std::size_t it = 1; it <= cfg.t_iters; ++it) {
    IterationRecord rec;
    rec.iteration = it;

    std::optional<GbdtModel> model;
    try {
      model = fit(result.pool, cfg.train, cfg.norm);
    } catch (const DegenerateSpread& e) {
      rec.fallback = true;
      const std::string msg = "iteration " + std::to_string(it) + ": " + e.what() + "; selecting top-K at random";
      result.trace.warnings.push_back(msg);
      std::clog << "warning: " << msg << '\n';
    }

    if (model && cfg.prune_mode != PruneMode::None) {
      PruneReport report = prune(cfg.prune_mode, *model, result.pool, schema, cfg.n_pf, z);
      rec.constraints_added = report.pruned_count();
      result.reports.push_back(std::move(report));
    }
    rec.constraints_total = z.size();

    // Candidate set X_s under the accumulated constraints.
    std::vector<FeatureVector> cands;
    if (!cfg.m_candidates) {
      for_each_architecture(schema, z, cfg.enumeration_cap, [&](const Architecture& a) {
        auto v = encode(a, schema);
        if (!pool.seen(v)) cands.push_back(std::move(v));
      });
    } else {
      const std::size_t m = *cfg.m_candidates;
      std::unordered_set<FeatureVector, FeatureVectorHash> cand_seen;
      const std::size_t draws = 10 * m + cfg.max_attempts;
      for (std::size_t a = 0; a < draws && cands.size() < m; ++a) {
        auto v = encode(sample_constrained(schema, z, rng, cfg.max_attempts), schema);
        if (pool.seen(v) || !cand_seen.insert(v).second) continue;
        cands.push_back(std::move(v));
      }
    }

    std::vector<std::size_t> order(cands.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> predicted(cands.size(), 0.0);
    if (model) {
      predicted = model->predict_batch(cands);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return predicted[a] > predicted[b]; });
    } else {
      std::shuffle(order.begin(), order.end(), rng);
    }
    if (order.size() > cfg.k_top) order.resize(cfg.k_top);
    if (order.size() < cfg.k_top)
      result.trace.warnings.push_back("iteration " + std::to_string(it) + ": only " + std::to_string(order.size()) +
                                      " unexplored candidates");

    for (std::size_t idx : order) {
      rec.topk_predicted.push_back(model ? model->normalizer.denormalize(predicted[idx]) : 0.0);
      rec.topk_realized.push_back(pool.evaluate(cands[idx]));
    }
    rec.pool_size = result.pool.size();
    rec.queries = result.trace.query_log.size();
    rec.best_accuracy = pool.best();
    result.trace.iterations.push_back(std::move(rec));
  }
  pool.finish();
  return result;
}

// --- random search ------------------------------------------------------------

SearchResult random_search(const FeatureSchema& schema, Oracle& oracle, std::size_t budget, std::uint64_t seed,
                           const PrunedSet& z, std::size_t enumeration_cap) {
  if (budget == 0) throw ConfigError("budget must be at least 1");
  SearchResult result;
  result.trace.algorithm = "random";
  result.constraints = z;
  PoolBuilder pool(schema, oracle, result);
  Rng rng(seed);

  auto record = [&] {
    IterationRecord rec;
    rec.iteration = result.trace.query_log.size();
    rec.pool_size = result.pool.size();
    rec.queries = rec.iteration;
    rec.best_accuracy = pool.best();
    rec.constraints_total = z.size();
    result.trace.iterations.push_back(rec);
  };

  const double bound = space_size_bound(schema, z);
  if (static_cast<double>(budget) > bound) budget = static_cast<std::size_t>(bound);
  if (bound <= static_cast<double>(enumeration_cap) && 2.0 * static_cast<double>(budget) >= bound) {
    auto all = enumerate(schema, z, enumeration_cap);
    std::shuffle(all.begin(), all.end(), rng);
    if (all.size() > budget) all.resize(budget);
    for (const auto& a : all) {
      pool.evaluate(encode(a, schema));
      record();
    }
  } else {
    while (result.pool.size() < budget) {
      auto v = encode(sample_constrained(schema, z, rng), schema);
      if (pool.seen(v)) continue;
      pool.evaluate(v);
      record();
    }
  }
  pool.finish();
  return result;
}

// --- regularized evolution ----------------------------------------------------

Architecture mutate(const Architecture& parent, const FeatureSchema& schema, const PrunedSet& z, Rng& rng,
                    std::size_t max_attempts) {
  std::vector<std::size_t> mutable_groups;
  for (std::size_t g = 0; g < schema.num_groups(); ++g) {
    if (schema.group(g).kind == GroupKind::OneHot) {
      if (z.surviving_choices(schema, g).size() >= 2) mutable_groups.push_back(g);
    } else {
      for (std::size_t k = 0; k < schema.group(g).width(); ++k)
        if (!z.feature_forbidden(schema.offset(g) + k)) {
          mutable_groups.push_back(g);
          break;
        }
    }
  }
  if (mutable_groups.empty()) return parent;

  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    Architecture child = parent;
    const std::size_t g = mutable_groups[std::uniform_int_distribution<std::size_t>(0, mutable_groups.size() - 1)(rng)];
    if (schema.group(g).kind == GroupKind::OneHot) {
      std::vector<std::uint32_t> others;
      for (auto c : z.surviving_choices(schema, g))
        if (c != parent.groups[g][0]) others.push_back(c);
      child.groups[g][0] = others[std::uniform_int_distribution<std::size_t>(0, others.size() - 1)(rng)];
    } else {
      std::vector<std::size_t> free;
      for (std::size_t k = 0; k < schema.group(g).width(); ++k)
        if (!z.feature_forbidden(schema.offset(g) + k)) free.push_back(k);
      const std::size_t k = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
      child.groups[g][k] ^= 1u;
    }
    if (z.forbidden_pairs().empty() || z.admits(encode(child, schema))) return child;
  }
  return parent;
}

SearchResult regularized_evolution(const FeatureSchema& schema, Oracle& oracle, std::size_t budget,
                                   const EvolutionConfig& cfg, std::uint64_t seed, const PrunedSet& z) {
  if (budget == 0) throw ConfigError("budget must be at least 1");
  if (cfg.population == 0 || cfg.sample_size == 0) throw ConfigError("population and sample_size must be positive");
  if (cfg.population > budget) throw ConfigError("population must not exceed the budget");
  if (cfg.sample_size > cfg.population) throw ConfigError("sample_size must not exceed the population");

  SearchResult result;
  result.trace.algorithm = "evolution";
  result.constraints = z;
  Rng rng(seed);
  std::deque<std::pair<Architecture, double>> population;
  double best = -1.0;
  Architecture best_arch;

  auto evaluate = [&](const Architecture& a) {
    const auto v = encode(a, schema);
    const double y = oracle.query(v);
    result.trace.query_log.push_back(y);
    result.pool.add(v, y);
    if (y > best) {
      best = y;
      best_arch = a;
    }
    IterationRecord rec;
    rec.iteration = result.trace.query_log.size();
    rec.queries = rec.iteration;
    rec.pool_size = result.pool.size();
    rec.best_accuracy = best;
    rec.constraints_total = z.size();
    result.trace.iterations.push_back(rec);
    return y;
  };

  while (population.size() < cfg.population) {
    Architecture a = sample_constrained(schema, z, rng, cfg.max_attempts);
    const double y = evaluate(a);
    population.emplace_back(std::move(a), y);
  }
  std::vector<std::size_t> idx(population.size());
  while (result.trace.query_log.size() < budget) {
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher-Yates: first sample_size entries form the tournament.
    for (std::size_t i = 0; i < cfg.sample_size; ++i) {
      const std::size_t j = std::uniform_int_distribution<std::size_t>(i, idx.size() - 1)(rng);
      std::swap(idx[i], idx[j]);
    }
    std::size_t winner = idx[0];
    for (std::size_t i = 1; i < cfg.sample_size; ++i)
      if (population[idx[i]].second > population[winner].second ||
          (population[idx[i]].second == population[winner].second && idx[i] < winner))
        winner = idx[i];
    Architecture child = mutate(population[winner].first, schema, z, rng, cfg.max_attempts);
    const double y = evaluate(child);
    population.emplace_back(std::move(child), y);
    population.pop_front();
  }
  result.best = best_arch;
  result.best_accuracy = best;
  return result;
}

// --- pairwise accuracy --------------------------------------------------------

PairwiseAccuracy pairwise_accuracy_detail(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) throw ConfigError("pairwise accuracy: length mismatch");
  const std::size_t n = predictions.size();
  if (n < 2) throw ConfigError("pairwise accuracy needs at least two samples");
  PairwiseAccuracy out;
  std::size_t concordant = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (predictions[i] >= predictions[j] && targets[i] >= targets[j]) ++concordant;
      if (i < j) {
        out.prediction_ties += predictions[i] == predictions[j];
        out.target_ties += targets[i] == targets[j];
      }
    }
  }
  out.value = static_cast<double>(concordant) / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
  return out;
}

double pairwise_accuracy(std::span<const double> predictions, std::span<const double> targets) {
  return pairwise_accuracy_detail(predictions, targets).value;
}

}  // namespace gbdtnas
