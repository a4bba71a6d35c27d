#include "gbdtnas/prune.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "gbdtnas/errors.hpp"
#include "gbdtnas/shap.hpp"

namespace gbdtnas {

PruneMode parse_prune_mode(const std::string& s) {
  if (s == "none") return PruneMode::None;
  if (s == "first-order" || s == "first" || s == "1st") return PruneMode::FirstOrder;
  if (s == "second-order" || s == "second" || s == "2nd") return PruneMode::SecondOrder;
  if (s == "importance") return PruneMode::Importance;
  throw ConfigError("unknown prune mode '" + s + "'");
}

std::string to_string(PruneMode m) {
  switch (m) {
    case PruneMode::None: return "none";
    case PruneMode::FirstOrder: return "first-order";
    case PruneMode::SecondOrder: return "second-order";
    case PruneMode::Importance: return "importance";
  }
  return "?";
}

std::string to_string(PruneDecision d) {
  switch (d) {
    case PruneDecision::Pruned: return "pruned";
    case PruneDecision::Kept: return "kept";
    case PruneDecision::Refused: return "refused";
    case PruneDecision::AlreadyPresent: return "already-present";
  }
  return "?";
}

nlohmann::json PruneReport::to_json(const FeatureSchema& schema) const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : examined) {
    nlohmann::json r{{"feature", e.first}, {"label", schema.label(e.first)}, {"statistic", e.statistic},
                     {"support", e.support}, {"decision", to_string(e.decision)}};
    if (e.second >= 0) {
      r["feature_b"] = e.second;
      r["label_b"] = schema.label(static_cast<std::size_t>(e.second));
      r["s11"] = e.s11;
      r["s10"] = e.s10;
      r["s01"] = e.s01;
      r["n11"] = e.n11;
      r["n10"] = e.n10;
      r["n01"] = e.n01;
    }
    if (mode == PruneMode::Importance) {
      r["mean_with"] = e.mean_with;
      r["mean_without"] = e.mean_without;
    }
    if (e.target_a >= 0) {
      nlohmann::json t = nlohmann::json::array({schema.label(static_cast<std::size_t>(e.target_a))});
      if (e.target_b >= 0) t.push_back(schema.label(static_cast<std::size_t>(e.target_b)));
      r["constraint"] = std::move(t);
    }
    rows.push_back(std::move(r));
  }
  return {{"mode", to_string(mode)},
          {"examined", std::move(rows)},
          {"pruned_count", pruned_count()},
          {"delta", delta.to_json(schema)}};
}

namespace {

void check_inputs(const GbdtModel& model, const ArchPool& pool, const FeatureSchema& schema) {
  if (pool.empty()) throw ConfigError("pruning needs a non-empty pool");
  if (model.dim != schema.dim()) throw ConfigError("model and schema dimensions differ");
}

PruneDecision apply(PrunedSet::AddResult r) {
  switch (r) {
    case PrunedSet::AddResult::Added: return PruneDecision::Pruned;
    case PrunedSet::AddResult::AlreadyPresent: return PruneDecision::AlreadyPresent;
    case PrunedSet::AddResult::Refused: return PruneDecision::Refused;
  }
  return PruneDecision::Kept;
}

PruneDecision forbid_feature(const FeatureSchema& schema, std::size_t f, PrunedSet& z, PruneReport& report) {
  const auto d = apply(z.forbid_feature(schema, f));
  if (d == PruneDecision::Pruned) report.delta.forbid_feature(schema, f);
  return d;
}

}  // namespace

PruneReport prune_first_order(const GbdtModel& model, const ArchPool& pool, const FeatureSchema& schema,
                              std::size_t n_pf, PrunedSet& z) {
  check_inputs(model, pool, schema);
  PruneReport report;
  report.mode = PruneMode::FirstOrder;
  const ShapMatrix s = shap_values(model, pool.vectors);
  const std::size_t d = schema.dim();

  std::vector<double> sum(d, 0.0);
  std::vector<std::size_t> ones(d, 0);
  for (std::size_t i = 0; i < pool.size(); ++i)
    for (std::size_t j = 0; j < d; ++j)
      if (pool.vectors[i][j]) {
        sum[j] += s(i, j);
        ++ones[j];
      }

  std::vector<ExaminedEntry> ranked;
  for (std::size_t j = 0; j < d; ++j) {
    if (ones[j] == 0 || z.feature_forbidden(j)) continue;
    ExaminedEntry e;
    e.first = j;
    e.statistic = sum[j] / static_cast<double>(ones[j]);
    e.support = ones[j];
    ranked.push_back(e);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const ExaminedEntry& a, const ExaminedEntry& b) { return a.statistic < b.statistic; });
  if (ranked.size() > n_pf) ranked.resize(n_pf);

  for (auto& e : ranked) {
    if (e.statistic < 0.0) {
      e.decision = forbid_feature(schema, e.first, z, report);
      e.target_a = static_cast<long>(e.first);
    } else {
      e.decision = PruneDecision::Kept;
    }
  }
  report.examined = std::move(ranked);
  return report;
}

PruneReport prune_second_order(const GbdtModel& model, const ArchPool& pool, const FeatureSchema& schema,
                               std::size_t n_pf, PrunedSet& z) {
  check_inputs(model, pool, schema);
  PruneReport report;
  report.mode = PruneMode::SecondOrder;
  const std::size_t d = schema.dim();

  // Pairs that never share a tree path have interaction exactly 0 and can
  // never satisfy a strict-negativity test, so only co-occurring ones are
  // ranked.
  struct Acc {
    double sum11 = 0, sum10 = 0, sum01 = 0;
    std::size_t n11 = 0, n10 = 0, n01 = 0;
  };
  const auto pairs = cooccurring_pairs(model);
  std::vector<Acc> acc(pairs.size());
  for_each_interaction(model, pool.vectors, [&](std::size_t i, std::span<const double> slice) {
    const auto& x = pool.vectors[i];
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const auto [a, b] = pairs[p];
      const double v = slice[a * d + b];
      if (x[a] && x[b]) {
        acc[p].sum11 += v;
        ++acc[p].n11;
      } else if (x[a]) {
        acc[p].sum10 += v;
        ++acc[p].n10;
      } else if (x[b]) {
        acc[p].sum01 += v;
        ++acc[p].n01;
      }
    }
  });

  std::vector<ExaminedEntry> ranked;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [a, b] = pairs[p];
    const auto& c = acc[p];
    if (c.n11 == 0) continue;
    if (z.feature_forbidden(a) || z.feature_forbidden(b) || z.pair_forbidden(a, b)) continue;
    ExaminedEntry e;
    e.first = a;
    e.second = static_cast<long>(b);
    e.n11 = c.n11;
    e.n10 = c.n10;
    e.n01 = c.n01;
    e.s11 = c.sum11 / static_cast<double>(c.n11);
    e.s10 = c.n10 ? c.sum10 / static_cast<double>(c.n10) : 0.0;
    e.s01 = c.n01 ? c.sum01 / static_cast<double>(c.n01) : 0.0;
    e.statistic = e.s11;
    e.support = c.n11;
    ranked.push_back(e);
  }
  // cooccurring_pairs is sorted by (a, b), so a stable sort keeps that order on ties.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const ExaminedEntry& x, const ExaminedEntry& y) { return x.statistic < y.statistic; });
  if (ranked.size() > n_pf) ranked.resize(n_pf);

  for (auto& e : ranked) {
    const auto a = e.first;
    const auto b = static_cast<std::size_t>(e.second);
    if (e.n11 > 0 && e.s11 < 0.0) {
      e.target_a = static_cast<long>(a);
      e.target_b = static_cast<long>(b);
      e.decision = apply(z.forbid_pair(schema, a, b));
      if (e.decision == PruneDecision::Pruned) report.delta.forbid_pair(schema, a, b);
    } else if (e.n10 > 0 && e.s10 < 0.0) {
      e.target_a = static_cast<long>(a);
      e.decision = forbid_feature(schema, a, z, report);
    } else if (e.n01 > 0 && e.s01 < 0.0) {
      e.target_a = static_cast<long>(b);
      e.decision = forbid_feature(schema, b, z, report);
    } else {
      e.decision = PruneDecision::Kept;
    }
  }
  report.examined = std::move(ranked);
  return report;
}

PruneReport prune_by_importance(const GbdtModel& model, const ArchPool& pool, const FeatureSchema& schema,
                                std::size_t n_pf, PrunedSet& z, double margin) {
  check_inputs(model, pool, schema);
  PruneReport report;
  report.mode = PruneMode::Importance;
  const auto importance = model.feature_importance();
  const std::size_t d = schema.dim();

  std::vector<std::size_t> order;
  for (std::size_t j = 0; j < d; ++j)
    if (importance[j] > 0.0 && !z.feature_forbidden(j)) order.push_back(j);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return importance[a] > importance[b]; });

  for (std::size_t j : order) {
    if (report.examined.size() == n_pf) break;
    double with = 0, without = 0;
    std::size_t n_with = 0, n_without = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (pool.vectors[i][j]) {
        with += pool.targets[i];
        ++n_with;
      } else {
        without += pool.targets[i];
        ++n_without;
      }
    }
    if (n_with == 0 || n_without == 0) continue;
    ExaminedEntry e;
    e.first = j;
    e.mean_with = with / static_cast<double>(n_with);
    e.mean_without = without / static_cast<double>(n_without);
    e.statistic = e.mean_with - e.mean_without;
    e.support = n_with;
    if (e.mean_with + margin < e.mean_without) {
      e.target_a = static_cast<long>(j);
      e.decision = forbid_feature(schema, j, z, report);
    }
    report.examined.push_back(e);
  }
  return report;
}

PruneReport prune(PruneMode mode, const GbdtModel& model, const ArchPool& pool, const FeatureSchema& schema,
                  std::size_t n_pf, PrunedSet& z) {
  switch (mode) {
    case PruneMode::FirstOrder: return prune_first_order(model, pool, schema, n_pf, z);
    case PruneMode::SecondOrder: return prune_second_order(model, pool, schema, n_pf, z);
    case PruneMode::Importance: return prune_by_importance(model, pool, schema, n_pf, z);
    case PruneMode::None: break;
  }
  PruneReport r;
  r.mode = PruneMode::None;
  return r;
}

}  // namespace gbdtnas
