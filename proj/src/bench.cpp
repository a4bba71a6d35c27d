#include "gbdtnas/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "gbdtnas/errors.hpp"
#include "gbdtnas/gbdt.hpp"

namespace gbdtnas {

// --- TabularOracle ------------------------------------------------------------

void TabularOracle::insert(const FeatureVector& x, double accuracy) {
  auto [it, inserted] = table_.emplace(x, accuracy);
  if (inserted) {
    rows_.emplace_back(x, accuracy);
    return;
  }
  if (it->second != accuracy)
    throw OracleError("conflicting accuracies for one architecture: " + std::to_string(it->second) + " vs " +
                      std::to_string(accuracy));
}

double TabularOracle::evaluate(const FeatureVector& x) const {
  auto it = table_.find(x);
  if (it == table_.end()) throw OracleError("architecture not in table: " + describe(x, schema_));
  return it->second;
}

TabularOracle load_table(const std::string& path, const FeatureSchema& schema) {
  ArchPool rows = load_pool_csv(path, schema);
  TabularOracle oracle(schema);
  for (std::size_t i = 0; i < rows.size(); ++i) oracle.insert(rows.vectors[i], rows.targets[i]);
  return oracle;
}

// --- SyntheticOracle ----------------------------------------------------------

SyntheticOracle::SyntheticOracle(FeatureSchema schema, std::vector<double> unary,
                                 std::map<std::pair<std::size_t, std::size_t>, double> pairs, double base,
                                 double noise_std, std::uint64_t seed)
    : schema_(std::move(schema)), unary_(std::move(unary)), base_(base), noise_std_(noise_std), seed_(seed) {
  if (unary_.size() != schema_.dim()) throw ConfigError("synthetic oracle: one unary weight per feature required");
  if (noise_std_ < 0.0 || !std::isfinite(noise_std_)) throw ConfigError("synthetic oracle: bad noise_std");
  for (double w : unary_)
    if (!std::isfinite(w)) throw ConfigError("synthetic oracle: non-finite weight");
  for (const auto& [k, w] : pairs) {
    auto [a, b] = k;
    if (a == b || a >= schema_.dim() || b >= schema_.dim()) throw ConfigError("synthetic oracle: bad pair index");
    if (!std::isfinite(w)) throw ConfigError("synthetic oracle: non-finite weight");
    pairs_[{std::min(a, b), std::max(a, b)}] += w;
  }
}

double SyntheticOracle::surface(const FeatureVector& x) const {
  if (x.size() != schema_.dim()) throw OracleError("synthetic oracle: dimension mismatch");
  double s = base_;
  for (std::size_t j = 0; j < x.size(); ++j)
    if (x[j]) s += unary_[j];
  for (const auto& [k, w] : pairs_)
    if (x[k.first] && x[k.second]) s += w;
  return s;
}

double SyntheticOracle::noiseless(const FeatureVector& x) const { return std::clamp(surface(x), 0.0, 1.0); }

double SyntheticOracle::noise(const FeatureVector& x) const {
  if (noise_std_ == 0.0) return 0.0;
  // splitmix64 over (seed, bits) seeds a private engine per architecture.
  std::uint64_t h = seed_ ^ 0x9E3779B97F4A7C15ULL;
  auto mix = [](std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  for (std::size_t j = 0; j < x.size(); ++j) h = mix(h + (x[j] ? 0x632BE59BD9B4E019ULL : 0x8CB92BA72F3D8DD7ULL) + j);
  Rng rng(h);
  std::normal_distribution<double> gauss(0.0, noise_std_);
  return gauss(rng);
}

double SyntheticOracle::evaluate(const FeatureVector& x) const {
  return std::clamp(surface(x) + noise(x), 0.0, 1.0);
}

nlohmann::json SyntheticOracle::to_json() const {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [k, w] : pairs_) pairs.push_back({k.first, k.second, w});
  return {{"format", "gbdtnas-synthetic-1"},
          {"schema", schema_.to_json()},
          {"base", base_},
          {"noise_std", noise_std_},
          {"seed", seed_},
          {"unary", unary_},
          {"pairs", std::move(pairs)}};
}

SyntheticOracle SyntheticOracle::from_json(const nlohmann::json& j) {
  try {
    std::map<std::pair<std::size_t, std::size_t>, double> pairs;
    for (const auto& p : j.at("pairs")) pairs[{p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>()}] = p.at(2).get<double>();
    return SyntheticOracle(FeatureSchema::from_json(j.at("schema")), j.at("unary").get<std::vector<double>>(),
                           std::move(pairs), j.at("base").get<double>(), j.at("noise_std").get<double>(),
                           j.at("seed").get<std::uint64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic oracle: ") + e.what());
  }
}

void SyntheticOracle::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << to_json().dump(1) << '\n';
}

SyntheticOracle SyntheticOracle::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return from_json(j);
}

SyntheticOracle make_synthetic(const FeatureSchema& schema, const PlantedEffects& planted, double noise_std,
                               std::uint64_t seed) {
  if (!(planted.weight_low <= planted.weight_high)) throw ConfigError("weight range is empty");
  const std::size_t d = schema.dim();
  Rng rng(seed);
  std::uniform_real_distribution<double> draw(planted.weight_low, planted.weight_high);
  std::vector<double> unary(d);
  for (auto& w : unary) w = planted.weight_low == planted.weight_high ? planted.weight_low : draw(rng);
  for (const auto& [j, w] : planted.unary) {
    if (j >= d) throw ConfigError("planted feature index out of range");
    if (!std::isfinite(w)) throw ConfigError("planted weight must be finite");
    unary[j] = w;
  }
  std::map<std::pair<std::size_t, std::size_t>, double> pairs;
  for (const auto& [a, b, w] : planted.pairs) {
    if (!std::isfinite(w)) throw ConfigError("planted weight must be finite");
    pairs[{std::min(a, b), std::max(a, b)}] = w;
  }

  // P(x_j = 1) under uniform sampling.
  std::vector<double> p(d);
  for (std::size_t g = 0; g < schema.num_groups(); ++g) {
    const auto& grp = schema.group(g);
    for (std::size_t k = 0; k < grp.width(); ++k)
      p[schema.offset(g) + k] = grp.kind == GroupKind::OneHot ? 1.0 / static_cast<double>(grp.width()) : 0.5;
  }
  double mean = 0.0;
  for (std::size_t j = 0; j < d; ++j) mean += unary[j] * p[j];
  for (const auto& [k, w] : pairs) {
    const auto [a, b] = k;
    const bool exclusive = schema.group_of(a) == schema.group_of(b) && schema.group(schema.group_of(a)).kind == GroupKind::OneHot;
    if (!exclusive) mean += w * p[a] * p[b];
  }
  return SyntheticOracle(schema, std::move(unary), std::move(pairs), planted.target_mean - mean, noise_std, seed);
}

std::pair<Architecture, double> true_optimum(const SyntheticOracle& oracle, std::size_t cap, const PrunedSet& z) {
  const auto& schema = oracle.schema();
  std::pair<Architecture, double> best{{}, -1.0};
  for_each_architecture(schema, z, cap, [&](const Architecture& a) {
    const double y = oracle.noiseless(encode(a, schema));
    if (y > best.second) best = {a, y};
  });
  if (best.second < 0.0) throw OracleError("constrained space is empty");
  return best;
}

std::pair<Architecture, double> observed_optimum(const Oracle& oracle, const FeatureSchema& schema, std::size_t cap) {
  std::pair<Architecture, double> best{{}, -1.0};
  for_each_architecture(schema, PrunedSet{}, cap, [&](const Architecture& a) {
    const double y = oracle.evaluate(encode(a, schema));
    if (y > best.second) best = {a, y};
  });
  return best;
}

// --- cells --------------------------------------------------------------------

FeatureSchema make_cell_schema(std::size_t max_nodes, const std::vector<std::string>& ops) {
  if (max_nodes < 2) throw ConfigError("a cell needs at least input and output nodes");
  if (ops.empty()) throw ConfigError("a cell needs at least one operation");
  std::vector<FeatureGroup> groups;
  for (std::size_t i = 1; i < max_nodes; ++i) {
    FeatureGroup edges;
    edges.kind = GroupKind::Binary;
    edges.name = "node " + std::to_string(i) + " inputs";
    for (std::size_t j = 0; j < i; ++j)
      edges.labels.push_back("node " + std::to_string(i) + " from node " + std::to_string(j));
    groups.push_back(std::move(edges));
    if (i + 1 == max_nodes) break;
    FeatureGroup op;
    op.kind = GroupKind::OneHot;
    op.name = "node " + std::to_string(i) + " op";
    for (const auto& o : ops) op.labels.push_back("node " + std::to_string(i) + " is " + o);
    op.labels.push_back("node " + std::to_string(i) + " is absent");
    groups.push_back(std::move(op));
  }
  return FeatureSchema(std::move(groups));
}

FeatureVector encode_cell(const std::vector<std::vector<int>>& matrix, const std::vector<std::string>& ops,
                          const FeatureSchema& cell_schema, std::size_t max_nodes) {
  const std::size_t n = matrix.size();
  if (n < 2 || n > max_nodes) throw ConfigError("cell has " + std::to_string(n) + " nodes; expected 2.." + std::to_string(max_nodes));
  if (ops.size() != n) throw ConfigError("cell: one operation per node required");
  for (const auto& row : matrix)
    if (row.size() != n) throw ConfigError("cell: adjacency matrix must be square");

  auto slot = [&](std::size_t k) { return k + 1 == n ? max_nodes - 1 : k; };
  FeatureVector v(std::vector<std::uint8_t>(cell_schema.dim(), 0));
  for (std::size_t k = 1; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!matrix[j][k]) continue;
      if (j >= k) throw ConfigError("cell: adjacency matrix must be strictly upper triangular");
      v[cell_schema.feature_index("node " + std::to_string(slot(k)) + " from node " + std::to_string(slot(j)))] = 1;
    }
  }
  for (std::size_t i = 1; i + 1 < max_nodes; ++i) {
    const std::string op = i + 1 < n ? ops[i] : std::string("absent");
    v[cell_schema.feature_index("node " + std::to_string(i) + " is " + op)] = 1;
  }
  validate(v, cell_schema);
  return v;
}

}  // namespace gbdtnas
