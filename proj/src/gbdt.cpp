#include "gbdtnas/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "gbdtnas/errors.hpp"

namespace gbdtnas {

NormMode parse_norm_mode(const std::string& s) {
  if (s == "minmax" || s == "min-max") return NormMode::MinMax;
  if (s == "standardize" || s == "std" || s == "standardization") return NormMode::Standardize;
  throw ConfigError("unknown normalization '" + s + "'");
}

std::string to_string(NormMode m) { return m == NormMode::MinMax ? "minmax" : "standardize"; }

// --- Normalizer ---------------------------------------------------------------

Normalizer::Normalizer(NormMode mode, double shift, double scale) : mode_(mode), shift_(shift), scale_(scale) {
  if (!(scale > 0.0) || !std::isfinite(scale) || !std::isfinite(shift))
    throw DegenerateSpread("normalizer spread must be positive and finite");
}

Normalizer Normalizer::fit(std::span<const double> targets, NormMode mode) {
  if (targets.empty()) throw ConfigError("cannot fit a normalizer on no targets");
  if (mode == NormMode::MinMax) {
    auto [lo, hi] = std::minmax_element(targets.begin(), targets.end());
    if (!(*hi > *lo)) throw DegenerateSpread("min-max normalizer: y_max == y_min");
    return Normalizer(mode, *lo, *hi - *lo);
  }
  auto [lo, hi] = std::minmax_element(targets.begin(), targets.end());
  if (!(*hi > *lo)) throw DegenerateSpread("standardizer: zero standard deviation");
  const double n = static_cast<double>(targets.size());
  const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / n;
  double ss = 0.0;
  for (double y : targets) ss += (y - mean) * (y - mean);
  const double sd = std::sqrt(ss / n);
  if (!(sd > 0.0)) throw DegenerateSpread("standardizer: zero standard deviation");
  return Normalizer(mode, mean, sd);
}

nlohmann::json Normalizer::to_json() const {
  if (mode_ == NormMode::MinMax)
    return {{"mode", to_string(mode_)}, {"y_min", shift_}, {"y_max", shift_ + scale_}, {"shift", shift_},
            {"scale", scale_}};
  return {{"mode", to_string(mode_)}, {"y_mean", shift_}, {"y_std", scale_}, {"shift", shift_}, {"scale", scale_}};
}

Normalizer Normalizer::from_json(const nlohmann::json& j) {
  return Normalizer(parse_norm_mode(j.at("mode").get<std::string>()), j.at("shift").get<double>(),
                    j.at("scale").get<double>());
}

// --- TrainConfig --------------------------------------------------------------

void TrainConfig::validate() const {
  if (num_trees == 0) throw ConfigError("num_trees must be positive");
  if (max_leaves == 0) throw ConfigError("max_leaves must be positive");
  if (min_samples_per_leaf == 0) throw ConfigError("min_samples_per_leaf must be positive");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ConfigError("learning_rate must lie in (0, 1]");
  if (l2_reg < 0.0) throw ConfigError("l2_reg must be non-negative");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"num_trees", num_trees},   {"max_leaves", max_leaves}, {"learning_rate", learning_rate},
          {"min_samples_per_leaf", min_samples_per_leaf}, {"l2_reg", l2_reg}, {"min_gain", min_gain}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.num_trees = j.value("num_trees", c.num_trees);
  c.max_leaves = j.value("max_leaves", c.max_leaves);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.min_samples_per_leaf = j.value("min_samples_per_leaf", c.min_samples_per_leaf);
  c.l2_reg = j.value("l2_reg", c.l2_reg);
  c.min_gain = j.value("min_gain", c.min_gain);
  return c;
}

// --- pool CSV -----------------------------------------------------------------

void save_pool_csv(const ArchPool& pool, const FeatureSchema& schema, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  for (const auto& label : schema.labels()) out << label << ',';
  out << "accuracy\n";
  char buf[32];
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (auto b : pool.vectors[i].bits) out << static_cast<int>(b) << ',';
    std::snprintf(buf, sizeof buf, "%.17g", pool.targets[i]);
    out << buf << '\n';
  }
}

ArchPool load_pool_csv(const std::string& path, const FeatureSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path + ": empty file");
  {
    std::vector<std::string> header;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) header.push_back(cell);
    if (header.size() != schema.dim() + 1 || header.back() != "accuracy")
      throw ConfigError(path + ": expected " + std::to_string(schema.dim()) + " feature columns and `accuracy`");
  }
  ArchPool pool;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> cells;
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != schema.dim() + 1)
      throw ConfigError(path + ":" + std::to_string(row) + ": expected " + std::to_string(schema.dim() + 1) +
                        " columns, got " + std::to_string(cells.size()));
    FeatureVector v(std::vector<std::uint8_t>(schema.dim()));
    for (std::size_t j = 0; j < schema.dim(); ++j) {
      if (cells[j] != "0" && cells[j] != "1")
        throw ConfigError(path + ":" + std::to_string(row) + ": feature cell '" + cells[j] + "' is not 0/1");
      v[j] = cells[j] == "1";
    }
    try {
      validate(v, schema);
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(row) + ": " + e.what());
    }
    double y = 0.0;
    try {
      std::size_t used = 0;
      y = std::stod(cells.back(), &used);
      if (used != cells.back().size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ConfigError(path + ":" + std::to_string(row) + ": bad accuracy '" + cells.back() + "'");
    }
    pool.add(std::move(v), y);
  }
  return pool;
}

// --- trees --------------------------------------------------------------------

std::size_t RegressionTree::num_leaves() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

std::size_t RegressionTree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
  std::size_t best = 0;
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    if (!nodes[i].is_leaf()) {
      stack.push_back({nodes[i].left, d + 1});
      stack.push_back({nodes[i].right, d + 1});
    }
  }
  return best;
}

void RegressionTree::check(std::size_t dim) const {
  if (nodes.empty()) throw InvariantError("tree has no nodes");
  const int n = static_cast<int>(nodes.size());
  for (const auto& node : nodes) {
    if (!(node.cover > 0.0)) throw InvariantError("node with zero cover");
    if (node.is_leaf()) {
      if (node.left != -1 || node.right != -1) throw InvariantError("leaf with children");
      continue;
    }
    if (static_cast<std::size_t>(node.split_feature) >= dim) throw InvariantError("split feature out of range");
    if (node.left <= 0 || node.right <= 0 || node.left >= n || node.right >= n)
      throw InvariantError("internal node with a dangling child");
    const double sum = nodes[node.left].cover + nodes[node.right].cover;
    if (std::abs(sum - node.cover) > 1e-9 * std::max(1.0, node.cover))
      throw InvariantError("cover(node) != cover(left) + cover(right)");
  }
}

double GbdtModel::predict(const FeatureVector& x) const {
  if (x.size() != dim)
    throw ConfigError("input dimension " + std::to_string(x.size()) + " != model dimension " + std::to_string(dim));
  double s = base_score;
  for (const auto& t : trees) s += t.predict(x.bits);
  return s;
}

std::vector<double> GbdtModel::predict_batch(std::span<const FeatureVector> xs) const {
  std::vector<double> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(predict(x));
  return out;
}

std::vector<double> GbdtModel::feature_importance() const {
  std::vector<double> sum(dim, 0.0);
  std::vector<std::size_t> count(dim, 0);
  for (const auto& t : trees)
    for (const auto& n : t.nodes)
      if (!n.is_leaf()) {
        sum[n.split_feature] += n.gain;
        ++count[n.split_feature];
      }
  for (std::size_t j = 0; j < dim; ++j)
    if (count[j]) sum[j] /= static_cast<double>(count[j]);
  return sum;
}

nlohmann::json GbdtModel::to_json() const {
  nlohmann::json jt = nlohmann::json::array();
  for (const auto& t : trees) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < t.nodes.size(); ++i) {
      const auto& n = t.nodes[i];
      rows.push_back({i, n.split_feature, n.threshold, n.left, n.right, n.leaf_value, n.cover, n.gain});
    }
    jt.push_back({{"nodes", std::move(rows)}});
  }
  return {{"format", "gbdtnas-model-1"},
          {"dim", dim},
          {"config", config.to_json()},
          {"normalizer", normalizer.to_json()},
          {"base_score", base_score},
          {"learning_rate", learning_rate},
          {"node_columns", {"id", "split_feature", "threshold", "left", "right", "leaf_value", "cover", "gain"}},
          {"trees", std::move(jt)}};
}

GbdtModel GbdtModel::from_json(const nlohmann::json& j) {
  GbdtModel m;
  try {
    m.dim = j.at("dim").get<std::size_t>();
    m.config = TrainConfig::from_json(j.at("config"));
    m.normalizer = Normalizer::from_json(j.at("normalizer"));
    m.base_score = j.at("base_score").get<double>();
    m.learning_rate = j.at("learning_rate").get<double>();
    for (const auto& jt : j.at("trees")) {
      RegressionTree t;
      for (const auto& row : jt.at("nodes")) {
        if (row.at(0).get<std::size_t>() != t.nodes.size()) throw ConfigError("model: node ids must be dense");
        TreeNode n;
        n.split_feature = row.at(1).get<int>();
        n.threshold = row.at(2).get<double>();
        n.left = row.at(3).get<int>();
        n.right = row.at(4).get<int>();
        n.leaf_value = row.at(5).get<double>();
        n.cover = row.at(6).get<double>();
        n.gain = row.size() > 7 ? row.at(7).get<double>() : 0.0;
        t.nodes.push_back(n);
      }
      t.check(m.dim);
      m.trees.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  } catch (const InvariantError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return m;
}

void GbdtModel::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << to_json().dump(1) << '\n';
}

GbdtModel GbdtModel::load(const std::string& path) {
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

// --- training -----------------------------------------------------------------

namespace {

struct Split {
  int feature = -1;
  double gain = 0.0;
  double grad_left = 0.0;
  std::size_t n_left = 0;
};

struct OpenLeaf {
  int node = 0;
  std::vector<std::uint32_t> samples;
  double grad = 0.0;
  Split best;
};

class TreeGrower {
 public:
  TreeGrower(const std::vector<std::uint8_t>& bits, std::size_t dim, const std::vector<double>& grad,
             const TrainConfig& cfg)
      : bits_(bits), dim_(dim), grad_(grad), cfg_(cfg), ones_grad_(dim), ones_count_(dim) {}

  RegressionTree grow(std::size_t n) {
    RegressionTree tree;
    std::vector<OpenLeaf> open;
    OpenLeaf root;
    root.samples.resize(n);
    std::iota(root.samples.begin(), root.samples.end(), 0u);
    tree.nodes.push_back(TreeNode{});
    tree.nodes[0].cover = static_cast<double>(n);
    init_leaf(root);
    open.push_back(std::move(root));

    std::size_t leaves = 1;
    while (leaves < cfg_.max_leaves) {
      // Best-first: largest gain wins, earliest-created leaf on ties.
      int pick = -1;
      for (std::size_t i = 0; i < open.size(); ++i) {
        if (open[i].best.feature < 0) continue;
        if (pick < 0 || open[i].best.gain > open[pick].best.gain) pick = static_cast<int>(i);
      }
      if (pick < 0) break;
      OpenLeaf leaf = std::move(open[pick]);
      open.erase(open.begin() + pick);

      const Split s = leaf.best;
      OpenLeaf left, right;
      left.samples.reserve(s.n_left);
      right.samples.reserve(leaf.samples.size() - s.n_left);
      for (auto i : leaf.samples) (bits_[i * dim_ + s.feature] ? right : left).samples.push_back(i);

      left.node = static_cast<int>(tree.nodes.size());
      right.node = left.node + 1;
      auto& parent = tree.nodes[leaf.node];
      parent.split_feature = s.feature;
      parent.threshold = 0.5;
      parent.left = left.node;
      parent.right = right.node;
      parent.gain = s.gain;
      TreeNode ln, rn;
      ln.cover = static_cast<double>(left.samples.size());
      rn.cover = static_cast<double>(right.samples.size());
      tree.nodes.push_back(ln);
      tree.nodes.push_back(rn);

      init_leaf(left);
      init_leaf(right);
      open.push_back(std::move(left));
      open.push_back(std::move(right));
      ++leaves;
    }

    for (const auto& leaf : open) set_leaf_value(tree.nodes[leaf.node], leaf);
    return tree;
  }

 private:
  double score(double g, double h) const { return g * g / (h + cfg_.l2_reg); }

  void set_leaf_value(TreeNode& node, const OpenLeaf& leaf) const {
    const double h = static_cast<double>(leaf.samples.size());
    node.leaf_value = -cfg_.learning_rate * leaf.grad / (h + cfg_.l2_reg);
  }

  void init_leaf(OpenLeaf& leaf) {
    leaf.grad = 0.0;
    for (auto i : leaf.samples) leaf.grad += grad_[i];
    leaf.best = Split{};
    const std::size_t n = leaf.samples.size();
    if (n < 2 * cfg_.min_samples_per_leaf) return;

    std::fill(ones_grad_.begin(), ones_grad_.end(), 0.0);
    std::fill(ones_count_.begin(), ones_count_.end(), 0);
    for (auto i : leaf.samples) {
      const std::uint8_t* row = &bits_[i * dim_];
      const double g = grad_[i];
      for (std::size_t j = 0; j < dim_; ++j)
        if (row[j]) {
          ones_grad_[j] += g;
          ++ones_count_[j];
        }
    }
    const double h = static_cast<double>(n);
    const double parent = score(leaf.grad, h);
    for (std::size_t j = 0; j < dim_; ++j) {
      const std::size_t n_right = ones_count_[j];
      const std::size_t n_left = n - n_right;
      if (n_left < cfg_.min_samples_per_leaf || n_right < cfg_.min_samples_per_leaf) continue;
      const double g_right = ones_grad_[j];
      const double g_left = leaf.grad - g_right;
      const double gain = score(g_left, static_cast<double>(n_left)) + score(g_right, static_cast<double>(n_right)) - parent;
      if (!(gain > cfg_.min_gain)) continue;
      if (leaf.best.feature < 0 || gain > leaf.best.gain)
        leaf.best = Split{static_cast<int>(j), gain, g_left, n_left};
    }
  }

  const std::vector<std::uint8_t>& bits_;
  std::size_t dim_;
  const std::vector<double>& grad_;
  const TrainConfig& cfg_;
  std::vector<double> ones_grad_;
  std::vector<std::size_t> ones_count_;
};

}  // namespace

GbdtModel fit(const ArchPool& pool, const TrainConfig& config, NormMode mode, FitTrace* trace) {
  config.validate();
  if (pool.empty()) throw ConfigError("cannot train on an empty pool");
  if (pool.vectors.size() != pool.targets.size()) throw ConfigError("pool vectors and targets differ in length");
  const std::size_t n = pool.size();
  const std::size_t dim = pool.vectors.front().size();

  GbdtModel model;
  model.dim = dim;
  model.config = config;
  model.learning_rate = config.learning_rate;
  model.normalizer = Normalizer::fit(pool.targets, mode);

  std::vector<std::uint8_t> bits(n * dim);
  std::vector<double> target(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (pool.vectors[i].size() != dim) throw ConfigError("pool vectors differ in length");
    std::copy(pool.vectors[i].bits.begin(), pool.vectors[i].bits.end(), bits.begin() + i * dim);
    target[i] = model.normalizer.normalize(pool.targets[i]);
  }
  model.base_score = std::accumulate(target.begin(), target.end(), 0.0) / static_cast<double>(n);

  std::vector<double> pred(n, model.base_score);
  std::vector<double> grad(n);
  auto mse = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
    return s / static_cast<double>(n);
  };
  if (trace) trace->train_mse = {mse()};

  for (std::size_t t = 0; t < config.num_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) grad[i] = pred[i] - target[i];
    TreeGrower grower(bits, dim, grad, config);
    RegressionTree tree = grower.grow(n);
    for (std::size_t i = 0; i < n; ++i) pred[i] += tree.predict(&bits[i * dim]);
    model.trees.push_back(std::move(tree));
    if (trace) trace->train_mse.push_back(mse());
  }
  return model;
}

}  // namespace gbdtnas
