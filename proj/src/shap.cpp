#include "gbdtnas/shap.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>

#include "gbdtnas/errors.hpp"

namespace gbdtnas {

ShapMatrix::ShapMatrix(std::size_t rows, std::size_t cols, std::vector<double> values, double expected_value,
                       std::span<const double> predictions)
    : rows_(rows), cols_(cols), values_(std::move(values)), expected_value_(expected_value) {
  if (values_.size() != rows_ * cols_ || predictions.size() != rows_)
    throw InvariantError("shap matrix shape mismatch");
  for (std::size_t i = 0; i < rows_; ++i) {
    long double s = expected_value_;
    for (double v : row(i)) s += v;
    if (std::abs(static_cast<double>(s) - predictions[i]) > kLocalAccuracyTol)
      throw InvariantError("local accuracy violated on row " + std::to_string(i));
  }
}

namespace {

using Real = double;

struct PathElement {
  int feature = -1;
  Real zero_fraction = 0;
  Real one_fraction = 0;
  Real pweight = 0;
};

void extend_path(PathElement* path, int depth, Real zero_fraction, Real one_fraction, int feature) {
  path[depth].feature = feature;
  path[depth].zero_fraction = zero_fraction;
  path[depth].one_fraction = one_fraction;
  path[depth].pweight = depth == 0 ? 1 : 0;
  for (int i = depth - 1; i >= 0; --i) {
    path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) / static_cast<Real>(depth + 1);
    path[i].pweight = zero_fraction * path[i].pweight * (depth - i) / static_cast<Real>(depth + 1);
  }
}

void unwind_path(PathElement* path, int depth, int index) {
  const Real one = path[index].one_fraction;
  const Real zero = path[index].zero_fraction;
  Real next_one_portion = path[depth].pweight;
  for (int i = depth - 1; i >= 0; --i) {
    if (one != 0) {
      const Real tmp = path[i].pweight;
      path[i].pweight = next_one_portion * (depth + 1) / static_cast<Real>((i + 1) * one);
      next_one_portion = tmp - path[i].pweight * zero * (depth - i) / static_cast<Real>(depth + 1);
    } else {
      path[i].pweight = path[i].pweight * (depth + 1) / (zero * (depth - i));
    }
  }
  for (int i = index; i < depth; ++i) {
    path[i].feature = path[i + 1].feature;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

// Total permutation weight of the path with element `index` removed.
Real unwound_path_sum(const PathElement* path, int depth, int index) {
  const Real one = path[index].one_fraction;
  const Real zero = path[index].zero_fraction;
  Real next_one_portion = path[depth].pweight;
  Real total = 0;
  if (one != 0) {
    for (int i = depth - 1; i >= 0; --i) {
      const Real tmp = next_one_portion / static_cast<Real>((i + 1) * one);
      total += tmp;
      next_one_portion = path[i].pweight - tmp * zero * (depth - i);
    }
  } else if (zero != 0) {
    for (int i = depth - 1; i >= 0; --i) total += path[i].pweight / (zero * (depth - i));
  }
  return total * (depth + 1);
}

// Conditioning for interaction values: 0 = none, +1 = feature forced to
// follow x, -1 = feature marginalized by cover.
struct Condition {
  int mode = 0;
  int feature = -1;
};

class TreeExplainer {
 public:
  // `path` must hold path_buffer_size(tree) elements.
  TreeExplainer(const RegressionTree& tree, const std::uint8_t* x, Real* phi, Condition cond, PathElement* path)
      : tree_(tree), x_(x), phi_(phi), cond_(cond), path_(path) {}

  void run() { recurse(0, 0, path_, 1, 1, -1, 1); }

 private:
  void recurse(int node, int depth, PathElement* parent_path, Real parent_zero, Real parent_one,
               int parent_feature, Real cond_fraction) {
    if (cond_fraction == 0) return;
    PathElement* path = parent_path + depth + 1;
    std::copy(parent_path, parent_path + depth + 1, path);
    if (cond_.mode == 0 || cond_.feature != parent_feature)
      extend_path(path, depth, parent_zero, parent_one, parent_feature);

    const TreeNode& n = tree_.nodes[node];
    if (n.is_leaf()) {
      for (int i = 1; i <= depth; ++i) {
        const Real w = unwound_path_sum(path, depth, i);
        const PathElement& el = path[i];
        phi_[el.feature] += w * (el.one_fraction - el.zero_fraction) * static_cast<Real>(n.leaf_value) * cond_fraction;
      }
      return;
    }

    const int split = n.split_feature;
    const int hot = static_cast<double>(x_[split]) < n.threshold ? n.left : n.right;
    const int cold = hot == n.left ? n.right : n.left;
    if (!(n.cover > 0.0)) throw InvariantError("node with zero cover");
    const Real hot_zero = static_cast<Real>(tree_.nodes[hot].cover) / static_cast<Real>(n.cover);
    const Real cold_zero = static_cast<Real>(tree_.nodes[cold].cover) / static_cast<Real>(n.cover);
    Real incoming_zero = 1;
    Real incoming_one = 1;

    // A repeated split on the same feature is undone and redone here.
    int index = 0;
    for (; index <= depth; ++index)
      if (path[index].feature == split) break;
    if (index != depth + 1) {
      incoming_zero = path[index].zero_fraction;
      incoming_one = path[index].one_fraction;
      unwind_path(path, depth, index);
      depth -= 1;
    }

    Real hot_cond = cond_fraction;
    Real cold_cond = cond_fraction;
    if (cond_.mode > 0 && split == cond_.feature) {
      cold_cond = 0;
      depth -= 1;
    } else if (cond_.mode < 0 && split == cond_.feature) {
      hot_cond *= hot_zero;
      cold_cond *= cold_zero;
      depth -= 1;
    }

    recurse(hot, depth + 1, path, hot_zero * incoming_zero, incoming_one, split, hot_cond);
    recurse(cold, depth + 1, path, cold_zero * incoming_zero, 0, split, cold_cond);
  }

  const RegressionTree& tree_;
  const std::uint8_t* x_;
  Real* phi_;
  Condition cond_;
  PathElement* path_;
};

std::size_t path_buffer_size(const RegressionTree& t) {
  const std::size_t d = t.depth() + 2;
  return (d + 1) * (d + 2);
}

// Cover must be positive everywhere and consistent between parents and children.
void check_model(const GbdtModel& model) {
  for (const auto& t : model.trees) t.check(model.dim);
}

std::size_t max_path_buffer(const GbdtModel& model) {
  std::size_t n = 0;
  for (const auto& t : model.trees) n = std::max(n, path_buffer_size(t));
  return n;
}

Real tree_expectation(const RegressionTree& t) {
  Real s = 0;
  const Real root = t.nodes[0].cover;
  if (!(root > 0)) throw InvariantError("node with zero cover");
  for (const auto& n : t.nodes)
    if (n.is_leaf()) s += static_cast<Real>(n.cover) / root * static_cast<Real>(n.leaf_value);
  return s;
}

void check_input(const GbdtModel& model, const FeatureVector& x) {
  if (x.size() != model.dim)
    throw ConfigError("input dimension " + std::to_string(x.size()) + " != model dimension " +
                      std::to_string(model.dim));
}

std::vector<int> tree_features(const RegressionTree& t) {
  std::set<int> s;
  for (const auto& n : t.nodes)
    if (!n.is_leaf()) s.insert(n.split_feature);
  return {s.begin(), s.end()};
}

// For each feature in the tree, the features sharing a root-to-leaf path with it.
std::vector<std::pair<int, std::vector<int>>> tree_cooccurrence(const RegressionTree& t) {
  std::map<int, std::set<int>> co;
  std::vector<int> stack_path;
  std::function<void(int)> walk = [&](int i) {
    const auto& n = t.nodes[i];
    if (n.is_leaf()) {
      for (int a : stack_path)
        for (int b : stack_path)
          if (a != b) co[a].insert(b);
      return;
    }
    co[n.split_feature];
    stack_path.push_back(n.split_feature);
    walk(n.left);
    walk(n.right);
    stack_path.pop_back();
  };
  walk(0);
  std::vector<std::pair<int, std::vector<int>>> out;
  for (auto& [a, bs] : co) out.push_back({a, std::vector<int>(bs.begin(), bs.end())});
  return out;
}

}  // namespace

double expected_value(const GbdtModel& model) {
  check_model(model);
  Real s = model.base_score;
  for (const auto& t : model.trees) s += tree_expectation(t);
  return static_cast<double>(s);
}

namespace {

class RowExplainer {
 public:
  explicit RowExplainer(const GbdtModel& model)
      : model_(model), phi_(model.dim), total_(model.dim), path_(max_path_buffer(model)) {
    for (const auto& t : model.trees) features_.push_back(tree_features(t));
  }

  // Writes the SHAP values of x into out[0, D).
  void explain(const FeatureVector& x, double* out) {
    check_input(model_, x);
    std::fill(total_.begin(), total_.end(), 0);
    for (std::size_t ti = 0; ti < model_.trees.size(); ++ti) {
      for (int f : features_[ti]) phi_[f] = 0;
      TreeExplainer(model_.trees[ti], x.bits.data(), phi_.data(), {}, path_.data()).run();
      for (int f : features_[ti]) total_[f] += phi_[f];
    }
    for (std::size_t j = 0; j < model_.dim; ++j) out[j] = static_cast<double>(total_[j]);
  }

 private:
  const GbdtModel& model_;
  std::vector<Real> phi_, total_;
  std::vector<PathElement> path_;
  std::vector<std::vector<int>> features_;
};

}  // namespace

std::vector<double> shap_row(const GbdtModel& model, const FeatureVector& x) {
  check_model(model);
  std::vector<double> out(model.dim);
  RowExplainer(model).explain(x, out.data());
  return out;
}

ShapMatrix shap_values(const GbdtModel& model, std::span<const FeatureVector> xs) {
  check_model(model);
  RowExplainer explainer(model);
  std::vector<double> values(xs.size() * model.dim);
  std::vector<double> preds;
  preds.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    explainer.explain(xs[i], values.data() + i * model.dim);
    preds.push_back(model.predict(xs[i]));
  }
  return ShapMatrix(xs.size(), model.dim, std::move(values), expected_value(model), preds);
}

void for_each_interaction(const GbdtModel& model, std::span<const FeatureVector> xs,
                          const std::function<void(std::size_t, std::span<const double>)>& visit) {
  check_model(model);
  const std::size_t d = model.dim;
  std::vector<PathElement> path(max_path_buffer(model));
  std::vector<std::vector<std::pair<int, std::vector<int>>>> co;
  co.reserve(model.trees.size());
  for (const auto& t : model.trees) co.push_back(tree_cooccurrence(t));

  std::vector<Real> raw(d * d);
  std::vector<Real> on(d), off(d), plain(d), phi(d);
  std::vector<double> slice(d * d);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto& x = xs[i];
    check_input(model, x);
    std::fill(raw.begin(), raw.end(), 0);
    std::fill(plain.begin(), plain.end(), 0);
    for (std::size_t ti = 0; ti < model.trees.size(); ++ti) {
      const auto& t = model.trees[ti];
      for (const auto& [a, _] : co[ti]) phi[a] = 0;
      TreeExplainer(t, x.bits.data(), phi.data(), {}, path.data()).run();
      for (const auto& [a, _] : co[ti]) plain[a] += phi[a];

      for (const auto& [a, partners] : co[ti]) {
        for (int b : partners) on[b] = off[b] = 0;
        TreeExplainer(t, x.bits.data(), on.data(), {+1, a}, path.data()).run();
        TreeExplainer(t, x.bits.data(), off.data(), {-1, a}, path.data()).run();
        for (int b : partners) raw[a * d + b] += (on[b] - off[b]) / 2;
      }
    }
    std::fill(slice.begin(), slice.end(), 0.0);
    for (std::size_t a = 0; a < d; ++a) {
      Real off_sum = 0;
      for (std::size_t b = 0; b < d; ++b) {
        if (a == b) continue;
        const Real sym = (raw[a * d + b] + raw[b * d + a]) / 2;
        slice[a * d + b] = static_cast<double>(sym);
        off_sum += static_cast<double>(sym);
      }
      slice[a * d + a] = static_cast<double>(plain[a] - off_sum);
    }
    visit(i, slice);
  }
}

InteractionTensor interaction_values(const GbdtModel& model, std::span<const FeatureVector> xs) {
  InteractionTensor out(xs.size(), model.dim);
  for_each_interaction(model, xs, [&](std::size_t i, std::span<const double> s) {
    std::copy(s.begin(), s.end(), out.slice(i).begin());
  });
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> cooccurring_pairs(const GbdtModel& model) {
  std::set<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& t : model.trees)
    for (const auto& [a, partners] : tree_cooccurrence(t))
      for (int b : partners)
        if (a < b) pairs.insert({static_cast<std::size_t>(a), static_cast<std::size_t>(b)});
  return {pairs.begin(), pairs.end()};
}

// --- brute force --------------------------------------------------------------

namespace {

Real tree_conditional(const RegressionTree& t, int node, const FeatureVector& x, std::span<const std::uint8_t> present) {
  const auto& n = t.nodes[node];
  if (n.is_leaf()) return n.leaf_value;
  if (present[n.split_feature]) {
    const int next = static_cast<double>(x[n.split_feature]) < n.threshold ? n.left : n.right;
    return tree_conditional(t, next, x, present);
  }
  if (!(n.cover > 0.0)) throw InvariantError("node with zero cover");
  const Real l = tree_conditional(t, n.left, x, present);
  const Real r = tree_conditional(t, n.right, x, present);
  return (static_cast<Real>(t.nodes[n.left].cover) * l + static_cast<Real>(t.nodes[n.right].cover) * r) /
         static_cast<Real>(n.cover);
}

// Game value v(S) for every subset S of the D features, indexed by bitmask.
std::vector<Real> game_table(const GbdtModel& model, const FeatureVector& x) {
  check_input(model, x);
  const std::size_t d = model.dim;
  if (d > kBruteForceMaxDim)
    throw CapExceeded("brute-force Shapley needs D <= " + std::to_string(kBruteForceMaxDim) + ", got " +
                      std::to_string(d));
  std::vector<Real> v(std::size_t{1} << d);
  std::vector<std::uint8_t> present(d);
  for (std::size_t mask = 0; mask < v.size(); ++mask) {
    for (std::size_t j = 0; j < d; ++j) present[j] = (mask >> j) & 1u;
    Real s = model.base_score;
    for (const auto& t : model.trees) s += tree_conditional(t, 0, x, present);
    v[mask] = s;
  }
  return v;
}

Real factorial(std::size_t n) {
  Real f = 1;
  for (std::size_t k = 2; k <= n; ++k) f *= static_cast<Real>(k);
  return f;
}

}  // namespace

double conditional_expectation(const GbdtModel& model, const FeatureVector& x, std::span<const std::uint8_t> present) {
  check_input(model, x);
  Real s = model.base_score;
  for (const auto& t : model.trees) s += tree_conditional(t, 0, x, present);
  return static_cast<double>(s);
}

std::vector<double> brute_force_shapley(const GbdtModel& model, const FeatureVector& x) {
  const auto v = game_table(model, x);
  const std::size_t d = model.dim;
  std::vector<double> phi(d, 0.0);
  const Real dfact = factorial(d);
  for (std::size_t j = 0; j < d; ++j) {
    Real s = 0;
    for (std::size_t mask = 0; mask < v.size(); ++mask) {
      if ((mask >> j) & 1u) continue;
      const auto k = static_cast<std::size_t>(__builtin_popcountll(mask));
      const Real w = factorial(k) * factorial(d - k - 1) / dfact;
      s += w * (v[mask | (std::size_t{1} << j)] - v[mask]);
    }
    phi[j] = static_cast<double>(s);
  }
  return phi;
}

std::vector<double> brute_force_interactions(const GbdtModel& model, const FeatureVector& x) {
  const auto v = game_table(model, x);
  const std::size_t d = model.dim;
  const auto phi = brute_force_shapley(model, x);
  std::vector<double> out(d * d, 0.0);
  if (d < 2) {
    if (d == 1) out[0] = phi[0];
    return out;
  }
  const Real norm = 2 * factorial(d - 1);
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a + 1; b < d; ++b) {
      const std::size_t ma = std::size_t{1} << a;
      const std::size_t mb = std::size_t{1} << b;
      Real s = 0;
      for (std::size_t mask = 0; mask < v.size(); ++mask) {
        if (mask & (ma | mb)) continue;
        const auto k = static_cast<std::size_t>(__builtin_popcountll(mask));
        const Real w = factorial(k) * factorial(d - k - 2) / norm;
        s += w * (v[mask | ma | mb] - v[mask | ma] - v[mask | mb] + v[mask]);
      }
      out[a * d + b] = out[b * d + a] = static_cast<double>(s);
    }
  }
  for (std::size_t a = 0; a < d; ++a) {
    Real off = 0;
    for (std::size_t b = 0; b < d; ++b)
      if (b != a) off += out[a * d + b];
    out[a * d + a] = static_cast<double>(phi[a] - off);
  }
  return out;
}

}  // namespace gbdtnas
