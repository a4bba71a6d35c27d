#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "gbdtnas/gbdt.hpp"

namespace gbdtnas {

inline constexpr double kLocalAccuracyTol = 1e-9;

// Row-major |X| x D attribution matrix. Construction checks local accuracy:
// expected_value + sum_j values[i, j] == prediction_i for every row.
class ShapMatrix {
 public:
  ShapMatrix(std::size_t rows, std::size_t cols, std::vector<double> values, double expected_value,
             std::span<const double> predictions);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double expected_value() const { return expected_value_; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }
  std::span<const double> row(std::size_t i) const { return {values_.data() + i * cols_, cols_}; }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> values_;
  double expected_value_;
};

// |X| x D x D tensor, symmetric in the last two axes; the diagonal carries
// main effects so each row of a slice sums to the plain SHAP value.
class InteractionTensor {
 public:
  InteractionTensor(std::size_t samples, std::size_t dim)
      : samples_(samples), dim_(dim), values_(samples * dim * dim, 0.0) {}

  std::size_t samples() const { return samples_; }
  std::size_t dim() const { return dim_; }
  double operator()(std::size_t i, std::size_t a, std::size_t b) const {
    return values_[(i * dim_ + a) * dim_ + b];
  }
  std::span<double> slice(std::size_t i) { return {values_.data() + i * dim_ * dim_, dim_ * dim_}; }
  std::span<const double> slice(std::size_t i) const { return {values_.data() + i * dim_ * dim_, dim_ * dim_}; }

 private:
  std::size_t samples_;
  std::size_t dim_;
  std::vector<double> values_;
};

// Mean model output under the cover distribution: base score plus the
// cover-weighted leaf average of each tree.
double expected_value(const GbdtModel& model);

// Exact path-dependent TreeSHAP. Throws InvariantError on a node with zero
// cover.
ShapMatrix shap_values(const GbdtModel& model, std::span<const FeatureVector> xs);

// SHAP values of a single input (length D).
std::vector<double> shap_row(const GbdtModel& model, const FeatureVector& x);

// Pairwise interaction values. Only pairs that share a root-to-leaf path in
// some tree are computed; every other off-diagonal entry is exactly 0.
InteractionTensor interaction_values(const GbdtModel& model, std::span<const FeatureVector> xs);

// Streams one D x D row-major interaction slice per input instead of
// materializing the full tensor.
void for_each_interaction(const GbdtModel& model, std::span<const FeatureVector> xs,
                          const std::function<void(std::size_t, std::span<const double>)>& visit);

// Pairs (a < b) that co-occur on a root-to-leaf path of some tree.
std::vector<std::pair<std::size_t, std::size_t>> cooccurring_pairs(const GbdtModel& model);

// --- brute-force oracle -------------------------------------------------------

inline constexpr std::size_t kBruteForceMaxDim = 15;

// Value of the cover-weighted conditional-expectation game: features in
// `present` follow x, every other split averages its children by cover.
double conditional_expectation(const GbdtModel& model, const FeatureVector& x, std::span<const std::uint8_t> present);

// Shapley values by subset enumeration over all D features. Throws
// CapExceeded when D > kBruteForceMaxDim.
std::vector<double> brute_force_shapley(const GbdtModel& model, const FeatureVector& x);

// Shapley interaction index by subset enumeration; off-diagonals use the
// halved convention, the diagonal holds main effects. Row-major D x D.
std::vector<double> brute_force_interactions(const GbdtModel& model, const FeatureVector& x);

}  // namespace gbdtnas
