#pragma once

// Independent oracles used by the test suites. These deliberately take
// different algorithmic routes from the library implementations: subset
// enumeration for Shapley values, O(n^2) pair counts for rank statistics,
// grid scans for the binning objective, correlation-inverse VIF.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "ratemill/gbdt.hpp"
#include "ratemill/matrix.hpp"

namespace oracles {

// Conditional expectation of one tree given the features in `mask` take the
// row's values; absent features marginalize by cover-weighted descent.
inline double tree_cond_expect(const ratemill::gbdt::Tree& tree, const double* row,
                               std::uint32_t mask, int node_index = 0) {
  const auto& node = tree.nodes[static_cast<std::size_t>(node_index)];
  if (node.is_leaf()) return node.value;
  if (mask & (1u << node.feature)) {
    const double x = row[node.feature];
    const int next = std::isnan(x) ? (node.missing_left ? node.left : node.right)
                                   : (x <= node.threshold ? node.left : node.right);
    return tree_cond_expect(tree, row, mask, next);
  }
  const double cl = tree.nodes[static_cast<std::size_t>(node.left)].cover;
  const double cr = tree.nodes[static_cast<std::size_t>(node.right)].cover;
  return (cl * tree_cond_expect(tree, row, mask, node.left) +
          cr * tree_cond_expect(tree, row, mask, node.right)) /
         (cl + cr);
}

inline double ensemble_value(const ratemill::gbdt::TreeEnsembleModel& model, const double* row,
                             std::uint32_t mask) {
  double v = model.base_score;
  for (const auto& t : model.trees) v += tree_cond_expect(t, row, mask);
  return v;
}

// Exact Shapley values by 2^P subset enumeration. P must be small (<= ~16).
inline std::vector<double> brute_shapley(const ratemill::gbdt::TreeEnsembleModel& model,
                                         const std::vector<double>& row) {
  const int p = static_cast<int>(model.feature_names.size());
  std::vector<double> factorial(static_cast<std::size_t>(p) + 1, 1.0);
  for (int i = 1; i <= p; ++i)
    factorial[static_cast<std::size_t>(i)] = factorial[static_cast<std::size_t>(i - 1)] * i;

  const std::uint32_t n_subsets = 1u << p;
  std::vector<double> value(n_subsets);
  for (std::uint32_t s = 0; s < n_subsets; ++s) value[s] = ensemble_value(model, row.data(), s);

  std::vector<double> phi(static_cast<std::size_t>(p), 0.0);
  for (int i = 0; i < p; ++i) {
    for (std::uint32_t s = 0; s < n_subsets; ++s) {
      if (s & (1u << i)) continue;
      const int size_s = std::popcount(s);
      const double w = factorial[static_cast<std::size_t>(size_s)] *
                       factorial[static_cast<std::size_t>(p - size_s - 1)] /
                       factorial[static_cast<std::size_t>(p)];
      phi[static_cast<std::size_t>(i)] += w * (value[s | (1u << i)] - value[s]);
    }
  }
  return phi;
}

// AUC by brute force over all positive-negative pairs, ties counted half.
inline double pair_auc(const std::vector<double>& scores, const std::vector<int>& targets) {
  double wins = 0.0;
  std::int64_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (targets[i] == 0) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (targets[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / double(pairs);
}

// Kendall's tau-b by O(n^2) pair counting.
inline double pair_kendall_tau_b(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  std::int64_t concordant = 0, discordant = 0, tie_x = 0, tie_y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0.0 && dy == 0.0) continue;
      if (dx == 0.0) ++tie_x;
      else if (dy == 0.0) ++tie_y;
      else if (dx * dy > 0.0) ++concordant;
      else ++discordant;
    }
  }
  const double n0 = double(concordant + discordant);
  const double denom = std::sqrt((n0 + double(tie_x)) * (n0 + double(tie_y)));
  return double(concordant - discordant) / denom;
}

// Within-class squared deviation from class means for boundaries b (sorted).
inline double binning_objective(const std::vector<double>& pds,
                                const std::vector<double>& boundaries) {
  const std::size_t k = boundaries.size() + 1;
  std::vector<double> sum(k, 0.0), sum2(k, 0.0);
  std::vector<std::size_t> cnt(k, 0);
  for (double p : pds) {
    std::size_t c = 0;
    while (c < boundaries.size() && p >= boundaries[c]) ++c;
    sum[c] += p;
    sum2[c] += p * p;
    ++cnt[c];
  }
  double j = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    if (cnt[c] == 0) continue;
    j += sum2[c] - sum[c] * sum[c] / double(cnt[c]);
  }
  return j;
}

// Feasibility matching the rating-scale constraints: strictly increasing
// boundaries and a minimum class share.
inline bool binning_feasible(const std::vector<double>& pds,
                             const std::vector<double>& boundaries, double min_share) {
  for (std::size_t i = 1; i < boundaries.size(); ++i)
    if (!(boundaries[i] > boundaries[i - 1])) return false;
  const std::size_t k = boundaries.size() + 1;
  std::vector<std::size_t> cnt(k, 0);
  for (double p : pds) {
    std::size_t c = 0;
    while (c < boundaries.size() && p >= boundaries[c]) ++c;
    ++cnt[c];
  }
  const double min_count = min_share * double(pds.size());
  for (std::size_t c = 0; c < k; ++c)
    if (double(cnt[c]) < min_count) return false;
  return true;
}

// Best feasible objective over a uniform boundary grid (resolution `step`).
inline double grid_best_objective_k2(const std::vector<double>& pds, double min_share,
                                     double step = 1e-3) {
  double best = std::numeric_limits<double>::infinity();
  for (double b = step; b < 1.0; b += step) {
    const std::vector<double> bounds{b};
    if (!binning_feasible(pds, bounds, min_share)) continue;
    best = std::min(best, binning_objective(pds, bounds));
  }
  return best;
}

inline double grid_best_objective_k3(const std::vector<double>& pds, double min_share,
                                     double step = 1e-3) {
  double best = std::numeric_limits<double>::infinity();
  for (double b1 = step; b1 < 1.0; b1 += step) {
    for (double b2 = b1 + step; b2 < 1.0; b2 += step) {
      const std::vector<double> bounds{b1, b2};
      if (!binning_feasible(pds, bounds, min_share)) continue;
      best = std::min(best, binning_objective(pds, bounds));
    }
  }
  return best;
}

}  // namespace oracles
