#pragma once

// Exact per-prediction Shapley attributions for the tree ensemble, using the
// path-dependent polynomial-time recursion with cover-weighted expectations.
// Contributions are on the margin (log-odds) scale so local accuracy holds:
// base + sum(contributions) = margin.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "ratemill/gbdt.hpp"
#include "ratemill/matrix.hpp"
#include "ratemill/parallel.hpp"

namespace ratemill::shap {

struct ShapExplanation {
  double base_value = 0.0;
  std::vector<double> contributions;
  double margin = 0.0;
};

namespace detail {

struct PathElement {
  int feature_index = -1;
  double zero_fraction = 0.0;
  double one_fraction = 0.0;
  double pweight = 0.0;
};

inline void extend_path(PathElement* path, int unique_depth, double zero_fraction,
                        double one_fraction, int feature_index) {
  path[unique_depth].feature_index = feature_index;
  path[unique_depth].zero_fraction = zero_fraction;
  path[unique_depth].one_fraction = one_fraction;
  path[unique_depth].pweight = unique_depth == 0 ? 1.0 : 0.0;
  for (int i = unique_depth - 1; i >= 0; --i) {
    path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) / double(unique_depth + 1);
    path[i].pweight = zero_fraction * path[i].pweight * (unique_depth - i) / double(unique_depth + 1);
  }
}

inline void unwind_path(PathElement* path, int unique_depth, int path_index) {
  const double one_fraction = path[path_index].one_fraction;
  const double zero_fraction = path[path_index].zero_fraction;
  double next_one_portion = path[unique_depth].pweight;
  for (int i = unique_depth - 1; i >= 0; --i) {
    if (one_fraction != 0.0) {
      const double tmp = path[i].pweight;
      path[i].pweight = next_one_portion * (unique_depth + 1) / double((i + 1) * one_fraction);
      next_one_portion = tmp - path[i].pweight * zero_fraction * (unique_depth - i) /
                                   double(unique_depth + 1);
    } else {
      path[i].pweight = path[i].pweight * (unique_depth + 1) /
                        (zero_fraction * double(unique_depth - i));
    }
  }
  for (int i = path_index; i < unique_depth; ++i) {
    path[i].feature_index = path[i + 1].feature_index;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

inline double unwound_path_sum(const PathElement* path, int unique_depth, int path_index) {
  const double one_fraction = path[path_index].one_fraction;
  const double zero_fraction = path[path_index].zero_fraction;
  double next_one_portion = path[unique_depth].pweight;
  double total = 0.0;
  for (int i = unique_depth - 1; i >= 0; --i) {
    if (one_fraction != 0.0) {
      const double tmp = next_one_portion * (unique_depth + 1) / double((i + 1) * one_fraction);
      total += tmp;
      next_one_portion = path[i].pweight -
                         tmp * zero_fraction * ((unique_depth - i) / double(unique_depth + 1));
    } else if (zero_fraction != 0.0) {
      total += (path[i].pweight / zero_fraction) /
               ((unique_depth - i) / double(unique_depth + 1));
    }
  }
  return total;
}

inline void tree_shap_recurse(const gbdt::Tree& tree, const double* row, double* phi,
                              int node_index, int unique_depth, PathElement* parent_path,
                              double parent_zero_fraction, double parent_one_fraction,
                              int parent_feature_index) {
  const gbdt::TreeNode& node = tree.nodes[static_cast<std::size_t>(node_index)];

  PathElement* path = parent_path + unique_depth + 1;
  std::copy(parent_path, parent_path + unique_depth + 1, path);
  extend_path(path, unique_depth, parent_zero_fraction, parent_one_fraction,
              parent_feature_index);

  if (node.is_leaf()) {
    for (int i = 1; i <= unique_depth; ++i) {
      const double w = unwound_path_sum(path, unique_depth, i);
      const PathElement& el = path[i];
      phi[el.feature_index] += w * (el.one_fraction - el.zero_fraction) * node.value;
    }
    return;
  }

  const double x = row[node.feature];
  const int hot = std::isnan(x) ? (node.missing_left ? node.left : node.right)
                                : (x <= node.threshold ? node.left : node.right);
  const int cold = hot == node.left ? node.right : node.left;
  const double w = node.cover;
  const double hot_zero_fraction = tree.nodes[static_cast<std::size_t>(hot)].cover / w;
  const double cold_zero_fraction = tree.nodes[static_cast<std::size_t>(cold)].cover / w;
  double incoming_zero_fraction = 1.0;
  double incoming_one_fraction = 1.0;

  // If this feature was already on the path, undo its previous extension and
  // fold the fractions into this occurrence.
  int path_index = 0;
  for (; path_index <= unique_depth; ++path_index)
    if (path[path_index].feature_index == node.feature) break;
  if (path_index != unique_depth + 1) {
    incoming_zero_fraction = path[path_index].zero_fraction;
    incoming_one_fraction = path[path_index].one_fraction;
    unwind_path(path, unique_depth, path_index);
    unique_depth -= 1;
  }

  tree_shap_recurse(tree, row, phi, hot, unique_depth + 1, path,
                    hot_zero_fraction * incoming_zero_fraction, incoming_one_fraction,
                    node.feature);
  tree_shap_recurse(tree, row, phi, cold, unique_depth + 1, path,
                    cold_zero_fraction * incoming_zero_fraction, 0.0, node.feature);
}

}  // namespace detail

// Expected margin over the training distribution (the explanation base value).
inline double expected_margin(const gbdt::TreeEnsembleModel& model) {
  double base = model.base_score;
  for (const gbdt::Tree& t : model.trees) base += t.mean_value();
  return base;
}

inline void tree_shap_row(const gbdt::TreeEnsembleModel& model, const double* row,
                          double* phi /* size n_features */) {
  for (const gbdt::Tree& tree : model.trees) {
    if (tree.nodes.empty()) continue;
    const int maxd = tree.max_depth() + 2;
    std::vector<detail::PathElement> path(static_cast<std::size_t>(maxd * (maxd + 1)) / 2);
    detail::tree_shap_recurse(tree, row, phi, 0, 0, path.data(), 1.0, 1.0, -1);
  }
}

inline ShapExplanation tree_shap(const gbdt::TreeEnsembleModel& model,
                                 const std::vector<double>& row) {
  if (row.size() != model.feature_names.size())
    throw std::runtime_error("feature mismatch between model and row");
  ShapExplanation ex;
  ex.base_value = expected_margin(model);
  ex.contributions.assign(row.size(), 0.0);
  tree_shap_row(model, row.data(), ex.contributions.data());
  ex.margin = model.margin_for_row(row.data());
  return ex;
}

struct ShapSummary {
  std::vector<std::string> feature_names;
  std::vector<double> matrix;  // n_rows x n_features contributions
  std::vector<double> mean_abs;
  std::vector<std::size_t> ranking;  // feature indices, most important first
  double base_value = 0.0;
  std::size_t n_rows = 0;
};

inline ShapSummary summary_stats(const gbdt::TreeEnsembleModel& model,
                                 const FeatureMatrix& m, unsigned threads = 1) {
  gbdt::check_features(model, m);
  if (m.n_rows == 0) throw std::invalid_argument("summary_stats: empty input");
  ShapSummary s;
  s.feature_names = model.feature_names;
  s.n_rows = m.n_rows;
  s.base_value = expected_margin(model);
  s.matrix.assign(m.n_rows * m.n_cols, 0.0);
  parallel_for(m.n_rows, threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t r = b; r < e; ++r)
      tree_shap_row(model, m.row(r), s.matrix.data() + r * m.n_cols);
  });
  s.mean_abs.assign(m.n_cols, 0.0);
  for (std::size_t r = 0; r < m.n_rows; ++r)
    for (std::size_t f = 0; f < m.n_cols; ++f)
      s.mean_abs[f] += std::fabs(s.matrix[r * m.n_cols + f]);
  for (double& v : s.mean_abs) v /= double(m.n_rows);
  s.ranking.resize(m.n_cols);
  std::iota(s.ranking.begin(), s.ranking.end(), std::size_t{0});
  std::stable_sort(s.ranking.begin(), s.ranking.end(), [&](std::size_t a, std::size_t b) {
    return s.mean_abs[a] > s.mean_abs[b];
  });
  return s;
}

struct DependencePoint {
  double x = 0.0;
  double shap = 0.0;
  double color = 0.0;  // raw interaction-feature value
};

inline std::vector<DependencePoint> dependence_data(const gbdt::TreeEnsembleModel& model,
                                                    const FeatureMatrix& m,
                                                    const std::string& feature,
                                                    const std::string& interaction_feature,
                                                    unsigned threads = 1) {
  const int f = m.col_index(feature);
  const int g = m.col_index(interaction_feature);
  if (f < 0 || g < 0) throw std::runtime_error("dependence_data: unknown feature");
  const ShapSummary s = summary_stats(model, m, threads);
  std::vector<DependencePoint> out(m.n_rows);
  for (std::size_t r = 0; r < m.n_rows; ++r) {
    out[r].x = m.at(r, static_cast<std::size_t>(f));
    out[r].shap = s.matrix[r * m.n_cols + static_cast<std::size_t>(f)];
    out[r].color = m.at(r, static_cast<std::size_t>(g));
  }
  return out;
}

struct WaterfallEntry {
  std::string name;
  double contribution = 0.0;
};

struct Waterfall {
  double base_value = 0.0;
  double margin = 0.0;
  std::vector<WaterfallEntry> entries;  // sorted by |contribution| desc, tail in "other"
};

inline Waterfall waterfall_data(const gbdt::TreeEnsembleModel& model,
                                const std::vector<double>& row, int top_n = 10) {
  if (top_n < 1) throw std::invalid_argument("waterfall_data: top_n < 1");
  const ShapExplanation ex = tree_shap(model, row);
  Waterfall w;
  w.base_value = ex.base_value;
  w.margin = ex.margin;
  std::vector<std::size_t> order(ex.contributions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::fabs(ex.contributions[a]) > std::fabs(ex.contributions[b]);
  });
  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(top_n), order.size());
  for (std::size_t i = 0; i < keep; ++i)
    w.entries.push_back({model.feature_names[order[i]], ex.contributions[order[i]]});
  if (keep < order.size()) {
    double rest = 0.0;
    for (std::size_t i = keep; i < order.size(); ++i) rest += ex.contributions[order[i]];
    w.entries.push_back({"other", rest});
  }
  return w;
}

}  // namespace ratemill::shap
