#pragma once

// Gradient boosted decision trees with logistic loss: histogram split search
// (value-quantile bins), leaf-wise growth under a leaf cap, per-node learned
// missing-value routing and positive-class weighting. Covers (hessian sums)
// are recorded per node; the explainer consumes them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "ratemill/matrix.hpp"
#include "ratemill/parallel.hpp"
#include "ratemill/rng.hpp"
#include "ratemill/specfun.hpp"

#include "json.hpp"

namespace ratemill::gbdt {

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  bool missing_left = true;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf log-odds contribution, learning rate applied
  double cover = 0.0;  // hessian sum reaching the node

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;

  // Cover-weighted mean leaf value: the tree's expected contribution over
  // the training distribution.
  double mean_value() const { return mean_value_at(0); }

  double mean_value_at(int n) const {
    const TreeNode& node = nodes[static_cast<std::size_t>(n)];
    if (node.is_leaf()) return node.value;
    const double cl = nodes[static_cast<std::size_t>(node.left)].cover;
    const double cr = nodes[static_cast<std::size_t>(node.right)].cover;
    return (cl * mean_value_at(node.left) + cr * mean_value_at(node.right)) / (cl + cr);
  }

  int max_depth() const { return depth_at(0); }

  int depth_at(int n) const {
    const TreeNode& node = nodes[static_cast<std::size_t>(n)];
    if (node.is_leaf()) return 0;
    return 1 + std::max(depth_at(node.left), depth_at(node.right));
  }
};

struct TrainParams {
  int rounds = 150;
  double learning_rate = 0.1;
  int max_leaves = 31;
  double min_child_weight = 1.0;
  double lambda = 1.0;
  double class_weight = 1.0;  // weight applied to positive rows
  int max_bins = 64;
  unsigned threads = 1;
};

struct TrainMeta {
  std::uint64_t seed = 0;
  TrainParams params;
};

struct TreeEnsembleModel {
  double base_score = 0.0;  // prior log-odds
  double learning_rate = 0.1;
  double class_weight = 1.0;
  std::vector<std::string> feature_names;
  std::vector<Tree> trees;
  TrainMeta meta;

  double margin_for_row(const double* row) const {
    double m = base_score;
    for (const Tree& tree : trees) {
      int n = 0;
      while (true) {
        const TreeNode& node = tree.nodes[static_cast<std::size_t>(n)];
        if (node.is_leaf()) {
          m += node.value;
          break;
        }
        const double x = row[node.feature];
        if (std::isnan(x)) {
          n = node.missing_left ? node.left : node.right;
        } else {
          n = x <= node.threshold ? node.left : node.right;
        }
      }
    }
    return m;
  }
};

inline void check_features(const TreeEnsembleModel& model, const FeatureMatrix& m) {
  if (model.feature_names != m.column_names)
    throw std::runtime_error("feature mismatch between model and input matrix");
}

inline std::vector<double> predict_margin(const TreeEnsembleModel& model,
                                          const FeatureMatrix& m,
                                          unsigned threads = 1) {
  check_features(model, m);
  std::vector<double> out(m.n_rows);
  parallel_for(m.n_rows, threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t r = b; r < e; ++r) out[r] = model.margin_for_row(m.row(r));
  });
  return out;
}

// Margins are clamped to +-36 before the sigmoid so outputs stay strictly
// inside (0,1) in double precision.
inline double margin_to_proba(double margin) {
  const double m = std::clamp(margin, -36.0, 36.0);
  return sigmoid(m);
}

inline std::vector<double> predict_proba(const TreeEnsembleModel& model,
                                         const FeatureMatrix& m,
                                         unsigned threads = 1) {
  std::vector<double> out = predict_margin(model, m, threads);
  for (double& v : out) v = margin_to_proba(v);
  return out;
}

// ---------------------------------------------------------------------------
// Binning

struct BinMap {
  // Ascending cut points per feature; bin(x) = index of first cut >= x, with
  // values above the last cut in the overflow bin. Missing gets its own slot.
  std::vector<std::vector<double>> cuts;

  static constexpr std::uint8_t kMissing = 255;

  int n_bins(std::size_t f) const { return static_cast<int>(cuts[f].size()) + 1; }

  std::uint8_t code(std::size_t f, double x) const {
    if (std::isnan(x)) return kMissing;
    const auto& c = cuts[f];
    const auto it = std::lower_bound(c.begin(), c.end(), x);
    return static_cast<std::uint8_t>(it - c.begin());
  }
};

inline BinMap build_bins(const FeatureMatrix& m, int max_bins) {
  if (max_bins < 2 || max_bins > 250) throw std::invalid_argument("max_bins outside [2,250]");
  BinMap bins;
  bins.cuts.resize(m.n_cols);
  std::vector<double> vals;
  for (std::size_t f = 0; f < m.n_cols; ++f) {
    vals.clear();
    for (std::size_t r = 0; r < m.n_rows; ++r) {
      const double x = m.at(r, f);
      if (std::isnan(x)) continue;
      if (!std::isfinite(x)) throw std::runtime_error("non-finite feature value in column " + m.column_names[f]);
      vals.push_back(x);
    }
    std::sort(vals.begin(), vals.end());
    std::vector<double> distinct;
    for (double v : vals)
      if (distinct.empty() || distinct.back() != v) distinct.push_back(v);

    auto& cut = bins.cuts[f];
    if (static_cast<int>(distinct.size()) <= max_bins) {
      cut = distinct;  // one bin per distinct value: split search is exhaustive
    } else {
      // Frequency-weighted quantile cuts over the raw value vector.
      cut.clear();
      for (int j = 1; j < max_bins; ++j) {
        const std::size_t pos = static_cast<std::size_t>(
            double(j) * double(vals.size()) / double(max_bins));
        const double v = vals[std::min(pos, vals.size() - 1)];
        if (cut.empty() || cut.back() != v) cut.push_back(v);
      }
      if (!cut.empty() && cut.back() == distinct.back()) cut.pop_back();
    }
  }
  return bins;
}

// ---------------------------------------------------------------------------
// Training

namespace detail {

struct GH {
  double g = 0.0;
  double h = 0.0;
};

struct SplitInfo {
  double gain = -1.0;
  int feature = -1;
  int bin = -1;  // codes <= bin go left
  bool missing_left = false;
  GH left, right;
  bool valid() const { return feature >= 0; }
};

struct LeafCtx {
  int node = -1;
  std::size_t begin = 0, end = 0;  // range in the row-index buffer
  GH sum;
  SplitInfo best;
  int order = 0;  // creation order, deterministic tie-break
};

inline double leaf_objective(const GH& s, double lambda) {
  return s.g * s.g / (s.h + lambda);
}

// Best split for one node from its per-feature histograms. Both missing
// routings are scored; ties keep the earliest candidate (feature order, then
// bin, then missing-right before missing-left).
inline SplitInfo best_split(const std::vector<GH>& hist, const std::vector<int>& hist_offset,
                            const BinMap& bins, const GH& total, const TrainParams& params) {
  SplitInfo best;
  const double parent_term = leaf_objective(total, params.lambda);
  const std::size_t n_features = bins.cuts.size();
  for (std::size_t f = 0; f < n_features; ++f) {
    const int nb = bins.n_bins(f);
    if (nb < 2) continue;
    const GH* h = hist.data() + hist_offset[f];
    const GH miss = h[nb];  // missing slot sits after the value bins
    GH acc;
    for (int b = 0; b < nb - 1; ++b) {
      acc.g += h[b].g;
      acc.h += h[b].h;
      for (int dir = 0; dir < 2; ++dir) {
        const bool missing_left = dir == 1;
        GH left = acc;
        if (missing_left) {
          left.g += miss.g;
          left.h += miss.h;
        }
        const GH right{total.g - left.g, total.h - left.h};
        if (left.h < params.min_child_weight || right.h < params.min_child_weight) continue;
        if (left.h <= 0.0 || right.h <= 0.0) continue;
        const double gain = 0.5 * (leaf_objective(left, params.lambda) +
                                   leaf_objective(right, params.lambda) - parent_term);
        if (gain > best.gain + 1e-12) {
          best.gain = gain;
          best.feature = static_cast<int>(f);
          best.bin = b;
          best.missing_left = missing_left;
          best.left = left;
          best.right = right;
        }
      }
    }
  }
  return best;
}

}  // namespace detail

inline TreeEnsembleModel fit(const FeatureMatrix& m, const TrainParams& params,
                             std::uint64_t seed) {
  m.validate();
  if (m.target.empty()) throw std::invalid_argument("fit: matrix has no target");
  const std::size_t n = m.n_rows;
  const std::size_t p = m.n_cols;
  std::int64_t n_pos = 0;
  for (int t : m.target) n_pos += (t != 0);
  if (n_pos == 0 || n_pos == static_cast<std::int64_t>(n))
    throw std::invalid_argument("fit: single-class target");
  if (params.learning_rate <= 0.0 || params.learning_rate > 1.0)
    throw std::invalid_argument("fit: learning_rate outside (0,1]");
  if (params.class_weight <= 0.0) throw std::invalid_argument("fit: class_weight <= 0");

  const BinMap bins = build_bins(m, params.max_bins);

  // Column-major bin codes.
  std::vector<std::uint8_t> codes(n * p);
  parallel_for(p, params.threads, [&](std::size_t fb, std::size_t fe) {
    for (std::size_t f = fb; f < fe; ++f)
      for (std::size_t r = 0; r < n; ++r)
        codes[f * n + r] = bins.code(f, m.at(r, f));
  });

  std::vector<int> hist_offset(p + 1, 0);
  for (std::size_t f = 0; f < p; ++f)
    hist_offset[f + 1] = hist_offset[f] + bins.n_bins(f) + 1;  // +1 missing slot
  const int hist_size = hist_offset[p];

  TreeEnsembleModel model;
  model.learning_rate = params.learning_rate;
  model.class_weight = params.class_weight;
  model.feature_names = m.column_names;
  model.meta.seed = seed;
  model.meta.params = params;

  std::vector<double> weight(n);
  double w_pos = 0.0, w_neg = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    weight[i] = m.target[i] != 0 ? params.class_weight : 1.0;
    (m.target[i] != 0 ? w_pos : w_neg) += weight[i];
  }
  model.base_score = std::log(w_pos / w_neg);

  std::vector<double> margin(n, model.base_score);
  std::vector<double> grad(n), hess(n);
  std::vector<std::uint32_t> row_index(n), scratch(n);

  for (int round = 0; round < params.rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const double prob = sigmoid(margin[i]);
      grad[i] = (prob - double(m.target[i])) * weight[i];
      hess[i] = std::max(prob * (1.0 - prob) * weight[i], 1e-16);
    }

    Tree tree;
    std::iota(row_index.begin(), row_index.end(), 0u);

    auto build_hist = [&](std::size_t begin, std::size_t end, std::vector<detail::GH>& hist) {
      hist.assign(static_cast<std::size_t>(hist_size), detail::GH{});
      parallel_for(p, params.threads, [&](std::size_t fb, std::size_t fe) {
        for (std::size_t f = fb; f < fe; ++f) {
          const std::uint8_t* col = codes.data() + f * n;
          const int nb = bins.n_bins(f);
          detail::GH* out = hist.data() + hist_offset[f];
          for (std::size_t k = begin; k < end; ++k) {
            const std::uint32_t r = row_index[k];
            const std::uint8_t c = col[r];
            const int slot = c == BinMap::kMissing ? nb : int(c);
            out[slot].g += grad[r];
            out[slot].h += hess[r];
          }
        }
      });
    };

    detail::GH root_sum;
    for (std::size_t i = 0; i < n; ++i) {
      root_sum.g += grad[i];
      root_sum.h += hess[i];
    }
    tree.nodes.push_back(TreeNode{});
    tree.nodes[0].cover = root_sum.h;

    std::vector<detail::LeafCtx> open;
    std::vector<detail::GH> hist;
    {
      detail::LeafCtx root;
      root.node = 0;
      root.begin = 0;
      root.end = n;
      root.sum = root_sum;
      build_hist(0, n, hist);
      root.best = detail::best_split(hist, hist_offset, bins, root.sum, params);
      root.order = 0;
      open.push_back(root);
    }

    int n_leaves = 1;
    int order_counter = 1;
    while (n_leaves < params.max_leaves) {
      // Expand the open leaf with the largest gain; creation order breaks ties.
      int pick = -1;
      for (std::size_t i = 0; i < open.size(); ++i) {
        if (!open[i].best.valid() || open[i].best.gain <= 1e-12) continue;
        if (pick < 0 || open[i].best.gain > open[static_cast<std::size_t>(pick)].best.gain ||
            (open[i].best.gain == open[static_cast<std::size_t>(pick)].best.gain &&
             open[i].order < open[static_cast<std::size_t>(pick)].order))
          pick = static_cast<int>(i);
      }
      if (pick < 0) break;
      detail::LeafCtx ctx = open[static_cast<std::size_t>(pick)];
      open.erase(open.begin() + pick);

      const detail::SplitInfo& s = ctx.best;
      TreeNode& node = tree.nodes[static_cast<std::size_t>(ctx.node)];
      node.feature = s.feature;
      node.threshold = bins.cuts[static_cast<std::size_t>(s.feature)][static_cast<std::size_t>(s.bin)];
      node.missing_left = s.missing_left;
      node.left = static_cast<int>(tree.nodes.size());
      node.right = node.left + 1;
      tree.nodes.push_back(TreeNode{});
      tree.nodes.push_back(TreeNode{});
      tree.nodes[static_cast<std::size_t>(node.left)].cover = s.left.h;
      tree.nodes[static_cast<std::size_t>(node.right)].cover = s.right.h;

      // Stable partition of the node's rows.
      const std::uint8_t* col = codes.data() + static_cast<std::size_t>(s.feature) * n;
      std::size_t nl = ctx.begin;
      std::size_t spill = 0;
      for (std::size_t k = ctx.begin; k < ctx.end; ++k) {
        const std::uint32_t r = row_index[k];
        const std::uint8_t c = col[r];
        const bool go_left = c == BinMap::kMissing ? s.missing_left : int(c) <= s.bin;
        if (go_left)
          row_index[nl++] = r;
        else
          scratch[spill++] = r;
      }
      std::copy(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(spill),
                row_index.begin() + static_cast<std::ptrdiff_t>(nl));

      detail::LeafCtx left_ctx, right_ctx;
      left_ctx.node = node.left;
      left_ctx.begin = ctx.begin;
      left_ctx.end = nl;
      left_ctx.sum = s.left;
      left_ctx.order = order_counter++;
      right_ctx.node = node.right;
      right_ctx.begin = nl;
      right_ctx.end = ctx.end;
      right_ctx.sum = s.right;
      right_ctx.order = order_counter++;

      build_hist(left_ctx.begin, left_ctx.end, hist);
      left_ctx.best = detail::best_split(hist, hist_offset, bins, left_ctx.sum, params);
      build_hist(right_ctx.begin, right_ctx.end, hist);
      right_ctx.best = detail::best_split(hist, hist_offset, bins, right_ctx.sum, params);

      open.push_back(left_ctx);
      open.push_back(right_ctx);
      ++n_leaves;
    }

    for (const detail::LeafCtx& ctx : open) {
      TreeNode& node = tree.nodes[static_cast<std::size_t>(ctx.node)];
      node.value = -params.learning_rate * ctx.sum.g / (ctx.sum.h + params.lambda);
      for (std::size_t k = ctx.begin; k < ctx.end; ++k) margin[row_index[k]] += node.value;
    }

    model.trees.push_back(std::move(tree));
  }

  return model;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json tree_to_json(const Tree& t) {
  nlohmann::json j;
  auto& feat = j["feature"] = nlohmann::json::array();
  auto& thr = j["threshold"] = nlohmann::json::array();
  auto& ml = j["missing_left"] = nlohmann::json::array();
  auto& left = j["left"] = nlohmann::json::array();
  auto& right = j["right"] = nlohmann::json::array();
  auto& value = j["value"] = nlohmann::json::array();
  auto& cover = j["cover"] = nlohmann::json::array();
  for (const TreeNode& n : t.nodes) {
    feat.push_back(n.feature);
    thr.push_back(n.threshold);
    ml.push_back(n.missing_left ? 1 : 0);
    left.push_back(n.left);
    right.push_back(n.right);
    value.push_back(n.value);
    cover.push_back(n.cover);
  }
  return j;
}

inline Tree tree_from_json(const nlohmann::json& j) {
  Tree t;
  const auto& feat = j.at("feature");
  const std::size_t n = feat.size();
  t.nodes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    TreeNode& node = t.nodes[i];
    node.feature = j.at("feature")[i].get<int>();
    node.threshold = j.at("threshold")[i].get<double>();
    node.missing_left = j.at("missing_left")[i].get<int>() != 0;
    node.left = j.at("left")[i].get<int>();
    node.right = j.at("right")[i].get<int>();
    node.value = j.at("value")[i].get<double>();
    node.cover = j.at("cover")[i].get<double>();
  }
  return t;
}

inline nlohmann::json model_to_json(const TreeEnsembleModel& model) {
  nlohmann::json j;
  j["format"] = "ratemill-model-v1";
  j["base_score"] = model.base_score;
  j["learning_rate"] = model.learning_rate;
  j["class_weight"] = model.class_weight;
  j["feature_names"] = model.feature_names;
  j["meta"] = {{"seed", model.meta.seed},
               {"rounds", model.meta.params.rounds},
               {"max_leaves", model.meta.params.max_leaves},
               {"min_child_weight", model.meta.params.min_child_weight},
               {"lambda", model.meta.params.lambda},
               {"max_bins", model.meta.params.max_bins}};
  auto& trees = j["trees"] = nlohmann::json::array();
  for (const Tree& t : model.trees) trees.push_back(tree_to_json(t));
  return j;
}

inline TreeEnsembleModel model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "ratemill-model-v1")
    throw std::runtime_error("unrecognized model format");
  TreeEnsembleModel model;
  model.base_score = j.at("base_score").get<double>();
  model.learning_rate = j.at("learning_rate").get<double>();
  model.class_weight = j.at("class_weight").get<double>();
  model.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  if (j.contains("meta")) {
    const auto& meta = j.at("meta");
    model.meta.seed = meta.value("seed", std::uint64_t{0});
    model.meta.params.rounds = meta.value("rounds", 0);
    model.meta.params.max_leaves = meta.value("max_leaves", 31);
    model.meta.params.min_child_weight = meta.value("min_child_weight", 1.0);
    model.meta.params.lambda = meta.value("lambda", 1.0);
    model.meta.params.max_bins = meta.value("max_bins", 64);
  }
  for (const auto& tj : j.at("trees")) model.trees.push_back(tree_from_json(tj));
  return model;
}

}  // namespace ratemill::gbdt
