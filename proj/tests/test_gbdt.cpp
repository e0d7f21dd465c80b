#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "ratemill/gbdt.hpp"
#include "ratemill/metrics.hpp"
#include "ratemill/rng.hpp"
#include "ratemill/specfun.hpp"

using namespace ratemill;

namespace {

// Bi-normal latent design: u ~ N(separation * y, 1); features are noisy
// monotone transforms of u. The ideal score has AUC = Phi(separation/sqrt(2)).
FeatureMatrix binormal_matrix(Rng& rng, std::size_t n, double separation, double base_rate,
                              int n_features, double noise_sd) {
  std::vector<std::string> names;
  for (int f = 0; f < n_features; ++f) names.push_back("x" + std::to_string(f));
  FeatureMatrix m = make_matrix(std::move(names), n);
  m.target.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = rng.bernoulli(base_rate) ? 1 : 0;
    const double u = rng.normal(separation * y, 1.0);
    m.target[i] = y;
    for (int f = 0; f < n_features; ++f)
      m.at(i, static_cast<std::size_t>(f)) = u + rng.normal(0.0, noise_sd);
  }
  return m;
}

double weighted_base_rate_logodds(const FeatureMatrix& m, double class_weight) {
  double wp = 0.0, wn = 0.0;
  for (int t : m.target) (t ? wp : wn) += t ? class_weight : 1.0;
  return std::log(wp / wn);
}

}  // namespace

TEST_CASE("zero rounds predicts the weighted base rate everywhere") {
  Rng rng(1);
  FeatureMatrix m = binormal_matrix(rng, 500, 1.0, 0.3, 3, 0.5);
  gbdt::TrainParams params;
  params.rounds = 0;
  params.class_weight = 2.5;
  const auto model = gbdt::fit(m, params, 7);
  const auto proba = gbdt::predict_proba(model, m);
  const double expected = sigmoid(weighted_base_rate_logodds(m, 2.5));
  for (double p : proba) CHECK(p == Catch::Approx(expected).margin(1e-12));
}

TEST_CASE("one stump on a perfectly separating feature reaches AUC 1") {
  FeatureMatrix m = make_matrix({"x"}, 40);
  m.target.resize(40);
  for (std::size_t i = 0; i < 40; ++i) {
    m.target[i] = i < 20 ? 0 : 1;
    m.at(i, 0) = i < 20 ? double(i) : double(i) + 5.0;
  }
  gbdt::TrainParams params;
  params.rounds = 1;
  params.max_leaves = 2;
  params.min_child_weight = 0.1;
  const auto model = gbdt::fit(m, params, 3);
  REQUIRE(model.trees.size() == 1);
  const auto scores = gbdt::predict_proba(model, m);
  CHECK(auc_score(scores, m.target) == Catch::Approx(1.0));
  // Exhaustive check: the chosen threshold must separate the classes.
  const auto& root = model.trees[0].nodes[0];
  CHECK(root.threshold >= 19.0);
  CHECK(root.threshold < 25.0);
}

TEST_CASE("histogram split equals exhaustive search when distinct values fit the bins") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 200;
    FeatureMatrix m = make_matrix({"a", "b"}, n);
    m.target.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      m.at(i, 0) = double(rng.uniform_int(0, 40));  // 41 distinct values < 64 bins
      m.at(i, 1) = double(rng.uniform_int(0, 25));
      m.target[i] = rng.bernoulli(sigmoid(0.2 * m.at(i, 0) - 4.0 + 0.1 * m.at(i, 1))) ? 1 : 0;
    }
    bool has_pos = false, has_neg = false;
    for (int t : m.target) (t ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) continue;

    gbdt::TrainParams params;
    params.rounds = 1;
    params.max_leaves = 2;
    params.min_child_weight = 1e-6;
    params.lambda = 1.0;
    const auto model = gbdt::fit(m, params, 11);
    const auto& root = model.trees[0].nodes[0];
    if (root.is_leaf()) continue;

    // Brute force over every (feature, distinct value) split with the same
    // gradient statistics and gain formula.
    const double base = model.base_score;
    const double p0 = sigmoid(base);
    double total_g = 0.0, total_h = 0.0;
    std::vector<double> g(n), h(n);
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = p0 - double(m.target[i]);
      h[i] = p0 * (1.0 - p0);
      total_g += g[i];
      total_h += h[i];
    }
    double best_gain = -1.0;
    for (std::size_t f = 0; f < 2; ++f) {
      std::vector<double> distinct;
      for (std::size_t i = 0; i < n; ++i) distinct.push_back(m.at(i, f));
      std::sort(distinct.begin(), distinct.end());
      distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
      for (double cut : distinct) {
        double gl = 0.0, hl = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          if (m.at(i, f) <= cut) {
            gl += g[i];
            hl += h[i];
          }
        const double gr = total_g - gl, hr = total_h - hl;
        if (hl <= 0 || hr <= 0) continue;
        const double gain = 0.5 * (gl * gl / (hl + 1.0) + gr * gr / (hr + 1.0) -
                                   total_g * total_g / (total_h + 1.0));
        best_gain = std::max(best_gain, gain);
      }
    }
    // Recompute the gain the model realized at its chosen split.
    double gl = 0.0, hl = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (m.at(i, static_cast<std::size_t>(root.feature)) <= root.threshold) {
        gl += g[i];
        hl += h[i];
      }
    const double gr = total_g - gl, hr = total_h - hl;
    const double model_gain = 0.5 * (gl * gl / (hl + 1.0) + gr * gr / (hr + 1.0) -
                                     total_g * total_g / (total_h + 1.0));
    CHECK(model_gain == Catch::Approx(best_gain).margin(1e-9));
  }
}

TEST_CASE("holdout AUC approaches the design AUC on bi-normal data") {
  const double separation = std::sqrt(2.0) * norm_quantile(0.90);
  Rng rng(13);
  FeatureMatrix train = binormal_matrix(rng, 20000, separation, 0.05, 6, 0.6);
  FeatureMatrix test = binormal_matrix(rng, 6000, separation, 0.05, 6, 0.6);
  gbdt::TrainParams params;
  params.rounds = 120;
  params.learning_rate = 0.1;
  params.threads = 4;
  const auto model = gbdt::fit(train, params, 17);
  const auto scores = gbdt::predict_proba(model, test);
  CHECK(auc_score(scores, test.target) >= 0.85);
}

TEST_CASE("margin additivity against an independent tree walk") {
  Rng rng(19);
  FeatureMatrix m = binormal_matrix(rng, 2000, 1.5, 0.2, 4, 0.8);
  gbdt::TrainParams params;
  params.rounds = 20;
  const auto model = gbdt::fit(m, params, 23);
  for (std::size_t r = 0; r < 50; ++r) {
    const double* row = m.row(r);
    // Independent walk: iterative descent per tree, summed.
    double margin = model.base_score;
    for (const auto& tree : model.trees) {
      int n = 0;
      while (!tree.nodes[static_cast<std::size_t>(n)].is_leaf()) {
        const auto& node = tree.nodes[static_cast<std::size_t>(n)];
        const double x = row[node.feature];
        n = std::isnan(x) ? (node.missing_left ? node.left : node.right)
                          : (x <= node.threshold ? node.left : node.right);
      }
      margin += tree.nodes[static_cast<std::size_t>(n)].value;
    }
    CHECK(gbdt::predict_margin(model, m)[r] == Catch::Approx(margin).margin(1e-12));
    CHECK(gbdt::predict_proba(model, m)[r] ==
          Catch::Approx(sigmoid(std::clamp(margin, -36.0, 36.0))).margin(1e-15));
  }
}

TEST_CASE("missing values route per node and stay in (0,1)") {
  Rng rng(29);
  FeatureMatrix m = binormal_matrix(rng, 3000, 1.5, 0.2, 3, 0.6);
  // Blank a third of the entries.
  for (std::size_t i = 0; i < m.values.size(); ++i)
    if (rng.bernoulli(0.33)) m.values[i] = std::numeric_limits<double>::quiet_NaN();
  gbdt::TrainParams params;
  params.rounds = 30;
  const auto model = gbdt::fit(m, params, 31);

  FeatureMatrix all_missing = make_matrix({"x0", "x1", "x2"}, 5);
  all_missing.column_names = m.column_names;
  const auto proba = gbdt::predict_proba(model, all_missing);
  for (double p : proba) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    CHECK(std::isfinite(p));
  }
}

TEST_CASE("predict rejects mismatched columns") {
  Rng rng(37);
  FeatureMatrix m = binormal_matrix(rng, 300, 1.0, 0.3, 3, 0.5);
  const auto model = gbdt::fit(m, gbdt::TrainParams{.rounds = 2}, 41);
  FeatureMatrix other = m;
  std::swap(other.column_names[0], other.column_names[1]);
  CHECK_THROWS_WITH(gbdt::predict_proba(model, other),
                    Catch::Matchers::ContainsSubstring("feature mismatch"));
}

TEST_CASE("single-class targets are rejected") {
  FeatureMatrix m = make_matrix({"x"}, 10);
  m.target.assign(10, 1);
  for (std::size_t i = 0; i < 10; ++i) m.at(i, 0) = double(i);
  CHECK_THROWS(gbdt::fit(m, gbdt::TrainParams{}, 1));
}

TEST_CASE("increasing class weight never hurts training recall") {
  Rng rng(43);
  FeatureMatrix m = binormal_matrix(rng, 4000, 1.2, 0.1, 4, 0.8);
  gbdt::TrainParams params;
  params.rounds = 40;
  double prev_recall = -1.0;
  for (double w : {1.0, 2.0, 4.0, 8.0, 16.0}) {
    params.class_weight = w;
    const auto model = gbdt::fit(m, params, 47);
    const auto report = evaluate_scores(gbdt::predict_proba(model, m), m.target, 0.5, 1.0);
    CHECK(report.recall >= prev_recall - 0.01);
    prev_recall = report.recall;
  }
}

TEST_CASE("training is deterministic and survives a json round trip") {
  Rng rng(53);
  FeatureMatrix m = binormal_matrix(rng, 1500, 1.5, 0.2, 4, 0.7);
  gbdt::TrainParams params;
  params.rounds = 15;
  params.threads = 4;
  const auto a = gbdt::fit(m, params, 59);
  const auto b = gbdt::fit(m, params, 59);
  CHECK(gbdt::model_to_json(a).dump() == gbdt::model_to_json(b).dump());

  const auto back = gbdt::model_from_json(gbdt::model_to_json(a));
  const auto pa = gbdt::predict_margin(a, m);
  const auto pb = gbdt::predict_margin(back, m);
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
}

TEST_CASE("cover bookkeeping: children sum to parent and all covers positive") {
  Rng rng(61);
  FeatureMatrix m = binormal_matrix(rng, 2000, 1.5, 0.15, 4, 0.6);
  const auto model = gbdt::fit(m, gbdt::TrainParams{.rounds = 10}, 67);
  for (const auto& tree : model.trees) {
    for (const auto& node : tree.nodes) {
      CHECK(node.cover > 0.0);
      if (!node.is_leaf()) {
        const double sum = tree.nodes[static_cast<std::size_t>(node.left)].cover +
                           tree.nodes[static_cast<std::size_t>(node.right)].cover;
        CHECK(sum == Catch::Approx(node.cover).epsilon(1e-9));
      }
    }
  }
}
