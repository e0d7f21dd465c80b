#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "ratemill/metrics.hpp"
#include "ratemill/rng.hpp"

using namespace ratemill;

TEST_CASE("f_beta basic anchors") {
  CHECK(f_beta_score(1.0, 1.0, 0.7) == Catch::Approx(1.0));
  CHECK(f_beta_score(1.0, 1.0, 2.0) == Catch::Approx(1.0));
  CHECK(f_beta_score(0.0, 0.0, 1.0) == 0.0);
  // beta = 0 collapses to specificity, exactly.
  Rng rng(101);
  for (int i = 0; i < 100; ++i) {
    const double s = rng.uniform01();
    const double r = 0.01 + 0.99 * rng.uniform01();
    CHECK(f_beta_score(s, r, 0.0) == s);
  }
}

TEST_CASE("f_beta against direct formula evaluation") {
  const double s = 0.717, r = 0.906, beta = 1.143;
  const double direct = (1.0 + beta * beta) * s * r / (beta * beta * s + r);
  CHECK(f_beta_score(s, r, beta) == Catch::Approx(direct));
  CHECK(f_beta_score(s, r, beta) == Catch::Approx(0.813).margin(1e-3));
}

TEST_CASE("auc matches brute-force pair counting") {
  const std::vector<double> scores{0.9, 0.8, 0.3, 0.2};
  const std::vector<int> targets{1, 0, 1, 0};
  CHECK(auc_score(scores, targets) == Catch::Approx(0.75));
  CHECK(auc_score(scores, targets) == Catch::Approx(oracles::pair_auc(scores, targets)));

  Rng rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(60);
    std::vector<int> t(60);
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = std::round(rng.uniform01() * 10.0) / 10.0;  // coarse grid forces ties
      t[i] = rng.bernoulli(0.4) ? 1 : 0;
      (t[i] ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) continue;
    CHECK(auc_score(s, t) == Catch::Approx(oracles::pair_auc(s, t)).margin(1e-12));
  }
}

TEST_CASE("auc edge behavior") {
  CHECK(auc_score({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == Catch::Approx(1.0));
  CHECK(auc_score({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}) == Catch::Approx(0.5));
  CHECK_THROWS(auc_score({0.5, 0.6}, {1, 1}));
}

TEST_CASE("auc is invariant under strictly increasing transforms") {
  Rng rng(77);
  std::vector<double> s(200);
  std::vector<int> t(200);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = rng.uniform01();
    t[i] = rng.bernoulli(0.3) ? 1 : 0;
  }
  t[0] = 1;
  t[1] = 0;
  const double base = auc_score(s, t);
  std::vector<double> logit_s = s, cube_s = s;
  for (auto& v : logit_s) v = std::log(v / (1 - v + 1e-12));
  for (auto& v : cube_s) v = v * v * v + 3.0 * v;
  CHECK(auc_score(logit_s, t) == base);
  CHECK(auc_score(cube_s, t) == base);
}

TEST_CASE("average precision anchors") {
  CHECK(average_precision({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == Catch::Approx(1.0));
  // Single positive ranked second: AP = 1/2.
  CHECK(average_precision({0.9, 0.8, 0.2}, {0, 1, 0}) == Catch::Approx(0.5));
}

TEST_CASE("evaluate ties confusion to recall and specificity") {
  const std::vector<double> scores{0.9, 0.7, 0.6, 0.4, 0.3, 0.1};
  const std::vector<int> targets{1, 1, 0, 1, 0, 0};
  const MetricReport r = evaluate_scores(scores, targets, 0.5, 1.0);
  CHECK(r.confusion.tp == 2);
  CHECK(r.confusion.fn == 1);
  CHECK(r.confusion.fp == 1);
  CHECK(r.confusion.tn == 2);
  CHECK(r.confusion.total() == 6);
  CHECK(r.recall == Catch::Approx(2.0 / 3.0));
  CHECK(r.specificity == Catch::Approx(2.0 / 3.0));
  CHECK(r.f_beta == Catch::Approx(f_beta_score(r.specificity, r.recall, 1.0)));
  CHECK_THROWS(evaluate_scores(scores, {1, 1, 1, 1, 1, 1}));
}
