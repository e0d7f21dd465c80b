#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ratemill/calibration.hpp"
#include "ratemill/metrics.hpp"
#include "ratemill/rng.hpp"
#include "ratemill/specfun.hpp"

using namespace ratemill;
using calibration::CalibrationMap;

namespace {

// Scores plus Bernoulli outcomes whose true probability is a distortion of
// the score; distort = identity gives perfectly calibrated data.
template <typename Fn>
void simulate(Rng& rng, std::size_t n, Fn distort, std::vector<double>& scores,
              std::vector<int>& targets) {
  scores.resize(n);
  targets.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = rng.uniform(0.01, 0.99);
    scores[i] = s;
    targets[i] = rng.bernoulli(distort(s)) ? 1 : 0;
  }
}

}  // namespace

TEST_CASE("identity parameters reproduce the input probability") {
  CalibrationMap map;  // a=1, b=1, c=0
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double p = rng.uniform(1e-5, 1.0 - 1e-5);
    CHECK(map.apply(p) == Catch::Approx(p).margin(1e-12));
  }
}

TEST_CASE("recovers identity parameters from calibrated data") {
  Rng rng(41);
  std::vector<double> scores;
  std::vector<int> targets;
  simulate(rng, 50000, [](double s) { return s; }, scores, targets);
  const CalibrationMap map = calibration::fit_beta(scores, targets);
  CHECK(map.a == Catch::Approx(1.0).margin(0.1));
  CHECK(map.b == Catch::Approx(1.0).margin(0.1));
  CHECK(map.c == Catch::Approx(0.0).margin(0.1));
}

TEST_CASE("systematically doubled odds show up in the intercept") {
  // Scores whose odds are double the true odds: true p = s/(2-s).
  Rng rng(42);
  std::vector<double> scores;
  std::vector<int> targets;
  simulate(rng, 50000, [](double s) { return s / (2.0 - s); }, scores, targets);
  const CalibrationMap map = calibration::fit_beta(scores, targets);
  CHECK(map.a == Catch::Approx(1.0).margin(0.1));
  CHECK(map.b == Catch::Approx(1.0).margin(0.1));
  CHECK(map.c == Catch::Approx(-std::log(2.0)).margin(0.1));
}

TEST_CASE("calibration improves the Brier score and keeps the AUC") {
  Rng rng(43);
  std::vector<double> scores;
  std::vector<int> targets;
  // Over-confident scores: true probability is pulled toward 0.5.
  simulate(rng, 20000, [](double s) { return 0.5 + 0.4 * (s - 0.5); }, scores, targets);
  const CalibrationMap map = calibration::fit_beta(scores, targets);
  const std::vector<double> mapped = map.apply(scores);
  CHECK(calibration::brier(mapped, targets) <
        calibration::brier(scores, targets) + 1e-6);
  // Rank statistics must be exactly equal.
  CHECK(auc_score(mapped, targets) == auc_score(scores, targets));
  for (double p : mapped) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("map is monotone when a and b are non-negative") {
  Rng rng(44);
  for (int trial = 0; trial < 20; ++trial) {
    CalibrationMap map;
    map.a = rng.uniform(0.0, 3.0);
    map.b = rng.uniform(0.0, 3.0);
    map.c = rng.uniform(-2.0, 2.0);
    double prev = -1.0;
    for (double p = 0.001; p < 1.0; p += 0.001) {
      const double v = map.apply(p);
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("fit_beta rejects degenerate inputs") {
  CHECK_THROWS(calibration::fit_beta({}, {}));
  CHECK_THROWS(calibration::fit_beta({0.2, 0.4}, {1, 1}));
}

TEST_CASE("brier anchors") {
  CHECK(calibration::brier({1.0, 0.0}, {1, 0}) == 0.0);
  CHECK(calibration::brier({0.5, 0.5, 0.5}, {1, 0, 1}) == Catch::Approx(0.25));
  CHECK(calibration::brier({0.8, 0.2}, {1, 0}) == Catch::Approx(0.04));
  CHECK_THROWS(calibration::brier({}, {}));
}

TEST_CASE("brier skill anchors") {
  // Base-rate constant forecast scores zero skill.
  const std::vector<int> outcomes{1, 0, 1, 0};
  CHECK(calibration::brier_skill({0.5, 0.5, 0.5, 0.5}, outcomes) == Catch::Approx(0.0));
  CHECK(calibration::brier_skill({1.0, 0.0, 1.0, 0.0}, outcomes) == Catch::Approx(1.0));
  CHECK(calibration::brier_skill({0.9, 0.1, 0.9, 0.1}, outcomes) == Catch::Approx(0.96));
  CHECK_THROWS(calibration::brier_skill({0.5, 0.5}, {1, 1}));
}

TEST_CASE("reliability bins partition the sample") {
  Rng rng(45);
  std::vector<double> scores;
  std::vector<int> targets;
  simulate(rng, 100000, [](double s) { return s; }, scores, targets);
  const auto table = calibration::reliability(scores, targets, 10);
  std::size_t total = 0;
  for (const auto& bin : table.bins) {
    total += bin.count;
    if (bin.count > 2000)
      CHECK(std::fabs(bin.mean_forecast - bin.observed_rate) < 0.02);
  }
  CHECK(total == scores.size());

  const auto single = calibration::reliability({0.55, 0.57, 0.52}, {1, 0, 1}, 10);
  int nonzero = 0;
  for (const auto& bin : single.bins) nonzero += bin.count > 0;
  CHECK(nonzero == 1);
}
