#pragma once

// Randomized hyperparameter search under expanding-window time-ordered
// cross-validation: train on vintage years <= y, validate on year y+1, score
// by mean F-beta at the 0.5 threshold, return the argmax configuration.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <vector>

#include "ratemill/gbdt.hpp"
#include "ratemill/matrix.hpp"
#include "ratemill/metrics.hpp"
#include "ratemill/rng.hpp"

namespace ratemill::tuning {

struct SearchSpace {
  double lr_min = 0.01, lr_max = 0.3;          // log-uniform
  int leaves_min = 7, leaves_max = 127;        // log-uniform integer
  double mcw_min = 1.0, mcw_max = 100.0;       // log-uniform
  double lambda_min = 0.1, lambda_max = 10.0;  // log-uniform
};

inline gbdt::TrainParams sample_params(Rng& rng, const SearchSpace& space,
                                       const gbdt::TrainParams& base,
                                       double inverse_prevalence) {
  gbdt::TrainParams p = base;
  p.learning_rate = std::exp(rng.uniform(std::log(space.lr_min), std::log(space.lr_max)));
  p.max_leaves = static_cast<int>(std::lround(
      std::exp(rng.uniform(std::log(double(space.leaves_min)), std::log(double(space.leaves_max))))));
  p.max_leaves = std::clamp(p.max_leaves, space.leaves_min, space.leaves_max);
  p.min_child_weight = std::exp(rng.uniform(std::log(space.mcw_min), std::log(space.mcw_max)));
  p.lambda = std::exp(rng.uniform(std::log(space.lambda_min), std::log(space.lambda_max)));
  p.class_weight = rng.bernoulli(0.5) ? inverse_prevalence : 1.0;
  return p;
}

struct Trial {
  gbdt::TrainParams params;
  double score = -1.0;  // mean F-beta across folds
};

struct TuneResult {
  gbdt::TrainParams best;
  double best_score = -1.0;
  std::vector<Trial> trials;
};

namespace detail {

inline FeatureMatrix rows_subset(const FeatureMatrix& m, const std::vector<std::size_t>& rows) {
  FeatureMatrix out;
  out.column_names = m.column_names;
  out.groups = m.groups;
  out.n_cols = m.n_cols;
  out.n_rows = rows.size();
  out.values.resize(out.n_rows * out.n_cols);
  out.target.resize(out.n_rows);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(m.row(rows[i]), m.row(rows[i]) + m.n_cols,
              out.values.begin() + static_cast<std::ptrdiff_t>(i * m.n_cols));
    out.target[i] = m.target[rows[i]];
  }
  return out;
}

}  // namespace detail

inline TuneResult tune(const FeatureMatrix& m, const std::vector<int>& vintage_years,
                       int budget, double beta, std::uint64_t seed,
                       const gbdt::TrainParams& base, const SearchSpace& space = {}) {
  if (budget < 1) throw std::invalid_argument("tune: budget < 1");
  if (vintage_years.size() != m.n_rows) throw std::invalid_argument("tune: vintage length mismatch");
  std::set<int> years(vintage_years.begin(), vintage_years.end());
  if (years.size() < 2) throw std::invalid_argument("tune: need at least 2 vintage years");

  // Expanding-window folds (train years <= y_i, validate on y_{i+1}).
  const std::vector<int> ordered(years.begin(), years.end());
  struct Fold {
    FeatureMatrix train, val;
  };
  std::vector<Fold> folds;
  for (std::size_t i = 0; i + 1 < ordered.size(); ++i) {
    std::vector<std::size_t> train_rows, val_rows;
    for (std::size_t r = 0; r < m.n_rows; ++r) {
      if (vintage_years[r] <= ordered[i]) train_rows.push_back(r);
      else if (vintage_years[r] == ordered[i + 1]) val_rows.push_back(r);
    }
    if (train_rows.empty() || val_rows.empty()) continue;
    const auto both = [](const std::vector<std::size_t>& rows, const FeatureMatrix& mm) {
      bool pos = false, neg = false;
      for (std::size_t r : rows) (mm.target[r] ? pos : neg) = true;
      return pos && neg;
    };
    if (!both(train_rows, m) || !both(val_rows, m)) continue;
    folds.push_back({detail::rows_subset(m, train_rows), detail::rows_subset(m, val_rows)});
  }
  if (folds.empty()) throw std::runtime_error("tune: no usable time-ordered folds");

  std::size_t n_pos = 0;
  for (int t : m.target) n_pos += (t != 0);
  const double inverse_prevalence = double(m.n_rows) / double(std::max<std::size_t>(n_pos, 1));

  TuneResult result;
  for (int trial = 0; trial < budget; ++trial) {
    Rng rng = Rng::substream(seed, "tune", static_cast<std::uint64_t>(trial));
    Trial t;
    t.params = sample_params(rng, space, base, inverse_prevalence);
    double sum = 0.0;
    int used = 0;
    bool failed = false;
    for (const Fold& fold : folds) {
      try {
        const auto model =
            gbdt::fit(fold.train, t.params,
                      derive_seed(seed, stream_tag("tune-fit"), static_cast<std::uint64_t>(trial)));
        const auto scores = gbdt::predict_proba(model, fold.val, t.params.threads);
        const auto confusion = confusion_at(scores, fold.val.target, 0.5);
        const double recall =
            confusion.tp + confusion.fn > 0 ? double(confusion.tp) / double(confusion.tp + confusion.fn) : 0.0;
        const double specificity =
            confusion.tn + confusion.fp > 0 ? double(confusion.tn) / double(confusion.tn + confusion.fp) : 0.0;
        sum += f_beta_score(specificity, recall, beta);
        ++used;
      } catch (const std::exception&) {
        failed = true;
        break;
      }
    }
    t.score = failed || used == 0 ? -1.0 : sum / double(used);
    if (t.score > result.best_score) {
      result.best_score = t.score;
      result.best = t.params;
    }
    result.trials.push_back(t);
  }
  if (result.best_score < 0.0)
    throw std::runtime_error("tune: every sampled configuration failed to fit");
  return result;
}

}  // namespace ratemill::tuning
