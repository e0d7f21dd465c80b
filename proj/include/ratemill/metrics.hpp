#pragma once

// Binary classification metrics: rank-statistic AUC with tie averaging,
// step-wise average precision, confusion-matrix derived rates and the
// specificity/recall F-beta score used to steer training.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace ratemill {

struct ConfusionCounts {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::int64_t total() const { return tp + fp + tn + fn; }
};

struct MetricReport {
  double auc = 0.0;
  double recall = 0.0;
  double specificity = 0.0;
  double f_beta = 0.0;
  double f1 = 0.0;
  double average_precision = 0.0;
  ConfusionCounts confusion;
  double threshold = 0.5;
};

// F-beta over specificity and recall. beta = 0 collapses to specificity by
// the algebraic limit, which callers rely on being exact.
inline double f_beta_score(double specificity, double recall, double beta) {
  if (specificity == 0.0 && recall == 0.0) return 0.0;
  if (beta == 0.0) return recall == 0.0 ? 0.0 : specificity;
  const double b2 = beta * beta;
  const double denom = b2 * specificity + recall;
  if (denom == 0.0) return 0.0;
  return (1.0 + b2) * specificity * recall / denom;
}

// Tie-averaged rank AUC: (sum of positive ranks - n_pos(n_pos+1)/2) / (n_pos n_neg).
inline double auc_score(const std::vector<double>& scores, const std::vector<int>& targets) {
  if (scores.size() != targets.size()) throw std::invalid_argument("auc: length mismatch");
  const std::size_t n = scores.size();
  std::int64_t n_pos = 0;
  for (int t : targets) n_pos += (t != 0);
  const std::int64_t n_neg = static_cast<std::int64_t>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("auc undefined for single-class targets");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * (double(i + 1) + double(j));  // 1-based average rank
    for (std::size_t k = i; k < j; ++k)
      if (targets[order[k]] != 0) rank_sum_pos += avg_rank;
    i = j;
  }
  return (rank_sum_pos - double(n_pos) * double(n_pos + 1) / 2.0) /
         (double(n_pos) * double(n_neg));
}

// Step-wise PR integration over distinct thresholds: AP = sum (R_i - R_{i-1}) P_i.
inline double average_precision(const std::vector<double>& scores,
                                const std::vector<int>& targets) {
  if (scores.size() != targets.size()) throw std::invalid_argument("ap: length mismatch");
  std::int64_t n_pos = 0;
  for (int t : targets) n_pos += (t != 0);
  if (n_pos == 0) throw std::invalid_argument("ap undefined without positives");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double ap = 0.0;
  std::int64_t tp = 0, seen = 0;
  double prev_recall = 0.0;
  std::size_t i = 0;
  const std::size_t n = order.size();
  while (i < n) {
    std::size_t j = i;
    std::int64_t block_pos = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      block_pos += (targets[order[j]] != 0);
      ++j;
    }
    tp += block_pos;
    seen += static_cast<std::int64_t>(j - i);
    const double recall = double(tp) / double(n_pos);
    const double precision = double(tp) / double(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

inline ConfusionCounts confusion_at(const std::vector<double>& scores,
                                    const std::vector<int>& targets, double threshold) {
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (targets[i] != 0) {
      pred ? ++c.tp : ++c.fn;
    } else {
      pred ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

inline MetricReport evaluate_scores(const std::vector<double>& scores,
                                    const std::vector<int>& targets,
                                    double threshold = 0.5, double beta = 1.143) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("evaluate: threshold outside (0,1)");
  MetricReport r;
  r.threshold = threshold;
  r.auc = auc_score(scores, targets);
  r.average_precision = average_precision(scores, targets);
  r.confusion = confusion_at(scores, targets, threshold);
  const auto& c = r.confusion;
  r.recall = (c.tp + c.fn) > 0 ? double(c.tp) / double(c.tp + c.fn) : 0.0;
  r.specificity = (c.tn + c.fp) > 0 ? double(c.tn) / double(c.tn + c.fp) : 0.0;
  const double precision = (c.tp + c.fp) > 0 ? double(c.tp) / double(c.tp + c.fp) : 0.0;
  r.f1 = (precision + r.recall) > 0 ? 2.0 * precision * r.recall / (precision + r.recall) : 0.0;
  r.f_beta = f_beta_score(r.specificity, r.recall, beta);
  return r;
}

}  // namespace ratemill
