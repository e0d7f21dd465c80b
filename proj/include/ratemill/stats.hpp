#pragma once

// Paired-sample statistics for the mapping validation: one-sided Wilcoxon
// signed-rank (exact null enumeration for small n, tie-corrected normal
// otherwise), McNemar (exact binomial / continuity-corrected chi-square),
// Spearman's rho, Kendall's tau-b, and the Benjamini-Yekutieli FDR
// adjustment, valid under arbitrary dependence.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "ratemill/specfun.hpp"

namespace ratemill::stats {

enum class Method {
  WilcoxonExact,
  WilcoxonNormal,
  McNemarExact,
  McNemarChi2,
  Spearman,
  Kendall,
};

inline const char* to_string(Method m) {
  switch (m) {
    case Method::WilcoxonExact: return "wilcoxon_exact";
    case Method::WilcoxonNormal: return "wilcoxon_normal";
    case Method::McNemarExact: return "mcnemar_exact";
    case Method::McNemarChi2: return "mcnemar_chi2";
    case Method::Spearman: return "spearman";
    case Method::Kendall: return "kendall";
  }
  return "?";
}

enum class Alternative { TwoSided, Greater, Less };

struct TestReport {
  std::string name;
  double statistic = 0.0;
  double p_raw = 1.0;
  double p_adjusted = -1.0;  // negative: not adjusted yet
  bool reject_null = false;
  Method method = Method::WilcoxonNormal;
};

namespace detail {

// Average ranks (1-based) with tie handling.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && v[order[j]] == v[order[i]]) ++j;
    const double avg = 0.5 * (double(i + 1) + double(j));
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

}  // namespace detail

// Exact switchover at effective n of 25 for both Wilcoxon and McNemar.
constexpr std::size_t kExactLimit = 25;

// One-sided signed-rank test of "x tends to exceed y". Zero differences are
// dropped; |d| ranks are tie-averaged.
inline TestReport wilcoxon_one_sided(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("wilcoxon: length mismatch");
  std::vector<double> abs_d;
  std::vector<int> sign;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    if (d == 0.0) continue;
    abs_d.push_back(std::fabs(d));
    sign.push_back(d > 0 ? 1 : -1);
  }
  const std::size_t n = abs_d.size();
  if (n == 0) throw std::invalid_argument("wilcoxon: all pairs tied");

  const std::vector<double> ranks = detail::average_ranks(abs_d);
  double w_plus = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (sign[i] > 0) w_plus += ranks[i];

  TestReport r;
  r.statistic = w_plus;
  if (n <= kExactLimit) {
    // Exact null by dynamic programming over doubled ranks (integers even
    // with .5 tie ranks). counts[s] = number of sign assignments with
    // doubled rank-sum s.
    std::vector<long> dr(n);
    long total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      dr[i] = std::lround(2.0 * ranks[i]);
      total += dr[i];
    }
    std::vector<double> counts(static_cast<std::size_t>(total) + 1, 0.0);
    counts[0] = 1.0;
    long reach = 0;
    for (std::size_t i = 0; i < n; ++i) {
      reach += dr[i];
      for (long s = reach; s >= dr[i]; --s)
        counts[static_cast<std::size_t>(s)] += counts[static_cast<std::size_t>(s - dr[i])];
    }
    const long w2 = std::lround(2.0 * w_plus);
    double ge = 0.0;
    for (long s = w2; s <= total; ++s) ge += counts[static_cast<std::size_t>(s)];
    r.p_raw = ge / std::pow(2.0, double(n));
    r.method = Method::WilcoxonExact;
  } else {
    const double mean = double(n) * double(n + 1) / 4.0;
    double tie_term = 0.0;
    {
      std::vector<double> sorted = abs_d;
      std::sort(sorted.begin(), sorted.end());
      std::size_t i = 0;
      while (i < sorted.size()) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        const double t = double(j - i);
        tie_term += t * t * t - t;
        i = j;
      }
    }
    const double var = double(n) * double(n + 1) * double(2 * n + 1) / 24.0 - tie_term / 48.0;
    const double z = (w_plus - mean - 0.5) / std::sqrt(var);
    r.p_raw = norm_sf(z);
    r.method = Method::WilcoxonNormal;
  }
  return r;
}

// Two-sided McNemar on paired binaries; b = (x=1,y=0), c = (x=0,y=1).
inline TestReport mcnemar(const std::vector<int>& x, const std::vector<int>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("mcnemar: length mismatch");
  long b = 0, c = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool xi = x[i] != 0, yi = y[i] != 0;
    if (xi && !yi) ++b;
    if (!xi && yi) ++c;
  }
  if (b + c == 0) throw std::invalid_argument("mcnemar: no discordant pairs");
  TestReport r;
  if (static_cast<std::size_t>(b + c) < kExactLimit) {
    r.statistic = double(std::min(b, c));
    r.p_raw = std::min(1.0, 2.0 * binom_cdf(std::min(b, c), b + c, 0.5));
    r.method = Method::McNemarExact;
  } else {
    const double chi2 = (std::fabs(double(b - c)) - 1.0) * (std::fabs(double(b - c)) - 1.0) /
                        double(b + c);
    r.statistic = chi2;
    r.p_raw = chi2_sf_1df(chi2);
    r.method = Method::McNemarChi2;
  }
  return r;
}

// Spearman's rho: Pearson correlation of average ranks, Student-t p-value.
inline TestReport spearman_rho(const std::vector<double>& x, const std::vector<double>& y,
                               Alternative alt = Alternative::TwoSided) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
  const std::size_t n = x.size();
  if (n < 3) throw std::invalid_argument("spearman: need at least 3 pairs");
  const auto all_equal = [](const std::vector<double>& v) {
    for (double e : v)
      if (e != v[0]) return false;
    return true;
  };
  if (all_equal(x) || all_equal(y)) throw std::invalid_argument("spearman: constant vector");

  const std::vector<double> rx = detail::average_ranks(x);
  const std::vector<double> ry = detail::average_ranks(y);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= double(n);
  my /= double(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  const double rho = sxy / std::sqrt(sxx * syy);

  TestReport r;
  r.statistic = rho;
  r.method = Method::Spearman;
  const double clamped = std::clamp(rho, -1.0, 1.0);
  double p_greater;
  if (clamped >= 1.0) p_greater = 0.0;
  else if (clamped <= -1.0) p_greater = 1.0;
  else {
    const double t = clamped * std::sqrt(double(n - 2) / (1.0 - clamped * clamped));
    p_greater = student_t_sf(t, double(n - 2));
  }
  switch (alt) {
    case Alternative::Greater: r.p_raw = p_greater; break;
    case Alternative::Less: r.p_raw = 1.0 - p_greater; break;
    case Alternative::TwoSided: r.p_raw = std::min(1.0, 2.0 * std::min(p_greater, 1.0 - p_greater)); break;
  }
  return r;
}

// Kendall's tau-b via merge-sort inversion counting, tie-corrected normal p.
inline TestReport kendall_tau(const std::vector<double>& x, const std::vector<double>& y,
                              Alternative alt = Alternative::TwoSided) {
  if (x.size() != y.size()) throw std::invalid_argument("kendall: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) throw std::invalid_argument("kendall: need at least 2 pairs");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (x[a] != x[b]) return x[a] < x[b];
    return y[a] < y[b];
  });

  // Tie bookkeeping on x, joint (x,y) ties, and y.
  auto tie_stats = [](const std::vector<double>& sorted_keys) {
    double t1 = 0.0, t2 = 0.0, t3 = 0.0;  // sum t(t-1)/2, t(t-1)(2t+5), t(t-1)(t-2)
    std::size_t i = 0;
    while (i < sorted_keys.size()) {
      std::size_t j = i;
      while (j < sorted_keys.size() && sorted_keys[j] == sorted_keys[i]) ++j;
      const double t = double(j - i);
      t1 += t * (t - 1.0) / 2.0;
      t2 += t * (t - 1.0) * (2.0 * t + 5.0);
      t3 += t * (t - 1.0) * (t - 2.0);
      i = j;
    }
    return std::array<double, 3>{t1, t2, t3};
  };

  std::vector<double> xs(n), ys_by_x(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = x[order[i]];
    ys_by_x[i] = y[order[i]];
  }
  const auto tx = tie_stats(xs);

  double txy = 0.0;  // joint ties: pairs tied in both
  {
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j < n && xs[j] == xs[i] && ys_by_x[j] == ys_by_x[i]) ++j;
      const double t = double(j - i);
      txy += t * (t - 1.0) / 2.0;
      i = j;
    }
  }

  std::vector<double> ys = y;
  std::sort(ys.begin(), ys.end());
  const auto ty = tie_stats(ys);

  // Count discordant pairs = inversions of y within the x-sorted order,
  // counting strictly descending pairs only (merge sort).
  std::vector<double> buf(n);
  std::function<double(std::size_t, std::size_t)> sort_count =
      [&](std::size_t lo, std::size_t hi) -> double {
    if (hi - lo < 2) return 0.0;
    const std::size_t mid = (lo + hi) / 2;
    double inv = sort_count(lo, mid) + sort_count(mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
      if (ys_by_x[j] < ys_by_x[i]) {
        inv += double(mid - i);
        buf[k++] = ys_by_x[j++];
      } else {
        buf[k++] = ys_by_x[i++];
      }
    }
    while (i < mid) buf[k++] = ys_by_x[i++];
    while (j < hi) buf[k++] = ys_by_x[j++];
    std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo),
              buf.begin() + static_cast<std::ptrdiff_t>(hi),
              ys_by_x.begin() + static_cast<std::ptrdiff_t>(lo));
    return inv;
  };
  const double discordant = sort_count(0, n);

  const double n0 = double(n) * double(n - 1) / 2.0;
  const double n1 = tx[0], n2 = ty[0];
  if (n1 >= n0 || n2 >= n0) throw std::invalid_argument("kendall: all ties in one vector");
  // Pairs untied in x: n0 - n1. Of these, pairs tied in y: n2 - txy.
  const double concordant = n0 - n1 - (n2 - txy) - discordant;
  const double s = concordant - discordant;
  const double tau = s / std::sqrt((n0 - n1) * (n0 - n2));

  // Tie-corrected variance of S.
  const double v0 = double(n) * double(n - 1) * (2.0 * double(n) + 5.0);
  const double v1 = 2.0 * tx[0] * 2.0 * ty[0] / (2.0 * double(n) * double(n - 1));
  const double v2 = tx[2] * ty[2] / (9.0 * double(n) * double(n - 1) * double(n - 2 == 0 ? 1 : n - 2));
  const double var_s = (v0 - tx[1] - ty[1]) / 18.0 + v1 + (n > 2 ? v2 : 0.0);

  TestReport r;
  r.statistic = tau;
  r.method = Method::Kendall;
  const double z = var_s > 0.0 ? s / std::sqrt(var_s) : 0.0;
  const double p_greater = norm_sf(z);
  switch (alt) {
    case Alternative::Greater: r.p_raw = p_greater; break;
    case Alternative::Less: r.p_raw = 1.0 - p_greater; break;
    case Alternative::TwoSided: r.p_raw = std::min(1.0, 2.0 * std::min(p_greater, 1.0 - p_greater)); break;
  }
  return r;
}

// Benjamini-Yekutieli adjustment: adj_(i) = min_{j>=i} m c(m) p_(j) / j,
// capped at 1, returned in the original order.
inline std::vector<double> by_adjust(const std::vector<double>& p_values) {
  const std::size_t m = p_values.size();
  std::vector<double> adjusted(m, 0.0);
  if (m == 0) return adjusted;
  for (double p : p_values)
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("by_adjust: p outside [0,1]");

  double cm = 0.0;
  for (std::size_t j = 1; j <= m; ++j) cm += 1.0 / double(j);

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });

  double running = 1.0;
  for (std::size_t i = m; i-- > 0;) {
    const double val = double(m) * cm * p_values[order[i]] / double(i + 1);
    running = std::min(running, val);
    adjusted[order[i]] = std::min(1.0, running);
  }
  return adjusted;
}

// Fills p_adjusted/reject_null across a battery of reports.
inline void adjust_battery(std::vector<TestReport>& reports, double alpha = 0.05) {
  std::vector<double> raw;
  raw.reserve(reports.size());
  for (const auto& r : reports) raw.push_back(r.p_raw);
  const std::vector<double> adj = by_adjust(raw);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    reports[i].p_adjusted = adj[i];
    reports[i].reject_null = adj[i] < alpha;
  }
}

}  // namespace ratemill::stats
