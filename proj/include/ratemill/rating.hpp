#pragma once

// Rating master scale: calibrated PDs clustered into ordered classes by
// differential evolution over the bin boundaries, validated per class with a
// one-sided binomial test and the four-band traffic-light check
// (sigma = sqrt(PD (1-PD) / N), yellow/orange multipliers 0.84 / 1.44).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "ratemill/de.hpp"
#include "ratemill/specfun.hpp"

#include "json.hpp"

namespace ratemill::rating {

inline std::vector<std::string> default_labels(int k) {
  static const std::vector<std::string> nine = {"AAA", "AA", "A", "BBB", "BB",
                                                "B",   "CCC", "CC", "C"};
  if (k == 9) return nine;
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) out.push_back("R" + std::to_string(i + 1));
  return out;
}

struct RatingScale {
  std::vector<std::string> labels;
  std::vector<double> boundaries;  // K-1 strictly increasing values in (0,1)
  std::vector<double> class_pd;    // mean calibrated PD per class
  std::vector<std::size_t> class_counts;
  double objective = 0.0;
  double min_share = 0.005;
  std::uint64_t seed = 0;

  std::size_t n_classes() const { return labels.size(); }

  // Total assignment: first class whose upper boundary exceeds the PD.
  std::size_t class_of(double pd) const {
    std::size_t c = 0;
    while (c < boundaries.size() && pd >= boundaries[c]) ++c;
    return c;
  }
};

enum class TrafficLight { Green, Yellow, Orange, Red };

inline const char* to_string(TrafficLight t) {
  switch (t) {
    case TrafficLight::Green: return "Green";
    case TrafficLight::Yellow: return "Yellow";
    case TrafficLight::Orange: return "Orange";
    case TrafficLight::Red: return "Red";
  }
  return "?";
}

struct BinomialResult {
  double p_value = 1.0;
  bool pass = true;
};

// One-sided p = P(X >= defaults) for X ~ Binomial(n, pd).
inline BinomialResult binomial_test(long defaults, long n, double pd, double alpha = 0.05) {
  if (!(pd > 0.0 && pd < 1.0)) throw std::invalid_argument("binomial_test: pd outside (0,1)");
  if (defaults < 0 || defaults > n) throw std::invalid_argument("binomial_test: defaults outside [0,n]");
  BinomialResult r;
  r.p_value = binom_sf_inclusive(defaults, n, pd);
  r.pass = r.p_value >= alpha;
  return r;
}

inline TrafficLight traffic_light(double p_k, double pd_k, long n_k, double k_y = 0.84,
                                  double k_0 = 1.44) {
  if (n_k < 1) throw std::invalid_argument("traffic_light: empty class");
  if (!(pd_k > 0.0 && pd_k < 1.0)) throw std::invalid_argument("traffic_light: pd outside (0,1)");
  const double sigma = std::sqrt(pd_k * (1.0 - pd_k) / double(n_k));
  if (p_k < pd_k) return TrafficLight::Green;
  if (p_k < pd_k + k_y * sigma) return TrafficLight::Yellow;
  if (p_k < pd_k + k_0 * sigma) return TrafficLight::Orange;
  return TrafficLight::Red;
}

struct ClassValidation {
  std::string label;
  double observed_rate = 0.0;
  double class_pd = 0.0;
  std::size_t count = 0;
  std::size_t defaults = 0;
  double binomial_p = 1.0;
  bool binomial_pass = true;
  bool binomial_applicable = true;  // false below the reporting floor
  TrafficLight light = TrafficLight::Green;
};

// ---------------------------------------------------------------------------
// Differential-evolution binning

struct DeBinConfig {
  int k = 9;
  double min_share = 0.005;
  double constraint_penalty = 1e4;
  de::DeParams de_params;  // population defaults to 15 * (k-1)
};

namespace detail {

struct SortedPds {
  std::vector<double> sorted;
  std::vector<double> prefix;   // prefix sums of sorted pds
  std::vector<double> prefix2;  // prefix sums of squares
};

inline SortedPds presort(const std::vector<double>& pds) {
  SortedPds s;
  s.sorted = pds;
  std::sort(s.sorted.begin(), s.sorted.end());
  s.prefix.resize(s.sorted.size() + 1, 0.0);
  s.prefix2.resize(s.sorted.size() + 1, 0.0);
  for (std::size_t i = 0; i < s.sorted.size(); ++i) {
    s.prefix[i + 1] = s.prefix[i] + s.sorted[i];
    s.prefix2[i + 1] = s.prefix2[i] + s.sorted[i] * s.sorted[i];
  }
  return s;
}

// Within-class squared dispersion plus a flat penalty per violated
// constraint (strict boundary ordering, minimum class share).
inline double binning_objective(const SortedPds& s, std::vector<double> bounds,
                                double min_share, double penalty) {
  std::sort(bounds.begin(), bounds.end());
  double j = 0.0;
  const std::size_t n = s.sorted.size();
  const double min_count = min_share * double(n);
  std::size_t lo = 0;
  for (std::size_t c = 0; c <= bounds.size(); ++c) {
    const std::size_t hi =
        c < bounds.size()
            ? static_cast<std::size_t>(std::lower_bound(s.sorted.begin(), s.sorted.end(),
                                                        bounds[c]) -
                                       s.sorted.begin())
            : n;
    const std::size_t cnt = hi - lo;
    if (double(cnt) < min_count) j += penalty;
    if (cnt > 0) {
      const double sum = s.prefix[hi] - s.prefix[lo];
      const double sum2 = s.prefix2[hi] - s.prefix2[lo];
      j += sum2 - sum * sum / double(cnt);
    }
    lo = hi;
  }
  for (std::size_t i = 1; i < bounds.size(); ++i)
    if (!(bounds[i] - bounds[i - 1] > 1e-12)) j += penalty;
  return j;
}

}  // namespace detail

inline RatingScale de_bin(const std::vector<double>& pds, const std::vector<int>& targets,
                          const DeBinConfig& config, std::uint64_t seed) {
  const int k = config.k;
  if (k < 2) throw std::invalid_argument("de_bin: need at least 2 classes");
  if (pds.size() != targets.size() && !targets.empty())
    throw std::invalid_argument("de_bin: pds/targets length mismatch");
  const double min_count = config.min_share * double(pds.size());
  if (double(pds.size()) < min_count * double(k))
    throw std::invalid_argument("de_bin: not enough samples for the minimum class share");

  const detail::SortedPds sorted = detail::presort(pds);

  de::DeParams de_params = config.de_params;
  if (de_params.population <= 0) de_params.population = 15 * (k - 1);

  // Equal-frequency quantile boundaries seed individual 0.
  std::vector<double> hint(static_cast<std::size_t>(k - 1));
  for (int i = 1; i < k; ++i) {
    const std::size_t pos = static_cast<std::size_t>(double(i) * double(sorted.sorted.size()) / double(k));
    hint[static_cast<std::size_t>(i - 1)] =
        sorted.sorted[std::min(pos, sorted.sorted.size() - 1)];
  }

  const auto objective = [&](const std::vector<double>& b) {
    return detail::binning_objective(sorted, b, config.min_share, config.constraint_penalty);
  };
  const de::DeResult res = de::optimize(static_cast<std::size_t>(k - 1), 1e-6, 1.0 - 1e-6,
                                        objective, de_params, seed, hint);

  std::vector<double> bounds = res.best;
  std::sort(bounds.begin(), bounds.end());

  RatingScale scale;
  scale.labels = default_labels(k);
  scale.boundaries = bounds;
  scale.min_share = config.min_share;
  scale.seed = seed;
  scale.objective = res.best_value;
  scale.class_pd.assign(static_cast<std::size_t>(k), 0.0);
  scale.class_counts.assign(static_cast<std::size_t>(k), 0);
  for (double p : pds) {
    const std::size_t c = scale.class_of(p);
    scale.class_pd[c] += p;
    ++scale.class_counts[c];
  }
  for (std::size_t c = 0; c < scale.class_pd.size(); ++c)
    if (scale.class_counts[c] > 0) scale.class_pd[c] /= double(scale.class_counts[c]);

  // Feasibility of the returned optimum.
  for (std::size_t c = 0; c < scale.class_counts.size(); ++c) {
    if (double(scale.class_counts[c]) < min_count)
      throw std::runtime_error("de_bin: no feasible scale found (class " + scale.labels[c] +
                               " holds " + std::to_string(scale.class_counts[c]) +
                               " samples, best objective " + std::to_string(res.best_value) + ")");
  }
  for (std::size_t i = 1; i < bounds.size(); ++i)
    if (!(bounds[i] - bounds[i - 1] > 1e-12))
      throw std::runtime_error("de_bin: no feasible scale found (degenerate boundaries)");
  return scale;
}

struct ValidatePolicy {
  double alpha = 0.05;
  double k_y = 0.84;
  double k_0 = 1.44;
  std::size_t reporting_floor = 30;  // below this the binomial column reads "-"
};

inline std::vector<ClassValidation> validate_scale(const RatingScale& scale,
                                                   const std::vector<double>& oot_pds,
                                                   const std::vector<int>& oot_targets,
                                                   const ValidatePolicy& policy = {}) {
  if (oot_pds.empty()) throw std::invalid_argument("validate_scale: empty out-of-time sample");
  if (oot_pds.size() != oot_targets.size())
    throw std::invalid_argument("validate_scale: length mismatch");
  const std::size_t k = scale.n_classes();
  std::vector<std::size_t> count(k, 0), defaults(k, 0);
  for (std::size_t i = 0; i < oot_pds.size(); ++i) {
    const std::size_t c = scale.class_of(oot_pds[i]);
    ++count[c];
    defaults[c] += (oot_targets[i] != 0);
  }
  std::vector<ClassValidation> out(k);
  for (std::size_t c = 0; c < k; ++c) {
    ClassValidation& v = out[c];
    v.label = scale.labels[c];
    v.class_pd = scale.class_pd[c];
    v.count = count[c];
    v.defaults = defaults[c];
    v.observed_rate = count[c] > 0 ? double(defaults[c]) / double(count[c]) : 0.0;
    if (count[c] == 0) {
      v.binomial_applicable = false;
      v.light = TrafficLight::Green;
      continue;
    }
    v.light = traffic_light(v.observed_rate, v.class_pd, static_cast<long>(v.count),
                            policy.k_y, policy.k_0);
    if (count[c] < policy.reporting_floor) {
      v.binomial_applicable = false;
    } else {
      const BinomialResult b = binomial_test(static_cast<long>(defaults[c]),
                                             static_cast<long>(count[c]), v.class_pd,
                                             policy.alpha);
      v.binomial_p = b.p_value;
      v.binomial_pass = b.pass;
    }
  }
  return out;
}

inline nlohmann::json to_json(const RatingScale& scale) {
  return {{"format", "ratemill-scale-v1"},
          {"labels", scale.labels},
          {"boundaries", scale.boundaries},
          {"class_pd", scale.class_pd},
          {"class_counts", scale.class_counts},
          {"objective", scale.objective},
          {"min_share", scale.min_share},
          {"seed", scale.seed}};
}

inline RatingScale scale_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "ratemill-scale-v1")
    throw std::runtime_error("unrecognized scale format");
  RatingScale s;
  s.labels = j.at("labels").get<std::vector<std::string>>();
  s.boundaries = j.at("boundaries").get<std::vector<double>>();
  s.class_pd = j.at("class_pd").get<std::vector<double>>();
  s.class_counts = j.at("class_counts").get<std::vector<std::size_t>>();
  s.objective = j.value("objective", 0.0);
  s.min_share = j.value("min_share", 0.005);
  s.seed = j.value("seed", std::uint64_t{0});
  return s;
}

}  // namespace ratemill::rating
