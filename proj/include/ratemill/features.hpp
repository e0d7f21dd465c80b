#pragma once

// Feature pipeline: KPI generation from snapshots, sparse-column removal,
// James-Stein target encoding for categoricals, VIF collinearity pruning and
// shadow-feature selection (permuted copies of every column; keep groups
// whose summed SHAP importance beats the best shadow in a majority of
// rounds). Embedding dimensions share a group and move as a unit.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "ratemill/dataset.hpp"
#include "ratemill/gbdt.hpp"
#include "ratemill/matrix.hpp"
#include "ratemill/rng.hpp"
#include "ratemill/shap.hpp"

#include "json.hpp"

namespace ratemill::features {

// ---------------------------------------------------------------------------
// KPI generation

struct KpiConfig {
  double ratio_cap = 1e6;
  std::vector<double> nrt_past_due_bins = {0, 5, 30, 60, 90, 120, 180};
};

// 0/0 -> 0; x/0 -> cap for x > 0; everything winsorized at the cap.
inline double capped_ratio(double num, double den, double cap) {
  if (den == 0.0) return num == 0.0 ? 0.0 : cap;
  return std::min(num / den, cap);
}

inline int bucket_of(double value, const std::vector<double>& edges) {
  int b = 0;
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (value >= edges[i]) b = static_cast<int>(i);
  return b;
}

struct KpiValues {
  double rt_balance = 0.0;
  double nrt_rt_ratio = 0.0;
  double nrt_used_rt_ratio = 0.0;
  double draw_ratio_nrt = 0.0;
  int npl_present = 0;
  int closed_past_due_0 = 0;
  int closed_nrt = 0;
  int past_due_0 = 0;
  int nrt_present = 0;
  int nrt_past_due_bucket = 0;
};

inline KpiValues make_kpis(const data::CompanySnapshot& s, const KpiConfig& config = {}) {
  KpiValues k;
  k.rt_balance = s.rt_mortgages_balance + s.rt_non_mortgages_balance;
  k.nrt_rt_ratio = capped_ratio(s.nrt_balance, k.rt_balance, config.ratio_cap);
  k.nrt_used_rt_ratio = capped_ratio(s.nrt_used, k.rt_balance, config.ratio_cap);
  k.draw_ratio_nrt = capped_ratio(s.nrt_used, s.nrt_balance, config.ratio_cap);
  k.npl_present = s.def_no >= 1;
  k.closed_past_due_0 = s.past_due_0_contracts_12m >= 1;
  k.closed_nrt = s.nrt_contracts_12m >= 1;
  k.past_due_0 = s.past_due_0_contracts >= 1;
  k.nrt_present = s.nrt_contracts >= 1;
  k.nrt_past_due_bucket = bucket_of(double(s.max_past_due_days_6m), config.nrt_past_due_bins);
  return k;
}

// ---------------------------------------------------------------------------
// Sparse-column removal

struct SparseDropResult {
  FeatureMatrix matrix;
  std::vector<std::string> dropped;
};

// Strict inequality: a column at exactly the threshold stays.
inline SparseDropResult drop_sparse(const FeatureMatrix& m, double threshold = 0.20) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("drop_sparse: threshold outside (0,1)");
  std::vector<std::string> keep, dropped;
  for (std::size_t c = 0; c < m.n_cols; ++c) {
    std::size_t missing = 0;
    for (std::size_t r = 0; r < m.n_rows; ++r) missing += std::isnan(m.at(r, c));
    const double frac = m.n_rows ? double(missing) / double(m.n_rows) : 0.0;
    (frac > threshold ? dropped : keep).push_back(m.column_names[c]);
  }
  if (keep.empty()) throw std::runtime_error("drop_sparse: empty feature matrix");
  return SparseDropResult{select_columns(m, keep), dropped};
}

// ---------------------------------------------------------------------------
// James-Stein target encoding

// B_j = (s^2 / n_j) / (s^2 / n_j + tau^2).
inline double james_stein_shrinkage(double s2, double n_j, double tau2) {
  const double var_mean = s2 / n_j;
  const double denom = var_mean + tau2;
  if (denom <= 0.0) return 0.0;
  return std::clamp(var_mean / denom, 0.0, 1.0);
}

struct JamesSteinEncoder {
  double global_mean = 0.0;
  std::map<std::string, double> encoded;
  std::map<std::string, double> shrinkage;

  // Unseen categories map to the global mean.
  double transform(const std::string& category) const {
    const auto it = encoded.find(category);
    return it == encoded.end() ? global_mean : it->second;
  }
};

constexpr double kTauFloor = 1e-12;  // guards near-identical category means

inline JamesSteinEncoder james_stein_encode(const std::vector<std::string>& column,
                                            const std::vector<double>& target) {
  if (column.size() != target.size())
    throw std::invalid_argument("james_stein_encode: length mismatch");
  if (column.empty()) throw std::invalid_argument("james_stein_encode: empty input");

  std::map<std::string, std::pair<double, std::size_t>> sums;  // category -> (sum, n)
  double total = 0.0;
  for (std::size_t i = 0; i < column.size(); ++i) {
    auto& s = sums[column[i]];
    s.first += target[i];
    ++s.second;
    total += target[i];
  }
  if (sums.size() < 2)
    throw std::invalid_argument("james_stein_encode: need at least 2 categories");

  JamesSteinEncoder enc;
  enc.global_mean = total / double(column.size());

  std::map<std::string, double> means;
  double mean_of_means = 0.0;
  for (const auto& [cat, s] : sums) {
    means[cat] = s.first / double(s.second);
    mean_of_means += means[cat];
  }
  mean_of_means /= double(sums.size());

  // Pooled within-category variance (N - k denominator).
  double within_ss = 0.0;
  for (std::size_t i = 0; i < column.size(); ++i) {
    const double d = target[i] - means[column[i]];
    within_ss += d * d;
  }
  const std::size_t dof = column.size() > sums.size() ? column.size() - sums.size() : 1;
  const double s2 = within_ss / double(dof);

  // Between-category variance of the category means.
  double tau2 = 0.0;
  for (const auto& [cat, mean] : means) {
    const double d = mean - mean_of_means;
    tau2 += d * d;
  }
  tau2 = std::max(tau2 / double(sums.size()), kTauFloor);

  for (const auto& [cat, s] : sums) {
    const double b = james_stein_shrinkage(s2, double(s.second), tau2);
    enc.shrinkage[cat] = b;
    enc.encoded[cat] = (1.0 - b) * means[cat] + b * enc.global_mean;
  }
  return enc;
}

inline nlohmann::json to_json(const JamesSteinEncoder& enc) {
  return {{"global_mean", enc.global_mean},
          {"encoded", enc.encoded},
          {"shrinkage", enc.shrinkage}};
}

inline JamesSteinEncoder encoder_from_json(const nlohmann::json& j) {
  JamesSteinEncoder enc;
  enc.global_mean = j.at("global_mean").get<double>();
  enc.encoded = j.at("encoded").get<std::map<std::string, double>>();
  enc.shrinkage = j.value("shrinkage", std::map<std::string, double>{});
  return enc;
}

// ---------------------------------------------------------------------------
// VIF pruning

// VIF of each column: regress on the remaining columns plus an intercept.
// Missing values are mean-imputed for the regression only.
inline std::vector<double> compute_vif(const FeatureMatrix& m) {
  const std::size_t n = m.n_rows, p = m.n_cols;
  if (n <= p) throw std::invalid_argument("compute_vif: need more rows than columns");
  Eigen::MatrixXd x(n, p);
  for (std::size_t c = 0; c < p; ++c) {
    double sum = 0.0;
    std::size_t cnt = 0;
    for (std::size_t r = 0; r < n; ++r) {
      const double v = m.at(r, c);
      if (!std::isnan(v)) {
        sum += v;
        ++cnt;
      }
    }
    const double mean = cnt ? sum / double(cnt) : 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double v = m.at(r, c);
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = std::isnan(v) ? mean : v;
    }
  }

  std::vector<double> vif(p, 1.0);
  constexpr double kVifCap = 1e12;
  for (std::size_t c = 0; c < p; ++c) {
    Eigen::MatrixXd design(n, p);  // others + intercept
    Eigen::Index k = 0;
    for (std::size_t j = 0; j < p; ++j) {
      if (j == c) continue;
      design.col(k++) = x.col(static_cast<Eigen::Index>(j));
    }
    design.col(k).setOnes();
    const Eigen::VectorXd yv = x.col(static_cast<Eigen::Index>(c));
    const Eigen::VectorXd beta =
        (design.transpose() * design)
            .ldlt()
            .solve(design.transpose() * yv);
    const double ssr = (yv - design * beta).squaredNorm();
    const double mean = yv.mean();
    const double sst = (yv.array() - mean).square().sum();
    if (sst <= 0.0) {
      vif[c] = 1.0;  // constant column carries no collinearity signal
      continue;
    }
    const double r2 = 1.0 - ssr / sst;
    vif[c] = r2 >= 1.0 - 1.0 / kVifCap ? kVifCap : 1.0 / (1.0 - r2);
  }
  return vif;
}

struct VifResult {
  FeatureMatrix matrix;
  std::vector<std::string> dropped;
};

// Iteratively drops the highest-VIF column outside the keep list until all
// VIFs sit at or below the cutoff. Ties break on column order. Keep-listed
// columns override the cutoff; a perfectly collinear keep-listed column is a
// configuration error.
inline VifResult vif_prune(const FeatureMatrix& input, double max_vif = 10.0,
                           const std::set<std::string>& keep_list = {}) {
  constexpr double kPerfect = 1e10;
  VifResult result;
  result.matrix = input;
  while (true) {
    const std::vector<double> vif = compute_vif(result.matrix);
    int worst = -1;
    for (std::size_t c = 0; c < vif.size(); ++c) {
      if (vif[c] > max_vif) {
        if (keep_list.count(result.matrix.column_names[c])) {
          if (vif[c] >= kPerfect)
            throw std::runtime_error("vif_prune: keep-list conflict, perfectly collinear column " +
                                     result.matrix.column_names[c]);
          continue;
        }
        if (worst < 0 || vif[c] > vif[static_cast<std::size_t>(worst)]) worst = static_cast<int>(c);
      }
    }
    if (worst < 0) return result;
    const std::string victim = result.matrix.column_names[static_cast<std::size_t>(worst)];
    result.dropped.push_back(victim);
    std::vector<std::string> keep;
    for (const auto& name : result.matrix.column_names)
      if (name != victim) keep.push_back(name);
    if (keep.empty()) throw std::runtime_error("vif_prune: all columns dropped");
    result.matrix = select_columns(result.matrix, keep);
  }
}

// ---------------------------------------------------------------------------
// Shadow-feature selection

struct ShadowConfig {
  int rounds = 5;
  std::size_t sample_cap = 20000;
  gbdt::TrainParams train{.rounds = 60, .learning_rate = 0.1, .max_leaves = 31};
  unsigned threads = 1;
};

struct ShadowSelection {
  std::vector<std::string> selected_columns;  // original order
  std::map<std::string, int> group_votes;
  std::vector<std::string> selected_groups;
};

inline ShadowSelection shadow_select(const FeatureMatrix& m, const ShadowConfig& config,
                                     std::uint64_t seed) {
  if (config.rounds < 1) throw std::invalid_argument("shadow_select: rounds < 1");
  m.validate();
  if (m.target.empty()) throw std::invalid_argument("shadow_select: matrix has no target");

  std::vector<std::string> group_order;  // first-appearance order
  for (const auto& g : m.groups)
    if (std::find(group_order.begin(), group_order.end(), g) == group_order.end())
      group_order.push_back(g);

  std::map<std::string, int> votes;
  for (const auto& g : group_order) votes[g] = 0;

  for (int round = 0; round < config.rounds; ++round) {
    Rng rng = Rng::substream(seed, "shadow-round", static_cast<std::uint64_t>(round));

    // Deterministic row subsample.
    std::vector<std::size_t> rows(m.n_rows);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    if (m.n_rows > config.sample_cap) {
      rng.shuffle(rows);
      rows.resize(config.sample_cap);
      std::sort(rows.begin(), rows.end());
    }
    const std::size_t n = rows.size();

    // Augmented matrix: originals plus a permuted shadow of every column.
    FeatureMatrix aug;
    aug.n_rows = n;
    aug.n_cols = 2 * m.n_cols;
    aug.values.resize(aug.n_rows * aug.n_cols);
    aug.target.resize(n);
    for (std::size_t c = 0; c < m.n_cols; ++c) {
      aug.column_names.push_back(m.column_names[c]);
      aug.groups.push_back(m.groups[c]);
    }
    for (std::size_t c = 0; c < m.n_cols; ++c) {
      aug.column_names.push_back("__shadow_" + m.column_names[c]);
      aug.groups.push_back("__shadow_" + m.groups[c]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      aug.target[i] = m.target[rows[i]];
      for (std::size_t c = 0; c < m.n_cols; ++c) aug.at(i, c) = m.at(rows[i], c);
    }
    std::vector<std::size_t> perm(n);
    for (std::size_t c = 0; c < m.n_cols; ++c) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      rng.shuffle(perm);
      for (std::size_t i = 0; i < n; ++i)
        aug.at(i, m.n_cols + c) = m.at(rows[perm[i]], c);
    }

    // 75/25 train/validation; importance is measured on the held-out part.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    const std::size_t n_train = n - n / 4;

    FeatureMatrix fit_m, val_m;
    fit_m.column_names = val_m.column_names = aug.column_names;
    fit_m.groups = val_m.groups = aug.groups;
    fit_m.n_cols = val_m.n_cols = aug.n_cols;
    fit_m.n_rows = n_train;
    val_m.n_rows = n - n_train;
    fit_m.values.resize(fit_m.n_rows * fit_m.n_cols);
    val_m.values.resize(val_m.n_rows * val_m.n_cols);
    fit_m.target.resize(fit_m.n_rows);
    val_m.target.resize(val_m.n_rows);
    for (std::size_t i = 0; i < n; ++i) {
      FeatureMatrix& dst = i < n_train ? fit_m : val_m;
      const std::size_t di = i < n_train ? i : i - n_train;
      dst.target[di] = aug.target[order[i]];
      std::copy(aug.row(order[i]), aug.row(order[i]) + aug.n_cols,
                dst.values.begin() + static_cast<std::ptrdiff_t>(di * aug.n_cols));
    }

    gbdt::TrainParams params = config.train;
    params.threads = config.threads;
    const auto model = gbdt::fit(fit_m, params, derive_seed(seed, stream_tag("shadow-fit"),
                                                            static_cast<std::uint64_t>(round)));
    const auto summary = shap::summary_stats(model, val_m, config.threads);

    std::map<std::string, double> group_importance;
    for (std::size_t c = 0; c < aug.n_cols; ++c)
      group_importance[aug.groups[c]] += summary.mean_abs[c];

    double shadow_max = 0.0;
    for (const auto& [g, imp] : group_importance)
      if (g.rfind("__shadow_", 0) == 0) shadow_max = std::max(shadow_max, imp);

    for (const auto& g : group_order)
      if (group_importance[g] > shadow_max) ++votes[g];
  }

  ShadowSelection sel;
  sel.group_votes = votes;
  for (const auto& g : group_order)
    if (votes[g] * 2 > config.rounds) sel.selected_groups.push_back(g);
  for (std::size_t c = 0; c < m.n_cols; ++c)
    if (std::find(sel.selected_groups.begin(), sel.selected_groups.end(), m.groups[c]) !=
        sel.selected_groups.end())
      sel.selected_columns.push_back(m.column_names[c]);
  return sel;
}

// ---------------------------------------------------------------------------
// Pipeline: snapshots -> model-ready matrix

struct PipelineConfig {
  KpiConfig kpi;
  double sparse_threshold = 0.20;
  double max_vif = 10.0;
  std::vector<std::string> vif_keep = {"nrt_rt_ratio", "nrt_used_rt_ratio", "draw_ratio_nrt",
                                       "sector_1", "sector_2", "sector_3", "sector_4",
                                       "sector_5"};
  ShadowConfig shadow;
  bool run_shadow = true;
};

inline const char* kEmbeddingGroup = "nace_embedding";

struct FeaturePipeline {
  PipelineConfig config;
  JamesSteinEncoder legal_type_enc;
  JamesSteinEncoder special_status_enc;
  std::vector<std::string> final_columns;
  std::vector<std::string> dropped_sparse;
  std::vector<std::string> dropped_vif;
  std::map<std::string, int> shadow_votes;

  // Candidate matrix: the final behavioral feature list (flags, balances,
  // KPI ratios, encoded categoricals, embedding group).
  FeatureMatrix assemble(const std::vector<data::LabeledRecord>& records) const {
    std::vector<std::string> names = {
        "special_status", "npl_present",     "closed_past_due_0", "closed_nrt",
        "contracts_3m",   "contracts_4_12m", "worst_payment_delay_6m", "past_due_0",
        "nrt_present",    "nrt_balance",     "nrt_past_due",      "protest_present",
        "legal_type",     "rt_balance",      "nrt_rt_ratio",      "nrt_used_rt_ratio",
        "draw_ratio_nrt", "sector_1",        "sector_2",          "sector_3",
        "sector_4",       "sector_5"};
    FeatureMatrix m = make_matrix(std::move(names), records.size());
    for (std::size_t c = 0; c < m.n_cols; ++c)
      if (m.column_names[c].rfind("sector_", 0) == 0) m.groups[c] = kEmbeddingGroup;
    m.target.resize(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      const data::CompanySnapshot& s = records[i].snapshot;
      const KpiValues k = make_kpis(s, config.kpi);
      m.target[i] = records[i].target;
      double* row = m.values.data() + i * m.n_cols;
      row[0] = special_status_enc.transform(data::to_string(s.special_status));
      row[1] = k.npl_present;
      row[2] = k.closed_past_due_0;
      row[3] = k.closed_nrt;
      row[4] = s.contracts_3m >= 1;
      row[5] = s.contracts_4_12m >= 1;
      row[6] = double(s.worst_payment_delay_6m);
      row[7] = k.past_due_0;
      row[8] = k.nrt_present;
      row[9] = s.nrt_balance;
      row[10] = k.nrt_past_due_bucket;
      row[11] = s.protest_present;
      row[12] = legal_type_enc.transform(data::to_string(s.legal_type));
      row[13] = k.rt_balance;
      row[14] = k.nrt_rt_ratio;
      row[15] = k.nrt_used_rt_ratio;
      row[16] = k.draw_ratio_nrt;
      for (std::size_t d = 0; d < 5; ++d) row[17 + d] = s.sector_vector[d];
    }
    return m;
  }

  void fit(const std::vector<data::LabeledRecord>& train, std::uint64_t seed) {
    if (train.empty()) throw std::invalid_argument("feature pipeline: empty training data");
    std::vector<std::string> legal(train.size()), status(train.size());
    std::vector<double> target(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
      legal[i] = data::to_string(train[i].snapshot.legal_type);
      status[i] = data::to_string(train[i].snapshot.special_status);
      target[i] = double(train[i].target);
    }
    legal_type_enc = james_stein_encode(legal, target);
    special_status_enc = james_stein_encode(status, target);

    FeatureMatrix m = assemble(train);
    const SparseDropResult sparse = drop_sparse(m, config.sparse_threshold);
    dropped_sparse = sparse.dropped;

    std::set<std::string> keep(config.vif_keep.begin(), config.vif_keep.end());
    const VifResult vif = vif_prune(sparse.matrix, config.max_vif, keep);
    dropped_vif = vif.dropped;

    if (config.run_shadow) {
      const ShadowSelection sel = shadow_select(vif.matrix, config.shadow, seed);
      shadow_votes = sel.group_votes;
      final_columns = sel.selected_columns;
      if (final_columns.empty())
        throw std::runtime_error("feature pipeline: shadow selection kept no features");
    } else {
      final_columns = vif.matrix.column_names;
    }
  }

  FeatureMatrix transform(const std::vector<data::LabeledRecord>& records) const {
    if (final_columns.empty()) throw std::runtime_error("feature pipeline not fitted");
    return select_columns(assemble(records), final_columns);
  }
};

inline nlohmann::json to_json(const FeaturePipeline& p) {
  return {{"format", "ratemill-features-v1"},
          {"final_columns", p.final_columns},
          {"dropped_sparse", p.dropped_sparse},
          {"dropped_vif", p.dropped_vif},
          {"shadow_votes", p.shadow_votes},
          {"legal_type_encoder", to_json(p.legal_type_enc)},
          {"special_status_encoder", to_json(p.special_status_enc)},
          {"ratio_cap", p.config.kpi.ratio_cap},
          {"nrt_past_due_bins", p.config.kpi.nrt_past_due_bins},
          {"sparse_threshold", p.config.sparse_threshold},
          {"max_vif", p.config.max_vif}};
}

inline FeaturePipeline pipeline_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "ratemill-features-v1")
    throw std::runtime_error("unrecognized feature spec format");
  FeaturePipeline p;
  p.final_columns = j.at("final_columns").get<std::vector<std::string>>();
  p.dropped_sparse = j.value("dropped_sparse", std::vector<std::string>{});
  p.dropped_vif = j.value("dropped_vif", std::vector<std::string>{});
  p.shadow_votes = j.value("shadow_votes", std::map<std::string, int>{});
  p.legal_type_enc = encoder_from_json(j.at("legal_type_encoder"));
  p.special_status_enc = encoder_from_json(j.at("special_status_encoder"));
  p.config.kpi.ratio_cap = j.value("ratio_cap", 1e6);
  p.config.kpi.nrt_past_due_bins =
      j.value("nrt_past_due_bins", std::vector<double>{0, 5, 30, 60, 90, 120, 180});
  p.config.sparse_threshold = j.value("sparse_threshold", 0.20);
  p.config.max_vif = j.value("max_vif", 10.0);
  return p;
}

}  // namespace ratemill::features
