#pragma once

// Glue shared by the command-line tool and the acceptance suite: feature
// matrix and score CSV round trips, the paired-feature test battery, and the
// backtesting harness that replays the trained pipeline on register-mapped
// snapshots against realized statuses.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "ratemill/calibration.hpp"
#include "ratemill/csv.hpp"
#include "ratemill/dataset.hpp"
#include "ratemill/features.hpp"
#include "ratemill/gbdt.hpp"
#include "ratemill/metrics.hpp"
#include "ratemill/stats.hpp"

#include "json.hpp"

namespace ratemill::pipeline {

// ---------------------------------------------------------------------------
// Matrix and score files

struct MatrixBundle {
  FeatureMatrix matrix;
  std::vector<std::string> company_ids;
  std::vector<int> vintage_years;
};

inline MatrixBundle build_bundle(const std::vector<data::LabeledRecord>& records,
                                 const features::FeaturePipeline& pipeline) {
  MatrixBundle b;
  b.matrix = pipeline.transform(records);
  b.company_ids.reserve(records.size());
  b.vintage_years.reserve(records.size());
  for (const auto& r : records) {
    b.company_ids.push_back(r.snapshot.company_id);
    b.vintage_years.push_back(r.snapshot.reference_date.year);
  }
  return b;
}

inline void write_matrix_csv(const std::string& path, const MatrixBundle& b) {
  CsvWriter w(path);
  std::vector<std::string> header = {"company_id", "vintage", "target"};
  header.insert(header.end(), b.matrix.column_names.begin(), b.matrix.column_names.end());
  w.write_row(header);
  std::vector<std::string> row;
  for (std::size_t r = 0; r < b.matrix.n_rows; ++r) {
    row.clear();
    row.push_back(b.company_ids[r]);
    row.push_back(std::to_string(b.vintage_years[r]));
    row.push_back(std::to_string(b.matrix.target.empty() ? 0 : b.matrix.target[r]));
    for (std::size_t c = 0; c < b.matrix.n_cols; ++c)
      row.push_back(format_double(b.matrix.at(r, c)));
    w.write_row(row);
  }
}

inline MatrixBundle read_matrix_csv(const std::string& path) {
  MatrixBundle b;
  std::vector<std::string> header;
  bool first = true;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> feature_names;
  for_each_csv_row(path, header, [&](const std::vector<std::string>& f) {
    if (first) {
      if (header.size() < 4 || header[0] != "company_id" || header[1] != "vintage" ||
          header[2] != "target")
        throw std::runtime_error("matrix csv: unexpected header in " + path);
      feature_names.assign(header.begin() + 3, header.end());
      first = false;
    }
    b.company_ids.push_back(f[0]);
    b.vintage_years.push_back(static_cast<int>(parse_long(f[1])));
    b.matrix.target.push_back(static_cast<int>(parse_long(f[2])));
    std::vector<double> vals(f.size() - 3);
    for (std::size_t c = 3; c < f.size(); ++c) vals[c - 3] = parse_double(f[c]);
    rows.push_back(std::move(vals));
  });
  if (rows.empty()) throw std::runtime_error("matrix csv: no rows in " + path);
  b.matrix.column_names = feature_names;
  b.matrix.groups = feature_names;
  b.matrix.n_rows = rows.size();
  b.matrix.n_cols = feature_names.size();
  b.matrix.values.resize(b.matrix.n_rows * b.matrix.n_cols);
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy(rows[r].begin(), rows[r].end(),
              b.matrix.values.begin() + static_cast<std::ptrdiff_t>(r * b.matrix.n_cols));
  return b;
}

struct ScoreTable {
  std::vector<std::string> company_ids;
  std::vector<double> score;  // raw classifier output
  std::vector<double> pd;     // calibrated probability (may equal score)
  std::vector<int> target;
};

inline void write_scores_csv(const std::string& path, const ScoreTable& t) {
  CsvWriter w(path);
  w.write_row({"company_id", "score", "pd", "target"});
  for (std::size_t i = 0; i < t.company_ids.size(); ++i)
    w.write_row({t.company_ids[i], format_double(t.score[i]), format_double(t.pd[i]),
                 std::to_string(t.target[i])});
}

inline ScoreTable read_scores_csv(const std::string& path) {
  ScoreTable t;
  std::vector<std::string> header;
  int ci = -1, si = -1, pi = -1, ti = -1;
  for_each_csv_row(path, header, [&](const std::vector<std::string>& f) {
    if (ci < 0) {
      for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "company_id") ci = static_cast<int>(i);
        if (header[i] == "score") si = static_cast<int>(i);
        if (header[i] == "pd") pi = static_cast<int>(i);
        if (header[i] == "target") ti = static_cast<int>(i);
      }
      if (ci < 0 || si < 0 || pi < 0 || ti < 0)
        throw std::runtime_error("scores csv: missing columns in " + path);
    }
    t.company_ids.push_back(f[static_cast<std::size_t>(ci)]);
    t.score.push_back(parse_double(f[static_cast<std::size_t>(si)]));
    t.pd.push_back(parse_double(f[static_cast<std::size_t>(pi)]));
    t.target.push_back(static_cast<int>(parse_long(f[static_cast<std::size_t>(ti)])));
  });
  return t;
}

// ---------------------------------------------------------------------------
// Mapping-validation battery

enum class BatteryTest { Wilcoxon, McNemar, Spearman, Kendall };

struct BatteryEntry {
  std::string feature;
  BatteryTest test = BatteryTest::Wilcoxon;
  stats::Alternative alternative = stats::Alternative::Greater;
  bool as_flag = false;  // compare presence flags instead of raw counts
};

inline std::vector<BatteryEntry> default_battery() {
  return {
      {"nrt_contracts_12m", BatteryTest::McNemar, stats::Alternative::TwoSided, true},
      {"contracts_3m", BatteryTest::McNemar, stats::Alternative::TwoSided, true},
      {"worst_payment_delay_6m", BatteryTest::Wilcoxon, stats::Alternative::Greater, false},
      {"past_due_0_contracts", BatteryTest::McNemar, stats::Alternative::TwoSided, true},
      {"nrt_contracts", BatteryTest::McNemar, stats::Alternative::TwoSided, true},
      {"rt_balance", BatteryTest::Wilcoxon, stats::Alternative::Greater, false},
      {"nrt_balance", BatteryTest::Wilcoxon, stats::Alternative::Greater, false},
      {"max_past_due_days_6m", BatteryTest::Wilcoxon, stats::Alternative::Greater, false},
  };
}

inline BatteryTest battery_test_from(const std::string& s) {
  if (s == "wilcoxon") return BatteryTest::Wilcoxon;
  if (s == "mcnemar") return BatteryTest::McNemar;
  if (s == "spearman") return BatteryTest::Spearman;
  if (s == "kendall") return BatteryTest::Kendall;
  throw std::runtime_error("unknown battery test '" + s + "'");
}

inline const char* to_string(BatteryTest t) {
  switch (t) {
    case BatteryTest::Wilcoxon: return "wilcoxon";
    case BatteryTest::McNemar: return "mcnemar";
    case BatteryTest::Spearman: return "spearman";
    case BatteryTest::Kendall: return "kendall";
  }
  return "?";
}

inline std::vector<BatteryEntry> battery_from_json(const nlohmann::json& j) {
  std::vector<BatteryEntry> out;
  for (const auto& e : j.at("tests")) {
    BatteryEntry be;
    be.feature = e.at("feature").get<std::string>();
    be.test = battery_test_from(e.at("test").get<std::string>());
    const std::string alt = e.value("alternative", "greater");
    be.alternative = alt == "greater" ? stats::Alternative::Greater
                     : alt == "less" ? stats::Alternative::Less
                                     : stats::Alternative::TwoSided;
    be.as_flag = e.value("as_flag", false);
    out.push_back(be);
  }
  return out;
}

inline nlohmann::json battery_to_json(const std::vector<BatteryEntry>& battery, double alpha) {
  nlohmann::json tests = nlohmann::json::array();
  for (const auto& e : battery)
    tests.push_back({{"feature", e.feature},
                     {"test", to_string(e.test)},
                     {"alternative", e.alternative == stats::Alternative::Greater
                                         ? "greater"
                                         : (e.alternative == stats::Alternative::Less
                                                ? "less"
                                                : "two_sided")},
                     {"as_flag", e.as_flag}});
  return {{"alpha", alpha}, {"tests", tests}};
}

// Battery feature extraction from a snapshot.
inline double battery_value(const data::CompanySnapshot& s, const std::string& feature,
                            bool as_flag) {
  double v;
  if (feature == "rt_balance") v = s.rt_mortgages_balance + s.rt_non_mortgages_balance;
  else if (feature == "nrt_balance") v = s.nrt_balance;
  else if (feature == "nrt_used") v = s.nrt_used;
  else if (feature == "worst_payment_delay_6m") v = double(s.worst_payment_delay_6m);
  else if (feature == "max_past_due_days_6m") v = double(s.max_past_due_days_6m);
  else if (feature == "nrt_contracts_12m") v = double(s.nrt_contracts_12m);
  else if (feature == "contracts_3m") v = double(s.contracts_3m);
  else if (feature == "contracts_4_12m") v = double(s.contracts_4_12m);
  else if (feature == "past_due_0_contracts") v = double(s.past_due_0_contracts);
  else if (feature == "nrt_contracts") v = double(s.nrt_contracts);
  else throw std::runtime_error("battery: unknown feature '" + feature + "'");
  return as_flag ? (v >= 1.0 ? 1.0 : 0.0) : v;
}

struct PairRow {
  std::string company_id;
  std::string feature;
  double cr_value = 0.0;
  double bureau_value = 0.0;
};

// Long-format pairs joined by company id over the battery features.
inline std::vector<PairRow> make_pairs(const std::vector<data::CompanySnapshot>& mapped,
                                       const std::vector<data::CompanySnapshot>& bureau,
                                       const std::vector<BatteryEntry>& battery) {
  std::unordered_map<std::string, const data::CompanySnapshot*> bureau_by_id;
  for (const auto& s : bureau) bureau_by_id[s.company_id] = &s;
  std::vector<PairRow> out;
  for (const auto& m : mapped) {
    const auto it = bureau_by_id.find(m.company_id);
    if (it == bureau_by_id.end()) continue;
    for (const auto& e : battery) {
      PairRow row;
      row.company_id = m.company_id;
      row.feature = e.feature;
      row.cr_value = battery_value(m, e.feature, e.as_flag);
      row.bureau_value = battery_value(*it->second, e.feature, e.as_flag);
      out.push_back(row);
    }
  }
  return out;
}

inline void write_pairs_csv(const std::string& path, const std::vector<PairRow>& pairs) {
  CsvWriter w(path);
  w.write_row({"company_id", "feature", "cr_value", "bureau_value"});
  for (const auto& p : pairs)
    w.write_row({p.company_id, p.feature, format_double(p.cr_value),
                 format_double(p.bureau_value)});
}

inline std::vector<PairRow> read_pairs_csv(const std::string& path) {
  std::vector<PairRow> out;
  std::vector<std::string> header;
  int ci = -1, fi = -1, xi = -1, yi = -1;
  for_each_csv_row(path, header, [&](const std::vector<std::string>& f) {
    if (ci < 0) {
      for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "company_id") ci = static_cast<int>(i);
        if (header[i] == "feature") fi = static_cast<int>(i);
        if (header[i] == "cr_value") xi = static_cast<int>(i);
        if (header[i] == "bureau_value") yi = static_cast<int>(i);
      }
      if (ci < 0 || fi < 0 || xi < 0 || yi < 0)
        throw std::runtime_error("pairs csv: missing columns in " + path);
    }
    out.push_back({f[static_cast<std::size_t>(ci)], f[static_cast<std::size_t>(fi)],
                   parse_double(f[static_cast<std::size_t>(xi)]),
                   parse_double(f[static_cast<std::size_t>(yi)])});
  });
  return out;
}

// Runs the configured test per feature and applies the FDR adjustment across
// the whole battery.
inline std::vector<stats::TestReport> run_battery(const std::vector<PairRow>& pairs,
                                                  const std::vector<BatteryEntry>& battery,
                                                  double alpha = 0.05) {
  std::vector<stats::TestReport> reports;
  for (const auto& e : battery) {
    std::vector<double> cr, bureau;
    for (const auto& p : pairs) {
      if (p.feature != e.feature) continue;
      cr.push_back(p.cr_value);
      bureau.push_back(p.bureau_value);
    }
    if (cr.empty()) throw std::runtime_error("battery: no pairs for feature " + e.feature);
    stats::TestReport r;
    switch (e.test) {
      case BatteryTest::Wilcoxon:
        r = stats::wilcoxon_one_sided(cr, bureau);
        break;
      case BatteryTest::McNemar: {
        std::vector<int> x(cr.size()), y(cr.size());
        for (std::size_t i = 0; i < cr.size(); ++i) {
          x[i] = cr[i] != 0.0;
          y[i] = bureau[i] != 0.0;
        }
        r = stats::mcnemar(x, y);
        break;
      }
      case BatteryTest::Spearman:
        r = stats::spearman_rho(cr, bureau, e.alternative);
        break;
      case BatteryTest::Kendall:
        r = stats::kendall_tau(cr, bureau, e.alternative);
        break;
    }
    r.name = e.feature;
    reports.push_back(r);
  }
  stats::adjust_battery(reports, alpha);
  return reports;
}

inline void write_battery_report(const std::string& path,
                                 const std::vector<stats::TestReport>& reports) {
  CsvWriter w(path);
  w.write_row({"feature", "method", "statistic", "p_value", "adjusted_p_value", "result"});
  for (const auto& r : reports)
    w.write_row({r.name, stats::to_string(r.method), format_double(r.statistic),
                 format_double(r.p_raw), format_double(r.p_adjusted),
                 r.reject_null ? "Reject Null" : "Fail to Reject"});
}

// ---------------------------------------------------------------------------
// Backtesting

struct BacktestResult {
  MetricReport metrics;
  std::size_t n_companies = 0;
  std::size_t n_defaults = 0;
  std::vector<std::string> excluded;  // companies without a full horizon
  ScoreTable scores;
};

inline BacktestResult backtest(const gbdt::TreeEnsembleModel& model,
                               const calibration::CalibrationMap& cal,
                               const features::FeaturePipeline& pipeline,
                               const std::vector<data::CompanySnapshot>& snapshots,
                               const std::unordered_map<std::string, std::vector<data::HorizonMonth>>& statuses,
                               double beta, unsigned threads = 1) {
  std::vector<data::LabeledRecord> records;
  BacktestResult result;
  for (const auto& s : snapshots) {
    const auto it = statuses.find(s.company_id);
    data::LabeledRecord r;
    r.snapshot = s;
    r.horizon_end = s.reference_date.plus_months(12);
    if (it == statuses.end()) {
      result.excluded.push_back(s.company_id);
      continue;
    }
    try {
      r.target = data::derive_target(s.reference_date, it->second);
    } catch (const std::exception&) {
      result.excluded.push_back(s.company_id);
      continue;
    }
    records.push_back(std::move(r));
  }
  if (!result.excluded.empty()) {
    std::string names;
    for (std::size_t i = 0; i < std::min<std::size_t>(result.excluded.size(), 5); ++i)
      names += (i ? ", " : "") + result.excluded[i];
    throw std::runtime_error("backtest: horizon gaps for " +
                             std::to_string(result.excluded.size()) + " companies (" + names +
                             (result.excluded.size() > 5 ? ", ..." : "") + ")");
  }
  if (records.empty()) throw std::runtime_error("backtest: no scoreable companies");

  const FeatureMatrix m = pipeline.transform(records);
  const std::vector<double> raw = gbdt::predict_proba(model, m, threads);
  result.scores.score = raw;
  result.scores.pd = cal.apply(raw);
  result.n_companies = records.size();
  for (const auto& r : records) {
    result.scores.company_ids.push_back(r.snapshot.company_id);
    result.scores.target.push_back(r.target);
    result.n_defaults += (r.target != 0);
  }
  result.metrics = evaluate_scores(result.scores.pd, result.scores.target, 0.5, beta);
  return result;
}

}  // namespace ratemill::pipeline
