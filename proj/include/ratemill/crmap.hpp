#pragma once

// Central-Credit-Register bridge: credit-line records, status-code past-due
// aggregation, the absolute/relative materiality rule, and the mapping of a
// monthly line history into the behavioral snapshot schema (direct fields
// plus lookback proxies for closures and new contracts).

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ratemill/csv.hpp"
#include "ratemill/dataset.hpp"

namespace ratemill::crmap {

enum class Category {
  MaturityRisk,
  RevocableRisk,
  SelfLiquidating,
  Unsecured,
  Collateral,
  Derivative,
  Info,
};

inline const char* to_string(Category c) {
  switch (c) {
    case Category::MaturityRisk: return "maturity_risk";
    case Category::RevocableRisk: return "revocable_risk";
    case Category::SelfLiquidating: return "self_liquidating";
    case Category::Unsecured: return "unsecured";
    case Category::Collateral: return "collateral";
    case Category::Derivative: return "derivative";
    case Category::Info: return "info";
  }
  return "?";
}

inline Category category_from(std::string_view s) {
  if (s == "maturity_risk") return Category::MaturityRisk;
  if (s == "revocable_risk") return Category::RevocableRisk;
  if (s == "self_liquidating") return Category::SelfLiquidating;
  if (s == "unsecured") return Category::Unsecured;
  if (s == "collateral") return Category::Collateral;
  if (s == "derivative") return Category::Derivative;
  if (s == "info") return Category::Info;
  throw std::runtime_error("unknown credit-line category '" + std::string(s) + "'");
}

enum class OriginalDuration { Lt1y, Y1to5, Gt5y, NotApplicable };
enum class RemainingDuration { Lt1y, Gt1y, NotApplicable };

inline OriginalDuration original_duration_from(std::string_view s) {
  if (s == "lt1y") return OriginalDuration::Lt1y;
  if (s == "y1to5") return OriginalDuration::Y1to5;
  if (s == "gt5y") return OriginalDuration::Gt5y;
  if (s == "na" || s.empty()) return OriginalDuration::NotApplicable;
  throw std::runtime_error("unknown original duration '" + std::string(s) + "'");
}

inline RemainingDuration remaining_duration_from(std::string_view s) {
  if (s == "lt1y") return RemainingDuration::Lt1y;
  if (s == "gt1y") return RemainingDuration::Gt1y;
  if (s == "na" || s.empty()) return RemainingDuration::NotApplicable;
  throw std::runtime_error("unknown remaining duration '" + std::string(s) + "'");
}

struct CrCreditLine {
  std::string company_id;
  data::YearMonth reference_month;
  Category category = Category::MaturityRisk;
  int status_code = 0;
  double granted = 0.0;
  double used = 0.0;
  double past_due_amount = 0.0;
  OriginalDuration original_duration = OriginalDuration::NotApplicable;
  RemainingDuration remaining_duration = RemainingDuration::NotApplicable;

  void validate() const {
    if (granted < 0.0 || used < 0.0 || past_due_amount < 0.0)
      throw std::runtime_error("credit line " + company_id + ": negative amount");
    if (category == Category::RevocableRisk &&
        (original_duration != OriginalDuration::NotApplicable ||
         remaining_duration != RemainingDuration::NotApplicable))
      throw std::runtime_error("credit line " + company_id +
                               ": revocable lines carry no durations");
  }
};

struct CrMonthlyHistory {
  std::string company_id;
  std::vector<std::pair<data::YearMonth, std::vector<CrCreditLine>>> months;  // ascending
  std::set<std::string> phenomena;
};

// Status codes marking 180- and 90-day delinquency buckets.
inline const std::set<int>& past_due_180_statuses() {
  static const std::set<int> s = {827, 831, 125, 129, 133, 137};
  return s;
}

inline const std::set<int>& past_due_90_statuses() {
  static const std::set<int> s = {826, 830, 124, 128, 132, 136};
  return s;
}

// Phenomenon codes carried alongside the monthly history.
inline const char* kNplPhenomenon = "000551000";
inline const char* kInsolvencyPhenomenon = "000552000";
inline const char* kDisputePhenomenon = "000553000";

struct PastDueBalances {
  double pd_0 = 0.0;
  double pd_30 = 0.0;
  double pd_90 = 0.0;
  double pd_180 = 0.0;

  double total() const { return pd_0 + pd_30 + pd_90 + pd_180; }
};

// Buckets a single category's lines. Status-listed lines contribute their
// whole balance to the 180/90 buckets; remaining lines split into past-due
// amount (30 bucket) and the clean remainder.
inline PastDueBalances aggregate_past_due(const std::vector<CrCreditLine>& lines,
                                          Category category) {
  PastDueBalances out;
  double other_granted = 0.0;
  for (const CrCreditLine& line : lines) {
    if (line.category != category) continue;
    if (past_due_180_statuses().count(line.status_code)) {
      out.pd_180 += line.granted;
    } else if (past_due_90_statuses().count(line.status_code)) {
      out.pd_90 += line.granted;
    } else {
      other_granted += line.granted;
      out.pd_30 += line.past_due_amount;
    }
  }
  out.pd_0 = other_granted - out.pd_30;
  if (out.pd_0 < 0.0)
    throw std::runtime_error("aggregate_past_due: inconsistent amounts, past due exceeds balance");
  return out;
}

struct MaterialityThresholds {
  double absolute = 500.0;
  double relative = 0.01;
};

// Materially past due only when BOTH thresholds are met. A positive past due
// over a zero balance satisfies the relative condition by convention.
inline bool apply_materiality(double past_due, double total_balance,
                              const MaterialityThresholds& t = {}) {
  if (past_due < 0.0 || total_balance < 0.0)
    throw std::invalid_argument("apply_materiality: negative input");
  if (past_due < t.absolute) return false;
  if (total_balance == 0.0) return past_due > 0.0;
  return past_due / total_balance >= t.relative;
}

struct Lookups {
  std::unordered_map<std::string, bool> protest;
  std::unordered_map<std::string, data::LegalType> legal_type;
  std::unordered_map<std::string, std::array<double, 5>> nace;
};

namespace detail {

inline double category_granted(const std::vector<CrCreditLine>& lines, Category c) {
  double total = 0.0;
  for (const auto& l : lines)
    if (l.category == c) total += l.granted;
  return total;
}

inline double category_used(const std::vector<CrCreditLine>& lines, Category c) {
  double total = 0.0;
  for (const auto& l : lines)
    if (l.category == c) total += l.used;
  return total;
}

// Days bucket over a window of months for one category: worst of
// 180 / 90 / material-30 / 0.
inline long days_proxy(const std::vector<const std::vector<CrCreditLine>*>& window,
                       Category category, const MaterialityThresholds& thresholds) {
  long worst = 0;
  for (const auto* lines : window) {
    const PastDueBalances pd = aggregate_past_due(*lines, category);
    if (pd.pd_180 > 0.0) return 180;
    if (pd.pd_90 > 0.0) worst = std::max(worst, 90L);
    else if (apply_materiality(pd.pd_30, category_granted(*lines, category), thresholds))
      worst = std::max(worst, 30L);
  }
  return worst;
}

inline long installments_from_days(long days) {
  if (days >= 180) return 6;
  if (days >= 90) return 3;
  if (days >= 30) return 1;
  return 0;
}

}  // namespace detail

struct MapConfig {
  MaterialityThresholds materiality;
  int lookback_months = 13;  // reference month plus 12 of history
};

// Maps a company's monthly credit-line history into the snapshot schema.
// The latest month is the reference; earlier months feed the lookbacks.
inline data::CompanySnapshot map_to_features(const CrMonthlyHistory& history,
                                             const Lookups& lookups,
                                             const MapConfig& config = {}) {
  if (static_cast<int>(history.months.size()) < config.lookback_months)
    throw std::runtime_error(
        "map_to_features: insufficient history for " + history.company_id +
        " (need " + std::to_string(config.lookback_months) + " months for closed_nrt, "
        "closed_past_due_0, contracts_3m, contracts_4_12m lookbacks; got " +
        std::to_string(history.months.size()) + ")");
  for (std::size_t i = 1; i < history.months.size(); ++i)
    if (!(history.months[i - 1].first < history.months[i].first))
      throw std::runtime_error("map_to_features: months not strictly increasing for " +
                               history.company_id);
  for (const auto& [month, lines] : history.months)
    for (const auto& line : lines) line.validate();

  const auto& [ref_month, ref_lines] = history.months.back();
  const std::size_t n_months = history.months.size();

  data::CompanySnapshot s;
  s.company_id = history.company_id;
  s.reference_date = ref_month;

  // Direct group.
  s.nrt_balance = detail::category_granted(ref_lines, Category::RevocableRisk);
  s.nrt_used = detail::category_used(ref_lines, Category::RevocableRisk);
  s.nrt_contracts = s.nrt_balance > 0.0 ? 1 : 0;
  s.rt_mortgages_balance = 0.0;  // the register does not separate mortgages
  s.rt_non_mortgages_balance = detail::category_granted(ref_lines, Category::MaturityRisk);
  const PastDueBalances nrt_pd = aggregate_past_due(ref_lines, Category::RevocableRisk);
  s.nrt_past_due_balance = nrt_pd.pd_30 + nrt_pd.pd_90 + nrt_pd.pd_180;
  s.def_no = history.phenomena.count(kNplPhenomenon) ? 1 : 0;

  if (history.phenomena.count(kInsolvencyPhenomenon))
    s.special_status = data::SpecialStatus::Insolvency;
  else if (history.phenomena.count(kDisputePhenomenon))
    s.special_status = data::SpecialStatus::Dispute;
  else
    s.special_status = data::SpecialStatus::None;

  {
    const auto it = lookups.protest.find(history.company_id);
    s.protest_present = it != lookups.protest.end() && it->second;
  }
  {
    const auto it = lookups.legal_type.find(history.company_id);
    if (it == lookups.legal_type.end())
      throw std::runtime_error("map_to_features: no legal type for " + history.company_id);
    s.legal_type = it->second;
  }
  {
    const auto it = lookups.nace.find(history.company_id);
    if (it != lookups.nace.end()) s.sector_vector = it->second;
  }
  s.is_private_individual = false;

  // Past-due day proxies over the last 6 months.
  std::vector<const std::vector<CrCreditLine>*> last6;
  for (std::size_t i = n_months >= 6 ? n_months - 6 : 0; i < n_months; ++i)
    last6.push_back(&history.months[i].second);
  s.max_past_due_days_6m = detail::days_proxy(last6, Category::RevocableRisk, config.materiality);
  s.worst_payment_delay_6m = detail::installments_from_days(
      detail::days_proxy(last6, Category::MaturityRisk, config.materiality));

  // Lookback proxies over the trailing 12 transitions.
  std::vector<double> nrt_granted(n_months), rt_granted(n_months), total_granted(n_months);
  std::vector<bool> month_past_due_clean(n_months);
  for (std::size_t i = 0; i < n_months; ++i) {
    const auto& lines = history.months[i].second;
    nrt_granted[i] = detail::category_granted(lines, Category::RevocableRisk);
    rt_granted[i] = detail::category_granted(lines, Category::MaturityRisk);
    total_granted[i] = nrt_granted[i] + rt_granted[i];
    const PastDueBalances nrt = aggregate_past_due(lines, Category::RevocableRisk);
    const PastDueBalances rt = aggregate_past_due(lines, Category::MaturityRisk);
    const double pd = nrt.pd_30 + nrt.pd_90 + nrt.pd_180 + rt.pd_30 + rt.pd_90 + rt.pd_180;
    month_past_due_clean[i] = !apply_materiality(pd, total_granted[i], config.materiality) &&
                              nrt.pd_90 + nrt.pd_180 + rt.pd_90 + rt.pd_180 == 0.0;
  }

  const std::size_t first_transition = n_months - 12;  // 12 month-over-month steps
  bool closed_nrt = false, closed_past_due_0 = false;
  for (std::size_t i = first_transition; i < n_months; ++i) {
    if (nrt_granted[i] < nrt_granted[i - 1]) closed_nrt = true;
    if (total_granted[i] < total_granted[i - 1] && month_past_due_clean[i] &&
        month_past_due_clean[i - 1])
      closed_past_due_0 = true;
  }
  s.nrt_contracts_12m = closed_nrt ? 1 : 0;
  s.past_due_0_contracts_12m = closed_past_due_0 ? 1 : 0;

  // Maturity-balance increases mark new contracts; an increase does not
  // count if the balance reaches zero later in the window (closure).
  const auto increase_without_closure = [&](std::size_t from, std::size_t to) {
    for (std::size_t i = from; i <= to; ++i) {
      if (rt_granted[i] > rt_granted[i - 1]) {
        bool closed_later = false;
        for (std::size_t j = i + 1; j < n_months; ++j)
          if (rt_granted[j] == 0.0) closed_later = true;
        if (!closed_later) return true;
      }
    }
    return false;
  };
  s.contracts_3m = increase_without_closure(n_months - 3, n_months - 1) ? 1 : 0;
  s.contracts_4_12m = increase_without_closure(n_months - 12, n_months - 4) ? 1 : 0;

  // At least one classification group with no material past due.
  bool any_clean_line = false;
  for (const auto& line : ref_lines) {
    if (line.category != Category::MaturityRisk && line.category != Category::RevocableRisk)
      continue;
    if (past_due_180_statuses().count(line.status_code) ||
        past_due_90_statuses().count(line.status_code))
      continue;
    if (!apply_materiality(line.past_due_amount, line.granted, config.materiality))
      any_clean_line = true;
  }
  s.past_due_0_contracts = any_clean_line ? 1 : 0;

  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// CSV layer

inline const std::vector<std::string>& line_columns() {
  static const std::vector<std::string> cols = {
      "company_id", "month",         "category",         "status_code",
      "granted",    "used",          "past_due_amount",  "original_duration",
      "remaining_duration"};
  return cols;
}

inline std::vector<CrCreditLine> read_lines(const std::string& path) {
  std::vector<CrCreditLine> out;
  std::vector<std::string> header;
  std::vector<int> idx;
  for_each_csv_row(path, header, [&](const std::vector<std::string>& f) {
    if (idx.empty()) {
      for (const auto& name : line_columns()) {
        int found = -1;
        for (std::size_t i = 0; i < header.size(); ++i)
          if (header[i] == name) found = static_cast<int>(i);
        if (found < 0) throw std::runtime_error("credit-line csv missing column '" + name + "'");
        idx.push_back(found);
      }
    }
    CrCreditLine line;
    line.company_id = f[static_cast<std::size_t>(idx[0])];
    line.reference_month = data::YearMonth::parse(f[static_cast<std::size_t>(idx[1])]);
    line.category = category_from(f[static_cast<std::size_t>(idx[2])]);
    line.status_code = static_cast<int>(parse_long(f[static_cast<std::size_t>(idx[3])]));
    line.granted = parse_double(f[static_cast<std::size_t>(idx[4])]);
    line.used = parse_double(f[static_cast<std::size_t>(idx[5])]);
    line.past_due_amount = parse_double(f[static_cast<std::size_t>(idx[6])]);
    line.original_duration = original_duration_from(f[static_cast<std::size_t>(idx[7])]);
    line.remaining_duration = remaining_duration_from(f[static_cast<std::size_t>(idx[8])]);
    line.validate();
    out.push_back(std::move(line));
  });
  return out;
}

inline std::unordered_map<std::string, std::set<std::string>> read_phenomena(
    const std::string& path) {
  std::unordered_map<std::string, std::set<std::string>> out;
  std::vector<std::string> header;
  int id_col = -1, code_col = -1;
  for_each_csv_row(path, header, [&](const std::vector<std::string>& f) {
    if (id_col < 0) {
      for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "company_id") id_col = static_cast<int>(i);
        if (header[i] == "code") code_col = static_cast<int>(i);
      }
      if (id_col < 0 || code_col < 0)
        throw std::runtime_error("phenomena csv must have company_id and code");
    }
    out[f[static_cast<std::size_t>(id_col)]].insert(f[static_cast<std::size_t>(code_col)]);
  });
  return out;
}

inline Lookups read_lookups(const std::string& dir) {
  Lookups lk;
  {
    const CsvTable t = read_csv(dir + "/protest.csv");
    const int id = t.col("company_id"), v = t.col("protest_present");
    for (const auto& row : t.rows)
      lk.protest[row[static_cast<std::size_t>(id)]] =
          parse_long(row[static_cast<std::size_t>(v)]) != 0;
  }
  {
    const CsvTable t = read_csv(dir + "/legal_type.csv");
    const int id = t.col("company_id"), v = t.col("legal_type");
    for (const auto& row : t.rows)
      lk.legal_type[row[static_cast<std::size_t>(id)]] =
          data::legal_type_from(row[static_cast<std::size_t>(v)]);
  }
  {
    const CsvTable t = read_csv(dir + "/nace.csv");
    const int id = t.col("company_id");
    std::array<int, 5> cols{};
    for (int d = 0; d < 5; ++d) cols[static_cast<std::size_t>(d)] = t.col("sector_" + std::to_string(d + 1));
    for (const auto& row : t.rows) {
      std::array<double, 5> v{};
      for (int d = 0; d < 5; ++d)
        v[static_cast<std::size_t>(d)] =
            parse_double(row[static_cast<std::size_t>(cols[static_cast<std::size_t>(d)])]);
      lk.nace[row[static_cast<std::size_t>(id)]] = v;
    }
  }
  return lk;
}

// Groups flat line rows into per-company ascending monthly histories.
inline std::vector<CrMonthlyHistory> build_histories(
    const std::vector<CrCreditLine>& lines,
    const std::unordered_map<std::string, std::set<std::string>>& phenomena) {
  std::map<std::string, std::map<data::YearMonth, std::vector<CrCreditLine>>> grouped;
  for (const auto& line : lines) grouped[line.company_id][line.reference_month].push_back(line);
  std::vector<CrMonthlyHistory> out;
  out.reserve(grouped.size());
  for (auto& [company, months] : grouped) {
    CrMonthlyHistory h;
    h.company_id = company;
    for (auto& [month, month_lines] : months) h.months.emplace_back(month, std::move(month_lines));
    const auto it = phenomena.find(company);
    if (it != phenomena.end()) h.phenomena = it->second;
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace ratemill::crmap
