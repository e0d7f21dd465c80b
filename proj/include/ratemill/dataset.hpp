#pragma once

// Snapshot ingestion: the company-month record schema, the 12-month default
// target, population filtering and the stratified out-of-sample plus
// out-of-time splits.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "ratemill/csv.hpp"
#include "ratemill/rng.hpp"

#include "json.hpp"

namespace ratemill::data {

struct YearMonth {
  int year = 0;
  int month = 1;  // 1..12

  int index() const { return year * 12 + (month - 1); }

  static YearMonth from_index(int idx) {
    YearMonth ym;
    ym.year = idx / 12;
    ym.month = idx % 12 + 1;
    return ym;
  }

  YearMonth plus_months(int m) const { return from_index(index() + m); }

  auto operator<=>(const YearMonth&) const = default;

  std::string str() const {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%04d-%02d", year, month);
    return std::string(buf);
  }

  static YearMonth parse(std::string_view s) {
    if (s.size() != 7 || s[4] != '-') throw std::runtime_error("bad month '" + std::string(s) + "', expected YYYY-MM");
    YearMonth ym;
    ym.year = static_cast<int>(parse_long(s.substr(0, 4)));
    ym.month = static_cast<int>(parse_long(s.substr(5, 2)));
    if (ym.month < 1 || ym.month > 12) throw std::runtime_error("bad month '" + std::string(s) + "'");
    return ym;
  }
};

enum class LegalType { DI, SC, SP };
enum class SpecialStatus { None, Dispute, Insolvency, Npl };

inline const char* to_string(LegalType t) {
  switch (t) {
    case LegalType::DI: return "DI";
    case LegalType::SC: return "SC";
    case LegalType::SP: return "SP";
  }
  return "?";
}

inline LegalType legal_type_from(std::string_view s) {
  if (s == "DI") return LegalType::DI;
  if (s == "SC") return LegalType::SC;
  if (s == "SP") return LegalType::SP;
  throw std::runtime_error("unknown legal type '" + std::string(s) + "'");
}

inline const char* to_string(SpecialStatus s) {
  switch (s) {
    case SpecialStatus::None: return "none";
    case SpecialStatus::Dispute: return "dispute";
    case SpecialStatus::Insolvency: return "insolvency";
    case SpecialStatus::Npl: return "npl";
  }
  return "?";
}

inline SpecialStatus special_status_from(std::string_view s) {
  if (s.empty() || s == "none") return SpecialStatus::None;
  if (s == "dispute") return SpecialStatus::Dispute;
  if (s == "insolvency") return SpecialStatus::Insolvency;
  if (s == "npl") return SpecialStatus::Npl;
  throw std::runtime_error("unknown special status '" + std::string(s) + "'");
}

struct CompanySnapshot {
  std::string company_id;
  YearMonth reference_date;
  LegalType legal_type = LegalType::SC;
  SpecialStatus special_status = SpecialStatus::None;
  std::array<double, 5> sector_vector{};
  double rt_mortgages_balance = 0.0;
  double rt_non_mortgages_balance = 0.0;
  double nrt_balance = 0.0;
  double nrt_used = 0.0;
  double nrt_past_due_balance = 0.0;
  long worst_payment_delay_6m = 0;  // unpaid installments
  long max_past_due_days_6m = 0;
  long def_no = 0;  // contracts entered NPL in the last 12 months
  long past_due_0_contracts = 0;
  long past_due_0_contracts_12m = 0;
  long nrt_contracts = 0;
  long nrt_contracts_12m = 0;  // NRT contracts closed in the last 12 months
  long contracts_3m = 0;
  long contracts_4_12m = 0;
  bool protest_present = false;
  bool is_private_individual = false;

  void validate() const {
    const double balances[] = {rt_mortgages_balance, rt_non_mortgages_balance, nrt_balance,
                               nrt_used, nrt_past_due_balance};
    for (double b : balances)
      if (!(b >= 0.0)) throw std::runtime_error("snapshot " + company_id + ": negative balance");
    const long counts[] = {worst_payment_delay_6m, max_past_due_days_6m, def_no,
                           past_due_0_contracts, past_due_0_contracts_12m, nrt_contracts,
                           nrt_contracts_12m, contracts_3m, contracts_4_12m};
    for (long c : counts)
      if (c < 0) throw std::runtime_error("snapshot " + company_id + ": negative count");
    if (nrt_balance > 0.0 && nrt_used > nrt_balance)
      throw std::runtime_error("snapshot " + company_id + ": nrt_used exceeds nrt_balance");
    for (double v : sector_vector)
      if (!std::isfinite(v)) throw std::runtime_error("snapshot " + company_id + ": non-finite sector vector");
  }
};

struct LabeledRecord {
  CompanySnapshot snapshot;
  int target = 0;
  YearMonth horizon_end;  // reference + 12 months
};

struct SplitDataset {
  std::vector<LabeledRecord> train;
  std::vector<LabeledRecord> test_oos;
  std::vector<LabeledRecord> test_oot;
  std::uint64_t split_seed = 0;
};

// Target-relevant slice of one horizon month.
struct HorizonMonth {
  YearMonth month;
  SpecialStatus special_status = SpecialStatus::None;
  long def_no = 0;
  long max_past_due_days_6m = 0;
  long worst_payment_delay_6m = 0;
};

// Three or more unpaid monthly installments stand in for >= 90 days delay.
constexpr long kDefaultInstallments = 3;
constexpr long kDefaultPastDueDays = 90;

inline bool month_in_default(const HorizonMonth& m) {
  return m.special_status == SpecialStatus::Insolvency ||
         m.special_status == SpecialStatus::Npl || m.def_no >= 1 ||
         m.max_past_due_days_6m >= kDefaultPastDueDays ||
         m.worst_payment_delay_6m >= kDefaultInstallments;
}

// Binary default target over the 12 months following the reference month.
inline int derive_target(const YearMonth& reference, const std::vector<HorizonMonth>& history) {
  int found = 0;
  int triggered = 0;
  const int start = reference.index() + 1;
  for (const HorizonMonth& m : history) {
    const int offset = m.month.index() - start;
    if (offset < 0 || offset >= 12) continue;
    found |= 1 << offset;
    if (month_in_default(m)) triggered = 1;
  }
  if (found != (1 << 12) - 1) throw std::runtime_error("horizon not covered");
  return triggered;
}

struct FilterReport {
  std::size_t removed_private = 0;
  std::size_t removed_inactive = 0;
  std::size_t removed_prior_insolvent = 0;
  std::size_t missing_prior_entries = 0;
  std::size_t retained = 0;
};

// Removes private individuals, companies with no active contracts, and
// companies insolvent one year prior. A company absent from the prior-year
// lookup is treated as not insolvent and counted as a warning.
inline std::vector<LabeledRecord> filter_population(
    const std::vector<LabeledRecord>& records,
    const std::unordered_map<std::string, SpecialStatus>& prior_year, FilterReport& report) {
  std::vector<LabeledRecord> out;
  out.reserve(records.size());
  for (const LabeledRecord& r : records) {
    const CompanySnapshot& s = r.snapshot;
    if (s.is_private_individual) {
      ++report.removed_private;
      continue;
    }
    if (s.rt_mortgages_balance == 0.0 && s.rt_non_mortgages_balance == 0.0 &&
        s.nrt_contracts == 0 && s.past_due_0_contracts == 0) {
      ++report.removed_inactive;
      continue;
    }
    const auto it = prior_year.find(s.company_id);
    if (it == prior_year.end()) {
      ++report.missing_prior_entries;
    } else if (it->second == SpecialStatus::Insolvency) {
      ++report.removed_prior_insolvent;
      continue;
    }
    out.push_back(r);
  }
  report.retained = out.size();
  return out;
}

// Latest vintage year goes out-of-time; the rest is split 80/20 stratified
// on the target. Membership is decided per stratum with a seeded shuffle and
// records are emitted in their input order.
inline SplitDataset split_dataset(const std::vector<LabeledRecord>& records, std::uint64_t seed) {
  int min_year = 1 << 30, max_year = -(1 << 30);
  for (const auto& r : records) {
    min_year = std::min(min_year, r.snapshot.reference_date.year);
    max_year = std::max(max_year, r.snapshot.reference_date.year);
  }
  if (records.empty() || min_year == max_year)
    throw std::runtime_error("out-of-time split impossible: need at least two vintage years");

  SplitDataset out;
  out.split_seed = seed;
  std::vector<std::size_t> pool_pos, pool_neg;
  std::vector<char> in_test(records.size(), 0);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].snapshot.reference_date.year == max_year) continue;
    (records[i].target != 0 ? pool_pos : pool_neg).push_back(i);
  }

  const auto mark_test = [&](std::vector<std::size_t>& pool, const char* name) {
    Rng rng = Rng::substream(seed, name);
    rng.shuffle(pool);
    const std::size_t n_test =
        static_cast<std::size_t>(std::llround(0.20 * double(pool.size())));
    for (std::size_t i = 0; i < n_test; ++i) in_test[pool[i]] = 1;
  };
  mark_test(pool_pos, "split-pos");
  mark_test(pool_neg, "split-neg");

  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].snapshot.reference_date.year == max_year)
      out.test_oot.push_back(records[i]);
    else if (in_test[i])
      out.test_oos.push_back(records[i]);
    else
      out.train.push_back(records[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV schema

inline const std::vector<std::string>& snapshot_columns() {
  static const std::vector<std::string> cols = {
      "company_id",      "reference_date",         "legal_type",
      "special_status",  "sector_1",               "sector_2",
      "sector_3",        "sector_4",               "sector_5",
      "rt_mortgages_balance", "rt_non_mortgages_balance", "nrt_balance",
      "nrt_used",        "nrt_past_due_balance",   "worst_payment_delay_6m",
      "max_past_due_days_6m", "def_no",            "past_due_0_contracts",
      "past_due_0_contracts_12m", "nrt_contracts", "nrt_contracts_12m",
      "contracts_3m",    "contracts_4_12m",        "protest_present",
      "is_private_individual"};
  return cols;
}

struct IngestStats {
  std::map<std::string, std::size_t> missing_by_column;
  std::size_t rows = 0;
};

namespace detail {

// Missing numeric cells default to zero and are counted per column.
inline double numeric_field(const std::string& field, const std::string& column,
                            IngestStats* stats) {
  if (field.empty()) {
    if (stats) ++stats->missing_by_column[column];
    return 0.0;
  }
  return parse_double(field);
}

}  // namespace detail

inline CompanySnapshot snapshot_from_fields(const std::vector<std::string>& f,
                                            const std::vector<int>& idx,
                                            IngestStats* stats = nullptr) {
  const auto& cols = snapshot_columns();
  const auto sv = [&](std::size_t c) -> const std::string& {
    return f[static_cast<std::size_t>(idx[c])];
  };
  const auto num = [&](std::size_t c) {
    return detail::numeric_field(sv(c), cols[c], stats);
  };
  CompanySnapshot s;
  s.company_id = sv(0);
  if (s.company_id.empty()) throw std::runtime_error("snapshot row without company_id");
  s.reference_date = YearMonth::parse(sv(1));
  s.legal_type = sv(2).empty() ? LegalType::SC : legal_type_from(sv(2));
  s.special_status = special_status_from(sv(3));
  for (std::size_t d = 0; d < 5; ++d) s.sector_vector[d] = num(4 + d);
  s.rt_mortgages_balance = num(9);
  s.rt_non_mortgages_balance = num(10);
  s.nrt_balance = num(11);
  s.nrt_used = num(12);
  s.nrt_past_due_balance = num(13);
  s.worst_payment_delay_6m = static_cast<long>(num(14));
  s.max_past_due_days_6m = static_cast<long>(num(15));
  s.def_no = static_cast<long>(num(16));
  s.past_due_0_contracts = static_cast<long>(num(17));
  s.past_due_0_contracts_12m = static_cast<long>(num(18));
  s.nrt_contracts = static_cast<long>(num(19));
  s.nrt_contracts_12m = static_cast<long>(num(20));
  s.contracts_3m = static_cast<long>(num(21));
  s.contracts_4_12m = static_cast<long>(num(22));
  s.protest_present = num(23) != 0.0;
  s.is_private_individual = num(24) != 0.0;
  s.validate();
  return s;
}

inline std::vector<std::string> snapshot_to_fields(const CompanySnapshot& s) {
  std::vector<std::string> f;
  f.reserve(25);
  f.push_back(s.company_id);
  f.push_back(s.reference_date.str());
  f.push_back(to_string(s.legal_type));
  f.push_back(to_string(s.special_status));
  for (double v : s.sector_vector) f.push_back(format_double(v));
  f.push_back(format_double(s.rt_mortgages_balance));
  f.push_back(format_double(s.rt_non_mortgages_balance));
  f.push_back(format_double(s.nrt_balance));
  f.push_back(format_double(s.nrt_used));
  f.push_back(format_double(s.nrt_past_due_balance));
  f.push_back(std::to_string(s.worst_payment_delay_6m));
  f.push_back(std::to_string(s.max_past_due_days_6m));
  f.push_back(std::to_string(s.def_no));
  f.push_back(std::to_string(s.past_due_0_contracts));
  f.push_back(std::to_string(s.past_due_0_contracts_12m));
  f.push_back(std::to_string(s.nrt_contracts));
  f.push_back(std::to_string(s.nrt_contracts_12m));
  f.push_back(std::to_string(s.contracts_3m));
  f.push_back(std::to_string(s.contracts_4_12m));
  f.push_back(s.protest_present ? "1" : "0");
  f.push_back(s.is_private_individual ? "1" : "0");
  return f;
}

// Column indices of the canonical schema within an arbitrary header.
inline std::vector<int> schema_index(const std::vector<std::string>& header) {
  std::vector<int> idx;
  for (const auto& name : snapshot_columns()) {
    int found = -1;
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) {
        found = static_cast<int>(i);
        break;
      }
    if (found < 0) throw std::runtime_error("snapshot csv missing column '" + name + "'");
    idx.push_back(found);
  }
  return idx;
}

inline std::vector<CompanySnapshot> read_snapshots(const std::string& path,
                                                   IngestStats* stats = nullptr) {
  std::vector<CompanySnapshot> out;
  std::vector<std::string> header;
  std::vector<int> idx;
  for_each_csv_row(path, header, [&](const std::vector<std::string>& f) {
    if (idx.empty()) idx = schema_index(header);
    out.push_back(snapshot_from_fields(f, idx, stats));
    if (stats) ++stats->rows;
  });
  if (out.empty()) throw std::runtime_error("no snapshot rows in " + path);
  return out;
}

// Horizon panel: company_id, month, special_status, def_no,
// max_past_due_days_6m, worst_payment_delay_6m.
inline const std::vector<std::string>& horizon_columns() {
  static const std::vector<std::string> cols = {
      "company_id", "month", "special_status", "def_no", "max_past_due_days_6m",
      "worst_payment_delay_6m"};
  return cols;
}

inline std::unordered_map<std::string, std::vector<HorizonMonth>> read_horizon(
    const std::string& path) {
  std::unordered_map<std::string, std::vector<HorizonMonth>> out;
  std::vector<std::string> header;
  std::vector<int> idx;
  for_each_csv_row(path, header, [&](const std::vector<std::string>& f) {
    if (idx.empty()) {
      for (const auto& name : horizon_columns()) {
        int found = -1;
        for (std::size_t i = 0; i < header.size(); ++i)
          if (header[i] == name) found = static_cast<int>(i);
        if (found < 0) throw std::runtime_error("horizon csv missing column '" + name + "'");
        idx.push_back(found);
      }
    }
    HorizonMonth m;
    const std::string& company = f[static_cast<std::size_t>(idx[0])];
    m.month = YearMonth::parse(f[static_cast<std::size_t>(idx[1])]);
    m.special_status = special_status_from(f[static_cast<std::size_t>(idx[2])]);
    m.def_no = parse_long(f[static_cast<std::size_t>(idx[3])]);
    m.max_past_due_days_6m = parse_long(f[static_cast<std::size_t>(idx[4])]);
    m.worst_payment_delay_6m = parse_long(f[static_cast<std::size_t>(idx[5])]);
    out[company].push_back(m);
  });
  return out;
}

// Prior-year status lookup: company_id, special_status.
inline std::unordered_map<std::string, SpecialStatus> read_prior(const std::string& path) {
  std::unordered_map<std::string, SpecialStatus> out;
  std::vector<std::string> header;
  int id_col = -1, status_col = -1;
  for_each_csv_row(path, header, [&](const std::vector<std::string>& f) {
    if (id_col < 0) {
      for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "company_id") id_col = static_cast<int>(i);
        if (header[i] == "special_status") status_col = static_cast<int>(i);
      }
      if (id_col < 0 || status_col < 0)
        throw std::runtime_error("prior csv must have company_id and special_status");
    }
    out[f[static_cast<std::size_t>(id_col)]] =
        special_status_from(f[static_cast<std::size_t>(status_col)]);
  });
  return out;
}

inline void write_labeled(const std::string& path, const std::vector<LabeledRecord>& records) {
  CsvWriter w(path);
  std::vector<std::string> header = snapshot_columns();
  header.push_back("target");
  w.write_row(header);
  for (const auto& r : records) {
    std::vector<std::string> f = snapshot_to_fields(r.snapshot);
    f.push_back(std::to_string(r.target));
    w.write_row(f);
  }
}

inline std::vector<LabeledRecord> read_labeled(const std::string& path) {
  std::vector<LabeledRecord> out;
  std::vector<std::string> header;
  std::vector<int> idx;
  int target_col = -1;
  for_each_csv_row(path, header, [&](const std::vector<std::string>& f) {
    if (idx.empty()) {
      idx = schema_index(header);
      for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == "target") target_col = static_cast<int>(i);
      if (target_col < 0) throw std::runtime_error("labeled csv missing target column");
    }
    LabeledRecord r;
    r.snapshot = snapshot_from_fields(f, idx);
    r.target = static_cast<int>(parse_long(f[static_cast<std::size_t>(target_col)]));
    r.horizon_end = r.snapshot.reference_date.plus_months(12);
    out.push_back(r);
  });
  return out;
}

inline double target_rate(const std::vector<LabeledRecord>& records) {
  if (records.empty()) return 0.0;
  std::size_t pos = 0;
  for (const auto& r : records) pos += (r.target != 0);
  return double(pos) / double(records.size());
}

}  // namespace ratemill::data
