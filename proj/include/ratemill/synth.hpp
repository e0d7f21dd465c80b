#pragma once

// Deterministic synthetic data: a bi-normal latent design (default drawn
// first, latent u ~ N(separation * y, 1)) whose ideal-score AUC is
// Phi(separation / sqrt(2)) in closed form. Emits bureau-format snapshot
// panels with 12-month horizons, and paired cohorts where every bureau
// quantity is dominated by its register counterpart (register histories are
// supersets of the bureau view).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ratemill/crmap.hpp"
#include "ratemill/csv.hpp"
#include "ratemill/dataset.hpp"
#include "ratemill/parallel.hpp"
#include "ratemill/rng.hpp"
#include "ratemill/specfun.hpp"

#include "json.hpp"

namespace ratemill::synth {

struct GeneratorConfig {
  std::size_t n_companies = 125000;  // total across vintages
  std::vector<int> vintages = {2018, 2019, 2020, 2021, 2022};
  double latent_signal = 1.8124;  // separation; AUC 0.90
  double base_default_rate = 0.035;
  std::uint64_t seed = 42;
  double cr_noise = 0.30;  // probability of register-only extra exposure
  std::size_t battery_pairs = 180;
  std::size_t backtest_pairs = 2000;
  double paired_default_rate = 0.15;
  std::size_t filtered_extra_per_vintage = 20;
  int reference_month = 3;
  unsigned threads = 1;
};

inline double theoretical_auc(double separation) { return norm_cdf(separation / std::sqrt(2.0)); }
inline double separation_for_auc(double auc) { return std::sqrt(2.0) * norm_quantile(auc); }

inline GeneratorConfig config_from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  c.n_companies = j.value("n_companies", c.n_companies);
  c.vintages = j.value("vintages", c.vintages);
  if (j.contains("theoretical_auc"))
    c.latent_signal = separation_for_auc(j.at("theoretical_auc").get<double>());
  c.latent_signal = j.value("latent_signal", c.latent_signal);
  c.base_default_rate = j.value("base_default_rate", c.base_default_rate);
  c.seed = j.value("seed", c.seed);
  c.cr_noise = j.value("cr_noise", c.cr_noise);
  c.battery_pairs = j.value("battery_pairs", c.battery_pairs);
  c.backtest_pairs = j.value("backtest_pairs", c.backtest_pairs);
  c.paired_default_rate = j.value("paired_default_rate", c.paired_default_rate);
  c.filtered_extra_per_vintage = j.value("filtered_extra_per_vintage", c.filtered_extra_per_vintage);
  c.reference_month = j.value("reference_month", c.reference_month);
  return c;
}

namespace detail {

// Lattice bucket for past-due days, increasing in the latent factor.
inline long days_bucket(double x) {
  if (x < 1.1) return 0;
  if (x < 1.8) return 30;
  if (x < 2.4) return 90;
  return 180;
}

inline long installments_from_days(long days) {
  if (days >= 180) return 6;
  if (days >= 90) return 3;
  if (days >= 30) return 1;
  return 0;
}

struct CompanyDraw {
  data::CompanySnapshot snapshot;
  int target = 0;
  double latent = 0.0;
  long rt_days_bucket = 0;  // maturity-side delinquency bucket (paired cohorts)
};

// One company: default flag first, latent second, features as monotone noisy
// transforms of the latent. lattice_delay constrains the installment count
// to the {0,1,3,6} grid used by the register proxy.
inline CompanyDraw make_company(Rng& rng, const GeneratorConfig& config, const std::string& id,
                                int vintage, double default_rate, bool lattice_delay) {
  CompanyDraw d;
  d.target = rng.bernoulli(default_rate) ? 1 : 0;
  const double u = rng.normal(config.latent_signal * d.target, 1.0);
  d.latent = u;

  data::CompanySnapshot& s = d.snapshot;
  s.company_id = id;
  s.reference_date = data::YearMonth{vintage, config.reference_month};

  const bool nrt_present = rng.bernoulli(0.78);
  if (nrt_present) {
    s.nrt_balance = rng.lognormal(10.0, 0.9);
    const double draw_frac = sigmoid(1.1 * u + rng.normal(0.0, 0.9) - 0.3);
    s.nrt_used = s.nrt_balance * draw_frac;
    s.nrt_contracts = 1 + rng.poisson(0.8);
    s.max_past_due_days_6m = days_bucket(u + rng.normal(0.0, 0.65));
  } else {
    s.nrt_balance = 0.0;
    s.nrt_used = 0.0;
    s.nrt_contracts = 0;
    s.max_past_due_days_6m = 0;
  }
  if (s.max_past_due_days_6m >= 30)
    s.nrt_past_due_balance = s.nrt_balance * std::min(0.9, 0.02 + 0.1 * std::fabs(rng.normal()));

  d.rt_days_bucket = days_bucket(u + rng.normal(0.0, 0.65));
  if (lattice_delay) {
    s.worst_payment_delay_6m = installments_from_days(d.rt_days_bucket);
  } else {
    const double w = u + rng.normal(0.0, 0.65);
    s.worst_payment_delay_6m = w < 1.0 ? 0 : std::min<long>(6, 1 + long((w - 1.0) / 0.4));
  }

  s.rt_mortgages_balance = rng.bernoulli(0.4) ? rng.lognormal(11.0 - 0.15 * u, 1.0) : 0.0;
  s.rt_non_mortgages_balance = rng.lognormal(10.5 - 0.15 * u, 1.0);

  s.def_no = rng.bernoulli(sigmoid(-4.2 + 1.4 * u)) ? 1 + rng.poisson(0.3) : 0;
  s.past_due_0_contracts = rng.poisson(std::exp(0.6 - 0.35 * u));
  s.past_due_0_contracts_12m = rng.bernoulli(sigmoid(-1.1 - 0.2 * u)) ? 1 : 0;
  s.nrt_contracts_12m = rng.bernoulli(sigmoid(-1.3 + 0.45 * u)) ? 1 : 0;
  s.contracts_3m = rng.poisson(0.22);
  s.contracts_4_12m = rng.poisson(0.5);
  s.protest_present = rng.bernoulli(sigmoid(-3.6 + 1.0 * u));
  s.special_status = rng.bernoulli(sigmoid(-5.0 + 0.7 * u)) ? data::SpecialStatus::Dispute
                                                            : data::SpecialStatus::None;

  const double r = rng.uniform01();
  const double p_di = std::clamp(0.25 + 0.04 * u, 0.05, 0.60);
  s.legal_type = r < p_di ? data::LegalType::DI
                          : (r < p_di + 0.20 ? data::LegalType::SP : data::LegalType::SC);

  for (auto& v : s.sector_vector) v = 0.7 * rng.normal();
  s.validate();
  return d;
}

struct HorizonRow {
  data::YearMonth month;
  data::SpecialStatus status = data::SpecialStatus::None;
  long def_no = 0;
  long days = 0;
  long delay = 0;
};

// Twelve post-reference months; defaulted companies get one of four trigger
// kinds starting at a random month, in-bonis companies stay below every
// threshold.
inline std::vector<HorizonRow> make_horizon(Rng& rng, data::YearMonth reference, int target) {
  std::vector<HorizonRow> rows(12);
  for (int i = 0; i < 12; ++i) {
    rows[static_cast<std::size_t>(i)].month = reference.plus_months(i + 1);
    if (rng.bernoulli(0.10)) rows[static_cast<std::size_t>(i)].days = 30;
    if (rng.bernoulli(0.10)) rows[static_cast<std::size_t>(i)].delay = 1;
  }
  if (target) {
    const int start = static_cast<int>(rng.uniform_int(0, 11));
    const int kind = static_cast<int>(rng.uniform_int(0, 3));
    for (int i = start; i < 12; ++i) {
      HorizonRow& r = rows[static_cast<std::size_t>(i)];
      switch (kind) {
        case 0: r.status = rng.bernoulli(0.5) ? data::SpecialStatus::Npl
                                              : data::SpecialStatus::Insolvency; break;
        case 1: r.def_no = 1; break;
        case 2: r.days = 90 + 30 * rng.uniform_int(0, 3); break;
        case 3: r.delay = 3 + rng.uniform_int(0, 3); break;
      }
    }
  }
  return rows;
}

inline void write_horizon_rows(CsvWriter& w, const std::string& company,
                               const std::vector<HorizonRow>& rows) {
  for (const auto& r : rows)
    w.write_row({company, r.month.str(), data::to_string(r.status), std::to_string(r.def_no),
                 std::to_string(r.days), std::to_string(r.delay)});
}

// Register view of one paired company: 13 monthly sets of credit lines that
// dominate the bureau snapshot, plus phenomena codes.
struct PairedCompany {
  data::CompanySnapshot bureau;
  int target = 0;
  std::vector<crmap::CrCreditLine> lines;  // all months, flat
  std::vector<std::string> phenomena;
};

inline crmap::CrCreditLine base_line(const std::string& id, data::YearMonth month,
                                     crmap::Category category) {
  crmap::CrCreditLine l;
  l.company_id = id;
  l.reference_month = month;
  l.category = category;
  l.status_code = 820;  // performing
  if (category == crmap::Category::MaturityRisk) {
    l.original_duration = crmap::OriginalDuration::Y1to5;
    l.remaining_duration = crmap::RemainingDuration::Gt1y;
  }
  return l;
}

inline int bucket_status(Rng& rng, long days) {
  if (days >= 180) return rng.bernoulli(0.5) ? 827 : 831;
  if (days >= 90) return rng.bernoulli(0.5) ? 826 : 830;
  return 820;
}

inline long upgrade_bucket(Rng& rng, long days, double prob) {
  if (!rng.bernoulli(prob)) return days;
  if (days == 0) return 30;
  if (days == 30) return 90;
  if (days == 90) return 180;
  return 180;
}

inline PairedCompany make_paired(Rng& rng, const GeneratorConfig& config, const std::string& id,
                                 int vintage) {
  PairedCompany p;
  const CompanyDraw draw =
      make_company(rng, config, id, vintage, config.paired_default_rate, /*lattice_delay=*/true);
  p.bureau = draw.snapshot;
  p.target = draw.target;
  const data::CompanySnapshot& b = p.bureau;
  const data::YearMonth ref = b.reference_date;

  // Register-side levels dominate the bureau view.
  const double extra_nrt = rng.bernoulli(config.cr_noise) ? rng.lognormal(9.5, 0.8) : 0.0;
  const double cr_nrt = b.nrt_balance + extra_nrt;
  const double extra_rt = rng.bernoulli(config.cr_noise) ? rng.lognormal(10.0, 0.8) : 0.0;
  const double cr_rt = b.rt_mortgages_balance + b.rt_non_mortgages_balance + extra_rt;

  const long nrt_days = upgrade_bucket(rng, b.max_past_due_days_6m, 0.5 * config.cr_noise);
  const long rt_days = upgrade_bucket(rng, draw.rt_days_bucket, 0.5 * config.cr_noise);

  const bool closure = b.nrt_contracts_12m >= 1 || b.past_due_0_contracts_12m >= 1 ||
                       rng.bernoulli(0.15);
  const int closure_month = 3 + static_cast<int>(rng.uniform_int(0, 2));  // index 3..5 of 0..12
  const bool new_3m = b.contracts_3m >= 1 || rng.bernoulli(0.15);
  const int new_3m_month = 11 + static_cast<int>(rng.uniform_int(0, 1));
  const bool new_4_12m = b.contracts_4_12m >= 1 || rng.bernoulli(0.15);
  const int new_4_12m_month = 6 + static_cast<int>(rng.uniform_int(0, 2));  // 6..8

  // A bureau-reported closure with no current exposure shows up in the
  // register as an earlier line that ran off.
  const double phantom_nrt = closure && cr_nrt == 0.0 ? rng.lognormal(9.0, 0.8) : 0.0;

  // Will the reference month carry at least one past-due-free line?
  const bool ref_has_clean = (cr_nrt > 0.0 && nrt_days == 0) || rt_days == 0;

  for (int m = 0; m <= 12; ++m) {
    const data::YearMonth month = ref.plus_months(m - 12);
    // Revocable line: constant level with one optional step down at the
    // closure month; present whenever the register carries NRT exposure.
    if (cr_nrt > 0.0) {
      crmap::CrCreditLine l = base_line(id, month, crmap::Category::RevocableRisk);
      l.granted = closure && m < closure_month ? cr_nrt * 1.25 : cr_nrt;
      l.used = std::min(l.granted, b.nrt_used + 0.4 * extra_nrt);
      if (m >= 7) {  // delinquency window: the trailing six months
        l.status_code = bucket_status(rng, nrt_days);
        if (nrt_days == 30) l.past_due_amount = std::max(500.0, 0.02 * l.granted);
      }
      p.lines.push_back(l);
    } else if (phantom_nrt > 0.0 && m < closure_month) {
      crmap::CrCreditLine l = base_line(id, month, crmap::Category::RevocableRisk);
      l.granted = phantom_nrt;
      l.used = 0.6 * phantom_nrt;
      p.lines.push_back(l);
    }
    // Maturity line: steps up at new-contract months, never closes.
    {
      crmap::CrCreditLine l = base_line(id, month, crmap::Category::MaturityRisk);
      double level = cr_rt;
      if (new_3m && m < new_3m_month) level *= 0.85;
      if (new_4_12m && m < new_4_12m_month) level *= 0.90;
      l.granted = level;
      l.used = 0.8 * level;
      if (m >= 7) {
        l.status_code = bucket_status(rng, rt_days);
        if (rt_days == 30) l.past_due_amount = std::max(500.0, 0.02 * l.granted);
      }
      p.lines.push_back(l);
    }
    // A small clean line keeps at least one group past-due free when the
    // bureau says so but the main lines are delinquent.
    if (m == 12 && b.past_due_0_contracts >= 1 && !ref_has_clean) {
      crmap::CrCreditLine l = base_line(id, month, crmap::Category::MaturityRisk);
      l.granted = rng.lognormal(8.0, 0.5);
      l.used = 0.5 * l.granted;
      p.lines.push_back(l);
    }
  }

  if (b.def_no >= 1 || rng.bernoulli(0.1 * config.cr_noise))
    p.phenomena.push_back(crmap::kNplPhenomenon);
  if (b.special_status == data::SpecialStatus::Dispute || rng.bernoulli(0.05))
    p.phenomena.push_back(crmap::kDisputePhenomenon);
  return p;
}

inline void write_snapshot_header(CsvWriter& w) { w.write_row(data::snapshot_columns()); }

inline void write_lookups(const std::string& dir, const std::vector<PairedCompany>& cohort) {
  std::filesystem::create_directories(dir);
  CsvWriter protest(dir + "/protest.csv");
  protest.write_row({"company_id", "protest_present"});
  CsvWriter legal(dir + "/legal_type.csv");
  legal.write_row({"company_id", "legal_type"});
  CsvWriter nace(dir + "/nace.csv");
  nace.write_row({"company_id", "sector_1", "sector_2", "sector_3", "sector_4", "sector_5"});
  for (const auto& p : cohort) {
    protest.write_row({p.bureau.company_id, p.bureau.protest_present ? "1" : "0"});
    legal.write_row({p.bureau.company_id, data::to_string(p.bureau.legal_type)});
    std::vector<std::string> row{p.bureau.company_id};
    for (double v : p.bureau.sector_vector) row.push_back(format_double(v));
    nace.write_row(row);
  }
}

inline void write_paired_cohort(const std::string& dir, const std::vector<PairedCompany>& cohort,
                                bool with_statuses, const GeneratorConfig& config,
                                const char* stream_name) {
  std::filesystem::create_directories(dir);
  {
    CsvWriter bureau(dir + "/bureau.csv");
    write_snapshot_header(bureau);
    for (const auto& p : cohort) bureau.write_row(data::snapshot_to_fields(p.bureau));
  }
  {
    CsvWriter lines(dir + "/cr_lines.csv");
    lines.write_row(crmap::line_columns());
    for (const auto& p : cohort)
      for (const auto& l : p.lines)
        lines.write_row({l.company_id, l.reference_month.str(), crmap::to_string(l.category),
                         std::to_string(l.status_code), format_double(l.granted),
                         format_double(l.used), format_double(l.past_due_amount),
                         l.original_duration == crmap::OriginalDuration::NotApplicable
                             ? "na"
                             : (l.original_duration == crmap::OriginalDuration::Lt1y
                                    ? "lt1y"
                                    : (l.original_duration == crmap::OriginalDuration::Y1to5
                                           ? "y1to5"
                                           : "gt5y")),
                         l.remaining_duration == crmap::RemainingDuration::NotApplicable
                             ? "na"
                             : (l.remaining_duration == crmap::RemainingDuration::Lt1y ? "lt1y"
                                                                                       : "gt1y")});
  }
  {
    CsvWriter phen(dir + "/phenomena.csv");
    phen.write_row({"company_id", "code"});
    for (const auto& p : cohort)
      for (const auto& code : p.phenomena) phen.write_row({p.bureau.company_id, code});
  }
  write_lookups(dir + "/lookups", cohort);
  {
    CsvWriter truth(dir + "/truth.csv");
    truth.write_row({"company_id", "target"});
    for (const auto& p : cohort)
      truth.write_row({p.bureau.company_id, std::to_string(p.target)});
  }
  if (with_statuses) {
    CsvWriter statuses(dir + "/statuses.csv");
    statuses.write_row(data::horizon_columns());
    for (std::size_t i = 0; i < cohort.size(); ++i) {
      Rng rng = Rng::substream(config.seed, stream_name, 1000000 + i);
      const auto rows = make_horizon(rng, cohort[i].bureau.reference_date, cohort[i].target);
      write_horizon_rows(statuses, cohort[i].bureau.company_id, rows);
    }
  }
}

}  // namespace detail

// Generates the full synthetic universe under out_dir:
//   snapshots.csv, horizon.csv, prior.csv, truth.csv   (main modeling cohort)
//   battery/   (paired cohort for the mapping-validation battery)
//   backtest/  (paired cohort with post-reference statuses)
inline void generate_to_dir(const GeneratorConfig& config, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  const std::size_t per_vintage = config.n_companies / config.vintages.size();
  std::vector<detail::CompanyDraw> draws(config.n_companies);
  parallel_for(config.n_companies, config.threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const std::size_t v = std::min(i / per_vintage, config.vintages.size() - 1);
      const int vintage = config.vintages[v];
      char id[32];
      std::snprintf(id, sizeof(id), "c%04d%07zu", vintage, i);
      Rng rng = Rng::substream(config.seed, "main", i);
      draws[i] = detail::make_company(rng, config, id, vintage, config.base_default_rate,
                                      /*lattice_delay=*/false);
    }
  });

  {
    CsvWriter snapshots(out_dir + "/snapshots.csv");
    detail::write_snapshot_header(snapshots);
    for (const auto& d : draws) snapshots.write_row(data::snapshot_to_fields(d.snapshot));

    // Rows exercising the population filters: private individuals, inactive
    // companies, and companies insolvent a year earlier.
    CsvWriter prior(out_dir + "/prior.csv");
    prior.write_row({"company_id", "special_status"});
    for (const auto& d : draws) prior.write_row({d.snapshot.company_id, "none"});

    CsvWriter horizon(out_dir + "/horizon.csv");
    horizon.write_row(data::horizon_columns());
    for (std::size_t i = 0; i < draws.size(); ++i) {
      Rng rng = Rng::substream(config.seed, "horizon", i);
      detail::write_horizon_rows(
          horizon, draws[i].snapshot.company_id,
          detail::make_horizon(rng, draws[i].snapshot.reference_date, draws[i].target));
    }

    for (std::size_t v = 0; v < config.vintages.size(); ++v) {
      for (std::size_t k = 0; k < config.filtered_extra_per_vintage; ++k) {
        Rng rng = Rng::substream(config.seed, "filtered", v * 10000 + k);
        char id[32];
        std::snprintf(id, sizeof(id), "f%04d%07zu", config.vintages[v], k);
        detail::CompanyDraw d = detail::make_company(rng, config, id, config.vintages[v],
                                                     config.base_default_rate, false);
        const int kind = static_cast<int>(k % 3);
        if (kind == 0) d.snapshot.is_private_individual = true;
        if (kind == 1) {
          d.snapshot.rt_mortgages_balance = 0;
          d.snapshot.rt_non_mortgages_balance = 0;
          d.snapshot.nrt_contracts = 0;
          d.snapshot.nrt_balance = 0;
          d.snapshot.nrt_used = 0;
          d.snapshot.nrt_past_due_balance = 0;
          d.snapshot.past_due_0_contracts = 0;
          d.snapshot.max_past_due_days_6m = 0;
        }
        snapshots.write_row(data::snapshot_to_fields(d.snapshot));
        prior.write_row({d.snapshot.company_id, kind == 2 ? "insolvency" : "none"});
        detail::write_horizon_rows(horizon, d.snapshot.company_id,
                                   detail::make_horizon(rng, d.snapshot.reference_date, d.target));
      }
    }
  }

  {
    CsvWriter truth(out_dir + "/truth.csv");
    truth.write_row({"company_id", "vintage", "target", "latent"});
    for (const auto& d : draws)
      truth.write_row({d.snapshot.company_id, std::to_string(d.snapshot.reference_date.year),
                       std::to_string(d.target), format_double(d.latent)});
  }

  const int paired_vintage = *std::max_element(config.vintages.begin(), config.vintages.end());
  {
    std::vector<detail::PairedCompany> battery(config.battery_pairs);
    for (std::size_t i = 0; i < battery.size(); ++i) {
      Rng rng = Rng::substream(config.seed, "paired-battery", i);
      char id[32];
      std::snprintf(id, sizeof(id), "pb%07zu", i);
      battery[i] = detail::make_paired(rng, config, id, paired_vintage);
    }
    detail::write_paired_cohort(out_dir + "/battery", battery, false, config, "paired-battery");
  }
  {
    std::vector<detail::PairedCompany> backtest(config.backtest_pairs);
    for (std::size_t i = 0; i < backtest.size(); ++i) {
      Rng rng = Rng::substream(config.seed, "paired-backtest", i);
      char id[32];
      std::snprintf(id, sizeof(id), "pt%07zu", i);
      backtest[i] = detail::make_paired(rng, config, id, paired_vintage);
    }
    detail::write_paired_cohort(out_dir + "/backtest", backtest, true, config, "paired-backtest");
  }
}

}  // namespace ratemill::synth
