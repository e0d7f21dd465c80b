#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "ratemill/crmap.hpp"
#include "ratemill/dataset.hpp"
#include "ratemill/metrics.hpp"
#include "ratemill/pipeline.hpp"
#include "ratemill/synth.hpp"

using namespace ratemill;
namespace fs = std::filesystem;

namespace {

synth::GeneratorConfig small_config() {
  synth::GeneratorConfig c;
  c.n_companies = 3000;
  c.vintages = {2021, 2022};
  c.battery_pairs = 180;
  c.backtest_pairs = 150;
  c.filtered_extra_per_vintage = 9;
  c.threads = 4;
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TruthRow {
  int target;
  double latent;
};

std::vector<TruthRow> read_truth(const std::string& path) {
  const CsvTable t = read_csv(path);
  const int ti = t.col("target"), li = t.col("latent");
  std::vector<TruthRow> out;
  for (const auto& row : t.rows)
    out.push_back({static_cast<int>(parse_long(row[static_cast<std::size_t>(ti)])),
                   parse_double(row[static_cast<std::size_t>(li)])});
  return out;
}

}  // namespace

TEST_CASE("zero signal reproduces the base default rate") {
  auto config = small_config();
  config.latent_signal = 0.0;
  config.n_companies = 20000;
  config.seed = 5;
  const std::string dir = "/tmp/ratemill_synth_rate";
  fs::remove_all(dir);
  synth::generate_to_dir(config, dir);
  const auto truth = read_truth(dir + "/truth.csv");
  double rate = 0.0;
  for (const auto& r : truth) rate += r.target;
  rate /= double(truth.size());
  // Two binomial standard deviations around 3.5%.
  const double sd = std::sqrt(0.035 * 0.965 / double(truth.size()));
  CHECK(rate == Catch::Approx(0.035).margin(2.0 * sd));
}

TEST_CASE("ideal latent score attains the designed AUC") {
  auto config = small_config();
  config.n_companies = 60000;
  config.latent_signal = synth::separation_for_auc(0.90);
  config.seed = 6;
  const std::string dir = "/tmp/ratemill_synth_auc";
  fs::remove_all(dir);
  synth::generate_to_dir(config, dir);
  const auto truth = read_truth(dir + "/truth.csv");
  std::vector<double> scores;
  std::vector<int> targets;
  for (const auto& r : truth) {
    scores.push_back(r.latent);
    targets.push_back(r.target);
  }
  CHECK(auc_score(scores, targets) == Catch::Approx(0.90).margin(0.012));
  CHECK(synth::theoretical_auc(config.latent_signal) == Catch::Approx(0.90).margin(1e-9));
}

TEST_CASE("generation is deterministic byte for byte") {
  const auto config = small_config();
  const std::string a = "/tmp/ratemill_synth_a", b = "/tmp/ratemill_synth_b";
  fs::remove_all(a);
  fs::remove_all(b);
  synth::generate_to_dir(config, a);
  synth::generate_to_dir(config, b);
  for (const char* rel :
       {"/snapshots.csv", "/horizon.csv", "/prior.csv", "/truth.csv", "/battery/bureau.csv",
        "/battery/cr_lines.csv", "/battery/phenomena.csv", "/backtest/statuses.csv"}) {
    INFO(rel);
    CHECK(slurp(a + rel) == slurp(b + rel));
  }
}

TEST_CASE("bureau view is dominated by the register view on every battery feature") {
  const auto config = small_config();
  const std::string dir = "/tmp/ratemill_synth_pairs";
  fs::remove_all(dir);
  synth::generate_to_dir(config, dir);

  const auto bureau = data::read_snapshots(dir + "/battery/bureau.csv");
  const auto lines = crmap::read_lines(dir + "/battery/cr_lines.csv");
  const auto phenomena = crmap::read_phenomena(dir + "/battery/phenomena.csv");
  const auto lookups = crmap::read_lookups(dir + "/battery/lookups");
  const auto histories = crmap::build_histories(lines, phenomena);
  std::vector<data::CompanySnapshot> mapped;
  for (const auto& h : histories) mapped.push_back(crmap::map_to_features(h, lookups));
  REQUIRE(mapped.size() == config.battery_pairs);

  const auto battery = pipeline::default_battery();
  const auto pairs = pipeline::make_pairs(mapped, bureau, battery);
  REQUIRE(pairs.size() == config.battery_pairs * battery.size());

  std::map<std::string, int> strict;
  for (const auto& p : pairs) {
    INFO(p.feature << " @ " << p.company_id);
    CHECK(p.cr_value >= p.bureau_value);
    if (p.cr_value > p.bureau_value) ++strict[p.feature];
  }
  for (const auto& e : battery) {
    INFO(e.feature);
    CHECK(strict[e.feature] >= 5);  // enough discordance for the tests to bite
  }
}

TEST_CASE("mapping-validation battery rejects every null on generated pairs") {
  const std::string dir = "/tmp/ratemill_synth_pairs";  // generated above
  REQUIRE(fs::exists(dir + "/battery/bureau.csv"));
  const auto bureau = data::read_snapshots(dir + "/battery/bureau.csv");
  const auto histories = crmap::build_histories(
      crmap::read_lines(dir + "/battery/cr_lines.csv"),
      crmap::read_phenomena(dir + "/battery/phenomena.csv"));
  const auto lookups = crmap::read_lookups(dir + "/battery/lookups");
  std::vector<data::CompanySnapshot> mapped;
  for (const auto& h : histories) mapped.push_back(crmap::map_to_features(h, lookups));

  const auto battery = pipeline::default_battery();
  const auto pairs = pipeline::make_pairs(mapped, bureau, battery);
  const auto reports = pipeline::run_battery(pairs, battery, 0.05);
  REQUIRE(reports.size() == 8);
  for (const auto& r : reports) {
    INFO(r.name << " p=" << r.p_raw << " adj=" << r.p_adjusted);
    CHECK(r.p_adjusted < 0.05);
    CHECK(r.reject_null);
  }
}

TEST_CASE("filtered extras exercise the population filters") {
  const std::string dir = "/tmp/ratemill_synth_pairs";
  const auto snapshots = data::read_snapshots(dir + "/snapshots.csv");
  const auto prior = data::read_prior(dir + "/prior.csv");
  std::vector<data::LabeledRecord> records;
  for (const auto& s : snapshots) {
    data::LabeledRecord r;
    r.snapshot = s;
    records.push_back(r);
  }
  data::FilterReport report;
  const auto filtered = data::filter_population(records, prior, report);
  CHECK(report.removed_private == 6);           // 2 vintages x 3 of kind 0
  CHECK(report.removed_inactive == 6);
  CHECK(report.removed_prior_insolvent == 6);
  CHECK(filtered.size() == 3000);
}

TEST_CASE("horizon panel covers every company and yields consistent targets") {
  const std::string dir = "/tmp/ratemill_synth_pairs";
  const auto truth = read_truth(dir + "/truth.csv");
  const CsvTable t = read_csv(dir + "/truth.csv");
  const auto horizon = data::read_horizon(dir + "/horizon.csv");
  const int id_col = t.col("company_id");
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const std::string& company = t.rows[i][static_cast<std::size_t>(id_col)];
    const auto it = horizon.find(company);
    REQUIRE(it != horizon.end());
    // Reference month recovered from the first horizon month.
    data::YearMonth ref = it->second.front().month.plus_months(-1);
    const int derived = data::derive_target(ref, it->second);
    mismatches += derived != truth[i].target;
  }
  CHECK(mismatches == 0);
}
