// ratemill: behavioral credit-rating pipeline over bureau-format snapshots
// and Central-Credit-Register extracts. Subcommands cover the full flow:
// synth -> ingest -> features -> train -> calibrate -> bins -> validate-scale
// -> explain, plus map-cr -> validate-mapping -> backtest for register data.
//
// Exit codes: 0 success, 1 validation failure, 2 input/config error.

#include <CLI11.hpp>

#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ratemill/calibration.hpp"
#include "ratemill/crmap.hpp"
#include "ratemill/csv.hpp"
#include "ratemill/dataset.hpp"
#include "ratemill/features.hpp"
#include "ratemill/gbdt.hpp"
#include "ratemill/manifest.hpp"
#include "ratemill/metrics.hpp"
#include "ratemill/pipeline.hpp"
#include "ratemill/rating.hpp"
#include "ratemill/shap.hpp"
#include "ratemill/stats.hpp"
#include "ratemill/synth.hpp"
#include "ratemill/tuning.hpp"

namespace fs = std::filesystem;
using namespace ratemill;
using nlohmann::json;

namespace {

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  in >> j;
  return j;
}

void save_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

void log(const std::string& msg) { std::cerr << "[ratemill] " << msg << "\n"; }

const std::vector<std::string> kMetricHeader = {
    "split", "auc", "recall", "specificity", "f_beta", "f1", "average_precision",
    "tp", "fp", "tn", "fn", "threshold"};

void write_metric_rows(CsvWriter& w, const std::string& split, const MetricReport& r) {
  w.write_row({split, format_double(r.auc), format_double(r.recall),
               format_double(r.specificity), format_double(r.f_beta), format_double(r.f1),
               format_double(r.average_precision), std::to_string(r.confusion.tp),
               std::to_string(r.confusion.fp), std::to_string(r.confusion.tn),
               std::to_string(r.confusion.fn), format_double(r.threshold)});
}

struct GlobalOpts {
  std::uint64_t seed = 42;
  unsigned threads = default_threads();
  double beta = 1.143;
};

// ---------------------------------------------------------------------------

int cmd_synth(const std::string& config_path, const std::string& out_dir, const GlobalOpts& g) {
  WallClock clock;
  synth::GeneratorConfig config;
  json config_json = json::object();
  if (!config_path.empty()) {
    config_json = load_json(config_path);
    config = synth::config_from_json(config_json);
  }
  if (!config_json.contains("seed")) config.seed = g.seed;
  config.threads = g.threads;
  synth::generate_to_dir(config, out_dir);
  log("synthetic universe written to " + out_dir);

  RunManifest m;
  m.command = "synth";
  const std::string dumped = config_json.dump();
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a_bytes(dumped.data(), dumped.size())));
  m.config_hash = buf;
  m.seed = config.seed;
  m.wall_clock_ms = clock.elapsed_ms();
  m.outputs = {out_dir + "/snapshots.csv", out_dir + "/horizon.csv", out_dir + "/prior.csv",
               out_dir + "/truth.csv", out_dir + "/battery", out_dir + "/backtest"};
  write_manifest(out_dir, m);
  return 0;
}

int cmd_ingest(const std::string& input, const std::string& prior_path,
               const std::string& horizon_path, const std::string& out_dir,
               const GlobalOpts& g) {
  WallClock clock;
  fs::create_directories(out_dir);

  data::IngestStats stats;
  std::vector<data::LabeledRecord> records;
  if (!horizon_path.empty()) {
    const auto snapshots = data::read_snapshots(input, &stats);
    log("read " + std::to_string(snapshots.size()) + " snapshot rows");
    const auto horizon = data::read_horizon(horizon_path);
    records.reserve(snapshots.size());
    for (const auto& s : snapshots) {
      const auto it = horizon.find(s.company_id);
      if (it == horizon.end())
        throw std::runtime_error("horizon not covered for company " + s.company_id);
      data::LabeledRecord r;
      r.snapshot = s;
      r.target = data::derive_target(s.reference_date, it->second);
      r.horizon_end = s.reference_date.plus_months(12);
      records.push_back(std::move(r));
    }
  } else {
    records = data::read_labeled(input);  // expects a target column
  }

  const auto prior = data::read_prior(prior_path);
  data::FilterReport filter_report;
  const auto filtered = data::filter_population(records, prior, filter_report);
  log("filtered population: " + std::to_string(filtered.size()) + " records retained");

  const auto split = data::split_dataset(filtered, g.seed);
  data::write_labeled(out_dir + "/train.csv", split.train);
  data::write_labeled(out_dir + "/test_oos.csv", split.test_oos);
  data::write_labeled(out_dir + "/test_oot.csv", split.test_oot);

  const json split_manifest = {
      {"seed", g.seed},
      {"counts",
       {{"train", split.train.size()},
        {"test_oos", split.test_oos.size()},
        {"test_oot", split.test_oot.size()}}},
      {"target_rates",
       {{"train", data::target_rate(split.train)},
        {"test_oos", data::target_rate(split.test_oos)},
        {"test_oot", data::target_rate(split.test_oot)}}},
      {"filter",
       {{"removed_private", filter_report.removed_private},
        {"removed_inactive", filter_report.removed_inactive},
        {"removed_prior_insolvent", filter_report.removed_prior_insolvent},
        {"missing_prior_entries", filter_report.missing_prior_entries}}},
      {"missing_by_column", stats.missing_by_column}};
  save_json(out_dir + "/split_manifest.json", split_manifest);

  RunManifest m;
  m.command = "ingest";
  m.input_digests[input] = fnv1a_file(input);
  m.input_digests[prior_path] = fnv1a_file(prior_path);
  if (!horizon_path.empty()) m.input_digests[horizon_path] = fnv1a_file(horizon_path);
  m.seed = g.seed;
  m.wall_clock_ms = clock.elapsed_ms();
  m.outputs = {out_dir + "/train.csv", out_dir + "/test_oos.csv", out_dir + "/test_oot.csv",
               out_dir + "/split_manifest.json"};
  write_manifest(out_dir, m);
  return 0;
}

int cmd_features(const std::string& input_dir, const std::string& config_path,
                 const std::string& out_dir, const GlobalOpts& g) {
  WallClock clock;
  fs::create_directories(out_dir);

  features::FeaturePipeline pipeline;
  pipeline.config.shadow.threads = g.threads;
  json config_json = json::object();
  if (!config_path.empty()) {
    config_json = load_json(config_path);
    auto& cfg = pipeline.config;
    cfg.sparse_threshold = config_json.value("sparse_threshold", cfg.sparse_threshold);
    cfg.max_vif = config_json.value("max_vif", cfg.max_vif);
    cfg.vif_keep = config_json.value("vif_keep", cfg.vif_keep);
    cfg.run_shadow = config_json.value("run_shadow", cfg.run_shadow);
    cfg.kpi.ratio_cap = config_json.value("ratio_cap", cfg.kpi.ratio_cap);
    cfg.kpi.nrt_past_due_bins = config_json.value("nrt_past_due_bins", cfg.kpi.nrt_past_due_bins);
    if (config_json.contains("shadow")) {
      const auto& s = config_json.at("shadow");
      cfg.shadow.rounds = s.value("rounds", cfg.shadow.rounds);
      cfg.shadow.sample_cap = s.value("sample_cap", cfg.shadow.sample_cap);
      cfg.shadow.train.rounds = s.value("train_rounds", cfg.shadow.train.rounds);
      cfg.shadow.train.max_leaves = s.value("max_leaves", cfg.shadow.train.max_leaves);
    }
  }

  const auto train = data::read_labeled(input_dir + "/train.csv");
  const auto oos = data::read_labeled(input_dir + "/test_oos.csv");
  const auto oot = data::read_labeled(input_dir + "/test_oot.csv");

  pipeline.fit(train, g.seed);
  log("feature pipeline kept " + std::to_string(pipeline.final_columns.size()) + " columns");

  save_json(out_dir + "/feature_spec.json", features::to_json(pipeline));
  pipeline::write_matrix_csv(out_dir + "/train_matrix.csv",
                             pipeline::build_bundle(train, pipeline));
  pipeline::write_matrix_csv(out_dir + "/oos_matrix.csv", pipeline::build_bundle(oos, pipeline));
  pipeline::write_matrix_csv(out_dir + "/oot_matrix.csv", pipeline::build_bundle(oot, pipeline));

  RunManifest m;
  m.command = "features";
  for (const char* f : {"/train.csv", "/test_oos.csv", "/test_oot.csv"})
    m.input_digests[input_dir + f] = fnv1a_file(input_dir + f);
  m.seed = g.seed;
  m.wall_clock_ms = clock.elapsed_ms();
  m.outputs = {out_dir + "/feature_spec.json", out_dir + "/train_matrix.csv",
               out_dir + "/oos_matrix.csv", out_dir + "/oot_matrix.csv"};
  write_manifest(out_dir, m);
  return 0;
}

int cmd_train(const std::string& data_dir, int budget, int rounds, const std::string& model_out,
              const GlobalOpts& g) {
  WallClock clock;
  const auto train = pipeline::read_matrix_csv(data_dir + "/train_matrix.csv");
  const auto oos = pipeline::read_matrix_csv(data_dir + "/oos_matrix.csv");
  const auto oot = pipeline::read_matrix_csv(data_dir + "/oot_matrix.csv");

  gbdt::TrainParams base;
  base.rounds = rounds;
  base.threads = g.threads;

  const auto tuned = tuning::tune(train.matrix, train.vintage_years, budget, g.beta, g.seed, base);
  log("tuning: best mean f_beta " + std::to_string(tuned.best_score));

  const auto model = gbdt::fit(train.matrix, tuned.best, g.seed);
  const auto oos_scores = gbdt::predict_proba(model, oos.matrix, g.threads);
  const auto oot_scores = gbdt::predict_proba(model, oot.matrix, g.threads);

  const MetricReport oos_report = evaluate_scores(oos_scores, oos.matrix.target, 0.5, g.beta);
  const MetricReport oot_report = evaluate_scores(oot_scores, oot.matrix.target, 0.5, g.beta);
  log("out-of-sample auc " + std::to_string(oos_report.auc) + ", out-of-time auc " +
      std::to_string(oot_report.auc));

  json model_json = gbdt::model_to_json(model);
  model_json["beta"] = g.beta;
  save_json(model_out, model_json);

  const std::string out_dir = fs::path(model_out).parent_path().string();
  const std::string prefix = out_dir.empty() ? "" : out_dir + "/";
  {
    CsvWriter w(prefix + "metrics_report.csv");
    w.write_row(kMetricHeader);
    write_metric_rows(w, "test_oos", oos_report);
    write_metric_rows(w, "test_oot", oot_report);
  }
  const auto dump_scores = [&](const std::string& path, const pipeline::MatrixBundle& b,
                               const std::vector<double>& scores) {
    pipeline::ScoreTable t;
    t.company_ids = b.company_ids;
    t.score = scores;
    t.pd = scores;  // calibrate overwrites
    t.target = b.matrix.target;
    pipeline::write_scores_csv(path, t);
  };
  dump_scores(prefix + "oos_scores.csv", oos, oos_scores);
  dump_scores(prefix + "oot_scores.csv", oot, oot_scores);

  RunManifest m;
  m.command = "train";
  for (const char* f : {"/train_matrix.csv", "/oos_matrix.csv", "/oot_matrix.csv"})
    m.input_digests[data_dir + f] = fnv1a_file(data_dir + f);
  m.seed = g.seed;
  m.wall_clock_ms = clock.elapsed_ms();
  m.outputs = {model_out, prefix + "metrics_report.csv", prefix + "oos_scores.csv",
               prefix + "oot_scores.csv"};
  write_manifest(out_dir.empty() ? "." : out_dir, m);
  return 0;
}

int cmd_score(const std::string& model_path, const std::string& features_path,
              const std::string& input, const std::string& out, const GlobalOpts& g) {
  const json model_json = load_json(model_path);
  const auto model = gbdt::model_from_json(model_json);
  std::optional<calibration::CalibrationMap> cal;
  if (model_json.contains("calibration"))
    cal = calibration::calibration_from_json(model_json.at("calibration"));

  const auto pipeline_spec = features::pipeline_from_json(load_json(features_path));
  const auto snapshots = data::read_snapshots(input);
  std::vector<data::LabeledRecord> records;
  records.reserve(snapshots.size());
  for (const auto& s : snapshots) {
    data::LabeledRecord r;
    r.snapshot = s;
    records.push_back(std::move(r));
  }
  const FeatureMatrix matrix = pipeline_spec.transform(records);
  const auto scores = gbdt::predict_proba(model, matrix, g.threads);

  pipeline::ScoreTable t;
  for (const auto& s : snapshots) t.company_ids.push_back(s.company_id);
  t.score = scores;
  t.pd = cal ? cal->apply(scores) : scores;
  t.target.assign(scores.size(), 0);
  pipeline::write_scores_csv(out, t);
  log("scored " + std::to_string(scores.size()) + " rows");
  return 0;
}

int cmd_calibrate(const std::string& model_path, const std::string& data_dir,
                  const std::string& model_out, const GlobalOpts& g) {
  WallClock clock;
  json model_json = load_json(model_path);
  const auto model = gbdt::model_from_json(model_json);

  // The held-out out-of-sample fold doubles as the calibration fold; the
  // boosting training fold is never used here.
  const auto oos = pipeline::read_matrix_csv(data_dir + "/oos_matrix.csv");
  const auto oot = pipeline::read_matrix_csv(data_dir + "/oot_matrix.csv");
  const auto oos_scores = gbdt::predict_proba(model, oos.matrix, g.threads);
  const auto oot_scores = gbdt::predict_proba(model, oot.matrix, g.threads);

  const auto cal = calibration::fit_beta(oos_scores, oos.matrix.target);
  const auto oos_pd = cal.apply(oos_scores);
  const auto oot_pd = cal.apply(oot_scores);
  log("beta calibration a=" + std::to_string(cal.a) + " b=" + std::to_string(cal.b) +
      " c=" + std::to_string(cal.c));
  log("brier before " + std::to_string(calibration::brier(oos_scores, oos.matrix.target)) +
      ", after " + std::to_string(calibration::brier(oos_pd, oos.matrix.target)) + ", skill " +
      std::to_string(calibration::brier_skill(oos_pd, oos.matrix.target)));

  model_json["calibration"] = calibration::to_json(cal);
  save_json(model_out, model_json);

  const std::string out_dir = fs::path(model_out).parent_path().string();
  const std::string prefix = out_dir.empty() ? "" : out_dir + "/";
  const auto dump = [&](const std::string& path, const pipeline::MatrixBundle& b,
                        const std::vector<double>& raw, const std::vector<double>& pd) {
    pipeline::ScoreTable t;
    t.company_ids = b.company_ids;
    t.score = raw;
    t.pd = pd;
    t.target = b.matrix.target;
    pipeline::write_scores_csv(path, t);
  };
  dump(prefix + "oos_scores.csv", oos, oos_scores, oos_pd);
  dump(prefix + "oot_scores.csv", oot, oot_scores, oot_pd);

  {
    const auto table = calibration::reliability(oos_pd, oos.matrix.target, 10);
    CsvWriter w(prefix + "reliability.csv");
    w.write_row({"bin_lo", "bin_hi", "mean_forecast", "observed_rate", "count"});
    for (const auto& bin : table.bins)
      w.write_row({format_double(bin.lo), format_double(bin.hi), format_double(bin.mean_forecast),
                   format_double(bin.observed_rate), std::to_string(bin.count)});
  }

  RunManifest m;
  m.command = "calibrate";
  m.input_digests[model_path] = fnv1a_file(model_path);
  m.input_digests[data_dir + "/oos_matrix.csv"] = fnv1a_file(data_dir + "/oos_matrix.csv");
  m.seed = g.seed;
  m.wall_clock_ms = clock.elapsed_ms();
  m.outputs = {model_out, prefix + "oos_scores.csv", prefix + "oot_scores.csv",
               prefix + "reliability.csv"};
  write_manifest(out_dir.empty() ? "." : out_dir, m);
  return 0;
}

int cmd_bins(const std::string& scores_path, int k, const std::string& scale_out,
             const GlobalOpts& g) {
  WallClock clock;
  const auto scores = pipeline::read_scores_csv(scores_path);
  rating::DeBinConfig config;
  config.k = k;
  config.de_params.threads = g.threads;
  const auto scale = rating::de_bin(scores.pd, scores.target, config, g.seed);
  log("binning objective " + std::to_string(scale.objective));
  save_json(scale_out, rating::to_json(scale));

  RunManifest m;
  m.command = "bins";
  m.input_digests[scores_path] = fnv1a_file(scores_path);
  m.seed = g.seed;
  m.wall_clock_ms = clock.elapsed_ms();
  m.outputs = {scale_out};
  const std::string out_dir = fs::path(scale_out).parent_path().string();
  write_manifest(out_dir.empty() ? "." : out_dir, m);
  return 0;
}

int cmd_validate_scale(const std::string& scale_path, const std::string& oot_path,
                       const std::string& report_out, int max_red, int max_binomial_fail) {
  const auto scale = rating::scale_from_json(load_json(scale_path));
  const auto scores = pipeline::read_scores_csv(oot_path);
  const auto report = rating::validate_scale(scale, scores.pd, scores.target);

  CsvWriter w(report_out);
  w.write_row({"rating_class", "pd_bin_lo", "pd_bin_hi", "class_pd", "count", "defaults",
               "observed_rate", "binomial_p", "binomial_test", "traffic_light"});
  int reds = 0, binomial_fails = 0;
  for (std::size_t c = 0; c < report.size(); ++c) {
    const auto& v = report[c];
    const double lo = c == 0 ? 0.0 : scale.boundaries[c - 1];
    const double hi = c < scale.boundaries.size() ? scale.boundaries[c] : 1.0;
    w.write_row({v.label, format_double(lo), format_double(hi), format_double(v.class_pd),
                 std::to_string(v.count), std::to_string(v.defaults),
                 format_double(v.observed_rate),
                 v.binomial_applicable ? format_double(v.binomial_p) : "-",
                 v.binomial_applicable ? (v.binomial_pass ? "Passed" : "Failed") : "-",
                 rating::to_string(v.light)});
    if (v.count > 0 && v.light == rating::TrafficLight::Red) ++reds;
    if (v.binomial_applicable && !v.binomial_pass) ++binomial_fails;
  }
  log("scale validation: " + std::to_string(reds) + " red classes, " +
      std::to_string(binomial_fails) + " binomial failures");
  if (reds > max_red || binomial_fails > max_binomial_fail) {
    log("scale validation FAILED tolerance policy");
    return 1;
  }
  return 0;
}

int cmd_explain(const std::string& model_path, const std::string& input,
                const std::string& row_id, const std::string& out_dir, int sample,
                std::string feature, std::string interaction, const GlobalOpts& g) {
  WallClock clock;
  fs::create_directories(out_dir);
  const json model_json = load_json(model_path);
  const auto model = gbdt::model_from_json(model_json);
  const auto bundle = pipeline::read_matrix_csv(input);

  FeatureMatrix m = bundle.matrix;
  std::vector<std::string> ids = bundle.company_ids;
  if (sample > 0 && static_cast<std::size_t>(sample) < m.n_rows) {
    m.n_rows = static_cast<std::size_t>(sample);
    m.values.resize(m.n_rows * m.n_cols);
    if (!m.target.empty()) m.target.resize(m.n_rows);
    ids.resize(m.n_rows);
  }

  const auto summary = shap::summary_stats(model, m, g.threads);
  {
    CsvWriter w(out_dir + "/shap_summary.csv");
    w.write_row({"feature", "mean_abs_shap", "rank"});
    for (std::size_t r = 0; r < summary.ranking.size(); ++r)
      w.write_row({summary.feature_names[summary.ranking[r]],
                   format_double(summary.mean_abs[summary.ranking[r]]), std::to_string(r + 1)});
  }
  {
    CsvWriter w(out_dir + "/shap_matrix.csv");
    std::vector<std::string> header = {"company_id"};
    header.insert(header.end(), summary.feature_names.begin(), summary.feature_names.end());
    w.write_row(header);
    std::vector<std::string> row;
    for (std::size_t r = 0; r < m.n_rows; ++r) {
      row.clear();
      row.push_back(ids[r]);
      for (std::size_t c = 0; c < m.n_cols; ++c)
        row.push_back(format_double(summary.matrix[r * m.n_cols + c]));
      w.write_row(row);
    }
  }
  if (feature.empty()) feature = summary.feature_names[summary.ranking[0]];
  if (interaction.empty())
    interaction = summary.feature_names[summary.ranking[summary.ranking.size() > 1 ? 1 : 0]];
  {
    const auto pts = shap::dependence_data(model, m, feature, interaction, g.threads);
    CsvWriter w(out_dir + "/shap_dependence.csv");
    w.write_row({"feature_value", "shap_value", "interaction_value"});
    for (const auto& p : pts)
      w.write_row({format_double(p.x), format_double(p.shap), format_double(p.color)});
  }
  // Waterfall for the requested company (default: first row).
  std::size_t row_index = 0;
  if (!row_id.empty()) {
    bool found = false;
    for (std::size_t r = 0; r < bundle.company_ids.size(); ++r)
      if (bundle.company_ids[r] == row_id) {
        row_index = r;
        found = true;
        break;
      }
    if (!found) throw std::runtime_error("explain: company '" + row_id + "' not in input");
  }
  {
    std::vector<double> row(bundle.matrix.row(row_index),
                            bundle.matrix.row(row_index) + bundle.matrix.n_cols);
    const auto wf = shap::waterfall_data(model, row, 10);
    json entries = json::array();
    for (const auto& e : wf.entries)
      entries.push_back({{"feature", e.name}, {"contribution", e.contribution}});
    save_json(out_dir + "/waterfall.json",
              {{"company_id", bundle.company_ids[row_index]},
               {"base_value", wf.base_value},
               {"margin", wf.margin},
               {"probability", gbdt::margin_to_proba(wf.margin)},
               {"entries", entries}});
  }

  RunManifest manifest;
  manifest.command = "explain";
  manifest.input_digests[input] = fnv1a_file(input);
  manifest.seed = g.seed;
  manifest.wall_clock_ms = clock.elapsed_ms();
  manifest.outputs = {out_dir + "/shap_summary.csv", out_dir + "/shap_matrix.csv",
                      out_dir + "/shap_dependence.csv", out_dir + "/waterfall.json"};
  write_manifest(out_dir, manifest);
  return 0;
}

int cmd_map_cr(const std::string& lines_path, const std::string& phenomena_path,
               const std::string& lookups_dir, const std::string& out,
               const std::string& pairs_with, const std::string& pairs_out,
               const std::string& audit_out) {
  WallClock clock;
  const auto lines = crmap::read_lines(lines_path);
  const auto phenomena = crmap::read_phenomena(phenomena_path);
  const auto lookups = crmap::read_lookups(lookups_dir);
  const auto histories = crmap::build_histories(lines, phenomena);

  std::vector<data::CompanySnapshot> mapped;
  mapped.reserve(histories.size());
  for (const auto& h : histories) mapped.push_back(crmap::map_to_features(h, lookups));
  {
    CsvWriter w(out);
    w.write_row(data::snapshot_columns());
    for (const auto& s : mapped) w.write_row(data::snapshot_to_fields(s));
  }
  log("mapped " + std::to_string(mapped.size()) + " companies to the snapshot schema");

  if (!audit_out.empty()) {
    CsvWriter w(audit_out);
    w.write_row(crmap::line_columns());
    for (const auto& l : lines) {
      if (l.category == crmap::Category::MaturityRisk ||
          l.category == crmap::Category::RevocableRisk)
        continue;
      w.write_row({l.company_id, l.reference_month.str(), crmap::to_string(l.category),
                   std::to_string(l.status_code), format_double(l.granted),
                   format_double(l.used), format_double(l.past_due_amount), "na", "na"});
    }
  }

  if (!pairs_with.empty()) {
    const auto bureau = data::read_snapshots(pairs_with);
    const auto pairs = pipeline::make_pairs(mapped, bureau, pipeline::default_battery());
    pipeline::write_pairs_csv(pairs_out.empty() ? "pairs.csv" : pairs_out, pairs);
    log("wrote " + std::to_string(pairs.size()) + " feature pairs");
  }

  RunManifest m;
  m.command = "map-cr";
  m.input_digests[lines_path] = fnv1a_file(lines_path);
  m.input_digests[phenomena_path] = fnv1a_file(phenomena_path);
  m.wall_clock_ms = clock.elapsed_ms();
  m.outputs = {out};
  const std::string out_dir = fs::path(out).parent_path().string();
  write_manifest(out_dir.empty() ? "." : out_dir, m);
  return 0;
}

int cmd_validate_mapping(const std::string& pairs_path, const std::string& battery_path,
                         const std::string& report_out) {
  const auto pairs = pipeline::read_pairs_csv(pairs_path);
  std::vector<pipeline::BatteryEntry> battery;
  double alpha = 0.05;
  if (!battery_path.empty()) {
    const json j = load_json(battery_path);
    battery = pipeline::battery_from_json(j);
    alpha = j.value("alpha", 0.05);
  } else {
    battery = pipeline::default_battery();
  }
  const auto reports = pipeline::run_battery(pairs, battery, alpha);
  pipeline::write_battery_report(report_out, reports);
  std::size_t rejected = 0;
  for (const auto& r : reports) rejected += r.reject_null;
  log("mapping validation: " + std::to_string(rejected) + "/" + std::to_string(reports.size()) +
      " nulls rejected");
  return rejected == reports.size() ? 0 : 1;
}

int cmd_backtest(const std::string& model_path, const std::string& features_path,
                 const std::string& snapshots_path, const std::string& statuses_path,
                 const std::string& out_dir, const GlobalOpts& g) {
  WallClock clock;
  fs::create_directories(out_dir);
  const json model_json = load_json(model_path);
  const auto model = gbdt::model_from_json(model_json);
  calibration::CalibrationMap cal;  // identity unless the model carries one
  if (model_json.contains("calibration"))
    cal = calibration::calibration_from_json(model_json.at("calibration"));
  const auto pipeline_spec = features::pipeline_from_json(load_json(features_path));
  const auto snapshots = data::read_snapshots(snapshots_path);
  const auto statuses = data::read_horizon(statuses_path);
  const double beta = model_json.value("beta", g.beta);

  const auto result =
      pipeline::backtest(model, cal, pipeline_spec, snapshots, statuses, beta, g.threads);
  log("backtest: " + std::to_string(result.n_companies) + " companies, " +
      std::to_string(result.n_defaults) + " defaults, auc " +
      std::to_string(result.metrics.auc));

  {
    CsvWriter w(out_dir + "/backtest_metrics.csv");
    w.write_row(kMetricHeader);
    write_metric_rows(w, "backtest", result.metrics);
  }
  {
    const auto& c = result.metrics.confusion;
    CsvWriter w(out_dir + "/backtest_confusion.csv");
    w.write_row({"", "predicted_negative", "predicted_positive"});
    w.write_row({"actual_negative", std::to_string(c.tn), std::to_string(c.fp)});
    w.write_row({"actual_positive", std::to_string(c.fn), std::to_string(c.tp)});
  }
  pipeline::write_scores_csv(out_dir + "/backtest_scores.csv", result.scores);

  RunManifest m;
  m.command = "backtest";
  m.input_digests[snapshots_path] = fnv1a_file(snapshots_path);
  m.input_digests[statuses_path] = fnv1a_file(statuses_path);
  m.seed = g.seed;
  m.wall_clock_ms = clock.elapsed_ms();
  m.outputs = {out_dir + "/backtest_metrics.csv", out_dir + "/backtest_confusion.csv",
               out_dir + "/backtest_scores.csv"};
  write_manifest(out_dir, m);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ratemill: behavioral credit rating pipeline"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--seed", g.seed, "master seed for all randomness");
  app.add_option("--threads", g.threads, "worker threads (default: cores)");
  app.add_option("--beta", g.beta, "beta for the specificity/recall F-score");

  std::string synth_config, synth_out = "data";
  auto* synth_cmd = app.add_subcommand("synth", "generate the synthetic universe");
  synth_cmd->add_option("--config", synth_config, "generator config json");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();

  std::string ingest_input, ingest_prior, ingest_horizon, ingest_out = "run";
  auto* ingest_cmd = app.add_subcommand("ingest", "ingest snapshots, label, filter and split");
  ingest_cmd->add_option("--input", ingest_input, "snapshot csv")->required();
  ingest_cmd->add_option("--prior", ingest_prior, "prior-year status csv")->required();
  ingest_cmd->add_option("--horizon", ingest_horizon, "12-month horizon panel csv");
  ingest_cmd->add_option("--out", ingest_out, "output directory")->required();

  std::string feat_input, feat_config, feat_out;
  auto* feat_cmd = app.add_subcommand("features", "fit the feature pipeline");
  feat_cmd->add_option("--input", feat_input, "directory with train/test csvs")->required();
  feat_cmd->add_option("--config", feat_config, "feature config json");
  feat_cmd->add_option("--out", feat_out, "output directory")->required();

  std::string train_data, train_out = "model.json";
  int train_budget = 12, train_rounds = 150;
  auto* train_cmd = app.add_subcommand("train", "tune and fit the classifier");
  train_cmd->add_option("--data", train_data, "directory with matrix csvs")->required();
  train_cmd->add_option("--budget", train_budget, "search budget");
  train_cmd->add_option("--rounds", train_rounds, "boosting rounds");
  train_cmd->add_option("--out", train_out, "model json path")->required();

  std::string score_model, score_features, score_input, score_out = "scores.csv";
  auto* score_cmd = app.add_subcommand("score", "score a snapshot csv");
  score_cmd->add_option("--model", score_model, "model json")->required();
  score_cmd->add_option("--features", score_features, "feature spec json")->required();
  score_cmd->add_option("--input", score_input, "snapshot csv")->required();
  score_cmd->add_option("--out", score_out, "output csv");

  std::string cal_model, cal_data, cal_out;
  auto* cal_cmd = app.add_subcommand("calibrate", "fit beta calibration on the held-out fold");
  cal_cmd->add_option("--model", cal_model, "model json")->required();
  cal_cmd->add_option("--data", cal_data, "directory with matrix csvs")->required();
  cal_cmd->add_option("--out", cal_out, "output model json")->required();

  std::string bins_scores, bins_out = "scale.json";
  int bins_k = 9;
  auto* bins_cmd = app.add_subcommand("bins", "cluster calibrated pds into a rating scale");
  bins_cmd->add_option("--scores", bins_scores, "scores csv with pd column")->required();
  bins_cmd->add_option("--k", bins_k, "number of rating classes");
  bins_cmd->add_option("--out", bins_out, "scale json path");

  std::string vs_scale, vs_oot, vs_report = "scale_validation.csv";
  int vs_max_red = 2, vs_max_binom = 2;
  auto* vs_cmd = app.add_subcommand("validate-scale", "out-of-time class validation");
  vs_cmd->add_option("--scale", vs_scale, "scale json")->required();
  vs_cmd->add_option("--oot", vs_oot, "out-of-time scores csv")->required();
  vs_cmd->add_option("--out", vs_report, "report csv");
  vs_cmd->add_option("--max-red", vs_max_red, "tolerated red classes");
  vs_cmd->add_option("--max-binomial-fail", vs_max_binom, "tolerated binomial failures");

  std::string ex_model, ex_input, ex_row, ex_out = "explain", ex_feature, ex_interaction;
  int ex_sample = 2000;
  auto* ex_cmd = app.add_subcommand("explain", "shapley attributions and plot data");
  ex_cmd->add_option("--model", ex_model, "model json")->required();
  ex_cmd->add_option("--input", ex_input, "matrix csv")->required();
  ex_cmd->add_option("--row", ex_row, "company id for the waterfall");
  ex_cmd->add_option("--out", ex_out, "output directory");
  ex_cmd->add_option("--sample", ex_sample, "rows for the summary (0 = all)");
  ex_cmd->add_option("--feature", ex_feature, "dependence feature");
  ex_cmd->add_option("--interaction", ex_interaction, "dependence interaction feature");

  std::string mc_lines, mc_phenomena, mc_lookups, mc_out = "snapshots.csv";
  std::string mc_pairs_with, mc_pairs_out, mc_audit;
  auto* mc_cmd = app.add_subcommand("map-cr", "map register extracts to the snapshot schema");
  mc_cmd->add_option("--lines", mc_lines, "credit-line csv")->required();
  mc_cmd->add_option("--phenomena", mc_phenomena, "phenomena csv")->required();
  mc_cmd->add_option("--lookups", mc_lookups, "lookup directory")->required();
  mc_cmd->add_option("--out", mc_out, "output snapshot csv");
  mc_cmd->add_option("--pairs-with", mc_pairs_with, "bureau snapshot csv to pair against");
  mc_cmd->add_option("--pairs-out", mc_pairs_out, "pairs csv path");
  mc_cmd->add_option("--audit-out", mc_audit, "pass-through csv for ignored categories");

  std::string vm_pairs, vm_battery, vm_out = "mapping_report.csv";
  auto* vm_cmd = app.add_subcommand("validate-mapping", "paired-feature test battery");
  vm_cmd->add_option("--pairs", vm_pairs, "pairs csv")->required();
  vm_cmd->add_option("--battery", vm_battery, "battery config json");
  vm_cmd->add_option("--out", vm_out, "report csv");

  std::string bt_model, bt_features, bt_snapshots, bt_statuses, bt_out = "backtest";
  auto* bt_cmd = app.add_subcommand("backtest", "replay the pipeline on mapped snapshots");
  bt_cmd->add_option("--model", bt_model, "model json")->required();
  bt_cmd->add_option("--features", bt_features, "feature spec json")->required();
  bt_cmd->add_option("--snapshots", bt_snapshots, "mapped snapshot csv")->required();
  bt_cmd->add_option("--statuses", bt_statuses, "status panel csv")->required();
  bt_cmd->add_option("--out", bt_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForVersion" ||
        e.get_name() == "CallForAllHelp")
      return app.exit(e);
    app.exit(e);
    return 2;
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth(synth_config, synth_out, g);
    if (ingest_cmd->parsed())
      return cmd_ingest(ingest_input, ingest_prior, ingest_horizon, ingest_out, g);
    if (feat_cmd->parsed()) return cmd_features(feat_input, feat_config, feat_out, g);
    if (train_cmd->parsed()) return cmd_train(train_data, train_budget, train_rounds, train_out, g);
    if (score_cmd->parsed())
      return cmd_score(score_model, score_features, score_input, score_out, g);
    if (cal_cmd->parsed()) return cmd_calibrate(cal_model, cal_data, cal_out, g);
    if (bins_cmd->parsed()) return cmd_bins(bins_scores, bins_k, bins_out, g);
    if (vs_cmd->parsed())
      return cmd_validate_scale(vs_scale, vs_oot, vs_report, vs_max_red, vs_max_binom);
    if (ex_cmd->parsed())
      return cmd_explain(ex_model, ex_input, ex_row, ex_out, ex_sample, ex_feature,
                         ex_interaction, g);
    if (mc_cmd->parsed())
      return cmd_map_cr(mc_lines, mc_phenomena, mc_lookups, mc_out, mc_pairs_with, mc_pairs_out,
                        mc_audit);
    if (vm_cmd->parsed()) return cmd_validate_mapping(vm_pairs, vm_battery, vm_out);
    if (bt_cmd->parsed())
      return cmd_backtest(bt_model, bt_features, bt_snapshots, bt_statuses, bt_out, g);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
