#include <catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <set>
#include <vector>

#include "ratemill/dataset.hpp"
#include "ratemill/features.hpp"
#include "ratemill/rng.hpp"
#include "ratemill/specfun.hpp"

using namespace ratemill;
using data::CompanySnapshot;

namespace {

CompanySnapshot base_snapshot() {
  CompanySnapshot s;
  s.company_id = "x";
  s.reference_date = data::YearMonth{2020, 3};
  s.rt_non_mortgages_balance = 100.0;
  s.past_due_0_contracts = 1;
  return s;
}

// VIF via the diagonal of the inverse correlation matrix - an independent
// algebraic route from the regression implementation.
std::vector<double> vif_by_correlation_inverse(const FeatureMatrix& m) {
  const auto n = static_cast<Eigen::Index>(m.n_rows);
  const auto p = static_cast<Eigen::Index>(m.n_cols);
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < p; ++c)
      x(r, c) = m.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::VectorXd sd = (x.colwise().squaredNorm() / double(n)).cwiseSqrt();
  for (Eigen::Index c = 0; c < p; ++c) x.col(c) /= sd(c);
  const Eigen::MatrixXd corr = x.transpose() * x / double(n);
  const Eigen::MatrixXd inv = corr.inverse();
  std::vector<double> vif(static_cast<std::size_t>(p));
  for (Eigen::Index c = 0; c < p; ++c) vif[static_cast<std::size_t>(c)] = inv(c, c);
  return vif;
}

}  // namespace

TEST_CASE("kpi arithmetic") {
  CompanySnapshot s = base_snapshot();
  s.rt_mortgages_balance = 100.0;
  s.rt_non_mortgages_balance = 50.0;
  s.nrt_balance = 75.0;
  s.nrt_used = 30.0;
  const auto k = features::make_kpis(s);
  CHECK(k.rt_balance == 150.0);
  CHECK(k.nrt_rt_ratio == Catch::Approx(0.5));
  CHECK(k.nrt_used_rt_ratio == Catch::Approx(0.2));
  CHECK(k.draw_ratio_nrt == Catch::Approx(0.4));
}

TEST_CASE("kpi zero-denominator sentinels") {
  CompanySnapshot s = base_snapshot();
  s.rt_non_mortgages_balance = 0.0;
  s.nrt_balance = 0.0;
  s.nrt_used = 0.0;
  auto k = features::make_kpis(s);
  CHECK(k.draw_ratio_nrt == 0.0);
  CHECK(k.nrt_rt_ratio == 0.0);

  s.nrt_balance = 500.0;
  s.nrt_used = 100.0;
  k = features::make_kpis(s);
  CHECK(k.nrt_rt_ratio == 1e6);  // positive numerator over zero rt balance hits the cap
  CHECK(k.draw_ratio_nrt == Catch::Approx(0.2));
}

TEST_CASE("kpi flags equal their threshold predicates exactly") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    CompanySnapshot s = base_snapshot();
    s.def_no = rng.uniform_int(0, 3);
    s.past_due_0_contracts_12m = rng.uniform_int(0, 3);
    s.nrt_contracts_12m = rng.uniform_int(0, 3);
    s.past_due_0_contracts = rng.uniform_int(0, 3);
    s.nrt_contracts = rng.uniform_int(0, 3);
    const auto k = features::make_kpis(s);
    CHECK(k.npl_present == (s.def_no >= 1 ? 1 : 0));
    CHECK(k.closed_past_due_0 == (s.past_due_0_contracts_12m >= 1 ? 1 : 0));
    CHECK(k.closed_nrt == (s.nrt_contracts_12m >= 1 ? 1 : 0));
    CHECK(k.past_due_0 == (s.past_due_0_contracts >= 1 ? 1 : 0));
    CHECK(k.nrt_present == (s.nrt_contracts >= 1 ? 1 : 0));
    for (int flag : {k.npl_present, k.closed_past_due_0, k.closed_nrt, k.past_due_0, k.nrt_present})
      CHECK((flag == 0 || flag == 1));
  }
  CompanySnapshot s = base_snapshot();
  s.def_no = 2;
  CHECK(features::make_kpis(s).npl_present == 1);
}

TEST_CASE("past-due buckets follow the configured edges") {
  CompanySnapshot s = base_snapshot();
  const std::vector<std::pair<long, int>> cases = {
      {0, 0}, {4, 0}, {5, 1}, {29, 1}, {30, 2}, {60, 3}, {90, 4}, {120, 5}, {180, 6}, {400, 6}};
  for (const auto& [days, bucket] : cases) {
    s.max_past_due_days_6m = days;
    CHECK(features::make_kpis(s).nrt_past_due_bucket == bucket);
  }
}

TEST_CASE("drop_sparse boundary behavior") {
  FeatureMatrix m = make_matrix({"clean", "at_threshold", "over"}, 100);
  m.target.assign(100, 0);
  for (std::size_t r = 0; r < 100; ++r) {
    m.at(r, 0) = 1.0;
    m.at(r, 1) = r < 20 ? std::numeric_limits<double>::quiet_NaN() : 1.0;  // exactly 20%
    m.at(r, 2) = r < 21 ? std::numeric_limits<double>::quiet_NaN() : 1.0;  // 21%
  }
  const auto res = features::drop_sparse(m, 0.20);
  CHECK(res.matrix.column_names == std::vector<std::string>{"clean", "at_threshold"});
  CHECK(res.dropped == std::vector<std::string>{"over"});

  FeatureMatrix all_bad = make_matrix({"a"}, 10);
  const auto nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t r = 0; r < 10; ++r) all_bad.at(r, 0) = nan;
  all_bad.target.assign(10, 0);
  CHECK_THROWS_WITH(features::drop_sparse(all_bad, 0.2),
                    Catch::Matchers::ContainsSubstring("empty feature matrix"));
}

TEST_CASE("james-stein shrinkage formula anchor") {
  // Direct formula evaluation: s2=0.24, n=50, tau2=0.01.
  const double b = features::james_stein_shrinkage(0.24, 50.0, 0.01);
  CHECK(b == Catch::Approx(0.324).margin(5e-4));
  // Encodings from the same formula with category means 0.2/0.4, global 0.3.
  CHECK((1.0 - b) * 0.2 + b * 0.3 == Catch::Approx(0.232432).margin(1e-5));
  CHECK((1.0 - b) * 0.4 + b * 0.3 == Catch::Approx(0.367568).margin(1e-5));
}

TEST_CASE("james-stein encoder basics") {
  // Two categories with distinct means.
  std::vector<std::string> col;
  std::vector<double> y;
  for (int i = 0; i < 50; ++i) {
    col.push_back("a");
    y.push_back(i < 10 ? 1.0 : 0.0);  // mean 0.2
  }
  for (int i = 0; i < 50; ++i) {
    col.push_back("b");
    y.push_back(i < 20 ? 1.0 : 0.0);  // mean 0.4
  }
  const auto enc = features::james_stein_encode(col, y);
  CHECK(enc.global_mean == Catch::Approx(0.3));
  // Encoded values sit strictly between category mean and global mean.
  CHECK(enc.transform("a") > 0.2);
  CHECK(enc.transform("a") < 0.3);
  CHECK(enc.transform("b") < 0.4);
  CHECK(enc.transform("b") > 0.3);
  // Unseen category maps to the global mean.
  CHECK(enc.transform("zzz") == enc.global_mean);
}

TEST_CASE("james-stein limits") {
  // Category mean equal to the global mean stays at the global mean.
  std::vector<std::string> col;
  std::vector<double> y;
  for (int i = 0; i < 40; ++i) {
    col.push_back(i % 2 ? "a" : "b");
    y.push_back(i % 4 < 2 ? 1.0 : 0.0);  // both means 0.5
  }
  const auto enc = features::james_stein_encode(col, y);
  CHECK(enc.transform("a") == Catch::Approx(0.5).margin(1e-12));

  // Huge category with a distinct mean keeps (approximately) its own mean.
  std::vector<std::string> col2;
  std::vector<double> y2;
  Rng rng(5);
  for (int i = 0; i < 100000; ++i) {
    col2.push_back("big");
    y2.push_back(rng.bernoulli(0.7) ? 1.0 : 0.0);
  }
  for (int i = 0; i < 100; ++i) {
    col2.push_back("small");
    y2.push_back(rng.bernoulli(0.2) ? 1.0 : 0.0);
  }
  const auto enc2 = features::james_stein_encode(col2, y2);
  double big_mean = 0.0;
  for (int i = 0; i < 100000; ++i) big_mean += y2[static_cast<std::size_t>(i)];
  big_mean /= 100000.0;
  CHECK(enc2.transform("big") == Catch::Approx(big_mean).margin(1e-3));

  // Constant target: everything collapses to the global mean.
  std::vector<std::string> col3{"a", "a", "b", "b"};
  std::vector<double> y3{1.0, 1.0, 1.0, 1.0};
  const auto enc3 = features::james_stein_encode(col3, y3);
  CHECK(enc3.transform("a") == 1.0);
  CHECK(enc3.transform("b") == 1.0);
}

TEST_CASE("james-stein encoding is shift-consistent") {
  Rng rng(7);
  std::vector<std::string> col;
  std::vector<double> y, y_shifted;
  for (int i = 0; i < 300; ++i) {
    col.push_back(std::string(1, char('a' + rng.uniform_int(0, 4))));
    y.push_back(rng.normal());
    y_shifted.push_back(y.back() + 11.5);
  }
  const auto enc = features::james_stein_encode(col, y);
  const auto enc_shifted = features::james_stein_encode(col, y_shifted);
  for (const auto& [cat, value] : enc.encoded)
    CHECK(enc_shifted.encoded.at(cat) == Catch::Approx(value + 11.5).margin(1e-9));
}

TEST_CASE("vif: orthogonal columns untouched, duplicates removed") {
  Rng rng(9);
  FeatureMatrix m = make_matrix({"a", "b", "c"}, 500);
  m.target.assign(500, 0);
  for (std::size_t r = 0; r < 500; ++r) {
    m.at(r, 0) = rng.normal();
    m.at(r, 1) = rng.normal();
    m.at(r, 2) = rng.normal();
  }
  const auto vif = features::compute_vif(m);
  for (double v : vif) CHECK(v == Catch::Approx(1.0).margin(0.05));
  const auto pruned = features::vif_prune(m, 10.0);
  CHECK(pruned.dropped.empty());

  FeatureMatrix dup = make_matrix({"a", "a_copy", "b"}, 500);
  dup.target.assign(500, 0);
  for (std::size_t r = 0; r < 500; ++r) {
    const double v = rng.normal();
    dup.at(r, 0) = v;
    dup.at(r, 1) = v;
    dup.at(r, 2) = rng.normal();
  }
  const auto de_duped = features::vif_prune(dup, 10.0);
  CHECK(de_duped.dropped.size() == 1);
  // The surviving matrix passes the recomputation gate.
  for (double v : features::compute_vif(de_duped.matrix)) CHECK(v <= 10.0);
}

TEST_CASE("vif matches the correlation-inverse oracle") {
  Rng rng(11);
  FeatureMatrix m = make_matrix({"a", "b", "c", "d"}, 800);
  m.target.assign(800, 0);
  for (std::size_t r = 0; r < 800; ++r) {
    const double z = rng.normal();
    m.at(r, 0) = z + 0.5 * rng.normal();
    m.at(r, 1) = z + 0.5 * rng.normal();
    m.at(r, 2) = rng.normal();
    m.at(r, 3) = 0.3 * z + rng.normal();
  }
  const auto vif = features::compute_vif(m);
  const auto oracle = vif_by_correlation_inverse(m);
  for (std::size_t c = 0; c < 4; ++c)
    CHECK(vif[c] == Catch::Approx(oracle[c]).epsilon(1e-6));
}

TEST_CASE("vif drops one column of a near-collinear triple first") {
  Rng rng(13);
  FeatureMatrix m = make_matrix({"x1", "x2", "x3"}, 1000);
  m.target.assign(1000, 0);
  for (std::size_t r = 0; r < 1000; ++r) {
    m.at(r, 0) = rng.normal();
    m.at(r, 1) = rng.normal();
    m.at(r, 2) = m.at(r, 0) + m.at(r, 1) + 0.01 * rng.normal();
  }
  const auto res = features::vif_prune(m, 10.0);
  CHECK(res.dropped.size() == 1);
  CHECK(res.matrix.n_cols == 2);
}

TEST_CASE("vif keep-list conflict raises") {
  Rng rng(15);
  FeatureMatrix m = make_matrix({"a", "a_copy"}, 300);
  m.target.assign(300, 0);
  for (std::size_t r = 0; r < 300; ++r) {
    const double v = rng.normal();
    m.at(r, 0) = v;
    m.at(r, 1) = v;
  }
  CHECK_THROWS_WITH(features::vif_prune(m, 10.0, {"a", "a_copy"}),
                    Catch::Matchers::ContainsSubstring("keep-list conflict"));
}

namespace {

// Latent-factor matrix: `informative` noisy monotone copies of u plus pure
// noise columns; target from a logistic in u.
FeatureMatrix latent_matrix(Rng& rng, std::size_t n, int informative, int noise,
                            double noise_sd, const std::string& group_five = "") {
  std::vector<std::string> names;
  for (int f = 0; f < informative; ++f) names.push_back("sig" + std::to_string(f));
  for (int f = 0; f < noise; ++f) names.push_back("noise" + std::to_string(f));
  FeatureMatrix m = make_matrix(std::move(names), n);
  if (!group_five.empty())
    for (std::size_t c = 0; c < 5 && c < m.n_cols; ++c) m.groups[c] = group_five;
  m.target.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.normal();
    m.target[i] = rng.bernoulli(sigmoid(-2.0 + 1.8 * u)) ? 1 : 0;
    for (int f = 0; f < informative; ++f)
      m.at(i, static_cast<std::size_t>(f)) = u + rng.normal(0.0, noise_sd);
    for (int f = 0; f < noise; ++f)
      m.at(i, static_cast<std::size_t>(informative + f)) = rng.normal();
  }
  return m;
}

}  // namespace

TEST_CASE("shadow selection keeps signal, drops noise, never keeps shadows") {
  Rng rng(17);
  FeatureMatrix m = latent_matrix(rng, 4000, 3, 3, 0.4);
  features::ShadowConfig config;
  config.rounds = 5;
  config.train.rounds = 40;
  config.threads = 4;
  const auto sel = features::shadow_select(m, config, 21);
  std::set<std::string> selected(sel.selected_columns.begin(), sel.selected_columns.end());
  CHECK(selected.count("sig0") == 1);
  CHECK(selected.count("noise0") == 0);
  CHECK(selected.count("noise1") == 0);
  for (const auto& name : sel.selected_columns) CHECK(name.rfind("__shadow_", 0) != 0);
}

TEST_CASE("grouped embedding columns move as a unit") {
  Rng rng(19);
  // Five pure-noise columns share a group: dropped together.
  FeatureMatrix m = latent_matrix(rng, 3000, 0, 8, 0.4, "embedding");
  // add two informative columns so training has signal
  FeatureMatrix sig = latent_matrix(rng, 3000, 2, 0, 0.3);
  for (std::size_t c = 0; c < 2; ++c) {
    m.column_names.push_back(sig.column_names[c]);
    m.groups.push_back(sig.groups[c]);
  }
  FeatureMatrix joined = make_matrix(m.column_names, 3000);
  joined.groups = m.groups;
  joined.target = sig.target;
  for (std::size_t r = 0; r < 3000; ++r) {
    for (std::size_t c = 0; c < 8; ++c) joined.at(r, c) = m.at(r, c);
    for (std::size_t c = 0; c < 2; ++c) joined.at(r, 8 + c) = sig.at(r, c);
  }
  features::ShadowConfig config;
  config.rounds = 3;
  config.train.rounds = 30;
  config.threads = 4;
  const auto sel = features::shadow_select(joined, config, 23);
  int embedded_selected = 0;
  for (const auto& name : sel.selected_columns)
    for (std::size_t c = 0; c < 5; ++c)
      if (name == joined.column_names[c]) ++embedded_selected;
  CHECK((embedded_selected == 0 || embedded_selected == 5));
}

TEST_CASE("a 55-column candidate set boils down to roughly 20") {
  // 20 informative columns carrying independent signal dimensions plus 35
  // pure-noise columns.
  Rng rng(25);
  const int informative = 20, noise = 35;
  const std::size_t n = 6000;
  std::vector<std::string> names;
  for (int f = 0; f < informative; ++f) names.push_back("sig" + std::to_string(f));
  for (int f = 0; f < noise; ++f) names.push_back("noise" + std::to_string(f));
  FeatureMatrix m = make_matrix(std::move(names), n);
  m.target.resize(n);
  const double scale = 2.4 / std::sqrt(double(informative));
  for (std::size_t i = 0; i < n; ++i) {
    double lin = -1.2;
    for (int f = 0; f < informative; ++f) {
      const double u = rng.normal();
      lin += scale * u;
      m.at(i, static_cast<std::size_t>(f)) = u + rng.normal(0.0, 0.3);
    }
    for (int f = 0; f < noise; ++f)
      m.at(i, static_cast<std::size_t>(informative + f)) = rng.normal();
    m.target[i] = rng.bernoulli(sigmoid(lin)) ? 1 : 0;
  }
  features::ShadowConfig config;
  config.rounds = 5;
  config.sample_cap = n;
  config.train.rounds = 60;
  config.threads = 8;
  const auto sel = features::shadow_select(m, config, 27);
  CHECK(sel.selected_columns.size() >= 15);
  CHECK(sel.selected_columns.size() <= 25);
}

TEST_CASE("feature pipeline round trips through json and reproduces transforms") {
  Rng rng(29);
  std::vector<data::LabeledRecord> records;
  for (int i = 0; i < 600; ++i) {
    data::LabeledRecord r;
    r.snapshot = base_snapshot();
    r.snapshot.company_id = "c" + std::to_string(i);
    r.snapshot.legal_type = static_cast<data::LegalType>(rng.uniform_int(0, 2));
    r.snapshot.special_status =
        rng.bernoulli(0.05) ? data::SpecialStatus::Dispute : data::SpecialStatus::None;
    r.snapshot.nrt_balance = rng.lognormal(8.0, 1.0);
    r.snapshot.nrt_used = r.snapshot.nrt_balance * rng.uniform01();
    r.snapshot.rt_non_mortgages_balance = rng.lognormal(9.0, 1.0);
    r.snapshot.worst_payment_delay_6m = rng.uniform_int(0, 4);
    r.snapshot.max_past_due_days_6m = rng.uniform_int(0, 3) * 60;
    r.snapshot.nrt_contracts = rng.uniform_int(0, 3);
    for (auto& v : r.snapshot.sector_vector) v = rng.normal();
    r.target = rng.bernoulli(sigmoid(-2.5 + 0.8 * double(r.snapshot.worst_payment_delay_6m)));
    records.push_back(r);
  }
  features::FeaturePipeline pipeline;
  pipeline.config.run_shadow = false;  // deterministic small test
  pipeline.fit(records, 31);
  REQUIRE_FALSE(pipeline.final_columns.empty());

  const auto m = pipeline.transform(records);
  CHECK(m.n_rows == records.size());
  CHECK(m.column_names == pipeline.final_columns);

  const auto j = features::to_json(pipeline);
  const auto restored = features::pipeline_from_json(j);
  const auto m2 = restored.transform(records);
  CHECK(m2.values == m.values);
}
