#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "hydro_embed/eval.hpp"
#include "hydro_embed/synth.hpp"
#include "test_util.hpp"

namespace he = hydro_embed;

namespace {

/// Two-pass textbook evaluation in long double.
double nse_oracle(const std::vector<double>& o, const std::vector<double>& m) {
  long double mean = 0;
  for (double x : o) mean += x;
  mean /= static_cast<long double>(o.size());
  long double num = 0, den = 0;
  for (std::size_t i = 0; i < o.size(); ++i) {
    num += (static_cast<long double>(m[i]) - o[i]) * (static_cast<long double>(m[i]) - o[i]);
    den += (o[i] - mean) * (o[i] - mean);
  }
  return static_cast<double>(1.0L - num / den);
}

template <class F>
he::ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const he::Error& e) {
    return e.code();
  }
  return he::ErrorCode::InvalidConfig;
}

}  // namespace

TEST(Nse, PerfectSimulationIsOne) {
  const std::vector<double> q{1, 2, 3};
  EXPECT_EQ(he::nse(q, q), 1.0);
}

TEST(Nse, MeanPredictorIsZero) {
  const std::vector<double> q{1, 2, 3, 6}, m{3, 3, 3, 3};
  EXPECT_EQ(he::nse(q, m), 0.0);
}

TEST(Nse, HandCase) {
  const std::vector<double> q{0, 1, 2, 3}, m{0, 1, 2, 4};
  EXPECT_NEAR(he::nse(q, m), 0.8, 1e-15);
}

TEST(Nse, Errors) {
  const std::vector<double> one{1.0}, two{1.0, 2.0}, flat{4.0, 4.0};
  EXPECT_EQ(code_of([&] { he::nse(one, one); }), he::ErrorCode::LengthMismatch);
  EXPECT_EQ(code_of([&] { he::nse(two, one); }), he::ErrorCode::LengthMismatch);
  EXPECT_EQ(code_of([&] { he::nse(flat, two); }), he::ErrorCode::ZeroVarianceObserved);
}

TEST(Nse, MatchesOracleOnRandomSeries) {
  std::mt19937_64 gen(2024);
  std::lognormal_distribution<double> flow(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.5);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + gen() % 400;
    std::vector<double> o(n), m(n);
    for (std::size_t i = 0; i < n; ++i) {
      o[i] = flow(gen);
      m[i] = o[i] + noise(gen) * (trial % 3);
    }
    const double expect = nse_oracle(o, m);
    const double got = he::nse(o, m);
    EXPECT_LE(std::abs(got - expect), 1e-12 * std::max(1.0, std::abs(expect))) << trial;
    EXPECT_LE(got, 1.0);
  }
}

TEST(Nse, AffineCovariance) {
  // Values on a dyadic grid keep every intermediate exact.
  const std::vector<double> o{0.5, 1.25, 3.0, 2.0, 0.75}, m{0.75, 1.0, 2.5, 2.25, 1.0};
  const double base = he::nse(o, m);
  for (double a : {2.0, -4.0, 0.5}) {
    for (double b : {0.0, 8.0, -16.0}) {
      std::vector<double> o2, m2;
      for (double x : o) o2.push_back(a * x + b);
      for (double x : m) m2.push_back(a * x + b);
      EXPECT_EQ(he::nse(o2, m2), base) << a << ' ' << b;
    }
  }
}

TEST(Aggregate, OddCount) {
  const std::vector<double> v{0.9, 0.5, 0.7};
  const auto a = he::aggregate(v);
  EXPECT_NEAR(*a.median, 0.7, 1e-15);
  EXPECT_NEAR(*a.mean, 0.7, 1e-15);
  EXPECT_EQ(a.num_negative, 0);
}

TEST(Aggregate, EvenCountAndNegatives) {
  const std::vector<double> v{-0.1, 0.2};
  const auto a = he::aggregate(v);
  EXPECT_NEAR(*a.median, 0.05, 1e-15);
  EXPECT_EQ(a.num_negative, 1);
  const std::vector<double> z{0.0, -0.0, 0.3};
  EXPECT_EQ(he::aggregate(z).num_negative, 0);
}

TEST(Aggregate, EmptyIsUndefined) {
  const auto a = he::aggregate({});
  EXPECT_FALSE(a.median);
  EXPECT_FALSE(a.mean);
  EXPECT_EQ(a.num_negative, 0);
}

TEST(Report, EmptyCsvHasUndefinedFooter) {
  const auto r = he::make_report({}, {{"b1", "zero observed variance"}});
  const auto csv = he::report_to_csv(r);
  EXPECT_EQ(csv,
            "basin_id,nse,num_samples\n# skipped,b1,zero observed variance\n# median_nse,undefined\n"
            "# mean_nse,undefined\n# num_negative,0\n");
  std::istringstream in(csv);
  const auto back = he::report_from_csv(in);
  EXPECT_FALSE(back.median_nse);
  ASSERT_EQ(back.skipped_basins.size(), 1u);
  EXPECT_EQ(back.skipped_basins[0].reason, "zero observed variance");
}

TEST(Report, CsvRoundTripAndFooterConsistency) {
  const auto r = he::make_report({{"01013500", 0.123456789012345, 3650}, {"02", -1.0 / 3.0, 12}});
  test_util::TempDir dir("report");
  he::write_report(r, dir.path() / "r.csv", he::ReportFormat::Csv);
  const auto back = he::read_report(dir.path() / "r.csv");
  EXPECT_EQ(back.scores, r.scores);
  std::vector<double> values;
  for (const auto& s : back.scores) values.push_back(s.nse);
  const auto again = he::aggregate(values);
  EXPECT_NEAR(*back.median_nse, *again.median, 1e-12);
  EXPECT_NEAR(*back.mean_nse, *again.mean, 1e-12);
  EXPECT_EQ(back.num_negative, again.num_negative);
  EXPECT_EQ(back.num_negative, 1);
}

TEST(Report, TableLayout) {
  const auto r = he::make_report({{"a", 0.5, 10}, {"b", -0.25, 10}, {"c", 0.75, 10}});
  const auto row = he::table_row("embedding, k=20", r);
  const auto text = he::format_table(std::span(&row, 1));
  EXPECT_NE(text.find("NSE mean"), std::string::npos);
  EXPECT_NE(text.find("NSE median"), std::string::npos);
  EXPECT_NE(text.find("0.33"), std::string::npos);
  EXPECT_NE(text.find("0.50"), std::string::npos);
  EXPECT_EQ(text.back(), '\n');
  EXPECT_EQ(text.substr(text.size() - 3), " 1\n");
}

TEST(Report, UnwritablePathIsIoFailure) {
  EXPECT_EQ(code_of([] { he::write_report({}, "/nonexistent_dir/x/r.csv", he::ReportFormat::Csv); }),
            he::ErrorCode::IoFailure);
}

TEST(Evaluate, ScoresInPhysicalUnitsAndSkipsUnknownBasins) {
  auto records = he::fixture_records(he::make_fixture(3, 400, 9, true));
  he::TrainConfig cfg;
  cfg.split = {{2001, 10, 1}, {2002, 6, 30}, {2002, 7, 1}, {2002, 11, 4}};
  cfg.mode = he::Mode::Embedding;
  cfg.lookback = 15;
  cfg.hidden_size = 4;
  cfg.embedding_dim = 2;
  cfg.epochs = 1;
  const auto ck = he::train_run(std::span(records).first(2), cfg).checkpoint;
  const auto report = he::evaluate(records, ck, std::nullopt, 2);
  ASSERT_EQ(report.scores.size(), 2u);
  ASSERT_EQ(report.skipped_basins.size(), 1u);
  EXPECT_EQ(report.skipped_basins[0].basin_id, "basin_002");

  // Oracle: de-standardize the model output and score against raw discharge.
  const auto samples = he::make_samples(records[1], 1, cfg.split, he::Phase::Eval, ck.standardizers, cfg.lookback);
  const auto pred = he::predict(samples, ck.params, ck.model);
  std::vector<double> obs, sim;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    obs.push_back(*records[1].discharge.values[static_cast<std::size_t>(
        he::days_between(records[1].discharge.start, samples[i].target_date))]);
    sim.push_back(ck.standardizers.target.invert(pred(static_cast<Eigen::Index>(i))));
  }
  EXPECT_EQ(report.scores[1].basin_id, "basin_001");
  EXPECT_EQ(report.scores[1].num_samples, static_cast<int>(samples.size()));
  EXPECT_EQ(samples.size(), 127u);  // windows may reach back into the training period
  EXPECT_NEAR(report.scores[1].nse, nse_oracle(obs, sim), 1e-12);
  EXPECT_EQ(report.scores[1].nse, he::evaluate(records, ck, std::nullopt, 0).scores[1].nse);
}

TEST(Evaluate, StaticAttributeMismatchIsIncompatible) {
  auto records = he::fixture_records(he::make_fixture(2, 400, 9, true));
  he::TrainConfig cfg;
  cfg.split = {{2001, 10, 1}, {2002, 6, 30}, {2002, 7, 1}, {2002, 11, 4}};
  cfg.mode = he::Mode::Static;
  cfg.lookback = 15;
  cfg.hidden_size = 3;
  cfg.epochs = 0;
  const auto ck = he::train_run(records, cfg).checkpoint;
  for (auto& r : records) {
    r.attributes.names.push_back("extra");
    r.attributes.values.push_back(1.0);
  }
  EXPECT_EQ(code_of([&] { he::evaluate(records, ck); }), he::ErrorCode::IncompatibleCheckpoint);
}
