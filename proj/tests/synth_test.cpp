#include <gtest/gtest.h>

#include <cmath>

#include "hydro_embed/synth.hpp"
#include "test_util.hpp"

namespace he = hydro_embed;

TEST(GenerateForcing, Deterministic) {
  EXPECT_EQ(he::generate_forcing(3, 500), he::generate_forcing(3, 500));
  EXPECT_FALSE(he::generate_forcing(3, 500) == he::generate_forcing(4, 500));
}

TEST(GenerateForcing, SingleDayIsFinite) {
  const auto f = he::generate_forcing(1, 1);
  ASSERT_EQ(f.num_days(), 1);
  EXPECT_TRUE(f.values.allFinite());
}

TEST(GenerateForcing, WetDayFrequencyAndDepth) {
  const auto f = he::generate_forcing(99, 10000);
  int wet = 0;
  double depth = 0.0;
  for (int t = 0; t < 10000; ++t) {
    const double p = f.values(t, 0);
    ASSERT_GE(p, 0.0);
    if (p > 0.0) {
      ++wet;
      depth += p;
    }
  }
  EXPECT_NEAR(wet / 10000.0, 0.3, 0.02);
  EXPECT_NEAR(depth / wet, 8.0, 0.5);
}

TEST(GenerateForcing, SeasonalTemperature) {
  const auto f = he::generate_forcing(5, 365, {2001, 1, 1});
  // Mid-winter rows are colder than mid-summer rows on average.
  EXPECT_LT(f.values.block(0, 1, 30, 1).mean() + 10.0, f.values.block(182, 1, 30, 1).mean());
  EXPECT_TRUE((f.values.col(2).array() > f.values.col(1).array()).all());
}

TEST(Simulate, GeometricDecayWithoutRain) {
  he::ForcingSeries f = he::generate_forcing(1, 6);
  f.values.col(0).setZero();
  he::SynthBasinSpec s{"b", 0.5, 0.2, 100.0, 0};
  const auto q = he::simulate_discharge(s, f);
  const double expect[] = {50, 25, 12.5, 6.25, 3.125, 1.5625};
  for (int t = 0; t < 6; ++t) EXPECT_EQ(*q.values[static_cast<std::size_t>(t)], expect[t]);
}

TEST(Simulate, FullDrainageEchoesPreviousRain) {
  const auto f = he::generate_forcing(8, 200);
  he::SynthBasinSpec s{"b", 1.0, 0.0, 0.0, 0};
  const auto q = he::simulate_discharge(s, f);
  EXPECT_EQ(*q.values[0], 0.0);
  for (int t = 1; t < 200; ++t) EXPECT_EQ(*q.values[static_cast<std::size_t>(t)], f.values(t - 1, 0));
}

TEST(Simulate, MassBalanceAndNonNegativity) {
  const auto f = he::generate_forcing(21, 1000);
  he::Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    he::SynthBasinSpec s{"b", rng.uniform(0.01, 1.0), rng.uniform(0.0, 0.95), rng.uniform(0.0, 200.0), 0};
    const auto r = he::simulate(s, f);
    double in = 0.0, out = 0.0;
    for (int t = 0; t < 1000; ++t) {
      const double q = *r.discharge.values[static_cast<std::size_t>(t)];
      ASSERT_GE(q, 0.0);
      in += (1.0 - s.loss_fraction) * f.values(t, 0);
      out += q;
    }
    const double residual = (in - out) - (r.final_storage - s.storage0);
    EXPECT_LT(std::abs(residual), 1e-9 * std::max({in, out, 1.0})) << trial;
  }
}

TEST(SynthBasinSpec, RejectsOutOfRangeParameters) {
  EXPECT_THROW((he::SynthBasinSpec{"b", 0.0, 0.1, 0.0, 0}.validate()), he::Error);
  EXPECT_THROW((he::SynthBasinSpec{"b", 1.1, 0.1, 0.0, 0}.validate()), he::Error);
  EXPECT_THROW((he::SynthBasinSpec{"b", 0.5, 1.0, 0.0, 0}.validate()), he::Error);
  EXPECT_THROW((he::SynthBasinSpec{"b", 0.5, 0.1, -1.0, 0}.validate()), he::Error);
  EXPECT_NO_THROW((he::SynthBasinSpec{"b", 1.0, 0.0, 0.0, 0}.validate()));
}

TEST(MakeFixture, ParametersDistinctAndInRange) {
  const auto fx = he::make_fixture(50, 10, 7, true);
  for (std::size_t i = 0; i < fx.basins.size(); ++i) {
    const auto& a = fx.basins[i];
    EXPECT_GE(a.runoff_coeff, 0.02);
    EXPECT_LE(a.runoff_coeff, 0.6);
    EXPECT_GE(a.loss_fraction, 0.0);
    EXPECT_LT(a.loss_fraction, 0.6);
    EXPECT_EQ(a.precip_seed, fx.basins[0].precip_seed);
    for (std::size_t j = 0; j < i; ++j) {
      EXPECT_FALSE(a.runoff_coeff == fx.basins[j].runoff_coeff && a.loss_fraction == fx.basins[j].loss_fraction);
    }
  }
  const auto indep = he::make_fixture(3, 10, 7, false);
  EXPECT_NE(indep.basins[0].precip_seed, indep.basins[1].precip_seed);
}

TEST(EmitFixture, FilesAndRoundTrip) {
  test_util::TempDir dir("synth");
  const auto fx = he::make_fixture(2, 400, 12, true);
  he::emit_fixture(fx, dir.path());
  int files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir.path())) files += e.is_regular_file();
  EXPECT_EQ(files, 5);
  EXPECT_EQ(test_util::read_file(dir.path() / "forcing" / "basin_000.txt"),
            test_util::read_file(dir.path() / "forcing" / "basin_001.txt"));

  const auto loaded = he::load_collection(dir.path(), std::nullopt);
  const auto expect = he::fixture_records(fx);
  ASSERT_EQ(loaded.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(loaded[i].basin_id, expect[i].basin_id);
    EXPECT_EQ(loaded[i].forcing, expect[i].forcing);
    EXPECT_EQ(loaded[i].discharge.values, expect[i].discharge.values);
    EXPECT_EQ(loaded[i].attributes.values, (std::vector<double>{fx.basins[i].runoff_coeff, fx.basins[i].loss_fraction}));
  }
}

TEST(EmitFixture, IndependentForcingDiffers) {
  test_util::TempDir dir("synth_indep");
  he::emit_fixture(he::make_fixture(2, 50, 12, false), dir.path());
  EXPECT_NE(test_util::read_file(dir.path() / "forcing" / "basin_000.txt"),
            test_util::read_file(dir.path() / "forcing" / "basin_001.txt"));
}

TEST(Identifiability, SharedForcingStillDistinguishesBasins) {
  const auto records = he::fixture_records(he::make_fixture(8, 1826, 7, true));
  for (std::size_t a = 0; a < records.size(); ++a) {
    for (std::size_t b = 0; b < a; ++b) {
      const auto& qa = records[a].discharge.values;
      const auto& qb = records[b].discharge.values;
      double ma = 0, mb = 0;
      for (std::size_t t = 0; t < qa.size(); ++t) {
        ma += *qa[t];
        mb += *qb[t];
      }
      ma /= static_cast<double>(qa.size());
      mb /= static_cast<double>(qb.size());
      double sab = 0, saa = 0, sbb = 0;
      for (std::size_t t = 0; t < qa.size(); ++t) {
        sab += (*qa[t] - ma) * (*qb[t] - mb);
        saa += (*qa[t] - ma) * (*qa[t] - ma);
        sbb += (*qb[t] - mb) * (*qb[t] - mb);
      }
      EXPECT_LT(sab / std::sqrt(saa * sbb), 0.999) << a << ' ' << b;
    }
  }
}
