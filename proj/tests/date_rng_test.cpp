#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <vector>

#include "hydro_embed/date.hpp"
#include "hydro_embed/rng.hpp"

namespace he = hydro_embed;

namespace {

// Independent calendar walker: advances one day at a time with its own
// month-length table.
he::DateStamp walk(he::DateStamp d, int n) {
  auto leap = [](int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; };
  const int len[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  for (int i = 0; i < n; ++i) {
    const int ml = d.month == 2 && leap(d.year) ? 29 : len[d.month - 1];
    if (++d.day > ml) {
      d.day = 1;
      if (++d.month > 12) {
        d.month = 1;
        ++d.year;
      }
    }
  }
  return d;
}

}  // namespace

TEST(Date, AddDaysMatchesCalendarWalk) {
  const he::DateStamp start{1987, 2, 27};
  he::DateStamp expected = start;
  for (int k = 0; k < 12000; ++k) {
    ASSERT_EQ(he::add_days(start, k), expected) << "k=" << k;
    ASSERT_EQ(he::days_between(start, expected), k);
    expected = walk(expected, 1);
  }
}

TEST(Date, WaterYearDecadeLength) {
  // Ten years plus the leap days of 1992 and 1996.
  EXPECT_EQ(he::days_between({1989, 10, 1}, {1999, 9, 30}) + 1, 3652);
  EXPECT_EQ(he::days_between({1999, 10, 1}, {2008, 9, 30}) + 1, 3288);
}

TEST(Date, OrderingAndValidation) {
  EXPECT_LT((he::DateStamp{1999, 9, 30}), (he::DateStamp{1999, 10, 1}));
  EXPECT_TRUE(he::is_valid({2000, 2, 29}));
  EXPECT_FALSE(he::is_valid({1900, 2, 29}));
  EXPECT_FALSE(he::is_valid({2001, 13, 1}));
  EXPECT_THROW(he::make_date(2001, 4, 31), he::Error);
  EXPECT_EQ(he::parse_iso_date("2005-10-01"), (he::DateStamp{2005, 10, 1}));
  EXPECT_THROW(he::parse_iso_date("2005/10/01"), he::Error);
}

TEST(Rng, SplitMix64ReferenceValues) {
  // First outputs of splitmix64 seeded with 0 (reference implementation).
  std::uint64_t s = 0;
  EXPECT_EQ(he::splitmix64(s), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(he::splitmix64(s), 0x6E789E6AA1B965F4ULL);
  EXPECT_EQ(he::splitmix64(s), 0x06C45D188009454FULL);
}

TEST(Rng, SameSeedSameStream) {
  he::Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    differs |= x != c.next();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, UniformMomentsAndRange) {
  he::Rng rng(1);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.005);
}

TEST(Rng, NormalMoments) {
  he::Rng rng(3);
  double s1 = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s1 += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s1 / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Rng, ShuffleIsPermutationAndCoversAllOrders) {
  std::set<std::vector<int>> seen;
  for (std::uint64_t seed = 0; seed < 600; ++seed) {
    std::vector<int> v{0, 1, 2};
    he::Rng rng(seed);
    he::shuffle(std::span(v), rng);
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    ASSERT_EQ(sorted, (std::vector<int>{0, 1, 2}));
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 6u);
}
