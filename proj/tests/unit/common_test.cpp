#include <random>
#include <set>

#include <gtest/gtest.h>

#include "ehr/common/ids.hpp"
#include "ehr/common/result.hpp"
#include "ehr/common/time.hpp"
#include "ehr/common/utf8.hpp"

namespace ehr {
namespace {

TEST(Utf8, CountsCodePointsNotBytes) {
  EXPECT_EQ(utf8::length("abc"), 3u);
  EXPECT_EQ(utf8::length("\xC3\xA9t\xC3\xA9"), 3u);      // été
  EXPECT_EQ(utf8::length("\xE2\x82\xAC" "5"), 2u);       // €5
  EXPECT_EQ(utf8::length("\xF0\x9F\x98\x80"), 1u);       // one emoji
  EXPECT_EQ(utf8::length("\xFF\xFE"), 2u);               // invalid bytes count once each
}

TEST(Utf8, PrefixNeverSplitsACodePoint) {
  const std::string s = "a\xC3\xA9" "b\xE2\x82\xAC";
  for (std::size_t n = 0; n <= 5; ++n) {
    const auto p = utf8::prefix(s, n);
    EXPECT_TRUE(utf8::is_valid(p)) << n;
    EXPECT_EQ(utf8::length(p), std::min<std::size_t>(n, 4));
  }
}

TEST(Utf8, EllipsizeRespectsBudget) {
  const std::string s(300, 'x');
  const auto e = utf8::ellipsize(s, 182);
  EXPECT_EQ(utf8::length(e), 182u);
  EXPECT_EQ(e.substr(e.size() - 2), "..");
  EXPECT_EQ(utf8::ellipsize("short", 182), "short");
}

TEST(Time, CivilDaysRoundTripAgainstKnownDates) {
  EXPECT_EQ(days_from_civil({1970, 1, 1}), 0);
  EXPECT_EQ(days_from_civil({2000, 3, 1}), 11017);
  EXPECT_EQ(days_from_civil({2025, 1, 1}), 20089);
  std::mt19937 rng(5);
  for (int i = 0; i < 2000; ++i) {
    const std::int64_t d = static_cast<std::int64_t>(rng() % 200000) - 50000;
    EXPECT_EQ(days_from_civil(civil_from_days(d)), d);
  }
}

TEST(Time, ParseDateRejectsImpossibleDays) {
  EXPECT_TRUE(parse_date("2024-02-29"));
  EXPECT_FALSE(parse_date("2023-02-29"));
  EXPECT_FALSE(parse_date("2023-13-01"));
  EXPECT_FALSE(parse_date("2023-1-01"));
  EXPECT_FALSE(parse_date("2023-01-01x"));
  EXPECT_EQ(format_date(*parse_date("1988-03-14")), "1988-03-14");
}

TEST(Time, PeriodContainsItsWholeMonthOnly) {
  const auto p = parse_period("2025-02");
  ASSERT_TRUE(p);
  const Millis feb1 = start_of_day({2025, 2, 1});
  const Millis mar1 = start_of_day({2025, 3, 1});
  EXPECT_TRUE(p->contains(feb1));
  EXPECT_TRUE(p->contains(mar1 - 1));
  EXPECT_FALSE(p->contains(mar1));
  EXPECT_FALSE(p->contains(feb1 - 1));
  EXPECT_FALSE(parse_period("2025-2"));
  EXPECT_FALSE(parse_period("2025-00"));
  EXPECT_EQ(format_period(*p), "2025-02");
}

TEST(Ids, SeededGeneratorIsReproducibleAndWellFormed) {
  IdGenerator a(9), b(9), c(10);
  std::set<std::string> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    ASSERT_EQ(x.size(), 36u);
    EXPECT_EQ(x[14], '4');
    EXPECT_TRUE(seen.insert(x).second);
  }
  EXPECT_NE(IdGenerator(9).next(), c.next());
  EXPECT_NE(derive_seed(1, "H1"), derive_seed(1, "H2"));
  EXPECT_EQ(derive_seed(1, "H1"), derive_seed(1, "H1"));
}

TEST(Result, CarriesValueOrError) {
  Result<int> ok = 4;
  Result<int> bad = make_error(Errc::not_found, "x");
  EXPECT_TRUE(ok);
  EXPECT_EQ(*ok, 4);
  EXPECT_FALSE(bad);
  EXPECT_EQ(bad.code(), Errc::not_found);
  EXPECT_THROW((void)bad.value(), BadResultAccess);
  EXPECT_EQ(errc_name(Errc::link_down), "LINK_DOWN");
  EXPECT_EQ(errc_name(Errc::unsuppressed_input), "UNSUPPRESSED_INPUT");
}

}  // namespace
}  // namespace ehr
