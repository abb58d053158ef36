#pragma once

#include <compare>
#include <cstdint>
#include <cstdio>
#include <string>

#include "hydro_embed/error.hpp"

namespace hydro_embed {

/// Proleptic Gregorian calendar date.
struct DateStamp {
  int year = 1970;
  int month = 1;
  int day = 1;

  friend constexpr auto operator<=>(const DateStamp&, const DateStamp&) = default;
};

constexpr bool is_leap_year(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

constexpr int days_in_month(int y, int m) {
  constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return (m == 2 && is_leap_year(y)) ? 29 : kDays[m - 1];
}

constexpr bool is_valid(const DateStamp& d) {
  return d.month >= 1 && d.month <= 12 && d.day >= 1 && d.day <= days_in_month(d.year, d.month);
}

// Days since 1970-01-01 (Howard Hinnant's days_from_civil).
constexpr std::int64_t to_day_number(const DateStamp& d) {
  const std::int64_t y = d.year - (d.month <= 2 ? 1 : 0);
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const std::int64_t yoe = y - era * 400;
  const std::int64_t mp = (d.month + 9) % 12;
  const std::int64_t doy = (153 * mp + 2) / 5 + d.day - 1;
  const std::int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + doe - 719468;
}

constexpr DateStamp from_day_number(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const std::int64_t doe = z - era * 146097;
  const std::int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const std::int64_t mp = (5 * doy + 2) / 153;
  const int day = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  const int month = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
  const int year = static_cast<int>(yoe + era * 400 + (month <= 2 ? 1 : 0));
  return {year, month, day};
}

constexpr DateStamp add_days(const DateStamp& d, std::int64_t n) {
  return from_day_number(to_day_number(d) + n);
}

/// Signed number of days from `a` to `b`.
constexpr std::int64_t days_between(const DateStamp& a, const DateStamp& b) {
  return to_day_number(b) - to_day_number(a);
}

inline DateStamp make_date(int year, int month, int day) {
  DateStamp d{year, month, day};
  if (!is_valid(d)) {
    throw Error(ErrorCode::InvalidDate, std::to_string(year) + "-" + std::to_string(month) + "-" +
                                            std::to_string(day));
  }
  return d;
}

inline std::string to_string(const DateStamp& d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", d.year, d.month, d.day);
  return buf;
}

/// Parses `YYYY-MM-DD`.
inline DateStamp parse_iso_date(const std::string& s) {
  int y = 0, m = 0, d = 0;
  char tail = 0;
  if (std::sscanf(s.c_str(), "%d-%d-%d%c", &y, &m, &d, &tail) != 3) {
    throw Error(ErrorCode::InvalidDate, "expected YYYY-MM-DD, got '" + s + "'");
  }
  return make_date(y, m, d);
}

}  // namespace hydro_embed
