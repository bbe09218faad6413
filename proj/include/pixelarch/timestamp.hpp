#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace pixelarch {

// Civil-calendar helpers (proleptic Gregorian, UTC). Days are counted from
// 1970-01-01.
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) noexcept {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

constexpr bool is_leap_year(std::int64_t y) noexcept {
  return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

constexpr unsigned days_in_month(std::int64_t y, unsigned m) noexcept {
  constexpr unsigned kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return m == 2 && is_leap_year(y) ? 29 : kDays[m - 1];
}

struct CivilTime {
  int year = 1970;
  unsigned month = 1;
  unsigned day = 1;
  unsigned hour = 0;
  unsigned minute = 0;
  unsigned second = 0;
};

// Seconds since the Unix epoch.
constexpr std::int64_t to_epoch_seconds(const CivilTime& t) noexcept {
  return days_from_civil(t.year, t.month, t.day) * 86400 + t.hour * 3600 +
         t.minute * 60 + t.second;
}

constexpr CivilTime from_epoch_seconds(std::int64_t s) noexcept {
  std::int64_t days = s >= 0 ? s / 86400 : (s - 86399) / 86400;
  std::int64_t rem = s - days * 86400;
  days += 719468;
  const std::int64_t era = (days >= 0 ? days : days - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(days - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  CivilTime t;
  t.day = doy - (153 * mp + 2) / 5 + 1;
  t.month = mp < 10 ? mp + 3 : mp - 9;
  t.year = static_cast<int>(static_cast<std::int64_t>(yoe) + era * 400 + (t.month <= 2));
  t.hour = static_cast<unsigned>(rem / 3600);
  t.minute = static_cast<unsigned>(rem % 3600 / 60);
  t.second = static_cast<unsigned>(rem % 60);
  return t;
}

// Archive timestamps are 14 digits: YYYYMMDDhhmmss (UTC). Shorter digit
// strings are accepted as prefixes the way the archive accepts them
// ("2020" means 2020-01-01 00:00:00).
inline std::optional<CivilTime> parse_archive_timestamp(std::string_view ts) {
  if (ts.size() < 4 || ts.size() > 14 || ts.size() % 2 != 0) return std::nullopt;
  for (char c : ts) {
    if (c < '0' || c > '9') return std::nullopt;
  }
  auto field = [&](std::size_t pos, std::size_t len, unsigned dflt) -> unsigned {
    if (pos + len > ts.size()) return dflt;
    unsigned v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) v = v * 10 + static_cast<unsigned>(ts[i] - '0');
    return v;
  };
  CivilTime t;
  t.year = static_cast<int>(field(0, 4, 0));
  t.month = field(4, 2, 1);
  t.day = field(6, 2, 1);
  t.hour = field(8, 2, 0);
  t.minute = field(10, 2, 0);
  t.second = field(12, 2, 0);
  if (t.month < 1 || t.month > 12) return std::nullopt;
  if (t.day < 1 || t.day > days_in_month(t.year, t.month)) return std::nullopt;
  if (t.hour > 23 || t.minute > 59 || t.second > 59) return std::nullopt;
  return t;
}

inline std::string format_archive_timestamp(const CivilTime& t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d%02u%02u%02u%02u%02u", t.year, t.month, t.day,
                t.hour, t.minute, t.second);
  return buf;
}

inline std::string format_iso8601(const CivilTime& t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02u:%02u:%02uZ", t.year, t.month,
                t.day, t.hour, t.minute, t.second);
  return buf;
}

inline std::int64_t now_epoch_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

inline int current_year() { return from_epoch_seconds(now_epoch_seconds()).year; }

}  // namespace pixelarch
