#include "agni/date.hpp"

#include <charconv>
#include <cstdio>

#include "agni/error.hpp"

namespace agni {

std::string format_date(Date d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

Date parse_date(std::string_view text) {
  int y = 0;
  unsigned m = 0, dd = 0;
  auto bad = [&] { return ConfigError("malformed date '" + std::string(text) + "', expected YYYY-MM-DD"); };
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') throw bad();
  const char* p = text.data();
  if (std::from_chars(p, p + 4, y).ec != std::errc{}) throw bad();
  if (std::from_chars(p + 5, p + 7, m).ec != std::errc{}) throw bad();
  if (std::from_chars(p + 8, p + 10, dd).ec != std::errc{}) throw bad();
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{dd}};
  if (!ymd.ok()) throw bad();
  return Date{ymd};
}

}  // namespace agni
