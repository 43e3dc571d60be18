#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

namespace agni {

// Calendar date with day resolution (days since 1970-01-01).
using Date = std::chrono::sys_days;
using Days = std::chrono::days;

inline std::int64_t to_epoch_days(Date d) { return d.time_since_epoch().count(); }
inline Date from_epoch_days(std::int64_t n) { return Date{Days{n}}; }

// YYYY-MM-DD
std::string format_date(Date d);
// Throws ConfigError on malformed input.
Date parse_date(std::string_view text);

}  // namespace agni
