#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace epicontrol {

using Date = std::chrono::sys_days;

/// Parses a strict ISO-8601 calendar day ("2020-03-18").
Date parse_date(std::string_view text);
std::string format_date(Date d);

inline int days_between(Date from, Date to) { return static_cast<int>((to - from).count()); }
inline Date add_days(Date d, int n) { return d + std::chrono::days{n}; }

}  // namespace epicontrol
