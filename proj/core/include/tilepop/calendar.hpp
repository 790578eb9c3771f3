#pragma once

#include <array>
#include <chrono>
#include <string>
#include <string_view>
#include <vector>

namespace tilepop {

using Date = std::chrono::year_month_day;

/// Collapsed day-of-week category. Monday to Thursday are pooled into Weekday.
enum class DayType { Friday, Saturday, Sunday, Weekday };

inline constexpr std::array<DayType, 4> kDayTypes{DayType::Friday, DayType::Saturday, DayType::Sunday,
                                                  DayType::Weekday};

std::string_view day_type_name(DayType type);
DayType parse_day_type(std::string_view name);
DayType day_type_of(Date date);

/// "2019-03-16"
Date parse_iso_date(std::string_view text);
std::string format_iso_date(Date date);

/// "20190316", as used in traffic file names.
Date parse_compact_date(std::string_view text);
std::string format_compact_date(Date date);

/// Inclusive range of calendar dates.
std::vector<Date> date_range(Date first, Date last);

}  // namespace tilepop
