#include "tilepop/calendar.hpp"

#include <cstdio>

#include "tilepop/error.hpp"
#include "tilepop/io.hpp"

namespace tilepop {

namespace {

Date make_date(std::uint64_t y, std::uint64_t m, std::uint64_t d, std::string_view text) {
    Date date{std::chrono::year{static_cast<int>(y)}, std::chrono::month{static_cast<unsigned>(m)},
              std::chrono::day{static_cast<unsigned>(d)}};
    if (!date.ok()) throw ValidationError("invalid calendar date '" + std::string(text) + "'");
    return date;
}

}  // namespace

std::string_view day_type_name(DayType type) {
    switch (type) {
        case DayType::Friday: return "Friday";
        case DayType::Saturday: return "Saturday";
        case DayType::Sunday: return "Sunday";
        case DayType::Weekday: return "Weekday";
    }
    return "?";
}

DayType parse_day_type(std::string_view name) {
    for (DayType t : kDayTypes) {
        if (day_type_name(t) == name) return t;
    }
    throw ValidationError("unknown day type '" + std::string(name) + "'");
}

DayType day_type_of(Date date) {
    const std::chrono::weekday wd{std::chrono::sys_days{date}};
    if (wd == std::chrono::Friday) return DayType::Friday;
    if (wd == std::chrono::Saturday) return DayType::Saturday;
    if (wd == std::chrono::Sunday) return DayType::Sunday;
    return DayType::Weekday;
}

Date parse_iso_date(std::string_view text) {
    std::uint64_t y = 0, m = 0, d = 0;
    if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !parse_uint(text.substr(0, 4), y) ||
        !parse_uint(text.substr(5, 2), m) || !parse_uint(text.substr(8, 2), d)) {
        throw ValidationError("expected YYYY-MM-DD date, got '" + std::string(text) + "'");
    }
    return make_date(y, m, d, text);
}

std::string format_iso_date(Date date) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()),
                  static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
    return buf;
}

Date parse_compact_date(std::string_view text) {
    std::uint64_t y = 0, m = 0, d = 0;
    if (text.size() != 8 || !parse_uint(text.substr(0, 4), y) || !parse_uint(text.substr(4, 2), m) ||
        !parse_uint(text.substr(6, 2), d)) {
        throw ValidationError("expected YYYYMMDD date, got '" + std::string(text) + "'");
    }
    return make_date(y, m, d, text);
}

std::string format_compact_date(Date date) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d%02u%02u", static_cast<int>(date.year()),
                  static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
    return buf;
}

std::vector<Date> date_range(Date first, Date last) {
    std::vector<Date> out;
    for (std::chrono::sys_days d{first}; d <= std::chrono::sys_days{last}; d += std::chrono::days{1}) {
        out.emplace_back(d);
    }
    return out;
}

}  // namespace tilepop
