#include "cladecast/dates.hpp"

#include <array>
#include <charconv>
#include <cstdio>

namespace cladecast {

namespace {

// Civil <-> serial conversions after Howard Hinnant's public-domain
// algorithms (http://howardhinnant.github.io/date_algorithms.html).
std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct Civil {
    int y;
    unsigned m;
    unsigned d;
};

Civil civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return {static_cast<int>(y + (m <= 2)), m, d};
}

bool is_leap(int y) { return y % 4 == 0 && (y % 100 != 0 || y % 400 == 0); }

unsigned last_day_of_month(int y, unsigned m) {
    static constexpr std::array<unsigned, 12> k{31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    return (m == 2 && is_leap(y)) ? 29 : k[m - 1];
}

bool parse_fixed_uint(std::string_view s, unsigned& out) {
    if (s.empty()) return false;
    unsigned v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return false;
    out = v;
    return true;
}

}  // namespace

Date::Date(int year, unsigned month, unsigned day) {
    if (month < 1 || month > 12 || day < 1 || day > last_day_of_month(year, month))
        throw std::invalid_argument("invalid calendar date");
    serial_ = days_from_civil(year, month, day);
}

int Date::year() const { return civil_from_days(serial_).y; }
unsigned Date::month() const { return civil_from_days(serial_).m; }
unsigned Date::day() const { return civil_from_days(serial_).d; }

int Date::day_of_week() const {
    // 1970-01-01 was a Thursday (= 4 with Sunday = 0).
    std::int64_t r = (serial_ + 4) % 7;
    return static_cast<int>(r < 0 ? r + 7 : r);
}

std::string Date::iso() const {
    const Civil c = civil_from_days(serial_);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", c.y, c.m, c.d);
    return buf;
}

bool try_parse_date(std::string_view text, Date& out) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return false;
    unsigned y = 0, m = 0, d = 0;
    if (!parse_fixed_uint(text.substr(0, 4), y) || !parse_fixed_uint(text.substr(5, 2), m) ||
        !parse_fixed_uint(text.substr(8, 2), d))
        return false;
    if (m < 1 || m > 12 || d < 1 || d > last_day_of_month(static_cast<int>(y), m)) return false;
    out = Date(static_cast<int>(y), m, d);
    return true;
}

Date parse_date(std::string_view text) {
    Date d;
    if (!try_parse_date(text, d))
        throw std::invalid_argument("not an ISO-8601 date: " + std::string(text));
    return d;
}

namespace {

// Sunday starting the MMWR week that contains January 4 of `year`.
Date mmwr_week1_start(int year) {
    const Date jan4(year, 1, 4);
    return jan4 - jan4.day_of_week();
}

}  // namespace

EpiWeek mmwr_week(Date d) {
    for (int y : {d.year() + 1, d.year(), d.year() - 1}) {
        const Date ws = mmwr_week1_start(y);
        if (d >= ws) return {y, static_cast<int>((d - ws) / 7) + 1};
    }
    throw std::logic_error("mmwr_week: unreachable");
}

Date mmwr_week_start(EpiWeek ew) { return mmwr_week1_start(ew.year) + 7 * (ew.week - 1); }

std::vector<SchedulePair> build_schedule(Date start, int count) {
    if (!start.is_wednesday()) throw std::invalid_argument("schedule start must be a Wednesday");
    if (count < 1) throw std::invalid_argument("schedule count must be positive");
    std::vector<SchedulePair> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const Date s = start + 7 * i;
        out.push_back({s, s + 91});
    }
    return out;
}

}  // namespace cladecast
