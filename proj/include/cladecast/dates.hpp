#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cladecast {

// Calendar date stored as a day serial (days since 1970-01-01).
// Keeps date arithmetic trivial; civil conversions use the proleptic
// Gregorian calendar.
class Date {
  public:
    Date() = default;
    constexpr explicit Date(std::int64_t serial) : serial_{serial} {}
    Date(int year, unsigned month, unsigned day);

    static Date from_serial(std::int64_t s) { return Date{s}; }
    std::int64_t serial() const { return serial_; }

    int year() const;
    unsigned month() const;
    unsigned day() const;

    // 0 = Sunday ... 6 = Saturday.
    int day_of_week() const;
    bool is_wednesday() const { return day_of_week() == 3; }

    std::string iso() const;

    Date operator+(std::int64_t days) const { return Date{serial_ + days}; }
    Date operator-(std::int64_t days) const { return Date{serial_ - days}; }
    std::int64_t operator-(Date other) const { return serial_ - other.serial_; }
    auto operator<=>(const Date&) const = default;

  private:
    std::int64_t serial_ = 0;
};

// Strict ISO-8601 "YYYY-MM-DD". Throws std::invalid_argument.
Date parse_date(std::string_view text);

// Non-throwing variant; returns false for partial (YYYY or YYYY-MM) or
// otherwise malformed dates.
bool try_parse_date(std::string_view text, Date& out);

struct EpiWeek {
    int year = 0;
    int week = 0;
    auto operator<=>(const EpiWeek&) const = default;
};

// US CDC MMWR week: weeks run Sunday-Saturday, week 1 of a year is the
// week containing at least four days of that calendar year (equivalently,
// the Sunday-start week containing January 4).
EpiWeek mmwr_week(Date d);

// First day (Sunday) of the given MMWR week.
Date mmwr_week_start(EpiWeek ew);

struct SchedulePair {
    Date submission_date;
    Date evaluation_date;  // submission_date + 91 days
};

// Weekly Wednesday submission dates paired with evaluation dates 13 weeks
// later. Throws if start is not a Wednesday or count < 1.
std::vector<SchedulePair> build_schedule(Date start, int count);

}  // namespace cladecast
