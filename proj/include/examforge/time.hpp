#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace examforge {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;
using Day = std::chrono::sys_days;
using Clock = std::function<Timestamp()>;

Timestamp system_now();
Clock system_clock();

// RFC 3339 UTC with millisecond precision, e.g. "2025-03-01T10:00:00.000Z".
// Fixed width, so lexicographic order equals chronological order.
std::string format_rfc3339(Timestamp ts);
std::optional<Timestamp> parse_rfc3339(std::string_view text);

// "YYYY-MM-DD"
std::string format_date(Day day);
std::optional<Day> parse_date(std::string_view text);

inline Day utc_day(Timestamp ts) { return std::chrono::floor<std::chrono::days>(ts); }

// Inclusive range of UTC days.
struct DateRange {
  Day from;
  Day to;

  [[nodiscard]] bool contains(Day d) const { return d >= from && d <= to; }
  [[nodiscard]] long days() const { return (to - from).count() + 1; }
  // Half-open timestamp bounds covering the whole range.
  [[nodiscard]] Timestamp begin() const { return Timestamp{from.time_since_epoch()}; }
  [[nodiscard]] Timestamp end() const {
    return Timestamp{(to + std::chrono::days{1}).time_since_epoch()};
  }
};

}  // namespace examforge
