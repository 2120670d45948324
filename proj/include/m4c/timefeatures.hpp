#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace m4c {

using Timestamp = std::chrono::sys_time<std::chrono::minutes>;

enum class FreqUnit { minutely, hourly, daily, business_daily, weekly, monthly, quarterly };

struct Frequency {
    FreqUnit unit = FreqUnit::daily;
    int multiplier = 1;

    friend bool operator==(const Frequency&, const Frequency&) = default;
};

// Accepts "<multiplier><unit>" with unit in {T, H, D, B, W, M, Q}, plus the
// pandas spellings "min" and anchored suffixes ("W-SUN", "Q-DEC"). Monthly
// multiples of three are normalised to quarterly so "3M" and "1Q" compare equal.
inline Frequency parse_frequency(std::string_view text) {
    std::size_t pos = 0;
    long mult = 0;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
        mult = mult * 10 + (text[pos] - '0');
        if (mult > 1'000'000) throw std::invalid_argument("frequency multiplier too large: " + std::string(text));
        ++pos;
    }
    if (pos == 0) mult = 1;
    if (mult < 1) throw std::invalid_argument("frequency multiplier must be >= 1: " + std::string(text));
    auto unit_text = text.substr(pos);
    unit_text = unit_text.substr(0, static_cast<std::size_t>(std::find(unit_text.begin(), unit_text.end(), '-') - unit_text.begin()));

    Frequency f;
    f.multiplier = static_cast<int>(mult);
    if (unit_text == "T" || unit_text == "min") f.unit = FreqUnit::minutely;
    else if (unit_text == "H" || unit_text == "h") f.unit = FreqUnit::hourly;
    else if (unit_text == "D") f.unit = FreqUnit::daily;
    else if (unit_text == "B") f.unit = FreqUnit::business_daily;
    else if (unit_text == "W") f.unit = FreqUnit::weekly;
    else if (unit_text == "M" || unit_text == "MS" || unit_text == "ME") f.unit = FreqUnit::monthly;
    else if (unit_text == "Q" || unit_text == "QS" || unit_text == "QE") f.unit = FreqUnit::quarterly;
    else throw std::invalid_argument("unknown frequency: " + std::string(text));

    if (f.unit == FreqUnit::monthly && f.multiplier % 3 == 0) {
        f.unit = FreqUnit::quarterly;
        f.multiplier /= 3;
    }
    return f;
}

inline std::string to_string(const Frequency& f) {
    switch (f.unit) {
        case FreqUnit::minutely: return std::to_string(f.multiplier) + "T";
        case FreqUnit::hourly: return std::to_string(f.multiplier) + "H";
        case FreqUnit::daily: return std::to_string(f.multiplier) + "D";
        case FreqUnit::business_daily: return std::to_string(f.multiplier) + "B";
        case FreqUnit::weekly: return std::to_string(f.multiplier) + "W";
        case FreqUnit::monthly: return std::to_string(f.multiplier) + "M";
        case FreqUnit::quarterly: return std::to_string(3 * f.multiplier) + "M";
    }
    return {};
}

// ---------------------------------------------------------------------------
// Timestamps

inline Timestamp make_timestamp(int y, unsigned mo, unsigned d, int h = 0, int mi = 0) {
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{mo}, day{d}};
    if (!ymd.ok()) throw std::invalid_argument("invalid calendar date");
    if (h < 0 || h > 23 || mi < 0 || mi > 59) throw std::invalid_argument("invalid time of day");
    return Timestamp{sys_days{ymd}} + hours{h} + minutes{mi};
}

// Accepts "YYYY-MM-DD", "YYYY-MM-DDTHH:MM", "YYYY-MM-DD HH:MM[:SS]". Seconds must be zero.
inline Timestamp parse_timestamp(std::string_view text) {
    int y = 0, h = 0, mi = 0, s = 0;
    unsigned mo = 0, d = 0;
    std::string buf(text);
    char sep = 0;
    int n = std::sscanf(buf.c_str(), "%d-%u-%u%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &s);
    if (n == 3) return make_timestamp(y, mo, d);
    if (n >= 6 && (sep == 'T' || sep == ' ')) {
        if (s != 0) throw std::invalid_argument("sub-minute timestamps are not supported: " + buf);
        return make_timestamp(y, mo, d, h, mi);
    }
    throw std::invalid_argument("invalid timestamp: " + buf);
}

inline std::string format_timestamp(Timestamp ts) {
    using namespace std::chrono;
    const auto day_point = floor<days>(ts);
    const year_month_day ymd{day_point};
    const auto tod = ts - day_point;
    const auto h = duration_cast<hours>(tod).count();
    const auto m = (tod - hours{h}).count();
    char out[32];
    std::snprintf(out, sizeof out, "%04d-%02u-%02uT%02d:%02d:00", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(h),
                  static_cast<int>(m));
    return out;
}

namespace detail {

inline Timestamp add_months(Timestamp ts, int months) {
    using namespace std::chrono;
    const auto day_point = floor<days>(ts);
    const auto tod = ts - day_point;
    const year_month_day ymd{day_point};
    const year_month shifted = year_month{ymd.year(), ymd.month()} + std::chrono::months{months};
    const auto last = year_month_day_last{shifted.year(), month_day_last{shifted.month()}}.day();
    const auto d = std::min(ymd.day(), last);
    return Timestamp{sys_days{year_month_day{shifted.year(), shifted.month(), d}}} + tod;
}

inline bool is_weekend(Timestamp ts) {
    using namespace std::chrono;
    const weekday wd{floor<days>(ts)};
    return wd == Saturday || wd == Sunday;
}

}  // namespace detail

inline Timestamp step(Timestamp ts, const Frequency& f) {
    using namespace std::chrono;
    switch (f.unit) {
        case FreqUnit::minutely: return ts + minutes{f.multiplier};
        case FreqUnit::hourly: return ts + hours{f.multiplier};
        case FreqUnit::daily: return ts + days{f.multiplier};
        case FreqUnit::weekly: return ts + days{7 * f.multiplier};
        case FreqUnit::monthly: return detail::add_months(ts, f.multiplier);
        case FreqUnit::quarterly: return detail::add_months(ts, 3 * f.multiplier);
        case FreqUnit::business_daily: {
            for (int k = 0; k < f.multiplier; ++k) {
                do {
                    ts += days{1};
                } while (detail::is_weekend(ts));
            }
            return ts;
        }
    }
    return ts;
}

// Element 0 is start; each following element is one step from its predecessor,
// so month-end clamping propagates (Jan 31 -> Feb 29 -> Mar 29).
inline std::vector<Timestamp> make_grid(Timestamp start, const Frequency& f, std::size_t n) {
    if (n == 0) throw std::invalid_argument("make_grid: n must be >= 1");
    if (f.multiplier < 1) throw std::invalid_argument("make_grid: frequency multiplier must be >= 1");
    std::vector<Timestamp> grid;
    grid.reserve(n);
    grid.push_back(start);
    for (std::size_t i = 1; i < n; ++i) grid.push_back(step(grid.back(), f));
    return grid;
}

// ---------------------------------------------------------------------------
// Calendar features

inline constexpr std::size_t kCalendarComponents = 7;
inline constexpr std::size_t kCalendarFeatureWidth = 2 * kCalendarComponents;

/// Phases in [0, 1), ordered minute, hour, day-of-week (Monday = 0),
/// day-of-month, day-of-year, month, year (10-year cycle). Day indices are 0-based.
struct CalendarFeatures {
    std::array<double, kCalendarComponents> phase{};
};

inline CalendarFeatures decompose(Timestamp ts) {
    using namespace std::chrono;
    const auto day_point = floor<days>(ts);
    const year_month_day ymd{day_point};
    const auto tod = ts - day_point;
    const auto hour = duration_cast<hours>(tod).count();
    const auto minute = (tod - hours{hour}).count();
    const weekday wd{day_point};
    const int y = static_cast<int>(ymd.year());
    const unsigned m = static_cast<unsigned>(ymd.month());
    const unsigned d = static_cast<unsigned>(ymd.day());
    const unsigned days_in_month =
        static_cast<unsigned>(year_month_day_last{ymd.year(), month_day_last{ymd.month()}}.day());
    const auto jan1 = sys_days{year_month_day{ymd.year(), January, day{1}}};
    const auto day_of_year = (day_point - jan1).count();
    const double days_in_year = ymd.year().is_leap() ? 366.0 : 365.0;

    CalendarFeatures cf;
    cf.phase[0] = static_cast<double>(minute) / 60.0;
    cf.phase[1] = static_cast<double>(hour) / 24.0;
    cf.phase[2] = static_cast<double>(wd.iso_encoding() - 1) / 7.0;
    cf.phase[3] = static_cast<double>(d - 1) / days_in_month;
    cf.phase[4] = static_cast<double>(day_of_year) / days_in_year;
    cf.phase[5] = static_cast<double>(m - 1) / 12.0;
    cf.phase[6] = static_cast<double>(((y % 10) + 10) % 10) / 10.0;
    return cf;
}

/// (sin 2πp, cos 2πp) for each phase, in component order.
inline std::array<double, kCalendarFeatureWidth> encode(const CalendarFeatures& cf) {
    std::array<double, kCalendarFeatureWidth> out{};
    for (std::size_t i = 0; i < kCalendarComponents; ++i) {
        const double angle = 2.0 * std::numbers::pi * cf.phase[i];
        out[2 * i] = std::sin(angle);
        out[2 * i + 1] = std::cos(angle);
    }
    return out;
}

inline std::array<double, kCalendarFeatureWidth> time_features(Timestamp ts) { return encode(decompose(ts)); }

}  // namespace m4c
