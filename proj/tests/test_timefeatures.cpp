#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "m4c/timefeatures.hpp"

using namespace m4c;

namespace {

Timestamp ts(int y, unsigned m, unsigned d, int h = 0, int mi = 0) { return make_timestamp(y, m, d, h, mi); }

}  // namespace

TEST(Frequency, ParsesCommonAliases) {
    EXPECT_EQ(parse_frequency("1H"), (Frequency{FreqUnit::hourly, 1}));
    EXPECT_EQ(parse_frequency("1D"), (Frequency{FreqUnit::daily, 1}));
    EXPECT_EQ(parse_frequency("1B"), (Frequency{FreqUnit::business_daily, 1}));
    EXPECT_EQ(parse_frequency("1W"), (Frequency{FreqUnit::weekly, 1}));
    EXPECT_EQ(parse_frequency("1M"), (Frequency{FreqUnit::monthly, 1}));
    EXPECT_EQ(parse_frequency("3M"), parse_frequency("1Q"));
    EXPECT_EQ(parse_frequency("15T"), (Frequency{FreqUnit::minutely, 15}));
    EXPECT_EQ(parse_frequency("H"), (Frequency{FreqUnit::hourly, 1}));
    EXPECT_EQ(parse_frequency("W-SUN"), (Frequency{FreqUnit::weekly, 1}));
}

TEST(Frequency, RoundTripsThroughString) {
    for (const char* s : {"1T", "5T", "1H", "2H", "1D", "1B", "1W", "1M", "2M", "3M", "6M"}) {
        const auto f = parse_frequency(s);
        EXPECT_EQ(parse_frequency(to_string(f)), f) << s;
    }
    EXPECT_EQ(to_string(parse_frequency("1Q")), "3M");
}

TEST(Frequency, RejectsBadStrings) {
    EXPECT_THROW(parse_frequency("0H"), std::invalid_argument);
    EXPECT_THROW(parse_frequency("1X"), std::invalid_argument);
    EXPECT_THROW(parse_frequency(""), std::invalid_argument);
}

TEST(Timestamp, ParseAndFormat) {
    EXPECT_EQ(parse_timestamp("2020-01-31"), ts(2020, 1, 31));
    EXPECT_EQ(parse_timestamp("2020-01-31 13:45:00"), ts(2020, 1, 31, 13, 45));
    EXPECT_EQ(parse_timestamp("2020-01-31T13:45"), ts(2020, 1, 31, 13, 45));
    EXPECT_EQ(format_timestamp(ts(2020, 1, 31, 13, 45)), "2020-01-31T13:45:00");
    EXPECT_THROW(parse_timestamp("2020-02-30"), std::invalid_argument);
    EXPECT_THROW(parse_timestamp("yesterday"), std::invalid_argument);
}

TEST(MakeGrid, HourlyStepping) {
    const auto g = make_grid(ts(2020, 1, 1), parse_frequency("1H"), 3);
    ASSERT_EQ(g.size(), 3u);
    EXPECT_EQ(g[0], ts(2020, 1, 1, 0));
    EXPECT_EQ(g[1], ts(2020, 1, 1, 1));
    EXPECT_EQ(g[2], ts(2020, 1, 1, 2));
}

TEST(MakeGrid, BusinessDaySkipsWeekend) {
    // 2020-01-03 is a Friday
    const auto g = make_grid(ts(2020, 1, 3), parse_frequency("1B"), 2);
    EXPECT_EQ(g[0], ts(2020, 1, 3));
    EXPECT_EQ(g[1], ts(2020, 1, 6));
}

TEST(MakeGrid, MonthEndClamps) {
    const auto g = make_grid(ts(2020, 1, 31), parse_frequency("1M"), 2);
    EXPECT_EQ(g[1], ts(2020, 2, 29));
    EXPECT_EQ(make_grid(ts(2021, 1, 31), parse_frequency("1M"), 2)[1], ts(2021, 2, 28));
    EXPECT_EQ(make_grid(ts(2020, 11, 30), parse_frequency("3M"), 2)[1], ts(2021, 2, 28));
}

TEST(MakeGrid, RejectsEmpty) { EXPECT_THROW(make_grid(ts(2020, 1, 1), parse_frequency("1D"), 0), std::invalid_argument); }

TEST(MakeGrid, ConcatenationProperty) {
    std::mt19937_64 rng(7);
    for (const char* fs : {"1T", "1H", "1D", "1B", "1W", "1M", "3M"}) {
        const auto f = parse_frequency(fs);
        for (int trial = 0; trial < 20; ++trial) {
            const std::size_t a = 1 + rng() % 40, b = 1 + rng() % 40;
            const auto start = ts(2000 + static_cast<int>(rng() % 30), 1 + rng() % 12, 1 + rng() % 28);
            const auto whole = make_grid(start, f, a + b);
            const auto first = make_grid(start, f, a);
            const auto next = step(first.back(), f);
            const auto second = make_grid(next, f, b);
            std::vector<Timestamp> joined = first;
            joined.insert(joined.end(), second.begin(), second.end());
            EXPECT_EQ(whole, joined) << fs;
        }
    }
}

TEST(MakeGrid, BusinessGridHasNoWeekends) {
    const auto g = make_grid(ts(2019, 6, 1), parse_frequency("1B"), 300);
    for (auto t : g) EXPECT_FALSE(detail::is_weekend(t) && t != g.front());
}

TEST(Decompose, NewYear2020) {
    // Wednesday; Monday is 0 so Wednesday is 2
    const auto cf = decompose(ts(2020, 1, 1));
    EXPECT_DOUBLE_EQ(cf.phase[0], 0.0);
    EXPECT_DOUBLE_EQ(cf.phase[1], 0.0);
    EXPECT_DOUBLE_EQ(cf.phase[2], 2.0 / 7.0);
    EXPECT_DOUBLE_EQ(cf.phase[3], 0.0);
    EXPECT_DOUBLE_EQ(cf.phase[4], 0.0);
    EXPECT_DOUBLE_EQ(cf.phase[5], 0.0);
    EXPECT_DOUBLE_EQ(cf.phase[6], 0.0);
}

TEST(Decompose, HandWalkedTimestamp) {
    // 2021-03-15 (Monday) 18:45: day 73 of a 365-day year (0-based), month index 2
    const auto cf = decompose(ts(2021, 3, 15, 18, 45));
    EXPECT_DOUBLE_EQ(cf.phase[0], 45.0 / 60.0);
    EXPECT_DOUBLE_EQ(cf.phase[1], 18.0 / 24.0);
    EXPECT_DOUBLE_EQ(cf.phase[2], 0.0);
    EXPECT_DOUBLE_EQ(cf.phase[3], 14.0 / 31.0);
    EXPECT_DOUBLE_EQ(cf.phase[4], 73.0 / 365.0);
    EXPECT_DOUBLE_EQ(cf.phase[5], 2.0 / 12.0);
    EXPECT_DOUBLE_EQ(cf.phase[6], 0.1);
}

TEST(Decompose, SameDateOneYearApart) {
    const auto a = decompose(ts(2020, 7, 1));
    const auto b = decompose(ts(2021, 7, 1));
    EXPECT_EQ(a.phase[0], b.phase[0]);
    EXPECT_EQ(a.phase[1], b.phase[1]);
    EXPECT_EQ(a.phase[3], b.phase[3]);
    EXPECT_EQ(a.phase[5], b.phase[5]);
    // leap year shifts day-of-year; the weekday moves by one as 365 = 52 * 7 + 1
    EXPECT_DOUBLE_EQ(a.phase[4], 182.0 / 366.0);
    EXPECT_DOUBLE_EQ(b.phase[4], 181.0 / 365.0);
    EXPECT_DOUBLE_EQ(a.phase[2], 2.0 / 7.0);
    EXPECT_DOUBLE_EQ(b.phase[2], 3.0 / 7.0);
    EXPECT_NE(a.phase[6], b.phase[6]);
}

TEST(Decompose, MinuteZeroGivesZeroPhase) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 100; ++i) {
        const auto t = ts(1990 + static_cast<int>(rng() % 50), 1 + rng() % 12, 1 + rng() % 28, static_cast<int>(rng() % 24), 0);
        EXPECT_EQ(decompose(t).phase[0], 0.0);
    }
}

TEST(Decompose, ComponentsInUnitInterval) {
    auto t = ts(1999, 12, 25, 7, 13);
    for (int i = 0; i < 5000; ++i) {
        t = step(t, Frequency{FreqUnit::minutely, 997});
        for (double p : decompose(t).phase) {
            EXPECT_GE(p, 0.0);
            EXPECT_LT(p, 1.0);
        }
    }
}

TEST(Decompose, OnePeriodReturnsComponent) {
    const auto t = ts(2019, 5, 17, 9, 23);
    using namespace std::chrono;
    EXPECT_EQ(decompose(t + minutes{60}).phase[0], decompose(t).phase[0]);
    EXPECT_EQ(decompose(t + hours{24}).phase[1], decompose(t).phase[1]);
    EXPECT_EQ(decompose(t + days{7}).phase[2], decompose(t).phase[2]);
    // July and August both have 31 days
    EXPECT_EQ(decompose(detail::add_months(ts(2019, 7, 17), 1)).phase[3], decompose(ts(2019, 7, 17)).phase[3]);
    EXPECT_EQ(decompose(detail::add_months(t, 12)).phase[5], decompose(t).phase[5]);
    EXPECT_EQ(decompose(detail::add_months(t, 120)).phase[6], decompose(t).phase[6]);
    // non-leap to non-leap keeps day-of-year
    EXPECT_EQ(decompose(detail::add_months(ts(2017, 5, 17), 12)).phase[4], decompose(ts(2017, 5, 17)).phase[4]);
}

TEST(Encode, ZeroPhases) {
    const auto v = encode(CalendarFeatures{});
    for (std::size_t i = 0; i < kCalendarComponents; ++i) {
        EXPECT_EQ(v[2 * i], 0.0);
        EXPECT_EQ(v[2 * i + 1], 1.0);
    }
}

TEST(Encode, HalfAndQuarterPeriod) {
    CalendarFeatures cf;
    cf.phase[3] = 0.5;
    cf.phase[5] = 0.25;
    const auto v = encode(cf);
    EXPECT_NEAR(v[6], 0.0, 1e-12);
    EXPECT_NEAR(v[7], -1.0, 1e-12);
    EXPECT_NEAR(v[10], 1.0, 1e-12);
    EXPECT_NEAR(v[11], 0.0, 1e-12);
}

TEST(Encode, PairsLieOnUnitCircle) {
    auto t = ts(2001, 2, 3, 4, 5);
    for (int i = 0; i < 2000; ++i) {
        t = step(t, Frequency{FreqUnit::minutely, 4177});
        const auto v = time_features(t);
        for (std::size_t k = 0; k < kCalendarComponents; ++k) EXPECT_NEAR(v[2 * k] * v[2 * k] + v[2 * k + 1] * v[2 * k + 1], 1.0, 1e-12);
    }
}

TEST(Encode, PeriodicOverFullCycle) {
    const auto t = ts(2011, 8, 9, 10, 11);
    using namespace std::chrono;
    const auto a = time_features(t), b = time_features(t + days{7});
    // minute, hour and weekday pairs repeat after one week
    for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
}
