#pragma once

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "timefeatures.hpp"

namespace m4c {

struct TimeSeries {
    Timestamp start{};
    Frequency freq{};
    std::vector<double> values;

    std::size_t size() const { return values.size(); }

    void validate() const {
        if (values.empty()) throw std::invalid_argument("time series must contain at least one value");
        for (double v : values)
            if (!std::isfinite(v)) throw std::invalid_argument("time series contains a non-finite value");
    }

    std::vector<Timestamp> timestamps() const { return make_grid(start, freq, values.size()); }

    // The trailing `n` observations, with the start moved accordingly.
    TimeSeries tail(std::size_t n) const {
        if (n >= values.size()) return *this;
        const auto grid = timestamps();
        const std::size_t skip = values.size() - n;
        return {grid[skip], freq, {values.begin() + static_cast<std::ptrdiff_t>(skip), values.end()}};
    }
};

// GluonTS-style record: {"start": ISO-8601, "freq": "1H", "target": [...]}.
inline nlohmann::json to_json(const TimeSeries& s) {
    return {{"start", format_timestamp(s.start)}, {"freq", to_string(s.freq)}, {"target", s.values}};
}

inline TimeSeries series_from_json(const nlohmann::json& j) {
    TimeSeries s;
    s.start = parse_timestamp(j.at("start").get<std::string>());
    s.freq = parse_frequency(j.at("freq").get<std::string>());
    for (const auto& v : j.at("target")) {
        if (v.is_null()) throw std::invalid_argument("missing values (null) are not supported");
        s.values.push_back(v.get<double>());
    }
    s.validate();
    return s;
}

inline std::vector<nlohmann::json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<nlohmann::json> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            rows.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return rows;
}

inline std::vector<TimeSeries> read_series_jsonl(const std::string& path) {
    std::vector<TimeSeries> out;
    for (const auto& row : read_jsonl(path)) out.push_back(series_from_json(row));
    return out;
}

}  // namespace m4c
