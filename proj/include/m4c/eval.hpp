#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "inference.hpp"
#include "parallel.hpp"
#include "priors.hpp"
#include "series.hpp"

namespace m4c {

// ===========================================================================
// Metric

/// Seasonal period used by the MASE denominator and the seasonal-naive baseline.
inline int seasonality_of(const Frequency& f) {
    const auto divides = [&](int period) { return period % f.multiplier == 0 ? period / f.multiplier : 1; };
    if (f.multiplier < 1) throw ConfigError("frequency multiplier must be >= 1");
    switch (f.unit) {
        case FreqUnit::minutely: return divides(60);
        case FreqUnit::hourly: return divides(24);
        case FreqUnit::daily: return f.multiplier == 1 ? 7 : 1;
        case FreqUnit::business_daily: return f.multiplier == 1 ? 5 : 1;
        case FreqUnit::weekly: return 1;
        case FreqUnit::monthly: return divides(12);
        case FreqUnit::quarterly: return divides(4);
    }
    throw ConfigError("unsupported frequency for seasonality");
}

inline std::vector<double> seasonal_naive(std::span<const double> context, std::size_t m, std::size_t horizon) {
    if (context.empty()) throw std::invalid_argument("seasonal_naive: empty context");
    if (m == 0) throw std::invalid_argument("seasonal_naive: m must be >= 1");
    std::vector<double> out(horizon);
    const std::size_t n = context.size();
    for (std::size_t t = 0; t < horizon; ++t) out[t] = n >= m ? context[n - m + t % m] : context[n - 1];
    return out;
}

struct MaseScore {
    double value = 0;
    bool flagged = false;  // zero in-sample denominator; value is +inf
};

/// mean|forecast - actual| / mean_{t>=m} |context[t] - context[t-m]|.
inline MaseScore mase(std::span<const double> forecast, std::span<const double> actual, std::span<const double> context, std::size_t m) {
    if (forecast.size() != actual.size() || forecast.empty()) throw std::invalid_argument("mase: forecast/actual length mismatch");
    if (m == 0) throw std::invalid_argument("mase: m must be >= 1");
    if (context.size() <= m) throw std::invalid_argument("mase: context must be longer than the seasonal period");
    double num = 0;
    for (std::size_t i = 0; i < forecast.size(); ++i) num += std::abs(forecast[i] - actual[i]);
    num /= static_cast<double>(forecast.size());
    double den = 0;
    for (std::size_t t = m; t < context.size(); ++t) den += std::abs(context[t] - context[t - m]);
    den /= static_cast<double>(context.size() - m);
    if (den == 0) return {std::numeric_limits<double>::infinity(), true};
    return {num / den, false};
}

// ===========================================================================
// Aggregation

struct ScoreRow {
    std::string dataset;
    std::string model;
    double mase = 0;
    bool flagged = false;
};

struct Aggregate {
    std::vector<std::string> models;                 // first-seen order
    std::map<std::string, double> geometric_mean;
    std::map<std::string, double> mean_rank;
    std::map<std::pair<std::string, std::string>, double> rank;  // (dataset, model)
    std::vector<ScoreRow> excluded;
};

inline double geometric_mean(std::span<const double> xs) {
    if (xs.empty()) throw std::invalid_argument("geometric_mean: empty input");
    double acc = 0;
    bool zero = false;
    for (double x : xs) {
        if (!(x >= 0) || !std::isfinite(x)) throw std::invalid_argument("geometric_mean: scores must be finite and non-negative");
        if (x == 0) zero = true;
        else acc += std::log(x);
    }
    if (zero) return 0.0;  // a perfect score pins the product
    return std::exp(acc / static_cast<double>(xs.size()));
}

/// Ranks 1..n within one dataset; tied scores share the mean of their positions.
inline std::vector<double> fractional_ranks(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
    std::vector<double> ranks(scores.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

/// Flagged or non-finite rows are excluded and listed; `skip_datasets` removes
/// whole datasets (e.g. an outlier) from both aggregates.
inline Aggregate aggregate(const std::vector<ScoreRow>& rows, const std::vector<std::string>& skip_datasets = {}) {
    if (rows.empty()) throw std::invalid_argument("aggregate: no score rows");
    Aggregate out;
    std::map<std::string, std::vector<const ScoreRow*>> by_dataset;
    std::vector<std::string> dataset_order;
    std::map<std::string, std::vector<double>> per_model;
    std::map<std::string, std::vector<double>> model_ranks;
    for (const auto& r : rows) {
        if (std::find(out.models.begin(), out.models.end(), r.model) == out.models.end()) out.models.push_back(r.model);
        if (std::find(skip_datasets.begin(), skip_datasets.end(), r.dataset) != skip_datasets.end()) continue;
        if (r.flagged || !std::isfinite(r.mase) || r.mase < 0) {
            out.excluded.push_back(r);
            continue;
        }
        if (!by_dataset.count(r.dataset)) dataset_order.push_back(r.dataset);
        by_dataset[r.dataset].push_back(&r);
        per_model[r.model].push_back(r.mase);
    }
    for (const auto& d : dataset_order) {
        const auto& group = by_dataset[d];
        std::vector<double> scores;
        for (const auto* r : group) scores.push_back(r->mase);
        const auto ranks = fractional_ranks(scores);
        for (std::size_t i = 0; i < group.size(); ++i) {
            out.rank[{d, group[i]->model}] = ranks[i];
            model_ranks[group[i]->model].push_back(ranks[i]);
        }
    }
    for (const auto& m : out.models) {
        const auto& s = per_model[m];
        if (s.empty()) continue;
        out.geometric_mean[m] = geometric_mean(s);
        const auto& rk = model_ranks[m];
        out.mean_rank[m] = std::accumulate(rk.begin(), rk.end(), 0.0) / static_cast<double>(rk.size());
    }
    return out;
}

/// Rows of a (dataset, model, mase) CSV with a header line.
inline std::vector<ScoreRow> read_score_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<ScoreRow> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (lineno == 1 || line.empty()) continue;
        const auto c2 = line.rfind(',');
        const auto c1 = c2 == std::string::npos ? std::string::npos : line.rfind(',', c2 - 1);
        if (c1 == std::string::npos) throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 3 columns");
        ScoreRow r;
        r.dataset = line.substr(0, c1);
        r.model = line.substr(c1 + 1, c2 - c1 - 1);
        try {
            r.mase = std::stod(line.substr(c2 + 1));
        } catch (const std::exception&) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": bad mase value");
        }
        rows.push_back(r);
    }
    return rows;
}

// ===========================================================================
// Datasets and benchmark

struct EvalSeries {
    TimeSeries context;
    std::vector<double> future;
};

struct Dataset {
    std::string name;
    Frequency freq{};
    std::size_t prediction_length = 0;
    std::vector<EvalSeries> series;

    void validate() const {
        if (prediction_length == 0) throw std::invalid_argument(name + ": prediction length must be >= 1");
        for (const auto& s : series) {
            if (s.future.size() != prediction_length) throw std::invalid_argument(name + ": future segment length mismatch");
            if (s.context.freq.unit != freq.unit || s.context.freq.multiplier != freq.multiplier)
                throw std::invalid_argument(name + ": series frequency differs from dataset frequency");
        }
    }
};

/// Split full series into context and the trailing `prediction_length` values.
inline Dataset make_dataset(const std::string& name, const Frequency& freq, std::size_t prediction_length,
                            const std::vector<TimeSeries>& full) {
    Dataset d{name, freq, prediction_length, {}};
    for (const auto& s : full) {
        if (s.values.size() <= prediction_length) throw std::invalid_argument(name + ": series shorter than prediction length");
        const auto cut = static_cast<std::ptrdiff_t>(s.values.size() - prediction_length);
        d.series.push_back({TimeSeries{s.start, s.freq, {s.values.begin(), s.values.begin() + cut}},
                            {s.values.begin() + cut, s.values.end()}});
    }
    d.validate();
    return d;
}

/// A directory holding meta.json ({"datasets": [{"name", "freq", "prediction_length"}]})
/// and one `<name>.jsonl` of full GluonTS records per dataset.
inline std::vector<Dataset> load_datasets(const std::filesystem::path& dir) {
    const auto meta_path = dir / "meta.json";
    std::ifstream in(meta_path);
    if (!in) throw std::runtime_error("cannot open " + meta_path.string());
    nlohmann::json meta;
    try {
        in >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(meta_path.string() + ": " + e.what());
    }
    std::vector<Dataset> out;
    for (const auto& d : meta.at("datasets")) {
        const auto name = d.at("name").get<std::string>();
        const auto file = d.value("file", name + ".jsonl");
        out.push_back(make_dataset(name, parse_frequency(d.at("freq").get<std::string>()), d.at("prediction_length").get<std::size_t>(),
                                   read_series_jsonl((dir / file).string())));
    }
    return out;
}

struct Forecaster {
    std::string name;
    std::function<std::vector<double>(const TimeSeries& context, std::size_t horizon, std::size_t context_cap)> predict;
};

inline Forecaster seasonal_naive_forecaster() {
    return {"S-Naive", [](const TimeSeries& ctx, std::size_t h, std::size_t cap) {
                const auto tail = ctx.tail(std::min(cap, ctx.values.size()));
                return seasonal_naive(tail.values, static_cast<std::size_t>(seasonality_of(ctx.freq)), h);
            }};
}

template <class S>
Forecaster model_forecaster(std::string name, const Model<S>& model, ForecastMode mode, std::uint64_t seed = 0) {
    return {std::move(name), [&model, mode, seed](const TimeSeries& ctx, std::size_t h, std::size_t cap) {
                ForecastRequest req{ctx, h, mode, cap, seed};
                return forecast(model, req).values;
            }};
}

struct DatasetResult {
    std::string dataset;
    std::string model;
    double mase = 0;          // mean of per-series scores over unflagged series
    std::size_t scored = 0;
    std::size_t flagged = 0;  // zero-denominator series
    std::vector<std::string> failures;
    bool partial() const { return !failures.empty(); }
};

struct EvalReport {
    std::vector<DatasetResult> results;
    Aggregate aggregate;
    std::size_t context_cap = kDefaultContextCap;
};

inline std::vector<ScoreRow> score_rows(const std::vector<DatasetResult>& results) {
    std::vector<ScoreRow> rows;
    for (const auto& r : results) rows.push_back({r.dataset, r.model, r.mase, r.scored == 0});
    return rows;
}

/// Forecasts every series from its capped context and scores it against the
/// held-out future. The MASE denominator uses the full available context.
inline EvalReport run_benchmark(const std::vector<Dataset>& datasets, const std::vector<Forecaster>& forecasters,
                                std::size_t context_cap = kDefaultContextCap, int workers = 1,
                                const std::vector<std::string>& skip_in_aggregate = {}) {
    EvalReport rep;
    rep.context_cap = context_cap;
    for (const auto& d : datasets) {
        d.validate();
        const auto m = static_cast<std::size_t>(seasonality_of(d.freq));
        for (const auto& f : forecasters) {
            std::vector<MaseScore> scores(d.series.size());
            std::vector<std::string> errors(d.series.size());
            parallel_for(d.series.size(), workers, [&](std::size_t i, int) {
                try {
                    const auto& s = d.series[i];
                    const auto pred = f.predict(s.context, d.prediction_length, context_cap);
                    scores[i] = mase(pred, s.future, s.context.values, m);
                } catch (const std::exception& e) {
                    errors[i] = "series " + std::to_string(i) + ": " + e.what();
                }
            });
            DatasetResult r{d.name, f.name, 0, 0, 0, {}};
            for (std::size_t i = 0; i < scores.size(); ++i) {
                if (!errors[i].empty()) {
                    r.failures.push_back(errors[i]);
                } else if (scores[i].flagged) {
                    ++r.flagged;
                } else {
                    r.mase += scores[i].value;
                    ++r.scored;
                }
            }
            r.mase = r.scored ? r.mase / static_cast<double>(r.scored) : std::numeric_limits<double>::infinity();
            rep.results.push_back(std::move(r));
        }
    }
    rep.aggregate = aggregate(score_rows(rep.results), skip_in_aggregate);
    return rep;
}

inline nlohmann::json to_json(const EvalReport& rep) {
    nlohmann::json j;
    j["context_cap"] = rep.context_cap;
    auto& rows = j["results"] = nlohmann::json::array();
    for (const auto& r : rep.results) {
        nlohmann::json row{{"dataset", r.dataset}, {"model", r.model}, {"scored", r.scored}, {"flagged", r.flagged},
                           {"partial", r.partial()}, {"failures", r.failures}};
        row["mase"] = std::isfinite(r.mase) ? nlohmann::json(r.mase) : nlohmann::json(nullptr);
        const auto it = rep.aggregate.rank.find({r.dataset, r.model});
        row["rank"] = it == rep.aggregate.rank.end() ? nlohmann::json(nullptr) : nlohmann::json(it->second);
        rows.push_back(row);
    }
    for (const auto& m : rep.aggregate.models) {
        if (rep.aggregate.geometric_mean.count(m)) j["geometric_mean"][m] = rep.aggregate.geometric_mean.at(m);
        if (rep.aggregate.mean_rank.count(m)) j["mean_rank"][m] = rep.aggregate.mean_rank.at(m);
    }
    auto& ex = j["excluded"] = nlohmann::json::array();
    for (const auto& r : rep.aggregate.excluded) ex.push_back({{"dataset", r.dataset}, {"model", r.model}});
    return j;
}

/// Per-dataset bars and ranks: dataset, model, mase, rank.
inline std::string plot_csv(const std::vector<ScoreRow>& rows, const Aggregate& agg) {
    std::ostringstream os;
    os << "dataset,model,mase,rank\n";
    os.precision(10);
    for (const auto& r : rows) {
        os << r.dataset << ',' << r.model << ',';
        if (std::isfinite(r.mase)) os << r.mase;
        os << ',';
        if (const auto it = agg.rank.find({r.dataset, r.model}); it != agg.rank.end()) os << it->second;
        os << '\n';
    }
    return os.str();
}

}  // namespace m4c
