#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "network.hpp"
#include "random.hpp"
#include "series.hpp"
#include "timefeatures.hpp"

namespace m4c {

enum class ForecastMode { multipoint, autoregressive, ensemble };

inline const char* to_string(ForecastMode m) {
    switch (m) {
        case ForecastMode::multipoint: return "multipoint";
        case ForecastMode::autoregressive: return "autoregressive";
        case ForecastMode::ensemble: return "ensemble";
    }
    return "?";
}

inline ForecastMode parse_forecast_mode(const std::string& s) {
    if (s == "multipoint") return ForecastMode::multipoint;
    if (s == "autoregressive") return ForecastMode::autoregressive;
    if (s == "ensemble") return ForecastMode::ensemble;
    throw std::invalid_argument("mode must be multipoint, autoregressive or ensemble, got " + s);
}

inline constexpr std::size_t kDefaultContextCap = 512;
inline constexpr std::array<double, 5> kEnsembleDropout{0.0, 0.125, 0.25, 0.375, 0.5};

struct ForecastRequest {
    TimeSeries series;
    std::size_t horizon = 1;
    ForecastMode mode = ForecastMode::multipoint;
    std::size_t context_cap = kDefaultContextCap;
    std::uint64_t seed = 0;  // ensemble dropout masks
};

struct EnsembleMember {
    double requested_dropout = 0;
    double used_dropout = 0;
    std::size_t kept = 0;
    std::vector<double> values;
};

struct Forecast {
    std::vector<Timestamp> timestamps;
    std::vector<double> values;  // original scale
    ForecastMode mode = ForecastMode::multipoint;
    double elapsed_ms = 0;
    std::vector<EnsembleMember> members;  // ensemble only
    std::vector<std::string> log;
};

/// The H timestamps following the last observation.
inline std::vector<Timestamp> horizon_grid(const TimeSeries& s, std::size_t horizon) {
    if (horizon == 0) throw std::invalid_argument("horizon must be >= 1");
    if (s.values.empty()) throw std::invalid_argument("series is empty");
    const Timestamp last = s.timestamps().back();
    auto grid = make_grid(last, s.freq, horizon + 1);
    grid.erase(grid.begin());
    return grid;
}

namespace detail {

struct Context {
    std::vector<double> values;
    std::vector<Timestamp> ts;
};

inline Context capped_context(const ForecastRequest& req) {
    if (req.horizon == 0) throw std::invalid_argument("horizon must be >= 1");
    if (req.context_cap == 0) throw std::invalid_argument("context cap must be >= 1");
    req.series.validate();
    if (req.series.values.empty()) throw std::invalid_argument("series is empty");
    const TimeSeries tail = req.series.tail(std::min(req.context_cap, req.series.values.size()));
    return {tail.values, tail.timestamps()};
}

template <class S>
std::vector<double> multipoint_core(const Model<S>& model, const Context& ctx, const std::vector<Timestamp>& horizon) {
    const auto scaler = fit_scaler(ctx.values);
    std::vector<double> scaled(ctx.values.size());
    for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = scaler.apply(ctx.values[i]);
    const auto seq = assemble_tokens(scaled, ctx.ts, horizon, TargetFlag::point);
    const auto pred = model.predict(seq);
    std::vector<double> out;
    out.reserve(horizon.size());
    for (auto p : seq.target_positions) out.push_back(scaler.invert(pred[p]));
    return out;
}

inline double elapsed_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Whole horizon from one network evaluation.
template <class S>
Forecast forecast_multipoint(const Model<S>& model, const ForecastRequest& req) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto ctx = detail::capped_context(req);
    Forecast f;
    f.mode = ForecastMode::multipoint;
    f.timestamps = horizon_grid(req.series, req.horizon);
    f.values = detail::multipoint_core(model, ctx, f.timestamps);
    f.elapsed_ms = detail::elapsed_ms(t0);
    return f;
}

/// One step per evaluation; each scaled prediction is fed back as an observation.
template <class S>
Forecast forecast_autoregressive(const Model<S>& model, const ForecastRequest& req) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto ctx = detail::capped_context(req);
    Forecast f;
    f.mode = ForecastMode::autoregressive;
    f.timestamps = horizon_grid(req.series, req.horizon);
    const auto scaler = fit_scaler(ctx.values);
    TokenSequence seq;
    for (std::size_t i = 0; i < ctx.values.size(); ++i) seq.tokens.push_back(observed_token(ctx.ts[i], scaler.apply(ctx.values[i])));
    for (const auto ts : f.timestamps) {
        seq.tokens.push_back(target_token(ts, TargetFlag::point));
        seq.target_positions = {seq.tokens.size() - 1};
        const double p = model.predict(seq).back();
        seq.tokens.back() = observed_token(ts, p);
        f.values.push_back(scaler.invert(p));
    }
    seq.target_positions.clear();
    f.elapsed_ms = detail::elapsed_ms(t0);
    return f;
}

/// Mean of five multipoint forecasts whose contexts lose a random fraction of
/// observations (rates 0, 1/8, 1/4, 3/8, 1/2). A member left with fewer than two
/// observations falls back to the next lower rate.
template <class S>
Forecast forecast_ensemble(const Model<S>& model, const ForecastRequest& req) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto ctx = detail::capped_context(req);
    Forecast f;
    f.mode = ForecastMode::ensemble;
    f.timestamps = horizon_grid(req.series, req.horizon);
    f.values.assign(req.horizon, 0.0);
    const SampleStream root{req.seed, 0};
    for (std::size_t k = 0; k < kEnsembleDropout.size(); ++k) {
        EnsembleMember m;
        m.requested_dropout = kEnsembleDropout[k];
        detail::Context kept;
        for (std::size_t level = k + 1; level-- > 0;) {
            const double rate = kEnsembleDropout[level];
            Engine rng = root.fork(k).engine_for(level);
            kept = {};
            for (std::size_t i = 0; i < ctx.values.size(); ++i) {
                if (rate > 0 && bernoulli(rng, rate)) continue;
                kept.values.push_back(ctx.values[i]);
                kept.ts.push_back(ctx.ts[i]);
            }
            m.used_dropout = rate;
            if (kept.values.size() >= 2 || rate == 0.0) break;
            f.log.push_back("member " + std::to_string(k) + ": dropout " + std::to_string(rate) +
                            " left fewer than 2 observations, falling back");
        }
        m.kept = kept.values.size();
        m.values = detail::multipoint_core(model, kept, f.timestamps);
        for (std::size_t h = 0; h < req.horizon; ++h) f.values[h] += m.values[h];
        f.members.push_back(std::move(m));
    }
    for (auto& v : f.values) v /= static_cast<double>(kEnsembleDropout.size());
    f.elapsed_ms = detail::elapsed_ms(t0);
    return f;
}

template <class S>
Forecast forecast(const Model<S>& model, const ForecastRequest& req) {
    switch (req.mode) {
        case ForecastMode::multipoint: return forecast_multipoint(model, req);
        case ForecastMode::autoregressive: return forecast_autoregressive(model, req);
        case ForecastMode::ensemble: return forecast_ensemble(model, req);
    }
    throw std::invalid_argument("unknown forecast mode");
}

}  // namespace m4c
