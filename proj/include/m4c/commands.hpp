#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "checkpoint.hpp"
#include "eval.hpp"
#include "inference.hpp"
#include "parallel.hpp"
#include "priors.hpp"
#include "series.hpp"
#include "training.hpp"

namespace m4c::cli {

/// Usage or configuration problem (exit code 2). `fields` names every offending input.
struct UsageError : std::runtime_error {
    std::vector<std::string> fields;
    UsageError(const std::string& msg, std::vector<std::string> f) : std::runtime_error(msg), fields(std::move(f)) {}
};

inline nlohmann::json error_json(const std::string& message, const std::vector<std::string>& fields = {}) {
    nlohmann::json j{{"error", message}};
    if (!fields.empty()) {
        j["field"] = fields.front();
        j["fields"] = fields;
    }
    return j;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
}

inline Checkpoint require_checkpoint(const std::string& path) {
    if (path.empty()) throw UsageError("--checkpoint is required", {"checkpoint"});
    if (!std::filesystem::exists(path)) throw UsageError("checkpoint not found: " + path, {"checkpoint"});
    try {
        return load_checkpoint(path);
    } catch (const CheckpointError& e) {
        throw UsageError(e.what(), {"checkpoint"});
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// generate

struct GenerateOptions {
    std::size_t count = 100;
    std::size_t length = 256;
    std::uint64_t seed = 0;
    double gp_fraction = 0.7;
    std::string phase = "train";
    std::string freq;  // empty: sampled per series
    std::string out;   // empty: stdout
    int workers = 1;
};

inline std::vector<std::string> generate_lines(const GenerateOptions& o) {
    std::vector<std::string> bad;
    if (o.count < 1) bad.push_back("count");
    if (o.length < 2) bad.push_back("length");
    if (!(o.gp_fraction >= 0 && o.gp_fraction <= 1)) bad.push_back("gp-fraction");
    if (o.phase != "train" && o.phase != "finetune") bad.push_back("phase");
    std::optional<Frequency> freq;
    if (!o.freq.empty()) {
        try {
            freq = parse_frequency(o.freq);
        } catch (const std::exception&) {
            bad.push_back("freq");
        }
    }
    if (o.workers < 1) bad.push_back("workers");
    if (!bad.empty()) throw UsageError("invalid generate options", bad);
    PriorMix mix;
    mix.gp_fraction = o.gp_fraction;
    const auto phase = o.phase == "train" ? PriorPhase::train : PriorPhase::finetune;
    const SampleStream stream{o.seed, 0};
    std::vector<std::string> lines(o.count);
    parallel_for(o.count, o.workers, [&](std::size_t i, int) {
        const auto g = sample_training_series(mix, phase, freq, o.length, stream, i);
        auto j = to_json(g.series);
        j["item_id"] = i;
        j["provenance"] = to_json(g.provenance);
        lines[i] = j.dump();
    });
    return lines;
}

inline int cmd_generate(const GenerateOptions& o) {
    const auto lines = generate_lines(o);
    if (o.out.empty()) {
        for (const auto& l : lines) std::cout << l << '\n';
    } else {
        auto out = detail::open_out(o.out);
        for (const auto& l : lines) out << l << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainCliOptions {
    std::string config;      // JSON file mirroring TrainConfig
    std::string preset = "desk";
    std::string out = "runs/desk";
    std::string resume;
    std::optional<std::uint64_t> rounds, batch_size, seed, checkpoint_every;
    std::optional<int> workers;
    bool quiet = false;
};

inline TrainConfig resolve_train_config(const TrainCliOptions& o) {
    if (o.preset != "desk" && o.preset != "full") throw UsageError("preset must be desk or full", {"preset"});
    TrainConfig base = o.preset == "full" ? TrainConfig::full() : TrainConfig::desk();
    nlohmann::json j = nlohmann::json::object();
    if (!o.config.empty()) {
        std::ifstream in(o.config);
        if (!in) throw UsageError("cannot open config " + o.config, {"config"});
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw UsageError(std::string("malformed config: ") + e.what(), {"config"});
        }
    }
    if (o.rounds) j["rounds"] = *o.rounds;
    if (o.batch_size) j["batch_size"] = *o.batch_size;
    if (o.seed) j["seed"] = *o.seed;
    if (o.workers) j["workers"] = *o.workers;
    if (o.checkpoint_every) j["checkpoint_every"] = *o.checkpoint_every;
    try {
        auto cfg = train_config_from_json(j, base);
        if (j.contains("rounds") && !j.contains("switch_round")) {
            // keep the main/fine-tune split proportional when only the length changes
            cfg.switch_round = base.switch_round * cfg.rounds / base.rounds;
        }
        return cfg;
    } catch (const ConfigError& e) {
        std::vector<std::string> fields;
        std::istringstream is(std::string(e.what()).substr(std::string(e.what()).find(':') + 1));
        for (std::string f; is >> f;) fields.push_back(f);
        throw UsageError(e.what(), fields);
    }
}

inline int cmd_train(const TrainCliOptions& o) {
    const auto cfg = resolve_train_config(o);
    TrainOptions topt;
    topt.out_dir = o.out;
    if (!o.resume.empty()) {
        if (!std::filesystem::exists(o.resume)) throw UsageError("resume checkpoint not found: " + o.resume, {"resume"});
        topt.resume = o.resume;
    }
    if (!o.quiet) {
        topt.on_round = [&cfg](const RoundStats& s) {
            if ((s.round + 1) % 100 == 0 || s.round + 1 == cfg.rounds)
                std::cerr << "round " << s.round + 1 << "/" << cfg.rounds << " loss " << s.loss << " lr " << s.lr << " "
                          << s.samples_per_sec << " samples/s\n";
        };
    }
    const auto res = train(cfg, topt);
    nlohmann::json summary{{"checkpoint", (std::filesystem::path(o.out) / "final").string()},
                           {"rounds", res.checkpoint.round},
                           {"seconds", res.seconds},
                           {"samples", res.audit.count()},
                           {"final_loss", res.history.empty() ? nlohmann::json(nullptr) : nlohmann::json(res.history.back().loss)}};
    std::cout << summary.dump() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// forecast

struct ForecastCliOptions {
    std::string checkpoint;
    std::string input;
    std::string out;  // empty: stdout
    std::size_t horizon = 24;
    std::string mode = "multipoint";
    std::size_t context_cap = kDefaultContextCap;
    std::uint64_t seed = 0;
    bool timing = true;  // include elapsed_ms
};

inline std::vector<std::string> forecast_lines(const ForecastCliOptions& o) {
    std::vector<std::string> bad;
    if (o.checkpoint.empty() || !std::filesystem::exists(o.checkpoint)) bad.push_back("checkpoint");
    if (o.horizon < 1) bad.push_back("horizon");
    if (o.context_cap < 1) bad.push_back("context-cap");
    ForecastMode mode{};
    try {
        mode = parse_forecast_mode(o.mode);
    } catch (const std::exception&) {
        bad.push_back("mode");
    }
    if (o.input.empty()) bad.push_back("input");
    if (!bad.empty()) throw UsageError(bad.front() == "checkpoint" ? "checkpoint missing or not found: " + o.checkpoint : "invalid forecast options", bad);
    const auto ck = detail::require_checkpoint(o.checkpoint);
    const auto hash = checkpoint_hash(o.checkpoint);
    if (!std::filesystem::exists(o.input)) throw UsageError("input not found: " + o.input, {"input"});
    const auto series = read_series_jsonl(o.input);
    const Model<float> model(ck.config, ck.params);
    std::vector<std::string> lines;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto f = forecast(model, ForecastRequest{series[i], o.horizon, mode, o.context_cap, o.seed});
        std::vector<std::string> ts;
        for (const auto t : f.timestamps) ts.push_back(format_timestamp(t));
        nlohmann::json j{{"item_id", i},
                         {"start", ts.front()},
                         {"freq", to_string(series[i].freq)},
                         {"timestamps", ts},
                         {"forecast", f.values},
                         {"provenance", {{"mode", to_string(f.mode)}, {"checkpoint_hash", hash}, {"context_cap", o.context_cap}, {"seed", o.seed}}}};
        if (o.timing) j["provenance"]["elapsed_ms"] = f.elapsed_ms;
        lines.push_back(j.dump());
    }
    return lines;
}

inline int cmd_forecast(const ForecastCliOptions& o) {
    const auto lines = forecast_lines(o);
    if (o.out.empty()) {
        for (const auto& l : lines) std::cout << l << '\n';
    } else {
        auto out = detail::open_out(o.out);
        for (const auto& l : lines) out << l << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalCliOptions {
    std::string datasets;
    std::vector<std::string> models{"snaive"};
    std::string checkpoint;
    std::size_t context_cap = kDefaultContextCap;
    std::string out = "report.json";
    std::string plot;  // default: <out stem>.plot.csv
    std::vector<std::string> exclude;
    std::uint64_t seed = 0;
    int workers = 1;
};

inline EvalReport evaluate(const EvalCliOptions& o, std::optional<Model<float>>& model_holder) {
    std::vector<std::string> bad;
    if (o.datasets.empty() || !std::filesystem::is_directory(o.datasets)) bad.push_back("datasets");
    if (o.context_cap < 1) bad.push_back("context-cap");
    if (o.workers < 1) bad.push_back("workers");
    const std::vector<std::string> known{"snaive", "m4c", "m4c-ar", "m4c-ensemble"};
    bool needs_model = false;
    for (const auto& m : o.models) {
        if (std::find(known.begin(), known.end(), m) == known.end()) bad.push_back("models");
        needs_model = needs_model || m != "snaive";
    }
    if (o.models.empty()) bad.push_back("models");
    if (!bad.empty()) throw UsageError("invalid eval options", bad);
    if (needs_model) {
        const auto ck = detail::require_checkpoint(o.checkpoint);
        model_holder.emplace(ck.config, ck.params);
    }
    const auto datasets = load_datasets(o.datasets);
    std::vector<Forecaster> fs;
    for (const auto& m : o.models) {
        if (m == "snaive") fs.push_back(seasonal_naive_forecaster());
        if (m == "m4c") fs.push_back(model_forecaster("m4c", *model_holder, ForecastMode::multipoint, o.seed));
        if (m == "m4c-ar") fs.push_back(model_forecaster("m4c-ar", *model_holder, ForecastMode::autoregressive, o.seed));
        if (m == "m4c-ensemble") fs.push_back(model_forecaster("m4c-ensemble", *model_holder, ForecastMode::ensemble, o.seed));
    }
    return run_benchmark(datasets, fs, o.context_cap, o.workers, o.exclude);
}

inline int cmd_eval(const EvalCliOptions& o) {
    std::optional<Model<float>> model;
    const auto rep = evaluate(o, model);
    auto out = detail::open_out(o.out);
    out << to_json(rep).dump(2) << '\n';
    std::filesystem::path plot = o.plot;
    if (plot.empty()) plot = std::filesystem::path(o.out).replace_extension(".plot.csv");
    auto pout = detail::open_out(plot);
    pout << plot_csv(score_rows(rep.results), rep.aggregate);
    nlohmann::json summary{{"report", o.out}, {"plot", plot.string()}};
    for (const auto& [m, g] : rep.aggregate.geometric_mean) summary["geometric_mean"][m] = g;
    std::cout << summary.dump() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// bench

struct BenchOptions {
    std::string checkpoint;
    std::size_t n_series = 2048;
    std::vector<std::size_t> contexts{512};
    std::vector<std::size_t> horizons{16, 32, 64, 128};
    std::vector<std::size_t> batches{1};
    std::vector<std::string> modes{"multipoint", "autoregressive"};
    std::size_t repeats = 5;
    std::size_t warmup = 1;
    std::uint64_t seed = 0;
    int workers = 1;
    std::string out;  // empty: stdout
};

struct BenchRow {
    std::string mode;
    std::size_t batch = 0;
    std::size_t horizon = 0;
    std::size_t context = 0;
    double wall_ms = 0;  // median over repeats, whole series set
};

/// Median wall time to forecast `n_series` synthetic hourly series, grouped in
/// batches that are processed one after another (series of a batch run on the workers).
template <class S>
std::vector<BenchRow> run_bench(const Model<S>& model, const BenchOptions& o) {
    std::vector<std::string> bad;
    if (o.n_series < 1) bad.push_back("n-series");
    if (o.repeats < 1) bad.push_back("repeats");
    if (o.contexts.empty() || std::any_of(o.contexts.begin(), o.contexts.end(), [](auto c) { return c < 2; })) bad.push_back("contexts");
    if (o.horizons.empty() || std::any_of(o.horizons.begin(), o.horizons.end(), [](auto h) { return h < 1; })) bad.push_back("horizons");
    if (o.batches.empty() || std::any_of(o.batches.begin(), o.batches.end(), [](auto b) { return b < 1; })) bad.push_back("batches");
    for (const auto& m : o.modes)
        if (m != "multipoint" && m != "autoregressive") bad.push_back("modes");
    if (o.modes.empty()) bad.push_back("modes");
    if (!bad.empty()) throw UsageError("invalid bench options", bad);

    const std::size_t max_ctx = *std::max_element(o.contexts.begin(), o.contexts.end());
    PriorMix mix;
    const SampleStream stream{o.seed, 0};
    std::vector<TimeSeries> pool(o.n_series);
    for (std::size_t i = 0; i < o.n_series; ++i)
        pool[i] = sample_training_series(mix, PriorPhase::train, Frequency{FreqUnit::hourly, 1}, max_ctx, stream, i).series;

    std::vector<BenchRow> rows;
    for (const auto& mode_name : o.modes) {
        const auto mode = parse_forecast_mode(mode_name);
        for (const auto batch : o.batches)
            for (const auto horizon : o.horizons)
                for (const auto ctx : o.contexts) {
                    const auto run_once = [&] {
                        const auto t0 = std::chrono::steady_clock::now();
                        for (std::size_t b0 = 0; b0 < o.n_series; b0 += batch) {
                            const std::size_t n = std::min(batch, o.n_series - b0);
                            parallel_for(n, o.workers, [&](std::size_t i, int) {
                                ForecastRequest req{pool[b0 + i], horizon, mode, ctx, o.seed};
                                (void)forecast(model, req);
                            });
                        }
                        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
                    };
                    for (std::size_t w = 0; w < o.warmup; ++w) (void)run_once();
                    std::vector<double> times;
                    for (std::size_t r = 0; r < o.repeats; ++r) times.push_back(run_once());
                    std::sort(times.begin(), times.end());
                    const std::size_t k = times.size();
                    const double median = k % 2 ? times[k / 2] : 0.5 * (times[k / 2 - 1] + times[k / 2]);
                    rows.push_back({mode_name, batch, horizon, ctx, median});
                }
    }
    return rows;
}

inline std::string bench_csv(const std::vector<BenchRow>& rows) {
    std::ostringstream os;
    os << "mode,batch,horizon,context,wall_ms\n";
    os.precision(6);
    os << std::fixed;
    for (const auto& r : rows) os << r.mode << ',' << r.batch << ',' << r.horizon << ',' << r.context << ',' << r.wall_ms << '\n';
    return os.str();
}

/// Least-squares slope of wall time against horizon for one mode/batch/context.
inline double horizon_slope(const std::vector<BenchRow>& rows, const std::string& mode, std::size_t batch, std::size_t context) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
    for (const auto& r : rows) {
        if (r.mode != mode || r.batch != batch || r.context != context) continue;
        const double x = static_cast<double>(r.horizon);
        sx += x;
        sy += r.wall_ms;
        sxx += x * x;
        sxy += x * r.wall_ms;
        n += 1;
    }
    const double den = n * sxx - sx * sx;
    if (n < 2 || den == 0) throw std::invalid_argument("horizon_slope: need at least two horizons");
    return (n * sxy - sx * sy) / den;
}

inline int cmd_bench(const BenchOptions& o) {
    const auto ck = detail::require_checkpoint(o.checkpoint);
    const Model<float> model(ck.config, ck.params);
    const auto csv = bench_csv(run_bench(model, o));
    if (o.out.empty()) {
        std::cout << csv;
    } else {
        auto out = detail::open_out(o.out);
        out << csv;
    }
    return 0;
}

}  // namespace m4c::cli
