// m4c: generate / train / forecast / eval / bench

#include <iostream>

#include <CLI11.hpp>

#include "m4c/commands.hpp"

namespace {

int fail(int code, const nlohmann::json& err) {
    std::cerr << err.dump() << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    using namespace m4c::cli;
    CLI::App app{"Synthetic-prior time series forecaster: data generation, training, forecasting and evaluation", "m4c"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "m4c 1.0.0");

    GenerateOptions gen;
    auto* g = app.add_subcommand("generate", "Sample synthetic training series from the priors as JSONL");
    g->add_option("--count", gen.count, "Number of series")->capture_default_str();
    g->add_option("--length", gen.length, "Observations per series")->capture_default_str();
    g->add_option("--seed", gen.seed, "Root seed of the sample stream")->capture_default_str();
    g->add_option("--gp-fraction", gen.gp_fraction, "Probability of drawing from the GP prior (rest: FPFN)")->capture_default_str();
    g->add_option("--phase", gen.phase, "Kernel-bank weights: train or finetune")->capture_default_str();
    g->add_option("--freq", gen.freq, "Fixed frequency (e.g. H, D, 3M); sampled per series when omitted");
    g->add_option("--out", gen.out, "Output JSONL path (stdout when omitted)");
    g->add_option("--workers", gen.workers, "Worker threads")->capture_default_str();

    TrainCliOptions tr;
    auto* t = app.add_subcommand("train", "Train a model on freshly sampled prior data");
    t->add_option("--config", tr.config, "JSON file with TrainConfig fields (overrides the preset)");
    t->add_option("--preset", tr.preset, "Base configuration: desk or full")->capture_default_str();
    t->add_option("--out", tr.out, "Run directory (metrics.csv, checkpoints, final/)")->capture_default_str();
    t->add_option("--resume", tr.resume, "Checkpoint directory to continue from");
    t->add_option("--rounds", tr.rounds, "Total training rounds");
    t->add_option("--batch-size", tr.batch_size, "Instances per round");
    t->add_option("--seed", tr.seed, "Training stream seed");
    t->add_option("--workers", tr.workers, "Worker threads");
    t->add_option("--checkpoint-every", tr.checkpoint_every, "Rounds between periodic checkpoints");
    t->add_flag("--quiet", tr.quiet, "No progress on stderr");

    ForecastCliOptions fc;
    auto* f = app.add_subcommand("forecast", "Forecast every series of a JSONL file");
    f->add_option("--checkpoint", fc.checkpoint, "Checkpoint directory");
    f->add_option("--input", fc.input, "Input JSONL (start, freq, target)");
    f->add_option("--out", fc.out, "Output JSONL path (stdout when omitted)");
    f->add_option("--horizon", fc.horizon, "Prediction length")->capture_default_str();
    f->add_option("--mode", fc.mode, "multipoint, autoregressive or ensemble")->capture_default_str();
    f->add_option("--context-cap", fc.context_cap, "Most recent observations used as context")->capture_default_str();
    f->add_option("--seed", fc.seed, "Seed of the ensemble dropout masks")->capture_default_str();
    bool no_timing = false;
    f->add_flag("--no-timing", no_timing, "Omit elapsed_ms from the output");

    EvalCliOptions ev;
    auto* e = app.add_subcommand("eval", "Score forecasters with MASE on a directory of datasets");
    e->add_option("--datasets", ev.datasets, "Directory with meta.json and <name>.jsonl files");
    e->add_option("--models", ev.models, "Any of snaive, m4c, m4c-ar, m4c-ensemble")->delimiter(',')->capture_default_str();
    e->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory (needed for m4c models)");
    e->add_option("--context-cap", ev.context_cap, "Most recent observations used as context")->capture_default_str();
    e->add_option("--out", ev.out, "Report JSON path")->capture_default_str();
    e->add_option("--plot", ev.plot, "Plot-data CSV path (default: <out>.plot.csv)");
    e->add_option("--exclude", ev.exclude, "Datasets left out of the aggregates")->delimiter(',');
    e->add_option("--seed", ev.seed, "Seed of the ensemble dropout masks")->capture_default_str();
    e->add_option("--workers", ev.workers, "Worker threads")->capture_default_str();

    BenchOptions bo;
    auto* b = app.add_subcommand("bench", "Inference wall time versus horizon, context and batch size");
    b->add_option("--checkpoint", bo.checkpoint, "Checkpoint directory");
    b->add_option("--n-series", bo.n_series, "Series per timed run")->capture_default_str();
    b->add_option("--contexts", bo.contexts, "Context lengths")->delimiter(',')->capture_default_str();
    b->add_option("--horizons", bo.horizons, "Prediction lengths")->delimiter(',')->capture_default_str();
    b->add_option("--batches", bo.batches, "Batch sizes")->delimiter(',')->capture_default_str();
    b->add_option("--modes", bo.modes, "multipoint and/or autoregressive")->delimiter(',')->capture_default_str();
    b->add_option("--repeats", bo.repeats, "Timed repeats (median reported)")->capture_default_str();
    b->add_option("--warmup", bo.warmup, "Untimed warmup runs")->capture_default_str();
    b->add_option("--seed", bo.seed, "Seed of the synthetic series")->capture_default_str();
    b->add_option("--workers", bo.workers, "Worker threads")->capture_default_str();
    b->add_option("--out", bo.out, "Output CSV path (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForAllHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForVersion& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        return fail(2, error_json(ex.what()));
    }
    fc.timing = !no_timing;

    try {
        if (*g) return cmd_generate(gen);
        if (*t) return cmd_train(tr);
        if (*f) return cmd_forecast(fc);
        if (*e) return cmd_eval(ev);
        if (*b) return cmd_bench(bo);
    } catch (const UsageError& ex) {
        return fail(2, error_json(ex.what(), ex.fields));
    } catch (const m4c::ConfigError& ex) {
        return fail(2, error_json(ex.what()));
    } catch (const std::exception& ex) {
        return fail(1, error_json(ex.what()));
    }
    return 2;
}
