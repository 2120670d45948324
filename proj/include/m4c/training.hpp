#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "checkpoint.hpp"
#include "layers.hpp"
#include "network.hpp"
#include "optim.hpp"
#include "parallel.hpp"
#include "priors.hpp"
#include "random.hpp"

namespace m4c {

// ===========================================================================
// Configuration

struct TrainConfig {
    ModelConfig model = ModelConfig::desk();
    std::uint64_t rounds = 5000;
    std::uint64_t batch_size = 16;
    double lr_start = 1e-3;
    double lr_end = 1e-5;
    double lr_finetune = 1e-4;
    std::uint64_t switch_round = 4286;
    double middle_prob = 0.5;
    double cum_mean_prob = 0.0;  // reserved; cumulative-mean targets are off by default
    double gp_fraction = 0.7;
    double spike_prob = 0.1;
    double step_prob = 0.1;
    int min_seq_len = 30;
    int max_seq_len = 512;
    int min_pred_len = 10;
    int max_pred_len = 60;
    double grad_clip = 1.0;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;
    int workers = 1;
    std::uint64_t checkpoint_every = 1000;

    static TrainConfig desk() { return {}; }

    static TrainConfig full() {
        TrainConfig c;
        c.model = ModelConfig::full();
        c.rounds = 420000;
        c.batch_size = 64;
        c.lr_start = 1e-5;
        c.lr_end = 1e-7;
        c.lr_finetune = 1e-6;
        c.switch_round = 360000;
        c.checkpoint_every = 10000;
        return c;
    }

    LrSchedule schedule() const { return {lr_start, lr_end, lr_finetune, switch_round}; }
    AdamWConfig adamw() const { return {beta1, beta2, eps, weight_decay}; }

    PriorMix prior_mix() const {
        PriorMix mix;
        mix.gp_fraction = gp_fraction;
        mix.spike_prob = spike_prob;
        mix.step_prob = step_prob;
        return mix;
    }

    /// Every offending field, empty when valid.
    std::vector<std::string> invalid_fields() const {
        std::vector<std::string> bad;
        const auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
        if (rounds < 1) bad.push_back("rounds");
        if (batch_size < 1) bad.push_back("batch_size");
        if (!(lr_start > 0)) bad.push_back("lr_start");
        if (!(lr_end > 0)) bad.push_back("lr_end");
        if (!(lr_finetune > 0)) bad.push_back("lr_finetune");
        if (!prob(middle_prob)) bad.push_back("middle_prob");
        if (!prob(cum_mean_prob)) bad.push_back("cum_mean_prob");
        if (!prob(gp_fraction)) bad.push_back("gp_fraction");
        if (!prob(spike_prob)) bad.push_back("spike_prob");
        if (!prob(step_prob)) bad.push_back("step_prob");
        if (min_seq_len < 2 || max_seq_len < min_seq_len) bad.push_back("min_seq_len");
        if (min_pred_len < 1 || max_pred_len < min_pred_len) bad.push_back("min_pred_len");
        if (grad_clip < 0) bad.push_back("grad_clip");
        if (weight_decay < 0) bad.push_back("weight_decay");
        if (!(beta1 >= 0 && beta1 < 1)) bad.push_back("beta1");
        if (!(beta2 >= 0 && beta2 < 1)) bad.push_back("beta2");
        if (!(eps > 0)) bad.push_back("eps");
        if (workers < 1) bad.push_back("workers");
        try {
            model.validate();
        } catch (const std::exception&) {
            bad.push_back("model");
        }
        return bad;
    }

    void validate() const {
        const auto bad = invalid_fields();
        if (bad.empty()) return;
        std::string msg = "invalid training config fields:";
        for (const auto& b : bad) msg += " " + b;
        throw ConfigError(msg);
    }
};

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"model", to_json(c.model)},
            {"rounds", c.rounds},
            {"batch_size", c.batch_size},
            {"lr_start", c.lr_start},
            {"lr_end", c.lr_end},
            {"lr_finetune", c.lr_finetune},
            {"switch_round", c.switch_round},
            {"middle_prob", c.middle_prob},
            {"cum_mean_prob", c.cum_mean_prob},
            {"gp_fraction", c.gp_fraction},
            {"spike_prob", c.spike_prob},
            {"step_prob", c.step_prob},
            {"min_seq_len", c.min_seq_len},
            {"max_seq_len", c.max_seq_len},
            {"min_pred_len", c.min_pred_len},
            {"max_pred_len", c.max_pred_len},
            {"grad_clip", c.grad_clip},
            {"weight_decay", c.weight_decay},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"eps", c.eps},
            {"seed", c.seed},
            {"workers", c.workers},
            {"checkpoint_every", c.checkpoint_every}};
}

/// Fields absent from `j` keep the values of `base`; unknown fields are rejected.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = TrainConfig::desk()) {
    if (!j.is_object()) throw ConfigError("training config must be a JSON object");
    const auto known = to_json(base);
    std::vector<std::string> bad;
    for (const auto& [k, v] : j.items())
        if (!known.contains(k)) bad.push_back(k);
    TrainConfig c = base;
    const auto get = [&](const char* key, auto& field) {
        if (!j.contains(key)) return;
        try {
            j.at(key).get_to(field);
        } catch (const nlohmann::json::exception&) {
            bad.push_back(key);
        }
    };
    if (j.contains("model")) {
        try {
            auto merged = to_json(base.model);
            merged.update(j.at("model"));
            c.model = model_config_from_json(merged);
        } catch (const std::exception&) {
            bad.push_back("model");
        }
    }
    get("rounds", c.rounds);
    get("batch_size", c.batch_size);
    get("lr_start", c.lr_start);
    get("lr_end", c.lr_end);
    get("lr_finetune", c.lr_finetune);
    get("switch_round", c.switch_round);
    get("middle_prob", c.middle_prob);
    get("cum_mean_prob", c.cum_mean_prob);
    get("gp_fraction", c.gp_fraction);
    get("spike_prob", c.spike_prob);
    get("step_prob", c.step_prob);
    get("min_seq_len", c.min_seq_len);
    get("max_seq_len", c.max_seq_len);
    get("min_pred_len", c.min_pred_len);
    get("max_pred_len", c.max_pred_len);
    get("grad_clip", c.grad_clip);
    get("weight_decay", c.weight_decay);
    get("beta1", c.beta1);
    get("beta2", c.beta2);
    get("eps", c.eps);
    get("seed", c.seed);
    get("workers", c.workers);
    get("checkpoint_every", c.checkpoint_every);
    for (const auto& f : c.invalid_fields())
        if (std::find(bad.begin(), bad.end(), f) == bad.end()) bad.push_back(f);
    if (!bad.empty()) {
        std::string msg = "invalid training config fields:";
        for (const auto& b : bad) msg += " " + b;
        throw ConfigError(msg);
    }
    return c;
}

// ===========================================================================
// Instances

struct TrainingInstance {
    TokenSequence seq;
    std::vector<double> targets;  // scaled, aligned with seq.target_positions
    int context_len = 0;          // observed tokens
    int pred_len = 0;
    bool middle = false;
    std::size_t chunk_start = 0;  // first target position
    std::uint64_t index = 0;
    Provenance provenance{};
};

namespace detail {
inline constexpr std::uint64_t kInstanceSalt = 0x1A57A7CEULL;
inline constexpr std::uint64_t kSeriesSalt = 0x5E41E5ULL;
}  // namespace detail

/// Instance `index` of the training stream rooted at `seed`. The draw is a pure
/// function of (seed, index, phase).
inline TrainingInstance make_instance(std::uint64_t seed, std::uint64_t index, const TrainConfig& cfg, PriorPhase phase) {
    const SampleStream root{seed, 0};
    Engine rng = root.fork(detail::kInstanceSalt).engine_for(index);
    TrainingInstance inst;
    inst.index = index;
    inst.context_len = static_cast<int>(uniform_int(rng, cfg.min_seq_len, cfg.max_seq_len));
    inst.pred_len = static_cast<int>(uniform_int(rng, cfg.min_pred_len, cfg.max_pred_len));
    inst.middle = bernoulli(rng, cfg.middle_prob);
    const bool cum_mean = cfg.cum_mean_prob > 0 && bernoulli(rng, cfg.cum_mean_prob);
    const auto L = static_cast<std::size_t>(inst.context_len);
    const auto H = static_cast<std::size_t>(inst.pred_len);
    inst.chunk_start = inst.middle ? static_cast<std::size_t>(uniform_int(rng, 1, inst.context_len - 1)) : L;

    auto gen = sample_training_series(cfg.prior_mix(), phase, std::nullopt, L + H, root.fork(detail::kSeriesSalt), index);
    inst.provenance = gen.provenance;
    const auto& values = gen.series.values;
    const auto ts = gen.series.timestamps();

    std::vector<double> observed;
    observed.reserve(L);
    for (std::size_t i = 0; i < L + H; ++i)
        if (i < inst.chunk_start || i >= inst.chunk_start + H) observed.push_back(values[i]);
    const auto scaler = fit_scaler(observed);

    const auto flag = cum_mean ? TargetFlag::cumulative_mean : TargetFlag::point;
    inst.seq.tokens.reserve(L + H);
    double running = 0;
    for (std::size_t i = 0; i < L + H; ++i) {
        const bool target = i >= inst.chunk_start && i < inst.chunk_start + H;
        if (target) {
            inst.seq.target_positions.push_back(i);
            inst.seq.tokens.push_back(target_token(ts[i], flag));
            running += scaler.apply(values[i]);
            const double k = static_cast<double>(i - inst.chunk_start + 1);
            inst.targets.push_back(cum_mean ? running / k : scaler.apply(values[i]));
        } else {
            inst.seq.tokens.push_back(observed_token(ts[i], scaler.apply(values[i])));
        }
    }
    return inst;
}

// ===========================================================================
// Loss and gradients

inline double mse_loss(std::span<const double> predictions, const TrainingInstance& inst) {
    if (inst.seq.target_positions.empty()) return 0.0;
    double acc = 0;
    for (std::size_t i = 0; i < inst.seq.target_positions.size(); ++i) {
        const auto p = inst.seq.target_positions[i];
        if (p >= predictions.size()) throw std::out_of_range("mse_loss: predictions do not cover targets");
        const double d = predictions[p] - inst.targets[i];
        acc += d * d;
    }
    return acc / static_cast<double>(inst.seq.target_positions.size());
}

/// Loss of one instance; adds seed * dLoss/dparams into `grads`.
template <class S>
double loss_and_grad(const ParamStore<S>& params, ParamStore<S>* grads, const ModelConfig& cfg, const TrainingInstance& inst,
                     S seed = S(1)) {
    ad::Tape<S> tape(grads != nullptr);
    const auto pred = forward(tape, params, grads, cfg, to_inputs<S>(inst.seq));
    std::vector<S> targets(inst.targets.begin(), inst.targets.end());
    const auto loss = ad::masked_mse(tape, pred, inst.seq.target_positions, targets);
    const double value = static_cast<double>(tape.value(loss)(0, 0));
    if (grads) tape.backward(loss, seed);
    return value;
}

// ===========================================================================
// Training loop

/// Asserts the training stream is consumed as 0, 1, 2, ... without repeats.
class IndexAudit {
public:
    explicit IndexAudit(std::uint64_t first = 0) : next_(first), first_(first) {}

    void record(std::uint64_t index) {
        if (index != next_)
            throw std::logic_error("sample index audit failed: got " + std::to_string(index) + ", expected " +
                                   std::to_string(next_));
        ++next_;
    }
    std::uint64_t first() const { return first_; }
    std::uint64_t count() const { return next_ - first_; }

private:
    std::uint64_t next_;
    std::uint64_t first_;
};

struct RoundStats {
    std::uint64_t round = 0;
    double loss = 0;
    double lr = 0;
    double samples_per_sec = 0;
    double grad_norm = 0;
    PriorPhase phase = PriorPhase::train;
};

struct TrainOptions {
    std::filesystem::path out_dir;                 // metrics, phase log, checkpoints; empty = in-memory only
    std::optional<std::filesystem::path> resume;   // checkpoint to continue from
    std::function<void(const RoundStats&)> on_round;
    std::uint64_t stop_after = 0;                  // stop early after this many rounds in total (0 = run to cfg.rounds)
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<RoundStats> history;  // rounds run in this invocation
    IndexAudit audit;
    double seconds = 0;
};

namespace detail {

inline std::string round_dir_name(std::uint64_t round) {
    std::ostringstream os;
    os << "round-" << std::setw(7) << std::setfill('0') << round;
    return os.str();
}

inline void log_phase(std::ofstream& out, std::uint64_t round, PriorPhase phase, const GpConfig& gp) {
    if (!out) return;
    const auto& w = phase == PriorPhase::train ? gp.train_weights : gp.finetune_weights;
    nlohmann::json j{{"round", round}, {"phase", phase == PriorPhase::train ? "train" : "finetune"}, {"kernel_weights", {{"periodic", w.periodic}, {"matern", w.matern}, {"linear", w.linear}, {"polynomial", w.polynomial}}}};
    out << j.dump() << "\n";
    out.flush();
}

}  // namespace detail

inline PriorPhase phase_at(std::uint64_t round, const TrainConfig& cfg) {
    return in_finetune(round, cfg.schedule()) ? PriorPhase::finetune : PriorPhase::train;
}

/// Runs rounds [start, cfg.rounds). Round r consumes sample indices
/// r*batch .. r*batch + batch - 1. Deterministic for a fixed worker count.
inline TrainResult train(const TrainConfig& cfg, const TrainOptions& opt = {}) {
    namespace fs = std::filesystem;
    cfg.validate();
    TrainResult res;
    auto& ck = res.checkpoint;
    if (opt.resume) {
        ck = load_checkpoint(*opt.resume);
        if (to_json(ck.config) != to_json(cfg.model)) throw ConfigError("resume checkpoint model config differs from training config");
        if (ck.stream_seed != cfg.seed) throw ConfigError("resume checkpoint seed differs from training config");
        if (!ck.optimizer) throw CheckpointError("resume checkpoint has no optimizer state");
    } else {
        ck.config = cfg.model;
        ck.params = init_params<float>(cfg.model, cfg.seed);
        ck.stream_seed = cfg.seed;
        ck.round = 0;
        ck.optimizer = AdamWState<float>::like(ck.params);
    }
    ck.train_config = to_json(cfg);
    const std::uint64_t B = cfg.batch_size;
    res.audit = IndexAudit(ck.round * B);

    std::ofstream metrics, phases;
    if (!opt.out_dir.empty()) {
        fs::create_directories(opt.out_dir);
        const auto mpath = opt.out_dir / "metrics.csv";
        const bool append = opt.resume && fs::exists(mpath);
        metrics.open(mpath, append ? std::ios::app : std::ios::trunc);
        if (!metrics) throw std::runtime_error("cannot write " + mpath.string());
        if (!append) metrics << "round,loss,lr,samples_per_sec\n";
        phases.open(opt.out_dir / "phases.jsonl", append ? std::ios::app : std::ios::trunc);
        std::ofstream(opt.out_dir / "train_config.json") << to_json(cfg).dump(2) << "\n";
    }

    const PriorMix mix = cfg.prior_mix();
    const int W = std::max(1, std::min<int>(cfg.workers, static_cast<int>(B)));
    std::vector<ParamStore<float>> worker_grads(static_cast<std::size_t>(W), ck.params.zeros_like());
    std::vector<double> losses(B);
    ParamStore<float> grads = ck.params.zeros_like();
    const auto t_begin = std::chrono::steady_clock::now();
    const std::uint64_t end = opt.stop_after ? std::min(opt.stop_after, cfg.rounds) : cfg.rounds;
    std::optional<PriorPhase> last_phase;

    for (std::uint64_t r = ck.round; r < end; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        const PriorPhase phase = phase_at(r, cfg);
        if (!last_phase || *last_phase != phase) detail::log_phase(phases, r, phase, mix.gp);
        last_phase = phase;

        for (auto& g : worker_grads) g.set_zero();
        const float inv_b = 1.0f / static_cast<float>(B);
        parallel_for(B, W, [&](std::size_t i, int w) {
            const auto inst = make_instance(cfg.seed, r * B + i, cfg, phase);
            losses[i] = loss_and_grad(ck.params, &worker_grads[static_cast<std::size_t>(w)], cfg.model, inst, inv_b);
        });
        for (std::uint64_t i = 0; i < B; ++i) res.audit.record(r * B + i);

        double loss = 0;
        for (double l : losses) loss += l;
        loss /= static_cast<double>(B);
        grads.set_zero();
        for (const auto& g : worker_grads) grads += g;

        const bool finite_loss = std::isfinite(loss);
        const auto bad = grads.first_non_finite();
        if (!finite_loss || !bad.empty()) {
            if (!opt.out_dir.empty()) {
                Checkpoint diag = ck;
                diag.round = r;
                save_checkpoint(opt.out_dir / "diagnostic", diag);
            }
            throw NumericError(!finite_loss ? "non-finite loss at round " + std::to_string(r)
                                            : "non-finite gradient for " + bad + " at round " + std::to_string(r));
        }

        RoundStats st;
        st.round = r;
        st.loss = loss;
        st.lr = lr_at(r, cfg.schedule());
        st.phase = phase;
        st.grad_norm = clip_grad_norm(grads, cfg.grad_clip);
        adamw_step(*ck.optimizer, ck.params, grads, st.lr, cfg.adamw());
        ck.round = r + 1;
        const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        st.samples_per_sec = dt > 0 ? static_cast<double>(B) / dt : 0.0;
        res.history.push_back(st);

        if (metrics) {
            metrics << st.round << ',' << std::setprecision(9) << st.loss << ',' << st.lr << ',' << std::setprecision(6)
                    << st.samples_per_sec << '\n';
            if (ck.round % 50 == 0) metrics.flush();
        }
        if (!opt.out_dir.empty() && cfg.checkpoint_every && ck.round % cfg.checkpoint_every == 0)
            save_checkpoint(opt.out_dir / detail::round_dir_name(ck.round), ck);
        if (opt.on_round) opt.on_round(st);
    }
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
    if (!opt.out_dir.empty()) save_checkpoint(opt.out_dir / "final", ck);
    return res;
}

// ===========================================================================
// Held-out evaluation

struct HoldoutScore {
    double model_mse = 0;
    double naive_mse = 0;  // last observed value repeated
    std::size_t count = 0;
};

/// Fresh suffix-mode instances drawn from a stream disjoint from training.
inline HoldoutScore evaluate_holdout(const Model<float>& model, const TrainConfig& cfg, std::uint64_t seed, std::size_t count,
                                     int workers = 1) {
    TrainConfig c = cfg;
    c.middle_prob = 0.0;
    c.cum_mean_prob = 0.0;
    std::vector<double> model_err(count), naive_err(count);
    parallel_for(count, workers, [&](std::size_t i, int) {
        const auto inst = make_instance(splitmix64(seed ^ 0x401D07ULL), i, c, PriorPhase::train);
        const auto pred = model.predict(inst.seq);
        model_err[i] = mse_loss(pred, inst);
        const double last = inst.seq.tokens[inst.chunk_start - 1].value;
        std::vector<double> naive(inst.seq.size(), last);
        naive_err[i] = mse_loss(naive, inst);
    });
    HoldoutScore s;
    s.count = count;
    for (std::size_t i = 0; i < count; ++i) {
        s.model_mse += model_err[i];
        s.naive_mse += naive_err[i];
    }
    if (count) {
        s.model_mse /= static_cast<double>(count);
        s.naive_mse /= static_cast<double>(count);
    }
    return s;
}

}  // namespace m4c
