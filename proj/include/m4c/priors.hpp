#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "random.hpp"
#include "series.hpp"
#include "timefeatures.hpp"

namespace m4c {

struct GenerationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

enum class PriorKind { gp, fpfn };
enum class PriorPhase { train, finetune };

inline const char* to_string(PriorKind k) { return k == PriorKind::gp ? "gp" : "fpfn"; }
inline const char* to_string(PriorPhase p) { return p == PriorPhase::train ? "train" : "finetune"; }

// ===========================================================================
// FPFN prior: linear trend x (1 + seasonal) x Weibull noise

struct FpfnConfig {
    double level_min = 0.5;
    double level_max = 50.0;
    // total relative change of the trend over the series
    double slope_min = -0.8;
    double slope_max = 2.0;
    // per-granularity seasonal scale ~ U(0, seasonal_max); harmonic amplitudes ~ N(0, scale^2 / K)
    double seasonal_max = 0.6;
    int own_harmonics = 8;
    int coarse_harmonics = 5;
    double weibull_shape_min = 1.0;
    double weibull_shape_max = 5.0;
    double noise_scale_max = 0.15;
    bool noise = true;
};

struct SeasonalPeriods {
    double own = 0;
    std::optional<double> coarse;  // next coarser granularity, in steps
};

inline constexpr double kDaysPerMonth = 365.25 / 12.0;

/// Base periodicities per granularity (minutely 60, hourly 24, daily 7,
/// monthly 12) with the next-coarser cycle expressed in steps of this series.
inline SeasonalPeriods fpfn_periods(const Frequency& f) {
    const double m = f.multiplier;
    switch (f.unit) {
        case FreqUnit::minutely: return {60.0 / m, 24.0 * 60.0 / m};
        case FreqUnit::hourly: return {24.0 / m, 7.0 * 24.0 / m};
        case FreqUnit::daily: return {7.0 / m, 12.0 * kDaysPerMonth / m};
        case FreqUnit::monthly: return {12.0 / m, std::nullopt};
        default: break;
    }
    throw ConfigError("FPFN seasonal table has no entry for frequency " + to_string(f));
}

struct Harmonic {
    double period = 1;  // in steps
    double amplitude = 0;
    double phase = 0;
    bool coarse = false;
};

struct FpfnComponents {
    double level = 1;
    double slope = 0;  // per step
    std::vector<Harmonic> harmonics;
    double noise_shape = 1;
    double noise_scale = 0;
};

/// Multiplicative noise factor 1 + scale (w - E[w]) with w ~ Weibull(shape, 1); unit mean.
inline double weibull_noise_factor(Engine& rng, double shape, double scale) {
    const double w = std::weibull_distribution<double>(shape, 1.0)(rng);
    return 1.0 + scale * (w - std::tgamma(1.0 + 1.0 / shape));
}

inline FpfnComponents sample_fpfn_components(const FpfnConfig& cfg, const Frequency& freq, std::size_t n,
                                             Engine& rng) {
    const auto periods = fpfn_periods(freq);
    FpfnComponents c;
    c.level = log_uniform(rng, cfg.level_min, cfg.level_max);
    c.slope = c.level * uniform(rng, cfg.slope_min, cfg.slope_max) / static_cast<double>(std::max<std::size_t>(n, 1));

    auto add_harmonics = [&](double base_period, int count, bool coarse) {
        const double scale = cfg.seasonal_max > 0 ? uniform(rng, 0.0, cfg.seasonal_max) : 0.0;
        for (int i = 1; i <= count; ++i) {
            Harmonic h;
            h.period = base_period / i;
            h.amplitude = scale * standard_normal(rng) / std::sqrt(static_cast<double>(count));
            h.phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
            h.coarse = coarse;
            c.harmonics.push_back(h);
        }
    };
    add_harmonics(periods.own, cfg.own_harmonics, false);
    if (periods.coarse) add_harmonics(*periods.coarse, cfg.coarse_harmonics, true);

    c.noise_shape = uniform(rng, cfg.weibull_shape_min, cfg.weibull_shape_max);
    c.noise_scale = cfg.noise ? uniform(rng, 0.0, cfg.noise_scale_max) : 0.0;
    return c;
}

inline std::vector<double> render_fpfn(const FpfnComponents& c, std::size_t n, Engine& rng) {
    std::vector<double> y(n);
    for (std::size_t t = 0; t < n; ++t) {
        const double tt = static_cast<double>(t);
        double seasonal = 0;
        for (const auto& h : c.harmonics) seasonal += h.amplitude * std::sin(2.0 * std::numbers::pi * tt / h.period + h.phase);
        const double trend = c.level + c.slope * tt;
        const double noise = c.noise_scale > 0 ? weibull_noise_factor(rng, c.noise_shape, c.noise_scale) : 1.0;
        y[t] = trend * (1.0 + seasonal) * noise;
    }
    return y;
}

inline std::vector<double> sample_fpfn(const FpfnConfig& cfg, const Frequency& freq, std::size_t n, Engine& rng) {
    if (n == 0) throw std::invalid_argument("sample_fpfn: n must be >= 1");
    const auto comps = sample_fpfn_components(cfg, freq, n, rng);
    return render_fpfn(comps, n, rng);
}

// ===========================================================================
// Kernels

enum class KernelKind { linear, polynomial, matern, periodic };

inline const char* to_string(KernelKind k) {
    switch (k) {
        case KernelKind::linear: return "linear";
        case KernelKind::polynomial: return "polynomial";
        case KernelKind::matern: return "matern";
        case KernelKind::periodic: return "periodic";
    }
    return "?";
}

struct BaseKernel {
    KernelKind kind = KernelKind::periodic;
    double variance = 1;     // sigma^2
    double offset = 0;       // c, linear/polynomial
    int degree = 2;          // polynomial
    double nu = 1.5;         // matern smoothness: 0.5, 1.5, 2.5
    double lengthscale = 1;  // matern/periodic
    double period = 1;       // periodic, in normalised time units

    bool stationary() const { return kind == KernelKind::matern || kind == KernelKind::periodic; }

    // Stationary kernels as a function of lag r = |t1 - t2|.
    double of_lag(double r) const {
        switch (kind) {
            case KernelKind::matern: {
                const double s = r / lengthscale;
                if (nu == 0.5) return variance * std::exp(-s);
                if (nu == 1.5) {
                    const double a = std::sqrt(3.0) * s;
                    return variance * (1.0 + a) * std::exp(-a);
                }
                const double a = std::sqrt(5.0) * s;
                return variance * (1.0 + a + 5.0 * s * s / 3.0) * std::exp(-a);
            }
            case KernelKind::periodic: {
                const double sn = std::sin(std::numbers::pi * r / period);
                return variance * std::exp(-2.0 * sn * sn / (lengthscale * lengthscale));
            }
            default: break;
        }
        throw std::logic_error("of_lag on a non-stationary kernel");
    }

    double operator()(double t1, double t2) const {
        switch (kind) {
            case KernelKind::linear: return variance * t1 * t2 + offset;
            case KernelKind::polynomial: return std::pow(variance * t1 * t2 + offset, degree);
            default: return of_lag(std::abs(t1 - t2));
        }
    }

    void validate() const {
        if (!(variance >= 0)) throw std::invalid_argument("kernel variance must be >= 0");
        if (kind == KernelKind::matern && nu != 0.5 && nu != 1.5 && nu != 2.5)
            throw std::invalid_argument("matern nu must be 1/2, 3/2 or 5/2");
        if (kind == KernelKind::polynomial && degree != 2 && degree != 3)
            throw std::invalid_argument("polynomial degree must be 2 or 3");
        if (kind == KernelKind::periodic && !(period > 0)) throw std::invalid_argument("period must be > 0");
        if (stationary() && !(lengthscale > 0)) throw std::invalid_argument("lengthscale must be > 0");
        if (!(offset >= 0)) throw std::invalid_argument("kernel offset must be >= 0");
    }
};

/// Binary expression tree over base kernels; nodes stored in a flat vector.
class CompositeKernel {
public:
    enum class Op { leaf, add, multiply };
    struct Node {
        Op op = Op::leaf;
        BaseKernel kernel{};
        int left = -1;
        int right = -1;
    };

    CompositeKernel() = default;
    explicit CompositeKernel(const BaseKernel& k) : nodes_{Node{Op::leaf, k, -1, -1}}, root_(0) {}

    static CompositeKernel combine(const CompositeKernel& a, const CompositeKernel& b, Op op) {
        if (op == Op::leaf) throw std::invalid_argument("combine needs add or multiply");
        CompositeKernel out;
        out.nodes_ = a.nodes_;
        const int shift = static_cast<int>(a.nodes_.size());
        for (auto n : b.nodes_) {
            if (n.left >= 0) n.left += shift;
            if (n.right >= 0) n.right += shift;
            out.nodes_.push_back(n);
        }
        out.nodes_.push_back(Node{op, {}, a.root_, b.root_ + shift});
        out.root_ = static_cast<int>(out.nodes_.size()) - 1;
        return out;
    }

    double operator()(double t1, double t2) const { return eval(root_, t1, t2); }

    std::vector<BaseKernel> leaves() const {
        std::vector<BaseKernel> out;
        for (const auto& n : nodes_)
            if (n.op == Op::leaf) out.push_back(n.kernel);
        return out;
    }
    std::size_t leaf_count() const { return leaves().size(); }
    std::size_t combinator_count() const { return nodes_.size() - leaf_count(); }
    const std::vector<Node>& nodes() const { return nodes_; }
    int root() const { return root_; }
    bool empty() const { return nodes_.empty(); }

    /// Gram matrix on grid points; stationary leaves are evaluated once per lag.
    Eigen::MatrixXd gram(const std::vector<double>& grid) const {
        if (empty()) throw std::logic_error("gram of an empty kernel");
        return gram_node(root_, grid);
    }

    std::string describe() const { return describe_node(root_); }

private:
    double eval(int id, double t1, double t2) const {
        const auto& n = nodes_[static_cast<std::size_t>(id)];
        switch (n.op) {
            case Op::leaf: return n.kernel(t1, t2);
            case Op::add: return eval(n.left, t1, t2) + eval(n.right, t1, t2);
            case Op::multiply: return eval(n.left, t1, t2) * eval(n.right, t1, t2);
        }
        return 0;
    }

    Eigen::MatrixXd gram_node(int id, const std::vector<double>& grid) const {
        const auto& n = nodes_[static_cast<std::size_t>(id)];
        const auto sz = static_cast<Eigen::Index>(grid.size());
        if (n.op == Op::add) return gram_node(n.left, grid) + gram_node(n.right, grid);
        if (n.op == Op::multiply) return gram_node(n.left, grid).cwiseProduct(gram_node(n.right, grid));
        Eigen::MatrixXd g(sz, sz);
        for (Eigen::Index i = 0; i < sz; ++i)
            for (Eigen::Index j = 0; j <= i; ++j) g(i, j) = g(j, i) = n.kernel(grid[i], grid[j]);
        return g;
    }

    std::string describe_node(int id) const {
        const auto& n = nodes_[static_cast<std::size_t>(id)];
        if (n.op == Op::leaf) return to_string(n.kernel.kind);
        return "(" + describe_node(n.left) + (n.op == Op::add ? " + " : " * ") + describe_node(n.right) + ")";
    }

    std::vector<Node> nodes_;
    int root_ = -1;
};

// ===========================================================================
// GP prior

struct KernelWeights {
    double periodic = 0;
    double matern = 0;
    double linear = 0;
    double polynomial = 0;
};

struct GpConfig {
    KernelWeights train_weights{5.0, 1.5, 1.0, 0.0};
    KernelWeights finetune_weights{5.0, 2.0, 0.0, 1.0};
    int max_kernels = 6;
    std::array<double, 3> jitter_levels{0.1, 0.01, 0.001};
    std::array<double, 3> jitter_probs{0.1, 0.2, 0.7};
    double linear_mean_prob = 0.5;
    // log-uniform hyperparameter ranges
    double lengthscale_min = 0.05, lengthscale_max = 2.0;
    double variance_min = 0.1, variance_max = 10.0;
    double offset_max = 1.0;
    // slope of the linear mean on the normalised grid (shared with the FPFN trend range)
    double slope_min = -0.8, slope_max = 2.0;
    // probability that a periodic leaf uses a calendar period of the series frequency
    double calendar_period_prob = 0.5;
    int max_cholesky_retries = 3;

    const KernelWeights& weights(PriorPhase p) const { return p == PriorPhase::train ? train_weights : finetune_weights; }
};

// Periods (in steps) that carry calendar meaning for each frequency.
inline std::vector<double> calendar_periods(const Frequency& f) {
    const double m = f.multiplier;
    std::vector<double> p;
    switch (f.unit) {
        case FreqUnit::minutely: p = {60.0, 1440.0}; break;
        case FreqUnit::hourly: p = {24.0, 168.0}; break;
        case FreqUnit::daily: p = {7.0, kDaysPerMonth, 365.25}; break;
        case FreqUnit::business_daily: p = {5.0, 21.75, 261.0}; break;
        case FreqUnit::weekly: p = {365.25 / 7.0, 365.25 / 84.0}; break;
        case FreqUnit::monthly: p = {12.0, 3.0}; break;
        case FreqUnit::quarterly: p = {4.0}; break;
    }
    for (auto& x : p) x /= m;
    return p;
}

/// Series length and frequency, used to pick periods that are meaningful for the grid.
struct KernelContext {
    std::size_t n = 256;
    Frequency freq{FreqUnit::daily, 1};
};

inline KernelKind draw_kernel_kind(const KernelWeights& w, Engine& rng) {
    std::discrete_distribution<int> dist({w.periodic, w.matern, w.linear, w.polynomial});
    switch (dist(rng)) {
        case 0: return KernelKind::periodic;
        case 1: return KernelKind::matern;
        case 2: return KernelKind::linear;
        default: return KernelKind::polynomial;
    }
}

inline BaseKernel sample_base_kernel(const GpConfig& cfg, KernelKind kind, const KernelContext& ctx, Engine& rng) {
    BaseKernel k;
    k.kind = kind;
    k.variance = log_uniform(rng, cfg.variance_min, cfg.variance_max);
    k.lengthscale = log_uniform(rng, cfg.lengthscale_min, cfg.lengthscale_max);
    switch (kind) {
        case KernelKind::linear: k.offset = uniform(rng, 0.0, cfg.offset_max); break;
        case KernelKind::polynomial:
            k.offset = uniform(rng, 0.0, cfg.offset_max);
            k.degree = bernoulli(rng, 0.5) ? 2 : 3;
            break;
        case KernelKind::matern: {
            static constexpr std::array<double, 3> nus{0.5, 1.5, 2.5};
            k.nu = nus[static_cast<std::size_t>(uniform_int(rng, 0, 2))];
            break;
        }
        case KernelKind::periodic: {
            const double n = static_cast<double>(std::max<std::size_t>(ctx.n, 2));
            std::vector<double> steps;
            for (double p : calendar_periods(ctx.freq))
                if (p >= 2.0 && p <= n / 2.0) steps.push_back(p);
            if (!steps.empty() && bernoulli(rng, cfg.calendar_period_prob)) {
                k.period = steps[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long>(steps.size()) - 1))] / n;
            } else {
                static constexpr std::array<double, 9> fractions{1. / 2, 1. / 3, 1. / 4, 1. / 6, 1. / 8,
                                                                 1. / 12, 1. / 16, 1. / 24, 1. / 32};
                std::vector<double> ok;
                for (double fr : fractions)
                    if (fr * n >= 2.0) ok.push_back(fr);
                if (ok.empty()) ok.push_back(0.5);
                k.period = ok[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long>(ok.size()) - 1))];
            }
            break;
        }
    }
    return k;
}

/// Leaf count ~ U{1..max_kernels}; kinds drawn with the phase weights; trees
/// grown by merging two random subtrees with a uniformly drawn add/multiply.
inline CompositeKernel sample_kernel(const GpConfig& cfg, PriorPhase phase, Engine& rng, const KernelContext& ctx = {}) {
    const auto count = uniform_int(rng, 1, cfg.max_kernels);
    std::vector<CompositeKernel> pool;
    for (long i = 0; i < count; ++i)
        pool.emplace_back(sample_base_kernel(cfg, draw_kernel_kind(cfg.weights(phase), rng), ctx, rng));
    while (pool.size() > 1) {
        auto i = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long>(pool.size()) - 1));
        auto a = std::move(pool[i]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(i));
        auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long>(pool.size()) - 1));
        auto b = std::move(pool[j]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(j));
        const auto op = bernoulli(rng, 0.5) ? CompositeKernel::Op::add : CompositeKernel::Op::multiply;
        pool.push_back(CompositeKernel::combine(a, b, op));
    }
    return pool.front();
}

inline double sample_jitter(const GpConfig& cfg, Engine& rng) {
    std::discrete_distribution<int> dist(cfg.jitter_probs.begin(), cfg.jitter_probs.end());
    return cfg.jitter_levels[static_cast<std::size_t>(dist(rng))];
}

struct GpMean {
    double intercept = 0;
    double slope = 0;  // zero mean when both are 0
    double operator()(double t) const { return intercept + slope * t; }
};

inline std::vector<double> gp_grid(std::size_t n) {
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = static_cast<double>(i) / static_cast<double>(n);
    return g;
}

/// Lower Cholesky factor of gram + jitter I, escalating jitter x10 per retry.
inline Eigen::MatrixXd jittered_cholesky(const Eigen::MatrixXd& gram, double jitter, int max_retries) {
    const auto n = gram.rows();
    // degenerate covariance without jitter: the draw is the mean
    if (jitter == 0.0 && gram.isZero(0.0)) return Eigen::MatrixXd::Zero(n, n);
    if (gram.cwiseAbs().maxCoeff() == 0.0 && jitter == 0.0) return Eigen::MatrixXd::Zero(n, n);
    double j = jitter;
    for (int attempt = 0; attempt <= max_retries; ++attempt) {
        Eigen::MatrixXd k = gram;
        k.diagonal().array() += j;
        Eigen::LLT<Eigen::MatrixXd> llt(k);
        if (llt.info() == Eigen::Success) return llt.matrixL();
        j = (j > 0 ? j : 1e-9) * 10.0;
    }
    throw GenerationError("Cholesky failed after jitter escalation");
}

/// Draw = mean + L z on the grid t_i = i / n.
inline std::vector<double> sample_gp(const CompositeKernel& k, const GpMean& mean, double jitter, std::size_t n,
                                     Engine& rng, int max_retries = 3) {
    if (n < 2) throw std::invalid_argument("sample_gp: n must be >= 2");
    const auto grid = gp_grid(n);
    const Eigen::MatrixXd chol = jittered_cholesky(k.gram(grid), jitter, max_retries);
    Eigen::VectorXd z(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = standard_normal(rng);
    const Eigen::VectorXd draw = chol.triangularView<Eigen::Lower>() * z;
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = mean(grid[i]) + draw(static_cast<Eigen::Index>(i));
    return y;
}

inline GpMean sample_gp_mean(const GpConfig& cfg, Engine& rng) {
    if (!bernoulli(rng, cfg.linear_mean_prob)) return {};
    return {standard_normal(rng), uniform(rng, cfg.slope_min, cfg.slope_max)};
}

// ===========================================================================
// Signal-level noise

struct SpikePlan {
    std::size_t interval = 2;
    std::size_t window = 1;
    std::size_t offset = 0;
    double magnitude = 1;
    std::vector<std::size_t> positions;   // every spike slot, in order
    std::vector<bool> suppressed;         // parallel to positions
};

inline constexpr double kMaxSpikeMaskFraction = 0.4;

/// Spike slots at offset + j * interval; each run of `window` consecutive
/// slots has a random subset of at most 40% of its slots suppressed.
inline SpikePlan plan_spikes(std::size_t n, std::size_t interval, std::size_t window, double magnitude, Engine& rng) {
    if (interval < 2) throw std::invalid_argument("spike interval must be >= 2");
    if (window < 1) throw std::invalid_argument("spike window must be >= 1");
    SpikePlan plan;
    plan.interval = interval;
    plan.window = window;
    plan.magnitude = magnitude;
    plan.offset = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long>(interval) - 1));
    for (std::size_t p = plan.offset; p < n; p += interval) plan.positions.push_back(p);
    plan.suppressed.assign(plan.positions.size(), false);
    const auto max_masked = static_cast<long>(std::floor(kMaxSpikeMaskFraction * static_cast<double>(window)));
    for (std::size_t w0 = 0; w0 < plan.positions.size(); w0 += window) {
        const std::size_t len = std::min(window, plan.positions.size() - w0);
        const auto cap = std::min<long>(max_masked, static_cast<long>(std::floor(kMaxSpikeMaskFraction * static_cast<double>(len))));
        const auto k = uniform_int(rng, 0, cap);
        std::vector<std::size_t> slots(len);
        for (std::size_t i = 0; i < len; ++i) slots[i] = w0 + i;
        std::shuffle(slots.begin(), slots.end(), rng);
        for (long i = 0; i < k; ++i) plan.suppressed[slots[static_cast<std::size_t>(i)]] = true;
    }
    return plan;
}

inline void apply_spike_plan(std::vector<double>& y, const SpikePlan& plan) {
    for (std::size_t i = 0; i < plan.positions.size(); ++i)
        if (!plan.suppressed[i]) y[plan.positions[i]] *= plan.magnitude;
}

inline double sample_spike_magnitude(Engine& rng) {
    return std::exp(std::abs(std::normal_distribution<double>(0.7, 0.3)(rng)));
}

inline TimeSeries apply_spikes(TimeSeries s, std::size_t interval, std::size_t window, Engine& rng) {
    const double magnitude = sample_spike_magnitude(rng);
    apply_spike_plan(s.values, plan_spikes(s.size(), interval, window, magnitude, rng));
    return s;
}

struct StepPlan {
    double high = 1;
    double low = 1;
    bool starts_high = true;
    std::vector<std::size_t> boundaries;  // segment starts, first is 0

    double level(std::size_t segment) const { return ((segment % 2 == 0) == starts_high) ? high : low; }
};

inline StepPlan plan_steps(std::size_t n, double high, double low, Engine& rng) {
    StepPlan plan;
    plan.high = high;
    plan.low = low;
    plan.starts_high = bernoulli(rng, 0.5);
    const long lo = std::max<long>(1, static_cast<long>(n) / 10);
    const long hi = std::max<long>(lo, static_cast<long>(n) / 3);
    for (std::size_t b = 0; b < n; b += static_cast<std::size_t>(uniform_int(rng, lo, hi))) plan.boundaries.push_back(b);
    return plan;
}

inline void apply_step_plan(std::vector<double>& y, const StepPlan& plan) {
    for (std::size_t s = 0; s < plan.boundaries.size(); ++s) {
        const std::size_t end = s + 1 < plan.boundaries.size() ? plan.boundaries[s + 1] : y.size();
        for (std::size_t t = plan.boundaries[s]; t < end; ++t) y[t] *= plan.level(s);
    }
}

/// Alternating high/low multiplicative levels, each ~ U(0.5, 1.5) and distinct.
inline TimeSeries apply_steps(TimeSeries s, Engine& rng) {
    double a = uniform(rng, 0.5, 1.5), b = uniform(rng, 0.5, 1.5);
    while (a == b) b = uniform(rng, 0.5, 1.5);
    apply_step_plan(s.values, plan_steps(s.size(), std::max(a, b), std::min(a, b), rng));
    return s;
}

// ===========================================================================
// Training mixture

struct PriorMix {
    double gp_fraction = 0.7;
    double spike_prob = 0.1;
    double step_prob = 0.1;
    FpfnConfig fpfn{};
    GpConfig gp{};
};

struct Provenance {
    PriorKind prior = PriorKind::gp;
    PriorPhase phase = PriorPhase::train;
    std::uint64_t seed = 0;
    std::uint64_t index = 0;
    std::string kernel;  // gp only
    std::vector<KernelKind> kernel_leaves;
    bool spikes = false;
    bool steps = false;
};

inline nlohmann::json to_json(const Provenance& p) {
    nlohmann::json j{{"prior", to_string(p.prior)}, {"phase", to_string(p.phase)}, {"seed", p.seed}, {"index", p.index},
                     {"spikes", p.spikes}, {"steps", p.steps}};
    if (p.prior == PriorKind::gp) j["kernel"] = p.kernel;
    return j;
}

struct GeneratedSeries {
    TimeSeries series;
    Provenance provenance;
};

inline Frequency sample_frequency(PriorKind kind, Engine& rng) {
    static constexpr std::array<FreqUnit, 4> fpfn_units{FreqUnit::minutely, FreqUnit::hourly, FreqUnit::daily,
                                                        FreqUnit::monthly};
    static constexpr std::array<FreqUnit, 7> all_units{FreqUnit::minutely, FreqUnit::hourly, FreqUnit::daily,
                                                       FreqUnit::business_daily, FreqUnit::weekly,
                                                       FreqUnit::monthly, FreqUnit::quarterly};
    if (kind == PriorKind::fpfn) return {fpfn_units[static_cast<std::size_t>(uniform_int(rng, 0, 3))], 1};
    return {all_units[static_cast<std::size_t>(uniform_int(rng, 0, 6))], 1};
}

inline Timestamp sample_start(const Frequency& f, Engine& rng) {
    using namespace std::chrono;
    auto day_point = sys_days{year{2000} / January / 1} + days{uniform_int(rng, 0, 9000)};
    Timestamp ts{day_point};
    switch (f.unit) {
        case FreqUnit::minutely: ts += minutes{uniform_int(rng, 0, 1439)}; break;
        case FreqUnit::hourly: ts += hours{uniform_int(rng, 0, 23)}; break;
        case FreqUnit::business_daily:
            while (detail::is_weekend(ts)) ts += days{1};
            break;
        case FreqUnit::monthly:
        case FreqUnit::quarterly: {
            const year_month_day ymd{day_point};
            ts = Timestamp{sys_days{ymd.year() / ymd.month() / 1}};
            break;
        }
        default: break;
    }
    return ts;
}

/// Draw the series for `index` of the stream: GP with probability gp_fraction,
/// otherwise FPFN, then spikes/steps with their configured probabilities.
inline GeneratedSeries sample_training_series(const PriorMix& mix, PriorPhase phase, std::optional<Frequency> freq,
                                              std::size_t n, const SampleStream& stream, std::uint64_t index) {
    if (!(mix.gp_fraction >= 0.0 && mix.gp_fraction <= 1.0)) throw ConfigError("gp_fraction must lie in [0, 1]");
    if (n < 2) throw std::invalid_argument("training series need n >= 2");
    Engine rng = stream.engine_for(index);
    GeneratedSeries out;
    auto& prov = out.provenance;
    prov.seed = stream.seed;
    prov.index = index;
    prov.phase = phase;
    prov.prior = bernoulli(rng, mix.gp_fraction) ? PriorKind::gp : PriorKind::fpfn;

    const Frequency f = freq ? *freq : sample_frequency(prov.prior, rng);
    out.series.freq = f;
    out.series.start = sample_start(f, rng);

    if (prov.prior == PriorKind::gp) {
        const auto kernel = sample_kernel(mix.gp, phase, rng, {n, f});
        const auto mean = sample_gp_mean(mix.gp, rng);
        const double jitter = sample_jitter(mix.gp, rng);
        out.series.values = sample_gp(kernel, mean, jitter, n, rng, mix.gp.max_cholesky_retries);
        prov.kernel = kernel.describe();
        for (const auto& leaf : kernel.leaves()) prov.kernel_leaves.push_back(leaf.kind);
    } else {
        out.series.values = sample_fpfn(mix.fpfn, f, n, rng);
    }

    if (bernoulli(rng, mix.spike_prob)) {
        const auto interval = static_cast<std::size_t>(uniform_int(rng, 2, std::max<long>(2, static_cast<long>(n) / 4)));
        const auto window = static_cast<std::size_t>(uniform_int(rng, 1, 10));
        out.series = apply_spikes(std::move(out.series), interval, window, rng);
        prov.spikes = true;
    }
    if (bernoulli(rng, mix.step_prob)) {
        out.series = apply_steps(std::move(out.series), rng);
        prov.steps = true;
    }
    for (double v : out.series.values)
        if (!std::isfinite(v)) throw GenerationError("prior produced a non-finite value");
    return out;
}

}  // namespace m4c
