#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "autodiff.hpp"
#include "layers.hpp"
#include "params.hpp"
#include "random.hpp"
#include "ssm.hpp"
#include "timefeatures.hpp"

namespace m4c {

// ===========================================================================
// Min-max scaling

struct ScalerParams {
    double min = 0;
    double max = 1;
    bool degenerate = false;

    double apply(double v) const { return degenerate ? 0.5 : (v - min) / (max - min); }
    double invert(double s) const { return degenerate ? min : min + s * (max - min); }
};

inline ScalerParams fit_scaler(std::span<const double> context) {
    if (context.empty()) throw std::invalid_argument("fit_scaler: empty context");
    const auto [lo, hi] = std::minmax_element(context.begin(), context.end());
    return {*lo, *hi, *lo == *hi};
}

// ===========================================================================
// Tokens

enum class TargetFlag { observed, point, cumulative_mean };

struct TokenRecord {
    double value = 0;
    TargetFlag flag = TargetFlag::observed;
    std::array<double, kCalendarFeatureWidth> calendar{};
};

inline TokenRecord observed_token(Timestamp ts, double scaled_value) {
    return {scaled_value, TargetFlag::observed, time_features(ts)};
}

inline TokenRecord target_token(Timestamp ts, TargetFlag flag = TargetFlag::point) {
    if (flag == TargetFlag::observed) throw std::invalid_argument("target_token needs a target flag");
    return {0.0, flag, time_features(ts)};
}

struct TokenSequence {
    std::vector<TokenRecord> tokens;
    std::vector<std::size_t> target_positions;

    std::size_t size() const { return tokens.size(); }
};

/// Scaled context followed by `horizon.size()` target tokens with value 0.
inline TokenSequence assemble_tokens(std::span<const double> scaled_context, std::span<const Timestamp> context_ts,
                                     std::span<const Timestamp> horizon, TargetFlag flag = TargetFlag::point) {
    if (horizon.empty()) throw std::invalid_argument("assemble_tokens: horizon must be >= 1");
    if (scaled_context.size() != context_ts.size()) throw std::invalid_argument("assemble_tokens: context/timestamp mismatch");
    TokenSequence seq;
    seq.tokens.reserve(scaled_context.size() + horizon.size());
    for (std::size_t i = 0; i < scaled_context.size(); ++i) {
        if (i > 0 && !(context_ts[i - 1] < context_ts[i])) throw std::invalid_argument("assemble_tokens: timestamps not increasing");
        seq.tokens.push_back(observed_token(context_ts[i], scaled_context[i]));
    }
    for (std::size_t i = 0; i < horizon.size(); ++i) {
        if (!context_ts.empty() && !(context_ts.back() < horizon[i])) throw std::invalid_argument("assemble_tokens: horizon precedes context");
        seq.target_positions.push_back(seq.tokens.size());
        seq.tokens.push_back(target_token(horizon[i], flag));
    }
    return seq;
}

/// Network inputs: value column, the two flag channels (is-target, cum-mean
/// mode) and 14 calendar features.
template <class S>
struct TokenInputs {
    Mat<S> values, flags, calendar;
};

template <class S>
TokenInputs<S> to_inputs(const TokenSequence& seq) {
    const auto T = static_cast<Eigen::Index>(seq.size());
    if (T == 0) throw std::invalid_argument("empty token sequence");
    TokenInputs<S> in{Mat<S>(T, 1), Mat<S>(T, 2), Mat<S>(T, static_cast<Eigen::Index>(kCalendarFeatureWidth))};
    for (Eigen::Index t = 0; t < T; ++t) {
        const auto& tok = seq.tokens[static_cast<std::size_t>(t)];
        in.values(t, 0) = static_cast<S>(tok.value);
        in.flags(t, 0) = tok.flag == TargetFlag::observed ? S(0) : S(1);
        in.flags(t, 1) = tok.flag == TargetFlag::cumulative_mean ? S(1) : S(0);
        for (std::size_t c = 0; c < kCalendarFeatureWidth; ++c)
            in.calendar(t, static_cast<Eigen::Index>(c)) = static_cast<S>(tok.calendar[c]);
    }
    return in;
}

// ===========================================================================
// Configuration and parameter layout

enum class LayerVariant { cnn, linear };

inline const char* to_string(LayerVariant v) { return v == LayerVariant::cnn ? "cnn" : "linear"; }
inline LayerVariant parse_layer_variant(const std::string& s) {
    if (s == "cnn") return LayerVariant::cnn;
    if (s == "linear") return LayerVariant::linear;
    throw std::invalid_argument("layer variant must be cnn or linear, got " + s);
}

struct ModelConfig {
    SsdDims ssd{};
    int n_layers = 2;
    int conv_kernel = 5;
    std::array<int, 4> dilations{1, 2, 4, 8};
    int value_width = 16;
    int flag_width = 12;
    int calendar_width = 6;  // per calendar feature
    LayerVariant embedding = LayerVariant::cnn;
    LayerVariant encoder_final = LayerVariant::cnn;
    bool block_conv = false;
    SsdMode ssd_mode = SsdMode::chunked;
    int chunk = 64;

    int d_model() const { return ssd.d_model; }
    int token_width() const { return value_width + flag_width + static_cast<int>(kCalendarFeatureWidth) * calendar_width; }

    /// Causal reach of one conv stack: 1 + (K - 1) * sum(dilations).
    int receptive_field() const {
        int r = 1;
        for (int d : dilations) r += (conv_kernel - 1) * d;
        return r;
    }

    void validate() const {
        ssd.validate();
        if (n_layers < 1) throw std::invalid_argument("n_layers must be >= 1");
        if (d_model() % 4 != 0) throw std::invalid_argument("d_model must be divisible by 4 for the conv stack");
        if (conv_kernel < 1 || chunk < 1) throw std::invalid_argument("conv_kernel and chunk must be >= 1");
    }

    static ModelConfig desk() { return {}; }

    static ModelConfig full() {
        ModelConfig c;
        c.ssd = {1024, 2, 128, 16};
        return c;
    }
};

inline nlohmann::json to_json(const ModelConfig& c) {
    return {{"d_model", c.ssd.d_model},
            {"expand", c.ssd.expand},
            {"n_state", c.ssd.n_state},
            {"n_heads", c.ssd.n_heads},
            {"n_layers", c.n_layers},
            {"conv_kernel", c.conv_kernel},
            {"dilations", c.dilations},
            {"value_width", c.value_width},
            {"flag_width", c.flag_width},
            {"calendar_width", c.calendar_width},
            {"embedding", to_string(c.embedding)},
            {"encoder_final", to_string(c.encoder_final)},
            {"block_conv", c.block_conv},
            {"ssd_mode", c.ssd_mode == SsdMode::chunked ? "chunked" : "recurrent"},
            {"chunk", c.chunk}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.ssd.d_model = j.value("d_model", c.ssd.d_model);
    c.ssd.expand = j.value("expand", c.ssd.expand);
    c.ssd.n_state = j.value("n_state", c.ssd.n_state);
    c.ssd.n_heads = j.value("n_heads", c.ssd.n_heads);
    c.n_layers = j.value("n_layers", c.n_layers);
    c.conv_kernel = j.value("conv_kernel", c.conv_kernel);
    if (j.contains("dilations")) c.dilations = j.at("dilations").get<std::array<int, 4>>();
    c.value_width = j.value("value_width", c.value_width);
    c.flag_width = j.value("flag_width", c.flag_width);
    c.calendar_width = j.value("calendar_width", c.calendar_width);
    c.embedding = parse_layer_variant(j.value("embedding", std::string("cnn")));
    c.encoder_final = parse_layer_variant(j.value("encoder_final", std::string("cnn")));
    c.block_conv = j.value("block_conv", c.block_conv);
    const auto mode = j.value("ssd_mode", std::string("chunked"));
    if (mode != "chunked" && mode != "recurrent") throw std::invalid_argument("ssd_mode must be chunked or recurrent");
    c.ssd_mode = mode == "chunked" ? SsdMode::chunked : SsdMode::recurrent;
    c.chunk = j.value("chunk", c.chunk);
    c.validate();
    return c;
}

namespace detail {
inline void conv_stack_shapes(std::vector<TensorShape>& out, const std::string& prefix, const ModelConfig& c, int in_ch) {
    const int width = c.d_model() / 4;
    int cin = in_ch;
    for (int i = 0; i < 4; ++i) {
        const std::string p = prefix + ".conv" + std::to_string(i);
        out.push_back({p + ".w", c.conv_kernel * cin, width});
        out.push_back({p + ".b", 1, width});
        cin = width;
    }
    out.push_back({prefix + ".inception.w", c.d_model(), c.d_model()});
    out.push_back({prefix + ".inception.b", 1, c.d_model()});
}
}  // namespace detail

/// Every learnable array and its shape, derived from the config alone.
inline std::vector<TensorShape> param_shapes(const ModelConfig& c) {
    c.validate();
    const int d = c.d_model();
    const int inner = c.ssd.inner();
    const int hn = c.ssd.n_heads * c.ssd.n_state;
    std::vector<TensorShape> s;
    s.push_back({"embed.value.w", 1, c.value_width});
    s.push_back({"embed.value.b", 1, c.value_width});
    s.push_back({"embed.flag.w", 2, c.flag_width});
    s.push_back({"embed.flag.b", 1, c.flag_width});
    s.push_back({"embed.calendar.w", static_cast<Eigen::Index>(kCalendarFeatureWidth), c.calendar_width});
    s.push_back({"embed.calendar.b", static_cast<Eigen::Index>(kCalendarFeatureWidth), c.calendar_width});
    if (c.embedding == LayerVariant::cnn) {
        detail::conv_stack_shapes(s, "embed", c, c.token_width());
    } else {
        s.push_back({"embed.linear.w", c.token_width(), d});
        s.push_back({"embed.linear.b", 1, d});
    }
    for (int l = 0; l < c.n_layers; ++l) {
        const std::string p = "blocks." + std::to_string(l);
        s.push_back({p + ".norm.gamma", 1, d});
        s.push_back({p + ".norm.beta", 1, d});
        s.push_back({p + ".in_proj.w", d, in_proj_width(c.ssd)});
        s.push_back({p + ".in_proj.b", 1, in_proj_width(c.ssd)});
        if (c.block_conv) {
            s.push_back({p + ".conv.w", 4, inner + 2 * hn});
            s.push_back({p + ".conv.b", 1, inner + 2 * hn});
        }
        s.push_back({p + ".dt_bias", 1, c.ssd.n_heads});
        s.push_back({p + ".a_log", 1, c.ssd.n_heads});
        s.push_back({p + ".head_norm.w", 1, inner});
        s.push_back({p + ".out_proj.w", inner, d});
        s.push_back({p + ".out_proj.b", 1, d});
    }
    s.push_back({"final.norm.gamma", 1, d});
    s.push_back({"final.norm.beta", 1, d});
    if (c.encoder_final == LayerVariant::cnn) {
        detail::conv_stack_shapes(s, "final", c, d);
    } else {
        s.push_back({"final.linear.w", d, d});
        s.push_back({"final.linear.b", 1, d});
    }
    s.push_back({"decoder.w", d, 1});
    s.push_back({"decoder.b", 1, 1});
    return s;
}

inline std::size_t parameter_count(const ModelConfig& c) {
    std::size_t n = 0;
    for (const auto& s : param_shapes(c)) n += s.count();
    return n;
}

namespace detail {
inline bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}
}  // namespace detail

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases 0; norm gains 1;
/// A = exp(a_log) ~ U[1, 8]; dt_bias = softplus^-1(dt) with dt log-uniform in [1e-3, 1e-1].
template <class S>
ParamStore<S> init_params(const ModelConfig& c, std::uint64_t seed) {
    Engine rng = SampleStream{seed, 0}.fork(0x1417).engine();
    ParamStore<S> p;
    for (const auto& sh : param_shapes(c)) {
        Mat<S> m = Mat<S>::Zero(sh.rows, sh.cols);
        const auto& n = sh.name;
        if (detail::ends_with(n, ".gamma") || detail::ends_with(n, "head_norm.w")) {
            m.setOnes();
        } else if (detail::ends_with(n, ".a_log")) {
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(std::log(uniform(rng, 1.0, 8.0)));
        } else if (detail::ends_with(n, ".dt_bias")) {
            for (Eigen::Index i = 0; i < m.size(); ++i) {
                const double dt = log_uniform(rng, 1e-3, 1e-1);
                m.data()[i] = static_cast<S>(dt + std::log(-std::expm1(-dt)));
            }
        } else if (detail::ends_with(n, ".w") && n != "embed.calendar.w") {
            const double fan_in = n.find(".conv.") != std::string::npos ? 4.0 : static_cast<double>(sh.rows);
            const double bound = 1.0 / std::sqrt(fan_in);
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(uniform(rng, -bound, bound));
        } else if (n == "embed.calendar.w") {
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(uniform(rng, -1.0, 1.0));
        }
        p.add(n, std::move(m));
    }
    return p;
}

// ===========================================================================
// Forward pass

namespace detail {

template <class S>
struct Binder {
    ad::Tape<S>& tape;
    const ParamStore<S>& params;
    ParamStore<S>* grads;

    ad::Var operator()(const std::string& name) const {
        return tape.parameter(params.at(name), grads ? &grads->at(name) : nullptr);
    }
};

template <class S>
ad::Var conv_stack(ad::Tape<S>& t, const Binder<S>& P, const std::string& prefix, const ModelConfig& c, ad::Var x,
                   std::vector<ad::Var>* layers = nullptr) {
    std::vector<ad::Var> outs;
    ad::Var h = x;
    for (int i = 0; i < 4; ++i) {
        const std::string p = prefix + ".conv" + std::to_string(i);
        h = ad::silu(t, ad::causal_conv(t, h, P(p + ".w"), P(p + ".b"), c.conv_kernel, c.dilations[static_cast<std::size_t>(i)]));
        outs.push_back(h);
    }
    if (layers) *layers = outs;
    return ad::linear(t, ad::concat_cols(t, outs), P(prefix + ".inception.w"), P(prefix + ".inception.b"));
}

}  // namespace detail

/// Handles to intermediate activations, for probes.
struct ForwardTrace {
    ad::Var tokens;     // T x token_width
    ad::Var embedding;  // T x d_model
    std::vector<ad::Var> embed_conv_layers;
    std::vector<ad::Var> block_outputs;
    std::vector<Mamba2Trace> blocks;
    ad::Var encoder;    // T x d_model, after the encoder-final layer
};

/// Tokens -> embedding -> Mamba2 blocks -> encoder-final layer -> linear decoder.
/// Returns T x 1 predictions in scaled space. Gradients go to `grads` when the
/// tape records and `grads` is non-null.
template <class S>
ad::Var forward(ad::Tape<S>& t, const ParamStore<S>& params, ParamStore<S>* grads, const ModelConfig& c,
                const TokenInputs<S>& in, ForwardTrace* trace = nullptr) {
    using namespace ad;
    const m4c::detail::Binder<S> P{t, params, grads};
    const Var values = t.constant(in.values);
    const Var flags = t.constant(in.flags);
    const Var cal = t.constant(in.calendar);
    const Var tok = concat_cols(t, std::vector<Var>{linear(t, values, P("embed.value.w"), P("embed.value.b")),
                                                    linear(t, flags, P("embed.flag.w"), P("embed.flag.b")),
                                                    grouped_scalar_proj(t, cal, P("embed.calendar.w"), P("embed.calendar.b"))});
    std::vector<Var> embed_layers;
    Var h = c.embedding == LayerVariant::cnn ? m4c::detail::conv_stack(t, P, "embed", c, tok, &embed_layers)
                                             : linear(t, tok, P("embed.linear.w"), P("embed.linear.b"));
    const Var embedding = h;

    BlockOptions opt;
    opt.mode = c.ssd_mode;
    opt.chunk = c.chunk;
    opt.block_conv = c.block_conv;
    std::vector<Var> block_outputs;
    std::vector<Mamba2Trace> block_traces;
    for (int l = 0; l < c.n_layers; ++l) {
        const std::string p = "blocks." + std::to_string(l);
        Mamba2BlockVars bv;
        bv.norm_gamma = P(p + ".norm.gamma");
        bv.norm_beta = P(p + ".norm.beta");
        bv.in_w = P(p + ".in_proj.w");
        bv.in_b = P(p + ".in_proj.b");
        if (c.block_conv) {
            bv.conv_w = P(p + ".conv.w");
            bv.conv_b = P(p + ".conv.b");
        }
        bv.dt_bias = P(p + ".dt_bias");
        bv.a_log = P(p + ".a_log");
        bv.head_norm_w = P(p + ".head_norm.w");
        bv.out_w = P(p + ".out_proj.w");
        bv.out_b = P(p + ".out_proj.b");
        Mamba2Trace bt;
        h = mamba2_block(t, h, bv, c.ssd, opt, &bt);
        block_outputs.push_back(h);
        block_traces.push_back(bt);
    }
    const Var normed = layer_norm(t, h, P("final.norm.gamma"), P("final.norm.beta"), S(1e-5));
    const Var enc = c.encoder_final == LayerVariant::cnn ? m4c::detail::conv_stack(t, P, "final", c, normed)
                                                         : linear(t, normed, P("final.linear.w"), P("final.linear.b"));
    const Var out = linear(t, enc, P("decoder.w"), P("decoder.b"));
    if (trace) *trace = {tok, embedding, embed_layers, block_outputs, block_traces, enc};
    if (!t.value(out).allFinite()) throw NumericError("forward produced a non-finite prediction");
    return out;
}

/// Parameters plus config, with a counter of network evaluations.
template <class S>
class Model {
public:
    Model() = default;
    Model(ModelConfig cfg, ParamStore<S> p) : config(std::move(cfg)), params(std::move(p)) {}
    Model(const Model& o) : config(o.config), params(o.params), forward_calls_(o.forward_calls()) {}
    Model(Model&& o) noexcept : config(std::move(o.config)), params(std::move(o.params)), forward_calls_(o.forward_calls()) {}
    Model& operator=(const Model& o) {
        config = o.config;
        params = o.params;
        forward_calls_ = o.forward_calls();
        return *this;
    }

    /// Per-token predictions in scaled space; a single network evaluation.
    std::vector<double> predict(const TokenSequence& seq) const {
        forward_calls_.fetch_add(1, std::memory_order_relaxed);
        ad::Tape<S> tape(false);
        const auto out = forward(tape, params, static_cast<ParamStore<S>*>(nullptr), config, to_inputs<S>(seq));
        const auto& v = tape.value(out);
        std::vector<double> res(static_cast<std::size_t>(v.rows()));
        for (Eigen::Index i = 0; i < v.rows(); ++i) res[static_cast<std::size_t>(i)] = static_cast<double>(v(i, 0));
        return res;
    }

    std::size_t forward_calls() const { return forward_calls_.load(std::memory_order_relaxed); }
    void reset_forward_calls() { forward_calls_ = 0; }

    ModelConfig config{};
    ParamStore<S> params{};

private:
    mutable std::atomic<std::size_t> forward_calls_{0};
};

}  // namespace m4c
