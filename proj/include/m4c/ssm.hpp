#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "autodiff.hpp"
#include "layers.hpp"

namespace m4c {

struct SsdDims {
    int d_model = 64;
    int expand = 2;
    int n_state = 16;
    int n_heads = 4;

    int inner() const { return expand * d_model; }
    int head_dim() const { return inner() / n_heads; }

    void validate() const {
        if (d_model < 1 || expand < 1 || n_state < 1 || n_heads < 1)
            throw std::invalid_argument("SsdDims: all dimensions must be positive");
        if (inner() % n_heads != 0) throw std::invalid_argument("SsdDims: expand * d_model must be divisible by n_heads");
    }
};

/// Per-timestep inputs of the scalar-decay recurrence for all heads.
/// x: T x (H*P), a: T x H, B and C: T x (H*N).
template <class S>
struct SsdInputs {
    Mat<S> x, a, B, C;

    Eigen::Index steps() const { return x.rows(); }
};

struct SsdShape {
    int heads = 1;
    int head_dim = 1;
    int n_state = 1;
};

template <class S>
SsdShape check_ssd_inputs(const SsdInputs<S>& in, int heads) {
    if (heads < 1) throw std::invalid_argument("ssd: heads must be >= 1");
    const auto T = in.x.rows();
    if (in.a.rows() != T || in.B.rows() != T || in.C.rows() != T) throw std::invalid_argument("ssd: step count mismatch");
    if (in.a.cols() != heads || in.x.cols() % heads != 0 || in.B.cols() % heads != 0 || in.B.cols() != in.C.cols())
        throw std::invalid_argument("ssd: per-head width mismatch");
    return {heads, static_cast<int>(in.x.cols() / heads), static_cast<int>(in.B.cols() / heads)};
}

/// Running hidden state, one P x N block per head stacked as (H*P) x N.
template <class S>
struct SsdState {
    SsdShape shape;
    Mat<S> h;

    explicit SsdState(SsdShape s) : shape(s), h(Mat<S>::Zero(s.heads * s.head_dim, s.n_state)) {}
};

/// One step: per head h <- a h + x (outer) B, y = h C. Rows are single timesteps.
template <class S, class RowX, class RowA, class RowB, class RowC>
Eigen::Matrix<S, 1, Eigen::Dynamic> ssd_step(SsdState<S>& st, const RowX& x, const RowA& a, const RowB& B, const RowC& C) {
    const auto [H, P, N] = st.shape;
    if (x.size() != H * P || a.size() != H || B.size() != H * N || C.size() != H * N)
        throw std::invalid_argument("ssd_step: dimension mismatch with state");
    Eigen::Matrix<S, 1, Eigen::Dynamic> y(H * P);
    for (int h = 0; h < H; ++h) {
        auto hs = st.h.middleRows(h * P, P);
        hs *= a(h);
        hs.noalias() += x.segment(h * P, P).transpose() * B.segment(h * N, N);
        y.segment(h * P, P).noalias() = (hs * C.segment(h * N, N).transpose()).transpose();
    }
    return y;
}

template <class S>
Mat<S> ssd_forward_recurrent(const SsdInputs<S>& in, int heads) {
    const auto shape = check_ssd_inputs(in, heads);
    SsdState<S> st(shape);
    Mat<S> y(in.steps(), in.x.cols());
    for (Eigen::Index t = 0; t < in.steps(); ++t) y.row(t) = ssd_step(st, in.x.row(t), in.a.row(t), in.B.row(t), in.C.row(t));
    return y;
}

/// Chunked evaluation. Inside a chunk the output is the masked quadratic form
/// (L o C B^T) X with L[i][j] = prod_{k=j+1..i} a_k; the state entering the chunk
/// contributes its decayed projection, and the chunk-final state is carried on.
/// Decay products are formed from sums of log a; zero decays are tracked
/// separately so that a_k = 0 cuts the mask exactly.
template <class S>
Mat<S> ssd_forward_chunked(const SsdInputs<S>& in, int heads, int chunk) {
    if (chunk < 1) throw std::invalid_argument("ssd_forward_chunked: chunk size must be >= 1");
    const auto [H, P, N] = check_ssd_inputs(in, heads);
    const Eigen::Index T = in.steps();
    Mat<S> y(T, in.x.cols());
    std::vector<S> cum;
    std::vector<Eigen::Index> last_zero;
    Mat<S> state(P, N), G, decay_mask;
    Vec<S> dec_in, dec_out;

    for (int h = 0; h < H; ++h) {
        state.setZero();
        for (Eigen::Index c0 = 0; c0 < T; c0 += chunk) {
            const Eigen::Index q = std::min<Eigen::Index>(chunk, T - c0);
            cum.assign(static_cast<std::size_t>(q), S(0));
            last_zero.assign(static_cast<std::size_t>(q), -1);
            S run = 0;
            Eigen::Index lz = -1;
            for (Eigen::Index i = 0; i < q; ++i) {
                const S a = in.a(c0 + i, h);
                if (a == S(0)) lz = i;
                else run += std::log(a);
                cum[static_cast<std::size_t>(i)] = run;
                last_zero[static_cast<std::size_t>(i)] = lz;
            }
            auto prod_between = [&](Eigen::Index i, Eigen::Index j) -> S {  // prod_{k=j+1..i}
                if (last_zero[static_cast<std::size_t>(i)] > j) return S(0);
                return std::exp(cum[static_cast<std::size_t>(i)] - cum[static_cast<std::size_t>(j)]);
            };
            decay_mask.setZero(q, q);
            for (Eigen::Index i = 0; i < q; ++i)
                for (Eigen::Index j = 0; j <= i; ++j) decay_mask(i, j) = prod_between(i, j);
            dec_in.resize(q);
            dec_out.resize(q);
            for (Eigen::Index i = 0; i < q; ++i) {
                dec_in(i) = last_zero[static_cast<std::size_t>(i)] >= 0 ? S(0) : std::exp(cum[static_cast<std::size_t>(i)]);
                dec_out(i) = prod_between(q - 1, i);
            }

            const auto Xc = in.x.block(c0, h * P, q, P);
            const auto Bc = in.B.block(c0, h * N, q, N);
            const auto Cc = in.C.block(c0, h * N, q, N);
            G.noalias() = Cc * Bc.transpose();
            G = G.cwiseProduct(decay_mask);
            auto Yc = y.block(c0, h * P, q, P);
            Yc.noalias() = G * Xc;
            Yc.noalias() += dec_in.asDiagonal() * (Cc * state.transpose());
            state *= dec_in(q - 1);
            state.noalias() += Xc.transpose() * (dec_out.asDiagonal() * Bc);
        }
    }
    return y;
}

template <class S>
struct SsdGrads {
    Mat<S> x, a, B, C;
};

/// Adjoint of the recurrence, run backwards in time:
/// G_t = dy_t C_t^T + a_{t+1} G_{t+1}; dx_t = G_t B_t; dB_t = G_t^T x_t;
/// dC_t = h_t^T dy_t; da_t = <G_t, h_{t-1}>.
template <class S>
SsdGrads<S> ssd_backward(const SsdInputs<S>& in, const Mat<S>& dy, int heads) {
    const auto [H, P, N] = check_ssd_inputs(in, heads);
    const Eigen::Index T = in.steps();
    if (dy.rows() != T || dy.cols() != in.x.cols()) throw std::invalid_argument("ssd_backward: dy shape mismatch");
    SsdGrads<S> g{Mat<S>::Zero(T, in.x.cols()), Mat<S>::Zero(T, H), Mat<S>::Zero(T, in.B.cols()),
                  Mat<S>::Zero(T, in.C.cols())};
    // states[t] holds h_t for one head, P x N flattened row-major
    Mat<S> states(T, static_cast<Eigen::Index>(P) * N);
    Mat<S> h(P, N), carry(P, N);
    for (int hd = 0; hd < H; ++hd) {
        h.setZero();
        for (Eigen::Index t = 0; t < T; ++t) {
            h *= in.a(t, hd);
            h.noalias() += in.x.row(t).segment(hd * P, P).transpose() * in.B.row(t).segment(hd * N, N);
            states.row(t) = Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(h.data(), P * N);
        }
        carry.setZero();
        for (Eigen::Index t = T; t-- > 0;) {
            const auto dyt = dy.row(t).segment(hd * P, P);
            const auto Bt = in.B.row(t).segment(hd * N, N);
            const auto Ct = in.C.row(t).segment(hd * N, N);
            const auto xt = in.x.row(t).segment(hd * P, P);
            Eigen::Map<const Mat<S>> ht(states.row(t).data(), P, N);
            carry.noalias() += dyt.transpose() * Ct;
            g.C.row(t).segment(hd * N, N).noalias() += dyt * ht;
            g.x.row(t).segment(hd * P, P).noalias() += (carry * Bt.transpose()).transpose();
            g.B.row(t).segment(hd * N, N).noalias() += xt * carry;
            if (t > 0) {
                Eigen::Map<const Mat<S>> hprev(states.row(t - 1).data(), P, N);
                g.a(t, hd) = carry.cwiseProduct(hprev).sum();
            }
            carry *= in.a(t, hd);
        }
    }
    return g;
}

enum class SsdMode { chunked, recurrent };

namespace ad {

/// Tape op for the scalar-decay SSM. Forward uses the chunked or recurrent
/// evaluation; the adjoint always uses the reverse-time recurrence.
template <class S>
Var ssd(Tape<S>& t, Var x, Var a, Var B, Var C, int heads, SsdMode mode = SsdMode::chunked, int chunk = 64) {
    SsdInputs<S> in{t.value(x), t.value(a), t.value(B), t.value(C)};
    Mat<S> y = mode == SsdMode::chunked ? ssd_forward_chunked(in, heads, chunk) : ssd_forward_recurrent(in, heads);
    return t.push(std::move(y), {x, a, B, C}, [x, a, B, C, heads](Tape<S>& tp, Var self) {
        SsdInputs<S> inputs{tp.value(x), tp.value(a), tp.value(B), tp.value(C)};
        auto g = ssd_backward(inputs, tp.grad(self), heads);
        if (tp.needs_grad(x)) tp.grad(x) += g.x;
        if (tp.needs_grad(a)) tp.grad(a) += g.a;
        if (tp.needs_grad(B)) tp.grad(B) += g.B;
        if (tp.needs_grad(C)) tp.grad(C) += g.C;
    });
}

}  // namespace ad

// ---------------------------------------------------------------------------
// Mamba2 block (minimal SSD variant)

struct BlockOptions {
    SsdMode mode = SsdMode::chunked;
    int chunk = 64;
    bool block_conv = false;
    int block_conv_kernel = 4;
};

/// Tape handles for one block's parameters.
struct Mamba2BlockVars {
    ad::Var norm_gamma, norm_beta;
    ad::Var in_w, in_b;
    ad::Var conv_w, conv_b;  // only with block_conv
    ad::Var dt_bias, a_log;
    ad::Var head_norm_w;
    ad::Var out_w, out_b;
};

/// Intermediates exposed for probes.
struct Mamba2Trace {
    ad::Var decay;    // T x H
    ad::Var ssd_out;  // T x inner, before head norm and gating
    ad::Var update;   // T x d_model, added to the residual stream
};

/// Columns of the input projection: [x | z | B | C | dt].
inline int in_proj_width(const SsdDims& d) { return 2 * d.inner() + 2 * d.n_heads * d.n_state + d.n_heads; }

/// Pre-norm residual block: LayerNorm -> in_proj -> (optional depthwise conv on
/// x,B,C) -> a_t = exp(-softplus(dt + dt_bias) * exp(a_log)) -> SSD -> per-head
/// RMS norm -> gate with silu(z) -> out_proj -> residual add.
template <class S>
ad::Var mamba2_block(ad::Tape<S>& t, ad::Var x, const Mamba2BlockVars& p, const SsdDims& dims,
                     const BlockOptions& opt = {}, Mamba2Trace* trace = nullptr) {
    using namespace ad;
    const int inner = dims.inner();
    const int hn = dims.n_heads * dims.n_state;
    const Var u = layer_norm(t, x, p.norm_gamma, p.norm_beta, S(1e-5));
    const Var proj = linear(t, u, p.in_w, p.in_b);
    Var xs = slice_cols(t, proj, 0, inner);
    const Var z = slice_cols(t, proj, inner, inner);
    Var Bm = slice_cols(t, proj, 2 * inner, hn);
    Var Cm = slice_cols(t, proj, 2 * inner + hn, hn);
    const Var dt = slice_cols(t, proj, 2 * inner + 2 * hn, dims.n_heads);
    if (opt.block_conv) {
        const Var xbc = silu(t, depthwise_causal_conv(t, concat_cols(t, std::vector<Var>{xs, Bm, Cm}), p.conv_w, p.conv_b));
        xs = slice_cols(t, xbc, 0, inner);
        Bm = slice_cols(t, xbc, inner, hn);
        Cm = slice_cols(t, xbc, inner + hn, hn);
    }
    const Var step = softplus(t, add_row(t, dt, p.dt_bias));
    const Var rate = mul_row(t, step, exp(t, p.a_log));
    const Var decay = exp(t, scale(t, rate, S(-1)));
    const Var y = ssd(t, xs, decay, Bm, Cm, dims.n_heads, opt.mode, opt.chunk);
    const Var normed = head_rms_norm(t, y, p.head_norm_w, dims.n_heads, S(1e-5));
    const Var gated = mul(t, normed, silu(t, z));
    const Var update = linear(t, gated, p.out_w, p.out_b);
    if (trace) *trace = {decay, y, update};
    return add(t, x, update);
}

}  // namespace m4c
