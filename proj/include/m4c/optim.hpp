#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>

#include "params.hpp"

namespace m4c {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

template <class S>
struct AdamWState {
    ParamStore<S> m;
    ParamStore<S> v;
    std::uint64_t step = 0;

    static AdamWState like(const ParamStore<S>& params) { return {params.zeros_like(), params.zeros_like(), 0}; }
};

/// Decoupled weight decay: p <- p(1 - lr*wd) - lr * mhat / (sqrt(vhat) + eps).
template <class S>
void adamw_step(AdamWState<S>& st, ParamStore<S>& params, const ParamStore<S>& grads, double lr, const AdamWConfig& cfg = {}) {
    if (params.size() != grads.size() || params.size() != st.m.size() || params.size() != st.v.size())
        throw std::invalid_argument("adamw_step: parameter/gradient/state count mismatch");
    ++st.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
    const S b1 = static_cast<S>(cfg.beta1), b2 = static_cast<S>(cfg.beta2);
    const S step_size = static_cast<S>(lr / bc1);
    const S inv_sqrt_bc2 = static_cast<S>(1.0 / std::sqrt(bc2));
    const S eps = static_cast<S>(cfg.eps);
    const S shrink = static_cast<S>(1.0 - lr * cfg.weight_decay);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params.entries()[i].value;
        const auto& g = grads.entries()[i].value;
        auto& m = st.m.entries()[i].value;
        auto& v = st.v.entries()[i].value;
        if (p.rows() != g.rows() || p.cols() != g.cols() || m.rows() != p.rows() || m.cols() != p.cols())
            throw std::invalid_argument("adamw_step: shape mismatch for " + params.entries()[i].name);
        m = b1 * m + (S(1) - b1) * g;
        v = b2 * v + (S(1) - b2) * g.cwiseProduct(g);
        p *= shrink;
        p.array() -= step_size * m.array() / (v.array().sqrt() * inv_sqrt_bc2 + eps);
    }
}

/// Rescale gradients so their global L2 norm is at most max_norm. Returns the
/// norm before clipping. max_norm <= 0 disables clipping.
template <class S>
double clip_grad_norm(ParamStore<S>& grads, double max_norm) {
    const double norm = std::sqrt(static_cast<double>(grads.squared_norm()));
    if (max_norm > 0 && norm > max_norm) grads.scale(static_cast<S>(max_norm / norm));
    return norm;
}

struct LrSchedule {
    double start = 1e-5;
    double end = 1e-7;
    double finetune = 1e-6;
    std::uint64_t switch_round = 360000;
};

/// Rounds 0..switch_round follow the cosine from `start` to `end`; later rounds
/// use the constant fine-tune rate.
inline bool in_finetune(std::uint64_t round, const LrSchedule& s) { return round > s.switch_round; }

inline double lr_at(std::uint64_t round, const LrSchedule& s) {
    if (in_finetune(round, s)) return s.finetune;
    if (s.switch_round == 0) return s.end;
    const double frac = static_cast<double>(round) / static_cast<double>(s.switch_round);
    return s.end + 0.5 * (s.start - s.end) * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace m4c
