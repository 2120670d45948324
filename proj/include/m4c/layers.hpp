#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "autodiff.hpp"

namespace m4c::ad {

/// Causal dilated 1-D convolution over the rows of X (time x channels).
/// W stacks the K taps vertically, (K * Cin) x Cout; tap K-1 sees the current
/// step and tap k sees step t - (K-1-k) * dilation. Steps before 0 read zeros.
template <class S>
Var causal_conv(Tape<S>& t, Var x, Var w, Var b, int kernel, int dilation) {
    const auto& X = t.value(x);
    const auto& W = t.value(w);
    const auto& Bv = t.value(b);
    const Eigen::Index T = X.rows(), cin = X.cols(), cout = W.cols();
    if (kernel < 1 || dilation < 1) throw std::invalid_argument("causal_conv: bad kernel or dilation");
    if (W.rows() != kernel * cin || Bv.rows() != 1 || Bv.cols() != cout)
        throw std::invalid_argument("causal_conv: shape mismatch");
    Mat<S> out(T, cout);
    out.rowwise() = Bv.row(0);
    for (int k = 0; k < kernel; ++k) {
        const Eigen::Index shift = static_cast<Eigen::Index>(kernel - 1 - k) * dilation;
        if (shift >= T) continue;
        out.bottomRows(T - shift).noalias() += X.topRows(T - shift) * W.middleRows(k * cin, cin);
    }
    return t.push(std::move(out), {x, w, b}, [x, w, b, kernel, dilation](Tape<S>& tp, Var self) {
        const auto& g = tp.grad(self);
        const auto& Xv = tp.value(x);
        const auto& Wv = tp.value(w);
        const Eigen::Index rows = Xv.rows(), in_ch = Xv.cols();
        for (int k = 0; k < kernel; ++k) {
            const Eigen::Index shift = static_cast<Eigen::Index>(kernel - 1 - k) * dilation;
            if (shift >= rows) continue;
            if (tp.needs_grad(x))
                tp.grad(x).topRows(rows - shift).noalias() +=
                    g.bottomRows(rows - shift) * Wv.middleRows(k * in_ch, in_ch).transpose();
            if (tp.needs_grad(w))
                tp.grad(w).middleRows(k * in_ch, in_ch).noalias() +=
                    Xv.topRows(rows - shift).transpose() * g.bottomRows(rows - shift);
        }
        if (tp.needs_grad(b)) tp.grad(b) += g.colwise().sum();
    });
}

/// Depthwise causal convolution: W is K x C, one filter per channel.
template <class S>
Var depthwise_causal_conv(Tape<S>& t, Var x, Var w, Var b) {
    const auto& X = t.value(x);
    const auto& W = t.value(w);
    const auto& Bv = t.value(b);
    const Eigen::Index T = X.rows(), K = W.rows();
    if (W.cols() != X.cols() || Bv.cols() != X.cols() || Bv.rows() != 1)
        throw std::invalid_argument("depthwise_causal_conv: shape mismatch");
    Mat<S> out(T, X.cols());
    out.rowwise() = Bv.row(0);
    for (Eigen::Index k = 0; k < K; ++k) {
        const Eigen::Index shift = K - 1 - k;
        if (shift >= T) continue;
        out.bottomRows(T - shift).array() += X.topRows(T - shift).array().rowwise() * W.row(k).array();
    }
    return t.push(std::move(out), {x, w, b}, [x, w, b](Tape<S>& tp, Var self) {
        const auto& g = tp.grad(self);
        const auto& Xv = tp.value(x);
        const auto& Wv = tp.value(w);
        const Eigen::Index rows = Xv.rows(), taps = Wv.rows();
        for (Eigen::Index k = 0; k < taps; ++k) {
            const Eigen::Index shift = taps - 1 - k;
            if (shift >= rows) continue;
            if (tp.needs_grad(x))
                tp.grad(x).topRows(rows - shift).array() += g.bottomRows(rows - shift).array().rowwise() * Wv.row(k).array();
            if (tp.needs_grad(w))
                tp.grad(w).row(k) += g.bottomRows(rows - shift).cwiseProduct(Xv.topRows(rows - shift)).colwise().sum();
        }
        if (tp.needs_grad(b)) tp.grad(b) += g.colwise().sum();
    });
}

/// Row-wise LayerNorm with affine gamma/beta (1 x D each).
template <class S>
Var layer_norm(Tape<S>& t, Var x, Var gamma, Var beta, S eps = S(1e-5)) {
    const auto& X = t.value(x);
    const auto& G = t.value(gamma);
    const auto& Bt = t.value(beta);
    const Eigen::Index T = X.rows(), D = X.cols();
    if (G.cols() != D || Bt.cols() != D) throw std::invalid_argument("layer_norm: shape mismatch");
    Mat<S> xhat(T, D);
    Vec<S> inv_std(T);
    for (Eigen::Index r = 0; r < T; ++r) {
        const S mu = X.row(r).mean();
        const S var = (X.row(r).array() - mu).square().mean();
        inv_std(r) = S(1) / std::sqrt(var + eps);
        xhat.row(r) = (X.row(r).array() - mu) * inv_std(r);
    }
    Mat<S> out = xhat.array().rowwise() * G.row(0).array();
    out.rowwise() += Bt.row(0);
    return t.push(std::move(out), {x, gamma, beta},
                  [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<S>& tp, Var self) {
                      const auto& g = tp.grad(self);
                      if (tp.needs_grad(gamma)) tp.grad(gamma) += g.cwiseProduct(xhat).colwise().sum();
                      if (tp.needs_grad(beta)) tp.grad(beta) += g.colwise().sum();
                      if (!tp.needs_grad(x)) return;
                      const Mat<S> dxhat = g.array().rowwise() * tp.value(gamma).row(0).array();
                      auto& gx = tp.grad(x);
                      for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
                          const S m1 = dxhat.row(r).mean();
                          const S m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
                          gx.row(r).array() += inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
                      }
                  });
}

/// Per-head RMS normalisation with a learnable per-channel weight.
template <class S>
Var head_rms_norm(Tape<S>& t, Var y, Var weight, int heads, S eps = S(1e-5)) {
    const auto& Y = t.value(y);
    const auto& W = t.value(weight);
    const Eigen::Index T = Y.rows(), D = Y.cols();
    if (heads < 1 || D % heads != 0 || W.cols() != D) throw std::invalid_argument("head_rms_norm: shape mismatch");
    const Eigen::Index P = D / heads;
    Mat<S> yhat(T, D);
    Mat<S> inv_rms(T, heads);
    for (Eigen::Index r = 0; r < T; ++r)
        for (int h = 0; h < heads; ++h) {
            auto seg = Y.row(r).segment(h * P, P);
            const S inv = S(1) / std::sqrt(seg.squaredNorm() / S(P) + eps);
            inv_rms(r, h) = inv;
            yhat.row(r).segment(h * P, P) = seg * inv;
        }
    Mat<S> out = yhat.array().rowwise() * W.row(0).array();
    return t.push(std::move(out), {y, weight},
                  [y, weight, heads, P, yhat = std::move(yhat), inv_rms = std::move(inv_rms)](Tape<S>& tp, Var self) {
                      const auto& g = tp.grad(self);
                      if (tp.needs_grad(weight)) tp.grad(weight) += g.cwiseProduct(yhat).colwise().sum();
                      if (!tp.needs_grad(y)) return;
                      const Mat<S> dyhat = g.array().rowwise() * tp.value(weight).row(0).array();
                      auto& gy = tp.grad(y);
                      for (Eigen::Index r = 0; r < dyhat.rows(); ++r)
                          for (int h = 0; h < heads; ++h) {
                              auto dseg = dyhat.row(r).segment(h * P, P);
                              auto yseg = yhat.row(r).segment(h * P, P);
                              const S m = dseg.dot(yseg) / S(P);
                              gy.row(r).segment(h * P, P).array() += inv_rms(r, h) * (dseg.array() - yseg.array() * m);
                          }
                  });
}

/// Each input column g gets its own 1 -> k affine map:
/// out[t, g*k + j] = F[t, g] * W[g, j] + b[g, j].
template <class S>
Var grouped_scalar_proj(Tape<S>& t, Var f, Var w, Var b) {
    const auto& F = t.value(f);
    const auto& W = t.value(w);
    const auto& Bv = t.value(b);
    const Eigen::Index T = F.rows(), G = F.cols(), k = W.cols();
    if (W.rows() != G || Bv.rows() != G || Bv.cols() != k) throw std::invalid_argument("grouped_scalar_proj: shape mismatch");
    Mat<S> out(T, G * k);
    for (Eigen::Index g = 0; g < G; ++g)
        out.middleCols(g * k, k) = F.col(g) * W.row(g) + Vec<S>::Ones(T) * Bv.row(g);
    return t.push(std::move(out), {f, w, b}, [f, w, b](Tape<S>& tp, Var self) {
        const auto& gr = tp.grad(self);
        const auto& Fv = tp.value(f);
        const auto& Wv = tp.value(w);
        const Eigen::Index groups = Fv.cols(), width = Wv.cols();
        for (Eigen::Index g = 0; g < groups; ++g) {
            auto block = gr.middleCols(g * width, width);
            if (tp.needs_grad(f)) tp.grad(f).col(g) += block * Wv.row(g).transpose();
            if (tp.needs_grad(w)) tp.grad(w).row(g) += Fv.col(g).transpose() * block;
            if (tp.needs_grad(b)) tp.grad(b).row(g) += block.colwise().sum();
        }
    });
}

/// Mean over `positions` of (pred[p, 0] - target)^2. No positions gives 0.
template <class S>
Var masked_mse(Tape<S>& t, Var pred, const std::vector<std::size_t>& positions, const std::vector<S>& targets) {
    const auto& P = t.value(pred);
    if (P.cols() != 1) throw std::invalid_argument("masked_mse: predictions must be a column");
    if (positions.size() != targets.size()) throw std::invalid_argument("masked_mse: positions/targets size mismatch");
    S acc = 0;
    for (std::size_t i = 0; i < positions.size(); ++i) {
        if (positions[i] >= static_cast<std::size_t>(P.rows())) throw std::out_of_range("masked_mse: position out of range");
        const S d = P(static_cast<Eigen::Index>(positions[i]), 0) - targets[i];
        acc += d * d;
    }
    Mat<S> out(1, 1);
    out(0, 0) = positions.empty() ? S(0) : acc / S(positions.size());
    return t.push(std::move(out), {pred}, [pred, positions, targets](Tape<S>& tp, Var self) {
        if (!tp.needs_grad(pred) || positions.empty()) return;
        const S g = tp.grad(self)(0, 0) * S(2) / S(positions.size());
        auto& gp = tp.grad(pred);
        const auto& Pv = tp.value(pred);
        for (std::size_t i = 0; i < positions.size(); ++i) {
            const auto r = static_cast<Eigen::Index>(positions[i]);
            gp(r, 0) += g * (Pv(r, 0) - targets[i]);
        }
    });
}

}  // namespace m4c::ad
