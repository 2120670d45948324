#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace m4c {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace ad {

struct Var {
    std::uint32_t id = 0;
};

/// Reverse-mode tape. Each node owns (or, for parameters, borrows) its value
/// and carries an adjoint closure that pushes its gradient to its inputs.
/// With recording off the tape only evaluates; no closures are kept.
template <class S>
class Tape {
public:
    using Backward = std::function<void(Tape&, Var)>;

    explicit Tape(bool record = true) : record_(record) { nodes_.reserve(256); }

    bool recording() const { return record_; }

    Var constant(Mat<S> value) { return push_node(std::move(value), nullptr, false); }

    /// Borrowed value; after backward() the adjoint is added into `grad_sink`.
    Var parameter(const Mat<S>& value, Mat<S>* grad_sink) {
        Node n;
        n.borrowed = &value;
        n.sink = record_ ? grad_sink : nullptr;
        n.needs_grad = record_ && grad_sink != nullptr;
        nodes_.push_back(std::move(n));
        return {static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    // Ops call this; `backward` runs only if some input needs a gradient.
    Var push(Mat<S> value, std::initializer_list<Var> inputs, Backward backward) {
        return push_any(std::move(value), inputs.begin(), inputs.end(), std::move(backward));
    }

    Var push(Mat<S> value, const std::vector<Var>& inputs, Backward backward) {
        return push_any(std::move(value), inputs.begin(), inputs.end(), std::move(backward));
    }

    const Mat<S>& value(Var v) const {
        const auto& n = node(v);
        return n.borrowed ? *n.borrowed : n.value;
    }

    bool needs_grad(Var v) const { return node(v).needs_grad; }

    /// Adjoint buffer for v, zero-initialised on first access.
    Mat<S>& grad(Var v) {
        auto& n = node(v);
        if (n.grad.size() == 0) {
            const auto& val = value(v);
            n.grad = Mat<S>::Zero(val.rows(), val.cols());
        }
        return n.grad;
    }

    bool has_grad(Var v) const { return node(v).grad.size() != 0; }

    void backward(Var output, S seed = S(1)) {
        if (!record_) throw std::logic_error("backward on a non-recording tape");
        const auto& out = value(output);
        grad(output).setConstant(seed);
        if (out.size() != 1) throw std::logic_error("backward expects a scalar output");
        for (std::size_t i = output.id + 1; i-- > 0;) {
            auto& n = nodes_[i];
            if (!n.needs_grad || n.grad.size() == 0) continue;
            if (n.backward) n.backward(*this, Var{static_cast<std::uint32_t>(i)});
            if (n.sink) {
                if (n.sink->rows() != n.grad.rows() || n.sink->cols() != n.grad.cols())
                    throw std::logic_error("gradient sink shape mismatch");
                *n.sink += n.grad;
            }
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Mat<S> value;
        const Mat<S>* borrowed = nullptr;
        Mat<S> grad;
        Backward backward;
        Mat<S>* sink = nullptr;
        bool needs_grad = false;
    };

    template <class It>
    Var push_any(Mat<S> value, It first, It last, Backward backward) {
        bool needs = false;
        if (record_)
            for (auto it = first; it != last; ++it) needs = needs || node(*it).needs_grad;
        return push_node(std::move(value), needs ? std::move(backward) : Backward{}, needs);
    }

    Var push_node(Mat<S> value, Backward backward, bool needs) {
        Node n;
        n.value = std::move(value);
        n.backward = std::move(backward);
        n.needs_grad = needs;
        nodes_.push_back(std::move(n));
        return {static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    Node& node(Var v) { return nodes_.at(v.id); }
    const Node& node(Var v) const { return nodes_.at(v.id); }

    std::vector<Node> nodes_;
    bool record_;
};

// ---------------------------------------------------------------------------
// Primitive ops. Each computes its value eagerly and records its adjoint.

namespace detail {
template <class S>
void accumulate(Tape<S>& t, Var v, const Mat<S>& g) {
    if (t.needs_grad(v)) t.grad(v) += g;
}
}  // namespace detail

template <class S>
Var matmul(Tape<S>& t, Var a, Var b) {
    const auto& A = t.value(a);
    const auto& B = t.value(b);
    if (A.cols() != B.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
    Mat<S> out = A * B;
    return t.push(std::move(out), {a, b}, [a, b](Tape<S>& tp, Var self) {
        const auto& g = tp.grad(self);
        if (tp.needs_grad(a)) tp.grad(a).noalias() += g * tp.value(b).transpose();
        if (tp.needs_grad(b)) tp.grad(b).noalias() += tp.value(a).transpose() * g;
    });
}

/// X W + b with b broadcast over rows.
template <class S>
Var linear(Tape<S>& t, Var x, Var w, Var b) {
    const auto& X = t.value(x);
    const auto& W = t.value(w);
    const auto& Bv = t.value(b);
    if (X.cols() != W.rows() || Bv.rows() != 1 || Bv.cols() != W.cols())
        throw std::invalid_argument("linear: shape mismatch");
    Mat<S> out(X.rows(), W.cols());
    out.noalias() = X * W;
    out.rowwise() += Bv.row(0);
    return t.push(std::move(out), {x, w, b}, [x, w, b](Tape<S>& tp, Var self) {
        const auto& g = tp.grad(self);
        if (tp.needs_grad(x)) tp.grad(x).noalias() += g * tp.value(w).transpose();
        if (tp.needs_grad(w)) tp.grad(w).noalias() += tp.value(x).transpose() * g;
        if (tp.needs_grad(b)) tp.grad(b) += g.colwise().sum();
    });
}

template <class S>
Var add(Tape<S>& t, Var a, Var b) {
    const auto& A = t.value(a);
    const auto& B = t.value(b);
    if (A.rows() != B.rows() || A.cols() != B.cols()) throw std::invalid_argument("add: shape mismatch");
    Mat<S> out = A + B;
    return t.push(std::move(out), {a, b}, [a, b](Tape<S>& tp, Var self) {
        const auto& g = tp.grad(self);
        detail::accumulate(tp, a, g);
        detail::accumulate(tp, b, g);
    });
}

template <class S>
Var mul(Tape<S>& t, Var a, Var b) {
    const auto& A = t.value(a);
    const auto& B = t.value(b);
    if (A.rows() != B.rows() || A.cols() != B.cols()) throw std::invalid_argument("mul: shape mismatch");
    Mat<S> out = A.cwiseProduct(B);
    return t.push(std::move(out), {a, b}, [a, b](Tape<S>& tp, Var self) {
        const auto& g = tp.grad(self);
        if (tp.needs_grad(a)) tp.grad(a) += g.cwiseProduct(tp.value(b));
        if (tp.needs_grad(b)) tp.grad(b) += g.cwiseProduct(tp.value(a));
    });
}

template <class S>
Var scale(Tape<S>& t, Var a, S factor) {
    Mat<S> out = t.value(a) * factor;
    return t.push(std::move(out), {a}, [a, factor](Tape<S>& tp, Var self) {
        if (tp.needs_grad(a)) tp.grad(a) += tp.grad(self) * factor;
    });
}

/// A + b with the 1 x n row b broadcast over rows.
template <class S>
Var add_row(Tape<S>& t, Var a, Var b) {
    const auto& A = t.value(a);
    const auto& B = t.value(b);
    if (B.rows() != 1 || B.cols() != A.cols()) throw std::invalid_argument("add_row: shape mismatch");
    Mat<S> out = A;
    out.rowwise() += B.row(0);
    return t.push(std::move(out), {a, b}, [a, b](Tape<S>& tp, Var self) {
        const auto& g = tp.grad(self);
        detail::accumulate(tp, a, g);
        if (tp.needs_grad(b)) tp.grad(b) += g.colwise().sum();
    });
}

/// A * b columnwise, with the 1 x n row b broadcast over rows.
template <class S>
Var mul_row(Tape<S>& t, Var a, Var b) {
    const auto& A = t.value(a);
    const auto& B = t.value(b);
    if (B.rows() != 1 || B.cols() != A.cols()) throw std::invalid_argument("mul_row: shape mismatch");
    Mat<S> out = A.array().rowwise() * B.row(0).array();
    return t.push(std::move(out), {a, b}, [a, b](Tape<S>& tp, Var self) {
        const auto& g = tp.grad(self);
        if (tp.needs_grad(a)) tp.grad(a).array() += g.array().rowwise() * tp.value(b).row(0).array();
        if (tp.needs_grad(b)) tp.grad(b) += g.cwiseProduct(tp.value(a)).colwise().sum();
    });
}

template <class S>
Var exp(Tape<S>& t, Var a) {
    Mat<S> out = t.value(a).array().exp().matrix();
    return t.push(std::move(out), {a}, [a](Tape<S>& tp, Var self) {
        if (tp.needs_grad(a)) tp.grad(a) += tp.grad(self).cwiseProduct(tp.value(self));
    });
}

template <class S>
S softplus_scalar(S x) {
    return x > S(20) ? x : std::log1p(std::exp(x));
}

template <class S>
S sigmoid_scalar(S x) {
    return S(1) / (S(1) + std::exp(-x));
}

template <class S>
Var softplus(Tape<S>& t, Var a) {
    Mat<S> out = t.value(a).unaryExpr([](S x) { return softplus_scalar(x); });
    return t.push(std::move(out), {a}, [a](Tape<S>& tp, Var self) {
        if (tp.needs_grad(a))
            tp.grad(a) += tp.grad(self).cwiseProduct(tp.value(a).unaryExpr([](S x) { return sigmoid_scalar(x); }));
    });
}

template <class S>
Var silu(Tape<S>& t, Var a) {
    const auto& x = t.value(a);
    Mat<S> sig = (S(1) + (-x.array()).exp()).inverse().matrix();
    Mat<S> out = x.cwiseProduct(sig);
    return t.push(std::move(out), {a}, [a, sig = std::move(sig)](Tape<S>& tp, Var self) {
        if (!tp.needs_grad(a)) return;
        const auto& xv = tp.value(a).array();
        tp.grad(a).array() += tp.grad(self).array() * sig.array() * (S(1) + xv * (S(1) - sig.array()));
    });
}

template <class S>
Var concat_cols(Tape<S>& t, const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    const auto rows = t.value(parts[0]).rows();
    Eigen::Index cols = 0;
    for (auto p : parts) {
        if (t.value(p).rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
        cols += t.value(p).cols();
    }
    Mat<S> out(rows, cols);
    Eigen::Index c = 0;
    for (auto p : parts) {
        const auto& v = t.value(p);
        out.middleCols(c, v.cols()) = v;
        c += v.cols();
    }
    return t.push(std::move(out), parts, [parts](Tape<S>& tp, Var self) {
        const auto& g = tp.grad(self);
        Eigen::Index col = 0;
        for (auto p : parts) {
            const auto w = tp.value(p).cols();
            if (tp.needs_grad(p)) tp.grad(p) += g.middleCols(col, w);
            col += w;
        }
    });
}

template <class S>
Var slice_cols(Tape<S>& t, Var a, Eigen::Index start, Eigen::Index count) {
    const auto& A = t.value(a);
    if (start < 0 || count < 0 || start + count > A.cols()) throw std::invalid_argument("slice_cols: out of range");
    Mat<S> out = A.middleCols(start, count);
    return t.push(std::move(out), {a}, [a, start, count](Tape<S>& tp, Var self) {
        if (tp.needs_grad(a)) tp.grad(a).middleCols(start, count) += tp.grad(self);
    });
}

/// Sum of w .* a over all entries with a constant weight matrix; used for probes.
template <class S>
Var weighted_sum(Tape<S>& t, Var a, const Mat<S>& w) {
    const auto& A = t.value(a);
    if (A.rows() != w.rows() || A.cols() != w.cols()) throw std::invalid_argument("weighted_sum: shape mismatch");
    Mat<S> out(1, 1);
    out(0, 0) = A.cwiseProduct(w).sum();
    return t.push(std::move(out), {a}, [a, w](Tape<S>& tp, Var self) {
        if (tp.needs_grad(a)) tp.grad(a) += w * tp.grad(self)(0, 0);
    });
}

}  // namespace ad
}  // namespace m4c
