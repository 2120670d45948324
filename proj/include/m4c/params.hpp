#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "autodiff.hpp"

namespace m4c {

struct TensorShape {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;

    std::size_t count() const { return static_cast<std::size_t>(rows * cols); }
};

/// Named parameter arrays in a fixed order.
template <class S>
class ParamStore {
public:
    struct Entry {
        std::string name;
        Mat<S> value;
    };

    ParamStore() = default;

    static ParamStore zeros(const std::vector<TensorShape>& shapes) {
        ParamStore p;
        for (const auto& s : shapes) p.add(s.name, Mat<S>::Zero(s.rows, s.cols));
        return p;
    }

    void add(const std::string& name, Mat<S> value) {
        if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
        index_[name] = entries_.size();
        entries_.push_back({name, std::move(value)});
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    Mat<S>& at(const std::string& name) { return entries_[lookup(name)].value; }
    const Mat<S>& at(const std::string& name) const { return entries_[lookup(name)].value; }

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
        return n;
    }

    ParamStore zeros_like() const {
        ParamStore out;
        for (const auto& e : entries_) out.add(e.name, Mat<S>::Zero(e.value.rows(), e.value.cols()));
        return out;
    }

    void set_zero() {
        for (auto& e : entries_) e.value.setZero();
    }

    template <class T>
    ParamStore<T> cast() const {
        ParamStore<T> out;
        for (const auto& e : entries_) out.add(e.name, e.value.template cast<T>());
        return out;
    }

    ParamStore& operator+=(const ParamStore& other) {
        if (other.size() != size()) throw std::invalid_argument("ParamStore +=: size mismatch");
        for (std::size_t i = 0; i < entries_.size(); ++i) entries_[i].value += other.entries_[i].value;
        return *this;
    }

    void scale(S factor) {
        for (auto& e : entries_) e.value *= factor;
    }

    S squared_norm() const {
        S acc = 0;
        for (const auto& e : entries_) acc += e.value.squaredNorm();
        return acc;
    }

    /// Name of the first array holding a NaN/Inf, or empty.
    std::string first_non_finite() const {
        for (const auto& e : entries_)
            if (!e.value.allFinite()) return e.name;
        return {};
    }

    std::vector<TensorShape> shapes() const {
        std::vector<TensorShape> out;
        for (const auto& e : entries_) out.push_back({e.name, e.value.rows(), e.value.cols()});
        return out;
    }

private:
    std::size_t lookup(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
        return it->second;
    }

    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace m4c
