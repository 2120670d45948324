#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace m4c {

/// Split [0, n) into `workers` contiguous blocks and run fn(i, worker) on each,
/// one thread per block. The first exception (by worker order) is rethrown.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
    const auto w = static_cast<std::size_t>(std::max(1, std::min<int>(workers, static_cast<int>(std::max<std::size_t>(n, 1)))));
    if (w == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i, 0);
        return;
    }
    std::vector<std::exception_ptr> errors(w);
    std::vector<std::thread> threads;
    threads.reserve(w);
    for (std::size_t k = 0; k < w; ++k) {
        const std::size_t lo = n * k / w, hi = n * (k + 1) / w;
        threads.emplace_back([&, k, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) fn(i, static_cast<int>(k));
            } catch (...) {
                errors[k] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// Index range of worker k when [0, n) is split into w contiguous blocks.
inline std::pair<std::size_t, std::size_t> worker_block(std::size_t n, std::size_t w, std::size_t k) {
    return {n * k / w, n * (k + 1) / w};
}

}  // namespace m4c
