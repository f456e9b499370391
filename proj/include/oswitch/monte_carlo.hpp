#pragma once

#include "oswitch/linalg.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace oswitch {

struct McStats {
    double mean = 0.0;
    double std_error = 0.0;
    std::int64_t count = 0;
};

/// Per-path seed derived from the run seed by splitmix64; results depend
/// only on (seed, index), never on worker scheduling.
std::uint64_t path_seed(std::uint64_t seed, std::uint64_t index);

/// Evaluates sample(i) for i in [0, count) on worker threads and returns
/// the per-index results in index order.
template <typename T>
std::vector<T> parallel_samples(std::int64_t count, const std::function<T(std::int64_t)>& sample) {
    std::vector<T> out(static_cast<std::size_t>(count));
    const auto workers =
        static_cast<std::int64_t>(std::max(1u, std::min(std::thread::hardware_concurrency(), 16u)));
    if (workers == 1 || count < 1024) {
        for (std::int64_t i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = sample(i);
        return out;
    }
    std::vector<std::jthread> pool;
    for (std::int64_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::int64_t i = w; i < count; i += workers) out[static_cast<std::size_t>(i)] = sample(i);
        });
    }
    pool.clear();
    return out;
}

/// Mean and standard error with compensated, index-ordered summation.
McStats summarize(const std::vector<double>& samples);

}  // namespace oswitch
