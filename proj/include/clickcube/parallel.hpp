#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace clickcube {

/// Worker count used when callers pass 0.
inline unsigned default_workers() noexcept {
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(task) for task in [0, tasks) on up to `workers` threads.
/// Tasks are handed out in fixed contiguous blocks; callers that write into
/// per-task slots and combine them in task order get results independent of
/// the worker count.
template <class Fn>
void parallel_for(std::size_t tasks, unsigned workers, Fn&& fn) {
    if (workers == 0) workers = default_workers();
    const auto threads = static_cast<std::size_t>(std::min<std::size_t>(workers, tasks));
    if (threads <= 1) {
        for (std::size_t t = 0; t < tasks; ++t) fn(t);
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
        const std::size_t begin = tasks * w / threads;
        const std::size_t end = tasks * (w + 1) / threads;
        pool.emplace_back([&, begin, end] {
            try {
                for (std::size_t t = begin; t < end; ++t) fn(t);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

/// Splits [0, n) into `chunks` near-equal half-open ranges.
struct ChunkRange {
    std::size_t begin;
    std::size_t end;
};

inline ChunkRange chunk_range(std::size_t n, std::size_t chunks, std::size_t index) noexcept {
    return {n * index / chunks, n * (index + 1) / chunks};
}

}  // namespace clickcube
