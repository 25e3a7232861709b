#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace upscale {

/// Number of workers to use when the caller passes 0.
inline int default_workers()
{
    return std::max(1u, std::thread::hardware_concurrency());
}

/**
 * Runs fn(i) for i in [0, n) on up to `workers` threads with static
 * contiguous chunks. fn must only write to slot i of its outputs, so results
 * do not depend on the worker count. The first exception is rethrown.
 */
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn)
{
    if (workers <= 0)
        workers = default_workers();
    const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
    if (w <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::exception_ptr error;
    std::mutex mu;
    std::vector<std::thread> threads;
    threads.reserve(w);
    for (std::size_t t = 0; t < w; ++t) {
        const std::size_t begin = n * t / w;
        const std::size_t end = n * (t + 1) / w;
        threads.emplace_back([&, begin, end] {
            try {
                for (std::size_t i = begin; i < end; ++i)
                    fn(i);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!error)
                    error = std::current_exception();
            }
        });
    }
    for (auto& th : threads)
        th.join();
    if (error)
        std::rethrow_exception(error);
}

} // namespace upscale
