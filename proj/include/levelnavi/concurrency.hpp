#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace levelnavi {

// Calls fn(i) for every i in [0, count) with at most `max_parallel` calls in
// flight, and returns once all of them finished. The first exception thrown
// by any call is rethrown after the join; remaining items still run.
template <typename Fn>
void bounded_for_each(std::size_t count, std::size_t max_parallel, Fn&& fn) {
    if (count == 0) return;
    std::size_t workers = std::min(count, std::max<std::size_t>(1, max_parallel));
    if (workers == 1) {
        std::exception_ptr first;
        for (std::size_t i = 0; i < count; ++i) {
            try {
                fn(i);
            } catch (...) {
                if (!first) first = std::current_exception();
            }
        }
        if (first) std::rethrow_exception(first);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::mutex error_mu;
    std::exception_ptr first;
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mu);
                if (!first) first = std::current_exception();
            }
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    pool.clear();  // joins
    if (first) std::rethrow_exception(first);
}

}  // namespace levelnavi
