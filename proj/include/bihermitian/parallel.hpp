#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace bihermitian {

/// Thread count from BIHERMITIAN_THREADS, else hardware concurrency.
inline unsigned thread_count()
{
    if (const char* env = std::getenv("BIHERMITIAN_THREADS")) {
        try {
            int n = std::stoi(env);
            if (n >= 1) return static_cast<unsigned>(n);
        } catch (...) {
        }
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1u : hw;
}

// Work is cut into fixed-size chunks independent of the thread count, so chunked
// reductions combine in the same order whatever the parallelism.
inline constexpr std::size_t kChunk = 2048;

template <class Fn>
void parallel_chunks(std::size_t n, Fn&& fn)
{
    const std::size_t nchunks = (n + kChunk - 1) / kChunk;
    const unsigned nt = std::min<std::size_t>(thread_count(), std::max<std::size_t>(nchunks, 1));
    auto worker = [&](unsigned tid) {
        for (std::size_t c = tid; c < nchunks; c += nt)
            fn(c, c * kChunk, std::min(n, (c + 1) * kChunk));
    };
    if (nt <= 1) {
        worker(0);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nt);
    for (unsigned t = 0; t < nt; ++t) pool.emplace_back(worker, t);
    for (auto& th : pool) th.join();
}

template <class Fn>
void parallel_for(std::size_t n, Fn&& fn)
{
    parallel_chunks(n, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) fn(i);
    });
}

/// Deterministic reduction: per-chunk partials folded in chunk order.
template <class T, class Map, class Combine>
T parallel_reduce(std::size_t n, T init, Map&& map, Combine&& combine)
{
    const std::size_t nchunks = (n + kChunk - 1) / kChunk;
    std::vector<T> partial(nchunks, init);
    parallel_chunks(n, [&](std::size_t c, std::size_t b, std::size_t e) {
        T acc = init;
        for (std::size_t i = b; i < e; ++i) acc = combine(acc, map(i));
        partial[c] = acc;
    });
    T out = init;
    for (const auto& p : partial) out = combine(out, p);
    return out;
}

template <class Map>
double parallel_max(std::size_t n, Map&& map)
{
    return parallel_reduce(n, 0.0, map, [](double a, double b) { return std::max(a, b); });
}

/// Max of possibly negative values; -inf for n = 0.
template <class Map>
double parallel_max_signed(std::size_t n, Map&& map)
{
    return parallel_reduce(n, -INFINITY, map, [](double a, double b) { return std::max(a, b); });
}

template <class Map>
double parallel_min(std::size_t n, Map&& map)
{
    return parallel_reduce(n, INFINITY, map, [](double a, double b) { return std::min(a, b); });
}

template <class T, class Map>
T parallel_sum(std::size_t n, Map&& map)
{
    return parallel_reduce(n, T{}, map, [](const T& a, const T& b) { return a + b; });
}

} // namespace bihermitian
