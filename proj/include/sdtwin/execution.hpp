// Deterministic random streams and a chunked parallel loop.
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <initializer_list>
#include <random>
#include <thread>
#include <vector>

namespace sdtwin {

/// splitmix64 finalizer; used only to decorrelate stream keys.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Key derived from a seed and an ordered list of counters (step, index, ...).
constexpr std::uint64_t stream_key(std::uint64_t seed,
                                   std::initializer_list<std::uint64_t> counters) noexcept {
    std::uint64_t key = mix64(seed);
    for (auto c : counters)
        key = mix64(key ^ mix64(c + 0x632be59bd9b4e019ULL));
    return key;
}

using Rng = std::mt19937_64;

/// Independent generator for the stream identified by (seed, counters...).
inline Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> counters) {
    return Rng(stream_key(seed, counters));
}

inline std::size_t resolve_threads(std::size_t requested) {
    if (requested > 0)
        return requested;
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Calls body(begin, end) over contiguous chunks of [0, n). Results must not
/// depend on the chunking; callers write to disjoint slots.
template <typename Body>
void parallel_for(std::size_t n, std::size_t threads, Body &&body) {
    threads = std::min(resolve_threads(threads), n);
    if (threads <= 1) {
        if (n > 0)
            body(std::size_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    // Per-chunk slots so the reported failure is the lowest-indexed one.
    std::vector<std::exception_ptr> failures(threads);
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t w = 0; w < threads; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end)
            break;
        pool.emplace_back([&, w, begin, end] {
            try {
                body(begin, end);
            } catch (...) {
                failures[w] = std::current_exception();
            }
        });
    }
    for (auto &t : pool)
        t.join();
    for (auto &f : failures)
        if (f)
            std::rethrow_exception(f);
}

} // namespace sdtwin
