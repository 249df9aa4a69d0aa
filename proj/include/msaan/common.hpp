#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace msaan {

// Error taxonomy. ContractViolation maps to CLI exit code 1, DataError (and
// subclasses) to 2, NumericError to 3.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ContractViolation : public Error {
public:
    explicit ContractViolation(const std::string& msg) : Error("contract violation: " + msg) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(msg) {}
};

class FormatError : public DataError {
public:
    explicit FormatError(const std::string& msg) : DataError("format error: " + msg) {}
};

class IoError : public DataError {
public:
    explicit IoError(const std::string& msg) : DataError("i/o error: " + msg) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error("numeric failure: " + msg) {}
};

#define MSAAN_CHECK(cond, msg)                        \
    do {                                              \
        if (!(cond)) throw ::msaan::ContractViolation(msg); \
    } while (0)

// Deterministic RNG. Wraps mt19937 with hand-rolled draws so the stream does
// not depend on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(static_cast<uint32_t>(seed ^ (seed >> 32))) {}

    uint32_t next_u32() {
        ++draws_;
        return state_();
    }

    // Unbiased integer in [0, n) via rejection sampling.
    uint32_t below(uint32_t n) {
        if (n <= 1) {
            next_u32();
            return 0;
        }
        const uint32_t limit = UINT32_MAX - UINT32_MAX % n;
        uint32_t v = next_u32();
        while (v >= limit) v = next_u32();
        return v % n;
    }

    // Uniform in [0, 1) with 24 bits of randomness.
    float uniform01() { return static_cast<float>(next_u32() >> 8) * (1.0f / 16777216.0f); }

    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform01(); }

    bool chance_half() { return (next_u32() & 1u) != 0; }

    uint64_t draw_count() const { return draws_; }

private:
    std::mt19937 state_;
    uint64_t draws_ = 0;
};

// Thread cap for kernel-internal parallelism. MSAAN_THREADS=1 forces serial.
inline int max_threads() {
    static const int cached = [] {
        if (const char* env = std::getenv("MSAAN_THREADS")) {
            const int v = std::atoi(env);
            if (v > 0) return v;
        }
        const unsigned hc = std::thread::hardware_concurrency();
        return hc > 0 ? static_cast<int>(hc) : 1;
    }();
    return cached;
}

// Runs f(i) for i in [0, n). Work is split into contiguous blocks, one block
// per thread, so results are bit-identical for any thread count as long as
// distinct indices touch disjoint outputs.
template <typename F>
void parallel_for(int64_t n, F&& f, int64_t min_items_per_thread = 4) {
    if (n <= 0) return;
    const int64_t max_useful = (n + min_items_per_thread - 1) / min_items_per_thread;
    const int threads = static_cast<int>(std::min<int64_t>(max_threads(), max_useful));
    if (threads <= 1) {
        for (int64_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    const int64_t chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const int64_t lo = t * chunk;
        const int64_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &f] {
            for (int64_t i = lo; i < hi; ++i) f(i);
        });
    }
    for (auto& th : pool) th.join();
}

// Items per thread needed before spawning pays for itself, given the
// approximate op count of one item.
inline int64_t grain_for(int64_t work_per_item) {
    constexpr int64_t kWorkTarget = 1 << 17;
    return std::max<int64_t>(1, kWorkTarget / std::max<int64_t>(1, work_per_item));
}

inline int next_pow2(int v) {
    int p = 1;
    while (p < v) p <<= 1;
    return p;
}

inline bool is_pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace msaan
