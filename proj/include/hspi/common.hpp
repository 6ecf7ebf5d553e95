#pragma once

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace hspi {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dimension/shape contract violations.
struct ShapeError : Error {
    using Error::Error;
};

// Bad user-supplied configuration or arguments.
struct ConfigError : Error {
    using Error::Error;
};

// File format problems: missing, truncated, wrong magic/version.
struct IoError : Error {
    using Error::Error;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
    using Error::Error;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Derive an independent stream seed, e.g. one per dataset sample.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    return splitmix64(base ^ splitmix64(index + 1));
}

// Deterministic RNG (xorshift64*). Self-contained on purpose: std::
// distributions are not pinned by the standard, so artifacts produced with
// them would not be reproducible across library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(splitmix64(seed)) {}

    std::uint64_t next_u64() {
        // xorshift* step; state is never zero after splitmix64 of any seed+const
        state_ ^= state_ >> 12;
        state_ ^= state_ << 25;
        state_ ^= state_ >> 27;
        return state_ * 0x2545f4914f6cdd1dull;
    }

    // uniform in [0, 1)
    double u01() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        return std::uint64_t(u01() * double(n)) % n;
    }

    int range(int lo, int hi) {  // inclusive ends
        return lo + int(below(std::uint64_t(hi - lo + 1)));
    }

    double normal() {
        double u1 = std::max(u01(), 1e-300);
        double u2 = u01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    bool coin(double p) { return u01() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::uint64_t state_;
};

// Run fn(i) for i in [0, n) on up to `jobs` threads. Work is split in
// contiguous chunks so per-index cost should be roughly uniform.
inline void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
    jobs = std::max(1, std::min(jobs, n));
    if (jobs == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr err;
    std::mutex err_mu;
    for (int w = 0; w < jobs; ++w) {
        pool.emplace_back([&, w] {
            int lo = int(std::int64_t(n) * w / jobs);
            int hi = int(std::int64_t(n) * (w + 1) / jobs);
            try {
                for (int i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> g(err_mu);
                if (!err) err = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace hspi
