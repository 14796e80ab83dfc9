#pragma once

#include "rankgraph/error.hpp"

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace rankgraph {

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// SplitMix64 stream. Chosen over std:: engines/distributions so that every
// draw is bit-stable across compilers and standard libraries; all
// reproducibility contracts in this project reduce to this generator.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    // Stream for a named module/purpose under one top-level seed.
    Rng(std::uint64_t seed, std::string_view label) : state_(seed ^ fnv1a64(label)) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) fail_validation("Rng::below: n must be positive");
        std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // One Box-Muller draw; the paired value is discarded to keep the stream
    // position a pure function of call count.
    double normal() {
        double u1 = uniform();
        while (u1 == 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Index draw proportional to weights via a caller-built cumulative sum.
    // cumulative must be non-decreasing with positive final total.
    std::size_t weighted(const std::vector<double>& cumulative) {
        if (cumulative.empty() || cumulative.back() <= 0.0)
            fail_validation("Rng::weighted: empty or zero-total weight table");
        double x = uniform() * cumulative.back();
        std::size_t lo = 0, hi = cumulative.size() - 1;
        while (lo < hi) {
            std::size_t mid = (lo + hi) / 2;
            if (cumulative[mid] <= x)
                lo = mid + 1;
            else
                hi = mid;
        }
        return lo;
    }

    // First k of a Fisher-Yates shuffle over {0..n-1}, returned in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        if (k > n) k = n;
        for (std::size_t i = 0; i < k; ++i) {
            std::size_t j = i + static_cast<std::size_t>(below(n - i));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k);
        return idx;
    }

private:
    std::uint64_t state_;
};

}  // namespace rankgraph
