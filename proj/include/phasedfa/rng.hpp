#pragma once

// Seeded randomness shared by clustering and traffic generation. Draws are
// implemented here rather than through <random> distributions so sequences are
// identical across standard library implementations.

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace phasedfa {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Mixes a base seed with a list of stream coordinates (run, k, restart, ...).
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = splitmix64(base);
    for (auto p : parts) h = splitmix64(h ^ splitmix64(p + 0x632BE59BD9B4E019ull));
    return h;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, n), n > 0, by rejection.
    std::uint64_t uniform_index(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Uniform in [0, 1).
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// k distinct indices from [0, n), in draw order (partial Fisher-Yates).
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        for (std::size_t i = 0; i < k && i < n; ++i) {
            std::size_t j = i + static_cast<std::size_t>(uniform_index(n - i));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k < n ? k : n);
        return idx;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace phasedfa
