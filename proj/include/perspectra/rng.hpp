#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace perspectra {

/// 32-bit FNV-1a. Pinned bit-exactly: feature hashing and config hashes must be
/// stable across platforms and languages.
inline std::uint32_t fnv1a32(std::string_view s) {
    std::uint32_t h = 2166136261u;
    for (unsigned char c : s) {
        h ^= c;
        h *= 16777619u;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and a role label.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view role) {
    return splitmix64(seed ^ fnv1a64(role));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view role, std::uint64_t salt) {
    return splitmix64(splitmix64(seed ^ fnv1a64(role)) ^ salt);
}

/// mt19937_64 behind helpers that avoid std::uniform_*_distribution, whose
/// algorithms are implementation-defined. Same seed, same sequence, everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double next_double() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    /// Uniform integer in [0, n). Modulo bias is irrelevant at the scales used here.
    std::size_t bounded(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = bounded(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

} // namespace perspectra
