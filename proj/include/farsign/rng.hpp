#pragma once

#include <cstdint>
#include <random>

namespace farsign {

// Fixed stream identifiers. Each (seed, stream, substream) key gets an
// independent generator so that e.g. turning an attack on or off does not
// shift the noise seen by honest workers.
enum class Stream : std::uint64_t {
    arrivals = 1,
    oracle = 2,
    attack = 3,
    data = 4,
    dictionary = 5,
    init = 6,
};

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t stream_key(std::uint64_t seed, Stream stream, std::uint64_t sub = 0) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
    return splitmix64(h ^ splitmix64(sub + 0x632be59bd9b4e019ULL));
}

class Rng {
public:
    explicit Rng(std::uint64_t key = 0) : engine_(key) {}
    Rng(std::uint64_t seed, Stream stream, std::uint64_t sub = 0)
        : engine_(stream_key(seed, stream, sub)) {}

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    double normal(double mean = 0.0, double stddev = 1.0) {
        if (stddev == 0.0) return mean;
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }
    double exponential() { return std::exponential_distribution<double>(1.0)(engine_); }
    // Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }
    bool coin() { return (engine_() >> 63) != 0; }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

} // namespace farsign
