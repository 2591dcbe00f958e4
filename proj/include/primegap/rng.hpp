#pragma once

// Counter-based random draws keyed on (seed, stream, key, counter).
//
// Every draw is a pure function of its key, so results do not depend on
// iteration order or on how work is split across threads. The mixer is the
// SplitMix64 finalizer; uniform integers use rejection sampling so the output
// is identical on every platform (std::uniform_int_distribution is not).

#include <cstdint>

namespace primegap {

enum class Stream : std::uint64_t {
    stage2_residue = 0x5354'4147'4532ULL,   // "STAGE2"
    stage3_choice = 0x5354'4147'4533ULL,    // "STAGE3"
    montecarlo = 0x4D4F'4E54'4543ULL,       // "MONTEC"
};

inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30U)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27U)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31U);
}

class KeyedRng {
public:
    constexpr KeyedRng(std::uint64_t seed, Stream stream, std::uint64_t key, std::uint64_t sub = 0)
        : state_(splitmix64(splitmix64(splitmix64(seed ^ static_cast<std::uint64_t>(stream)) ^ key) ^ sub)) {}

    constexpr std::uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return splitmix64(state_);
    }

    // Uniform in [0, bound). bound must be positive.
    constexpr std::uint64_t uniform(std::uint64_t bound) {
        const std::uint64_t threshold = (0 - bound) % bound;  // 2^64 mod bound
        for (;;) {
            const std::uint64_t v = next();
            if (v >= threshold) {
                return v % bound;
            }
        }
    }

    // Uniform real in [0, 1) with 53 random bits.
    constexpr double unit() { return static_cast<double>(next() >> 11U) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

// One uniform draw in [0, bound) for a given key.
inline constexpr std::uint64_t keyed_uniform(std::uint64_t seed, Stream stream, std::uint64_t key,
                                             std::uint64_t bound, std::uint64_t sub = 0) {
    KeyedRng rng(seed, stream, key, sub);
    return rng.uniform(bound);
}

}  // namespace primegap
