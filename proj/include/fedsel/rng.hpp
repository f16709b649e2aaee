#pragma once

#include <cstdint>
#include <iterator>
#include <random>
#include <utility>

namespace fedsel {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Tags separating the independent random streams of one experiment.
enum class SeedPurpose : std::uint64_t {
    dataset = 1,
    split = 2,
    partition = 3,
    cost = 4,
    init = 5,
    selection = 6,
    train = 7,
};

/// Sub-seed for one (round, client, purpose) stream:
///
///   h = mix64(master)
///   h = mix64(h ^ round)
///   h = mix64(h ^ client)
///   h = mix64(h ^ purpose)
///
/// Any reimplementation of this chain reproduces the same streams.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t round,
                                    std::uint64_t client, SeedPurpose purpose) noexcept {
    std::uint64_t h = mix64(master);
    h = mix64(h ^ round);
    h = mix64(h ^ client);
    return mix64(h ^ static_cast<std::uint64_t>(purpose));
}

/// mt19937_64 with distributions defined here rather than by the standard
/// library, whose distribution algorithms differ between vendors.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound);

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller; both uniforms are consumed per call.
    double normal();

    template <typename It>
    void shuffle(It first, It last) {
        auto n = static_cast<std::uint64_t>(std::distance(first, last));
        for (std::uint64_t i = n; i > 1; --i) {
            auto j = below(i);
            using std::swap;
            swap(first[static_cast<std::ptrdiff_t>(i - 1)], first[static_cast<std::ptrdiff_t>(j)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace fedsel
