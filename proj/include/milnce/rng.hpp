#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace milnce {

/// SplitMix64 pseudo-random generator (Steele, Lea & Flood 2014).
///
/// Every random draw in the library flows through this generator so corpora,
/// parameter initializations and training runs are reproducible from a single
/// 64-bit seed. Derivation rules, all fixed:
///   next_u64()    state += 0x9E3779B97F4A7C15; z = state;
///                 z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
///                 z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
///                 return z ^ (z >> 31)
///   next_double() (next_u64() >> 11) * 2^-53, uniform in [0, 1)
///   next_below(n) (next_u64() * n) >> 64 via 128-bit multiply
///                 (Lemire reduction; bias < n / 2^64, negligible here)
///   next_normal() Box-Muller on two uniform draws; the second variate of
///                 each pair is cached and returned on the following call
///   child(tag)    independent generator seeded with
///                 mix(seed ^ fnv1a64(tag)), where `seed` is the value this
///                 generator was constructed with (not its current state)
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        return mix(state_);
    }

    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Uniform real in [lo, hi).
    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    /// Standard normal variate.
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - next_double();  // (0, 1], keeps log finite
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    /// Independent child generator for the named subsystem. Children depend
    /// only on (seed, tag), never on how many draws were taken from the
    /// parent, so adding draws in one place cannot perturb another.
    Rng child(std::string_view tag) const { return Rng(mix(seed_ ^ fnv1a64(tag))); }

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    static std::uint64_t fnv1a64(std::string_view s) {
        std::uint64_t h = 0xCBF29CE484222325ull;
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001B3ull;
        }
        return h;
    }

  private:
    std::uint64_t seed_;
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace milnce
