#pragma once

#include <cstdint>
#include <random>

namespace mrrmb {

/// Seeded random source with platform-independent derived distributions.
///
/// The standard distribution adaptors are implementation-defined, so the
/// conversions from raw 64-bit draws are done here. Two Rng objects built
/// from the same seed produce identical sequences on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Child stream for an independent consumer (per run, per arm, ...).
    Rng split() { return Rng(engine_() ^ 0x9e3779b97f4a7c15ULL); }

private:
    std::mt19937_64 engine_;
};

} // namespace mrrmb
