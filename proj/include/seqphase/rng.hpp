#pragma once

#include <seqphase/phase.hpp>

#include <cstdint>
#include <initializer_list>
#include <random>

namespace seqphase {

/// Seeded 64-bit generator with deterministic substreams.
///
/// Streams are derived by feeding (seed, keys...) through std::seed_seq into
/// std::mt19937_64; both are fully specified by the standard, so draws are
/// bit-identical across platforms and standard libraries. Variates are
/// produced by this class rather than std::*_distribution for the same reason.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream_keys = {});

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform();

    /// Standard normal via Box-Muller (no cached second value).
    double normal();

    /// Exact Binomial(n, p) draw. Inversion for small n or small mean, BTPE otherwise.
    Count binomial(Count n, double p);

private:
    Count binomial_inversion(Count n, double p);
    Count binomial_btpe(Count n, double p);

    std::mt19937_64 engine_;
};

} // namespace seqphase
