#pragma once

#include <cstdint>
#include <iosfwd>

namespace tailnet {

/// xoshiro256** generator with a cached-spare Gaussian sampler.
///
/// The whole state is six scalars, so checkpoints can round-trip it exactly and
/// streams behave identically across platforms (no implementation-defined
/// std::*_distribution in any reproducibility-sensitive path).
class Rng {
public:
    /// Seeds via splitmix64; `stream` selects a decorrelated substream.
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t next_u64();

    /// Uniform double in [0,1) with 53 random bits.
    double uniform01();

    /// Unbiased uniform integer in [0,n). n must be > 0.
    std::uint64_t uniform_below(std::uint64_t n);

    /// Standard normal via the Marsaglia polar method.
    double gaussian();

    void save(std::ostream& out) const;
    void load(std::istream& in);

    bool operator==(const Rng& other) const;

private:
    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace tailnet
