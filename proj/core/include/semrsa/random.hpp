#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace semrsa {

/// Seeded generator with platform-independent derived distributions.
/// std::mt19937_64 output is fully specified by the standard, while the
/// std distributions are not; the helpers below are.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, bound) by rejection (no modulo bias).
    std::uint64_t below(std::uint64_t bound);

    /// Standard normal via the Box-Muller transform.
    double normal();

    /// Seeded Fisher-Yates permutation of 0..n-1.
    std::vector<std::size_t> permutation(std::size_t n);

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace semrsa
