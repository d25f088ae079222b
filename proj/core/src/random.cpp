#include "semrsa/random.hpp"

#include <cmath>
#include <numbers>

namespace semrsa {

std::uint64_t Rng::below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    // Largest multiple of bound that fits; draws above it are rejected.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % bound;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(below(i));
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

}  // namespace semrsa
