#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <string_view>

namespace semrsa {

/// Degenerate-input conditions that are tolerated (a conventional value is
/// substituted) but must stay observable.
enum class Degeneracy : std::size_t {
    zero_norm_vector,        // cosine distance against a zero vector
    constant_vector,         // pearson / correlation distance on a constant input
    zero_variance_voxel,     // z-scoring a voxel that is constant within a session
    zero_variance_splits,    // t statistic with identical split values
    empty_multihot_row,      // image without any category
    constant_test_column,    // fraction selection on a constant target
    dropped_condition,       // wrong repetition count
    count_
};

inline constexpr std::size_t kDegeneracyKinds = static_cast<std::size_t>(Degeneracy::count_);

std::string_view to_string(Degeneracy d) noexcept;

/// Thread-safe counters of degenerate events. Pass a pointer to any operation
/// that may substitute a conventional value; nullptr discards the counts.
class Diagnostics {
public:
    void raise(Degeneracy d, std::uint64_t times = 1) noexcept {
        counts_[static_cast<std::size_t>(d)].fetch_add(times, std::memory_order_relaxed);
    }
    std::uint64_t count(Degeneracy d) const noexcept {
        return counts_[static_cast<std::size_t>(d)].load(std::memory_order_relaxed);
    }
    bool flagged(Degeneracy d) const noexcept { return count(d) != 0; }
    bool any() const noexcept;
    void reset() noexcept;

private:
    std::array<std::atomic<std::uint64_t>, kDegeneracyKinds> counts_{};
};

inline void flag(Diagnostics* diag, Degeneracy d, std::uint64_t times = 1) noexcept {
    if (diag != nullptr) diag->raise(d, times);
}

}  // namespace semrsa
