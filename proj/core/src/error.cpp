#include "semrsa/error.hpp"

#include "semrsa/diagnostics.hpp"

namespace semrsa {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::validation: return "validation";
        case ErrorKind::dimension: return "dimension";
        case ErrorKind::numeric: return "numeric";
        case ErrorKind::convergence: return "convergence";
        case ErrorKind::io: return "io";
    }
    return "unknown";
}

std::string_view to_string(Degeneracy d) noexcept {
    switch (d) {
        case Degeneracy::zero_norm_vector: return "zero_norm_vector";
        case Degeneracy::constant_vector: return "constant_vector";
        case Degeneracy::zero_variance_voxel: return "zero_variance_voxel";
        case Degeneracy::zero_variance_splits: return "zero_variance_splits";
        case Degeneracy::empty_multihot_row: return "empty_multihot_row";
        case Degeneracy::constant_test_column: return "constant_test_column";
        case Degeneracy::dropped_condition: return "dropped_condition";
        case Degeneracy::count_: break;
    }
    return "unknown";
}

bool Diagnostics::any() const noexcept {
    for (const auto& c : counts_)
        if (c.load(std::memory_order_relaxed) != 0) return true;
    return false;
}

void Diagnostics::reset() noexcept {
    for (auto& c : counts_) c.store(0, std::memory_order_relaxed);
}

}  // namespace semrsa
