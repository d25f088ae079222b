#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "semrsa/diagnostics.hpp"
#include "semrsa/matrix.hpp"

namespace semrsa {

using ConditionId = std::string;

enum class Metric { cosine, correlation };

std::string to_string(Metric m);
Metric parse_metric(const std::string& name);

/// 1 - a.b / (|a| |b|). A zero-norm side yields 1.0 and raises
/// Degeneracy::zero_norm_vector.
double cosine_distance(std::span<const double> a, std::span<const double> b,
                       Diagnostics* diag = nullptr);

/// Sample Pearson correlation. Constant inputs yield 0.0 and raise
/// Degeneracy::constant_vector. Requires at least 3 elements.
double pearson(std::span<const double> x, std::span<const double> y,
               Diagnostics* diag = nullptr);

inline std::size_t utv_length(std::size_t n) noexcept { return n * (n - 1) / 2; }

/// Position of pair (i, j), i < j, in the row-major upper triangle.
inline std::size_t utv_index(std::size_t n, std::size_t i, std::size_t j) noexcept {
    return i * n - i * (i + 1) / 2 + (j - i - 1);
}

/// Upper-triangular vectorization (i < j, i outer) of an n x n RDM.
struct Utv {
    std::size_t n = 0;
    std::vector<double> values;
};

/// Symmetric condition-by-condition dissimilarity matrix with zero diagonal.
class Rdm {
public:
    Rdm() = default;
    /// Validates symmetry, zero diagonal and finiteness.
    Rdm(RowMatrix values, std::vector<ConditionId> condition_ids);

    std::size_t size() const noexcept { return static_cast<std::size_t>(values_.rows()); }
    double operator()(std::size_t i, std::size_t j) const { return values_(i, j); }
    const RowMatrix& values() const noexcept { return values_; }
    const std::vector<ConditionId>& condition_ids() const noexcept { return ids_; }

    /// Position of a condition id, or -1.
    std::ptrdiff_t find(const ConditionId& id) const;

    /// RDM restricted to `rows` (in the given order).
    Rdm subset(std::span<const std::size_t> rows) const;

private:
    RowMatrix values_;
    std::vector<ConditionId> ids_;
};

/// Pairwise dissimilarities between the rows of `patterns`. Ids default to
/// "0".."n-1" when empty.
Rdm build_rdm(const RowMatrix& patterns, Metric metric,
              std::vector<ConditionId> condition_ids = {}, Diagnostics* diag = nullptr);

Utv rdm_to_utv(const Rdm& rdm);
Rdm utv_to_rdm(const Utv& utv, std::vector<ConditionId> condition_ids = {});

/// Upper triangle of the dissimilarities between `patterns` rows written
/// straight into `out` (length n(n-1)/2). Shared by build_rdm and the
/// searchlight inner loop.
void dissimilarity_utv(const RowMatrix& patterns, Metric metric, std::span<double> out,
                       Diagnostics* diag = nullptr);

/// Pearson correlation between the UTVs of two RDMs over the same conditions.
double compare_rdms(const Rdm& a, const Rdm& b, Diagnostics* diag = nullptr);

/// RDM1: JSON header {magic, n, metric, condition_ids} + float32 UTV.
void write_rdm(const std::filesystem::path& path, const Rdm& rdm, Metric metric);
struct RdmFile {
    Rdm rdm;
    Metric metric;
};
RdmFile read_rdm(const std::filesystem::path& path);

}  // namespace semrsa
