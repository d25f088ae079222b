#pragma once

#include <cstdint>
#include <vector>

#include "semrsa/dataset.hpp"
#include "semrsa/diagnostics.hpp"
#include "semrsa/rdm.hpp"
#include "semrsa/volume.hpp"

namespace semrsa {

/// In-mask sphere membership for every in-mask center. Entries are linear
/// grid indices in ascending order; each center appears in its own list.
struct SearchlightIndex {
    Grid grid;
    double radius = 0.0;
    std::vector<std::uint8_t> mask;
    std::vector<std::size_t> centers;
    std::vector<std::vector<std::uint32_t>> neighbors;
};

/// Spheres are clipped at the mask and grid borders.
SearchlightIndex build_sphere_index(const Grid& grid, const std::vector<std::uint8_t>& mask, double radius = 5.0);

/// Disjoint condition subsets drawn from one seeded permutation.
struct SplitPlan {
    std::uint64_t seed = 0;
    std::size_t split_size = 0;
    std::vector<std::vector<std::size_t>> splits;
    std::vector<std::size_t> unused;
};

SplitPlan make_split_plan(std::size_t n_conditions, std::size_t split_size = 100, std::uint64_t seed = 0);

/// Maps each searchlight center's neighbors onto response columns.
/// Throws when a masked voxel has no response column.
std::vector<std::vector<std::uint32_t>> neighbor_columns(const SearchlightIndex& index,
                                                         const std::vector<VoxelCoord>& voxel_coords);

/// Position of each response condition in `rdm`; throws on a missing id.
std::vector<std::size_t> rdm_positions(const Rdm& rdm, const std::vector<ConditionId>& conditions,
                                       const char* module);

/// One Pearson-correlation volume per split between the sphere's cosine
/// RDM and the model RDM over that split's conditions.
std::vector<Volume> searchlight_correlation(const ConditionResponses& responses, const Rdm& model_rdm,
                                            const SearchlightIndex& index, const SplitPlan& plan,
                                            Diagnostics* diag = nullptr);

/// Voxel-wise arithmetic mean of equally-shaped volumes.
Volume mean_volume(const std::vector<Volume>& volumes, std::string kind = "mean_correlation");

/// One-sample t against 0 across volumes (t = mean / (sd / sqrt(k))), k >= 3.
/// Zero spread gives sign(mean) * infinity and raises zero_variance_splits.
Volume tstat_volume(const std::vector<Volume>& per_split, Diagnostics* diag = nullptr);

enum class Correction { bonferroni, none };

std::string to_string(Correction c);
Correction parse_correction(const std::string& name);

struct GroupStats {
    Volume mean;
    Volume t;
    Volume threshold;  // 1 where the one-sided test passes, 0 elsewhere in mask
    double alpha = 0.001;
    double critical_t = 0.0;
    std::size_t tests = 0;
    Correction correction = Correction::bonferroni;
};

/// Voxel-wise one-sided t test across subjects with family-wise correction
/// over the masked voxels.
GroupStats group_stats(const std::vector<Volume>& per_subject, double alpha = 0.001,
                       Correction correction = Correction::bonferroni, Diagnostics* diag = nullptr);

/// Upper-tail critical value of Student's t.
double student_t_critical(double alpha, int dof);

}  // namespace semrsa
