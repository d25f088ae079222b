#include "semrsa/searchlight.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include <boost/math/distributions/students_t.hpp>

#include "semrsa/error.hpp"
#include "semrsa/random.hpp"

namespace semrsa {

namespace {

constexpr const char* kModule = "searchlight_rsa";

void require_same_shape(const std::vector<Volume>& volumes, const char* what) {
    if (volumes.empty()) throw ValidationError(kModule, std::string(what) + ": no volumes");
    for (const auto& v : volumes) {
        if (!(v.grid == volumes.front().grid)) throw ValidationError(kModule, std::string(what) + ": grid mismatch");
        if (v.mask != volumes.front().mask) throw ValidationError(kModule, std::string(what) + ": mask mismatch");
    }
}

Volume t_across(const std::vector<Volume>& volumes, std::size_t min_count, const char* what, Diagnostics* diag) {
    require_same_shape(volumes, what);
    if (volumes.size() < min_count)
        throw ValidationError(kModule, std::string(what) + " needs at least " + std::to_string(min_count) + " volumes");
    const auto k = static_cast<double>(volumes.size());
    Volume out = Volume::zeros(volumes.front().grid, volumes.front().mask, "t");
    out.dof = static_cast<int>(volumes.size()) - 1;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        if (!out.mask[i]) continue;
        double mean = 0.0;
        for (const auto& v : volumes) mean += v.values[i];
        mean /= k;
        double ss = 0.0;
        for (const auto& v : volumes) {
            const double d = v.values[i] - mean;
            ss += d * d;
        }
        const double sd = std::sqrt(ss / (k - 1.0));
        if (sd == 0.0) {
            if (mean != 0.0) {
                flag(diag, Degeneracy::zero_variance_splits);
                out.values[i] = std::copysign(std::numeric_limits<double>::infinity(), mean);
            } else {
                out.values[i] = 0.0;
            }
            continue;
        }
        out.values[i] = mean / (sd / std::sqrt(k));
    }
    out.metadata = {{"test", "one-sample t against 0"}, {"sidedness", "greater"}, {"samples", volumes.size()}};
    return out;
}

}  // namespace

SearchlightIndex build_sphere_index(const Grid& grid, const std::vector<std::uint8_t>& mask, double radius) {
    if (mask.size() != grid.size()) throw DimensionError(kModule, "mask size differs from grid size");
    if (!(radius >= 0.0)) throw ValidationError(kModule, "radius must be non-negative");
    if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }))
        throw ValidationError(kModule, "searchlight mask is empty");

    // Lattice offsets inside the sphere, ordered so that offset linear
    // indices increase (z, then y, then x).
    const int r = static_cast<int>(std::floor(radius));
    const double r2 = radius * radius;
    std::vector<VoxelCoord> offsets;
    for (int dz = -r; dz <= r; ++dz)
        for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx)
                if (static_cast<double>(dx * dx + dy * dy + dz * dz) <= r2) offsets.push_back({dx, dy, dz});

    SearchlightIndex index;
    index.grid = grid;
    index.radius = radius;
    index.mask = mask;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        const VoxelCoord c = grid.coord(i);
        std::vector<std::uint32_t> members;
        for (const auto& o : offsets) {
            const VoxelCoord u{c[0] + o[0], c[1] + o[1], c[2] + o[2]};
            if (!grid.contains(u)) continue;
            const std::size_t j = grid.index(u);
            if (mask[j]) members.push_back(static_cast<std::uint32_t>(j));
        }
        index.centers.push_back(i);
        index.neighbors.push_back(std::move(members));
    }
    return index;
}

SplitPlan make_split_plan(std::size_t n_conditions, std::size_t split_size, std::uint64_t seed) {
    if (split_size == 0) throw ValidationError(kModule, "split_size must be positive");
    if (split_size > n_conditions)
        throw ValidationError(kModule, "split_size " + std::to_string(split_size) + " exceeds " +
                                           std::to_string(n_conditions) + " conditions");
    Rng rng(seed);
    const auto perm = rng.permutation(n_conditions);
    SplitPlan plan;
    plan.seed = seed;
    plan.split_size = split_size;
    const std::size_t count = n_conditions / split_size;
    for (std::size_t s = 0; s < count; ++s)
        plan.splits.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(s * split_size),
                                 perm.begin() + static_cast<std::ptrdiff_t>((s + 1) * split_size));
    plan.unused.assign(perm.begin() + static_cast<std::ptrdiff_t>(count * split_size), perm.end());
    return plan;
}

std::vector<std::vector<std::uint32_t>> neighbor_columns(const SearchlightIndex& index,
                                                         const std::vector<VoxelCoord>& voxel_coords) {
    std::vector<std::int64_t> column_of(index.grid.size(), -1);
    for (std::size_t v = 0; v < voxel_coords.size(); ++v) {
        if (!index.grid.contains(voxel_coords[v])) continue;
        column_of[index.grid.index(voxel_coords[v])] = static_cast<std::int64_t>(v);
    }
    std::vector<std::vector<std::uint32_t>> columns(index.neighbors.size());
    for (std::size_t c = 0; c < index.neighbors.size(); ++c) {
        columns[c].reserve(index.neighbors[c].size());
        for (std::uint32_t g : index.neighbors[c]) {
            if (column_of[g] < 0) throw ValidationError(kModule, "masked voxel has no response column");
            columns[c].push_back(static_cast<std::uint32_t>(column_of[g]));
        }
    }
    return columns;
}

std::vector<std::size_t> rdm_positions(const Rdm& rdm, const std::vector<ConditionId>& conditions,
                                       const char* module) {
    std::unordered_map<ConditionId, std::size_t> position;
    for (std::size_t i = 0; i < rdm.size(); ++i) position.emplace(rdm.condition_ids()[i], i);
    std::vector<std::size_t> out(conditions.size());
    for (std::size_t i = 0; i < conditions.size(); ++i) {
        const auto it = position.find(conditions[i]);
        if (it == position.end()) throw ValidationError(module, "RDM lacks condition '" + conditions[i] + "'");
        out[i] = it->second;
    }
    return out;
}

std::vector<Volume> searchlight_correlation(const ConditionResponses& responses, const Rdm& model_rdm,
                                            const SearchlightIndex& index, const SplitPlan& plan,
                                            Diagnostics* diag) {
    if (plan.splits.empty()) throw ValidationError(kModule, "split plan has no splits");
    const auto columns = neighbor_columns(index, responses.voxel_coords);
    const auto model_pos = rdm_positions(model_rdm, responses.conditions, kModule);

    const std::size_t m = plan.split_size;
    const std::size_t pairs = utv_length(m);
    std::vector<std::vector<double>> model_utv(plan.splits.size(), std::vector<double>(pairs));
    for (std::size_t s = 0; s < plan.splits.size(); ++s) {
        const auto& split = plan.splits[s];
        if (split.size() != m) throw ValidationError(kModule, "split sizes differ");
        std::size_t k = 0;
        for (std::size_t a = 0; a < m; ++a) {
            if (split[a] >= responses.condition_count())
                throw ValidationError(kModule, "split refers to a condition outside the responses");
            for (std::size_t b = a + 1; b < m; ++b, ++k)
                model_utv[s][k] = model_rdm(model_pos[split[a]], model_pos[split[b]]);
        }
    }

    std::vector<Volume> out;
    out.reserve(plan.splits.size());
    for (std::size_t s = 0; s < plan.splits.size(); ++s) {
        Volume v = Volume::zeros(index.grid, index.mask, "correlation");
        v.metadata = {{"split", s}, {"pairs", pairs}, {"metric", "cosine"}};
        out.push_back(std::move(v));
    }

    const auto centers = static_cast<std::ptrdiff_t>(index.centers.size());
#pragma omp parallel
    {
        RowMatrix patterns;
        std::vector<double> brain_utv(pairs);
#pragma omp for schedule(dynamic, 16)
        for (std::ptrdiff_t c = 0; c < centers; ++c) {
            const auto& cols = columns[static_cast<std::size_t>(c)];
            patterns.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(cols.size()));
            for (std::size_t s = 0; s < plan.splits.size(); ++s) {
                const auto& split = plan.splits[s];
                for (std::size_t a = 0; a < m; ++a) {
                    const auto row = responses.responses.row(static_cast<Eigen::Index>(split[a]));
                    for (std::size_t j = 0; j < cols.size(); ++j) patterns(a, j) = row(cols[j]);
                }
                dissimilarity_utv(patterns, Metric::cosine, brain_utv, diag);
                out[s].values[index.centers[static_cast<std::size_t>(c)]] = pearson(brain_utv, model_utv[s], diag);
            }
        }
    }
    return out;
}

Volume mean_volume(const std::vector<Volume>& volumes, std::string kind) {
    require_same_shape(volumes, "mean_volume");
    Volume out = Volume::zeros(volumes.front().grid, volumes.front().mask, std::move(kind));
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        if (!out.mask[i]) continue;
        double sum = 0.0;
        for (const auto& v : volumes) sum += v.values[i];
        out.values[i] = sum / static_cast<double>(volumes.size());
    }
    out.metadata = {{"samples", volumes.size()}};
    return out;
}

Volume tstat_volume(const std::vector<Volume>& per_split, Diagnostics* diag) {
    return t_across(per_split, 3, "tstat_volume", diag);
}

std::string to_string(Correction c) { return c == Correction::bonferroni ? "bonferroni" : "none"; }

Correction parse_correction(const std::string& name) {
    if (name == "bonferroni") return Correction::bonferroni;
    if (name == "none") return Correction::none;
    throw ValidationError(kModule, "unknown correction '" + name + "'");
}

double student_t_critical(double alpha, int dof) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError(kModule, "alpha must lie in (0, 1)");
    if (dof < 1) throw ValidationError(kModule, "t test needs at least 1 degree of freedom");
    const boost::math::students_t dist(static_cast<double>(dof));
    return boost::math::quantile(boost::math::complement(dist, alpha));
}

GroupStats group_stats(const std::vector<Volume>& per_subject, double alpha, Correction correction,
                       Diagnostics* diag) {
    if (per_subject.size() < 2) throw ValidationError(kModule, "group_stats needs at least 2 subjects");
    GroupStats g;
    g.mean = mean_volume(per_subject, "group_mean");
    g.t = t_across(per_subject, 2, "group_stats", diag);
    g.alpha = alpha;
    g.correction = correction;
    g.tests = g.mean.masked_count();
    const double per_test = correction == Correction::bonferroni ? alpha / static_cast<double>(g.tests) : alpha;
    g.critical_t = student_t_critical(per_test, *g.t.dof);
    g.threshold = Volume::zeros(g.mean.grid, g.mean.mask, "threshold");
    for (std::size_t i = 0; i < g.threshold.values.size(); ++i)
        if (g.threshold.mask[i] && g.t.values[i] > g.critical_t) g.threshold.values[i] = 1.0;
    const nlohmann::json meta = {{"alpha", alpha},
                                 {"correction", to_string(correction)},
                                 {"tests", g.tests},
                                 {"critical_t", g.critical_t},
                                 {"sidedness", "greater"}};
    g.t.metadata.update(meta);
    g.threshold.metadata = meta;
    return g;
}

}  // namespace semrsa
