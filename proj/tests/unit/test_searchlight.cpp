#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include <semrsa/error.hpp>
#include <semrsa/parallel.hpp>
#include <semrsa/searchlight.hpp>
#include <semrsa/volume.hpp>

#include "test_support.hpp"

using namespace semrsa;
using semrsa::testing::random_matrix;
using semrsa::testing::TempDir;

namespace {

std::size_t lattice_ball_count(int r) {
    std::size_t n = 0;
    for (int x = -r; x <= r; ++x)
        for (int y = -r; y <= r; ++y)
            for (int z = -r; z <= r; ++z) n += (x * x + y * y + z * z <= r * r) ? 1 : 0;
    return n;
}

std::vector<std::uint8_t> full_mask(const Grid& g) { return std::vector<std::uint8_t>(g.size(), 1); }

ConditionResponses random_responses(const Grid& g, std::size_t n, std::uint64_t seed) {
    ConditionResponses r;
    r.responses = random_matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(g.size()), seed);
    for (std::size_t i = 0; i < n; ++i) r.conditions.push_back("c" + std::to_string(i));
    for (std::size_t v = 0; v < g.size(); ++v) r.voxel_coords.push_back(g.coord(v));
    r.repetitions_used.assign(n, 3);
    return r;
}

Volume constant_volume(const Grid& g, double value) {
    Volume v = Volume::zeros(g, full_mask(g), "correlation");
    std::fill(v.values.begin(), v.values.end(), value);
    return v;
}

}  // namespace

TEST(Grid, IndexCoordRoundTrip) {
    const Grid g{3, 4, 5};
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(g.index(g.coord(i)), i);
    EXPECT_EQ(g.index({1, 0, 0}), 1u);
    EXPECT_EQ(g.index({0, 1, 0}), 3u);
    EXPECT_EQ(g.index({0, 0, 1}), 12u);
}

TEST(SphereIndex, InteriorRadiusFiveHas515Voxels) {
    EXPECT_EQ(lattice_ball_count(5), 515u);
    const Grid g{15, 15, 15};
    const auto index = build_sphere_index(g, full_mask(g), 5.0);
    const std::size_t center = g.index({7, 7, 7});
    const auto it = std::find(index.centers.begin(), index.centers.end(), center);
    ASSERT_NE(it, index.centers.end());
    const auto& members = index.neighbors[static_cast<std::size_t>(it - index.centers.begin())];
    EXPECT_EQ(members.size(), 515u);
    EXPECT_TRUE(std::is_sorted(members.begin(), members.end()));
    EXPECT_TRUE(std::binary_search(members.begin(), members.end(), static_cast<std::uint32_t>(center)));
}

TEST(SphereIndex, ClippedAtBordersAndMask) {
    const Grid g{6, 6, 6};
    auto mask = full_mask(g);
    mask[g.index({1, 0, 0})] = 0;
    const auto index = build_sphere_index(g, mask, 1.0);
    EXPECT_EQ(index.centers.size(), g.size() - 1);
    // Corner (0,0,0): itself plus (0,1,0) and (0,0,1); (1,0,0) is masked out.
    EXPECT_EQ(index.centers[0], 0u);
    EXPECT_EQ(index.neighbors[0].size(), 3u);
    for (const auto& members : index.neighbors)
        for (auto m : members) EXPECT_TRUE(mask[m]);
}

TEST(SphereIndex, BoundaryIsInclusive) {
    const Grid g{11, 11, 11};
    const auto index = build_sphere_index(g, full_mask(g), 2.0);
    const std::size_t c = g.index({5, 5, 5});
    const auto pos = static_cast<std::size_t>(std::find(index.centers.begin(), index.centers.end(), c) - index.centers.begin());
    const auto& members = index.neighbors[pos];
    EXPECT_TRUE(std::binary_search(members.begin(), members.end(), static_cast<std::uint32_t>(g.index({7, 5, 5}))));
    EXPECT_FALSE(std::binary_search(members.begin(), members.end(), static_cast<std::uint32_t>(g.index({7, 6, 5}))));
    EXPECT_EQ(members.size(), lattice_ball_count(2));
}

TEST(SphereIndex, Errors) {
    const Grid g{3, 3, 3};
    EXPECT_THROW(build_sphere_index(g, std::vector<std::uint8_t>(27, 0), 1.0), ValidationError);
    EXPECT_THROW(build_sphere_index(g, std::vector<std::uint8_t>(26, 1), 1.0), DimensionError);
    EXPECT_THROW(build_sphere_index(g, full_mask(g), -1.0), ValidationError);
}

TEST(SplitPlan, CountsAndDisjointness) {
    EXPECT_EQ(make_split_plan(10000, 100, 1).splits.size(), 100u);
    EXPECT_EQ(make_split_plan(6234, 100, 1).splits.size(), 62u);
    EXPECT_EQ(make_split_plan(5445, 100, 1).splits.size(), 54u);
    const SplitPlan p = make_split_plan(345, 100, 9);
    EXPECT_EQ(p.unused.size(), 45u);
    std::set<std::size_t> seen;
    for (const auto& s : p.splits) {
        EXPECT_EQ(s.size(), 100u);
        for (auto c : s) EXPECT_TRUE(seen.insert(c).second);
    }
    for (auto c : p.unused) EXPECT_TRUE(seen.insert(c).second);
    EXPECT_EQ(seen.size(), 345u);
}

TEST(SplitPlan, SeedDeterminesPlan) {
    EXPECT_EQ(make_split_plan(500, 100, 4).splits, make_split_plan(500, 100, 4).splits);
    EXPECT_NE(make_split_plan(500, 100, 4).splits, make_split_plan(500, 100, 5).splits);
    EXPECT_THROW(make_split_plan(50, 100, 0), ValidationError);
    EXPECT_THROW(make_split_plan(50, 0, 0), ValidationError);
}

TEST(SearchlightCorrelation, MatchesDirectComputation) {
    const Grid g{5, 5, 4};
    const auto r = random_responses(g, 30, 2);
    const Rdm model = build_rdm(random_matrix(30, 6, 3), Metric::cosine, r.conditions);
    const auto index = build_sphere_index(g, full_mask(g), 1.5);
    const SplitPlan plan = make_split_plan(30, 10, 11);
    const auto vols = searchlight_correlation(r, model, index, plan);
    ASSERT_EQ(vols.size(), 3u);
    for (std::size_t c = 0; c < index.centers.size(); c += 7) {
        const auto& members = index.neighbors[c];
        for (std::size_t s = 0; s < plan.splits.size(); ++s) {
            RowMatrix patt(10, static_cast<Eigen::Index>(members.size()));
            for (std::size_t a = 0; a < 10; ++a)
                for (std::size_t j = 0; j < members.size(); ++j)
                    patt(a, j) = r.responses(plan.splits[s][a], members[j]);
            const Rdm brain = build_rdm(patt, Metric::cosine);
            const Rdm m = model.subset(plan.splits[s]);
            EXPECT_NEAR(vols[s].values[index.centers[c]], compare_rdms(brain, m), 1e-12);
        }
    }
}

TEST(SearchlightCorrelation, IdenticalModelGivesOne) {
    // A grid whose single sphere spans every voxel: brain RDM == model RDM.
    const Grid g{2, 2, 2};
    const auto r = random_responses(g, 20, 6);
    const Rdm model = build_rdm(r.responses, Metric::cosine, r.conditions);
    const auto index = build_sphere_index(g, full_mask(g), 2.0);
    const auto vols = searchlight_correlation(r, model, index, make_split_plan(20, 10, 1));
    for (const auto& v : vols)
        for (double x : v.values) EXPECT_NEAR(x, 1.0, 1e-12);
}

TEST(SearchlightCorrelation, ThreadCountDoesNotChangeOutput) {
    const Grid g{6, 5, 4};
    const auto r = random_responses(g, 40, 8);
    const Rdm model = build_rdm(random_matrix(40, 5, 1), Metric::cosine, r.conditions);
    const auto index = build_sphere_index(g, full_mask(g), 2.0);
    const SplitPlan plan = make_split_plan(40, 20, 3);
    set_thread_count(1);
    const auto a = searchlight_correlation(r, model, index, plan);
    set_thread_count(4);
    const auto b = searchlight_correlation(r, model, index, plan);
    set_thread_count(default_thread_count());
    for (std::size_t s = 0; s < a.size(); ++s)
        for (std::size_t i = 0; i < a[s].values.size(); ++i) EXPECT_EQ(a[s].values[i], b[s].values[i]);
}

TEST(SearchlightCorrelation, MissingConditionInModel) {
    const Grid g{2, 2, 2};
    const auto r = random_responses(g, 10, 1);
    const Rdm model = build_rdm(random_matrix(10, 3, 1), Metric::cosine);  // ids "0".."9"
    const auto index = build_sphere_index(g, full_mask(g), 1.0);
    EXPECT_THROW(searchlight_correlation(r, model, index, make_split_plan(10, 5, 0)), ValidationError);
}

TEST(TStat, KnownValuesAndDof) {
    const Grid g{1, 1, 2};
    std::vector<Volume> vols;
    for (double x : {0.1, 0.2, 0.3, 0.6}) {
        Volume v = constant_volume(g, x);
        v.values[1] = 0.5;
        vols.push_back(v);
    }
    Diagnostics diag;
    const Volume t = tstat_volume(vols, &diag);
    const double mean = 0.3, sd = std::sqrt((0.04 + 0.01 + 0.0 + 0.09) / 3.0);
    EXPECT_NEAR(t.values[0], mean / (sd / 2.0), 1e-12);
    EXPECT_TRUE(std::isinf(t.values[1]) && t.values[1] > 0);
    EXPECT_TRUE(diag.flagged(Degeneracy::zero_variance_splits));
    EXPECT_EQ(*t.dof, 3);
}

TEST(TStat, NeedsThreeSplits) {
    const Grid g{1, 1, 1};
    EXPECT_THROW(tstat_volume({constant_volume(g, 1), constant_volume(g, 2)}), ValidationError);
}

TEST(TStat, MeanVolumeIsArithmeticMean) {
    const Grid g{2, 1, 1};
    const Volume m = mean_volume({constant_volume(g, 1), constant_volume(g, 2), constant_volume(g, 6)});
    EXPECT_DOUBLE_EQ(m.values[0], 3.0);
}

TEST(GroupStats, BonferroniThreshold) {
    const Grid g{4, 1, 1};
    std::vector<Volume> subjects;
    const double base[8] = {0.30, 0.31, 0.29, 0.32, 0.28, 0.30, 0.33, 0.27};
    for (int s = 0; s < 8; ++s) {
        Volume v = constant_volume(g, 0.0);
        v.values[0] = base[s];
        v.values[1] = base[s] - 0.3 + (s % 2 ? 0.05 : -0.05);
        v.values[2] = 0.01 * (s - 3.5);
        v.values[3] = base[s] * 0.1;
        subjects.push_back(v);
    }
    const GroupStats gs = group_stats(subjects, 0.001, Correction::bonferroni);
    EXPECT_EQ(gs.tests, 4u);
    EXPECT_NEAR(gs.critical_t, student_t_critical(0.001 / 4.0, 7), 0.0);
    EXPECT_EQ(gs.threshold.values[0], 1.0);
    EXPECT_EQ(gs.threshold.values[1], 0.0);
    EXPECT_EQ(gs.threshold.values[2], 0.0);
    EXPECT_EQ(gs.threshold.values[3], 1.0);
    const GroupStats none = group_stats(subjects, 0.001, Correction::none);
    EXPECT_LT(none.critical_t, gs.critical_t);
}

TEST(GroupStats, CriticalValueKnownQuantiles) {
    // Upper 2.5% point of t with 10 dof.
    EXPECT_NEAR(student_t_critical(0.025, 10), 2.2281388519862747, 1e-12);
    EXPECT_NEAR(student_t_critical(0.5, 4), 0.0, 1e-15);
    EXPECT_THROW(student_t_critical(0.0, 4), ValidationError);
}

TEST(Contrast, AntisymmetricAndZeroForIdentical) {
    const Grid g{2, 2, 1};
    Volume a = constant_volume(g, 0.0), b = constant_volume(g, 0.0);
    for (std::size_t i = 0; i < 4; ++i) {
        a.values[i] = 0.1 * static_cast<double>(i);
        b.values[i] = 0.3 - 0.05 * static_cast<double>(i);
    }
    const Volume ab = contrast_maps(a, b), ba = contrast_maps(b, a), aa = contrast_maps(a, a);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(ab.values[i], -ba.values[i]);
        EXPECT_EQ(aa.values[i], 0.0);
    }
    Volume other = Volume::zeros(Grid{4, 1, 1}, std::vector<std::uint8_t>(4, 1), "x");
    EXPECT_THROW(contrast_maps(a, other), ValidationError);
}

TEST(VolumeFormat, RoundTripWithMask) {
    TempDir dir;
    const Grid g{3, 2, 2};
    std::vector<std::uint8_t> mask(g.size(), 1);
    mask[4] = 0;
    Volume v = Volume::zeros(g, mask, "t");
    for (std::size_t i = 0; i < v.values.size(); ++i)
        if (mask[i]) v.values[i] = 0.25 * static_cast<double>(i);
    v.dof = 9;
    write_volume(dir / "t.vol", v);
    write_mask(dir / "mask.vol", v);
    const Volume r = read_volume(dir / "t.vol", dir / "mask.vol");
    EXPECT_EQ(r.grid, g);
    EXPECT_EQ(r.mask, mask);
    EXPECT_EQ(r.kind, "t");
    EXPECT_EQ(r.dof, 9);
    EXPECT_TRUE(std::isnan(r.values[4]));
    for (std::size_t i = 0; i < v.values.size(); ++i)
        if (mask[i]) EXPECT_EQ(r.values[i], v.values[i]);
    const Volume no_mask = read_volume(dir / "t.vol");
    EXPECT_EQ(no_mask.mask, mask);
}
