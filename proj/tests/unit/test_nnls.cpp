#include <cmath>
#include <limits>

#include <Eigen/QR>
#include <gtest/gtest.h>

#include <semrsa/error.hpp>
#include <semrsa/nnls.hpp>
#include <semrsa/random.hpp>

#include "test_support.hpp"

using namespace semrsa;
using semrsa::testing::random_matrix;

namespace {

// Every support set solved by unconstrained least squares; best feasible wins.
Vector exhaustive_nnls(const Eigen::MatrixXd& A, const Vector& b) {
    const auto q = A.cols();
    Vector best = Vector::Zero(q);
    double best_res = b.norm();
    for (unsigned mask = 1; mask < (1u << q); ++mask) {
        std::vector<Eigen::Index> cols;
        for (Eigen::Index j = 0; j < q; ++j)
            if (mask & (1u << j)) cols.push_back(j);
        Eigen::MatrixXd sub(A.rows(), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t k = 0; k < cols.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = A.col(cols[k]);
        const Vector z = sub.colPivHouseholderQr().solve(b);
        if ((z.array() < 0).any()) continue;
        Vector x = Vector::Zero(q);
        for (std::size_t k = 0; k < cols.size(); ++k) x(cols[k]) = z(static_cast<Eigen::Index>(k));
        const double res = (A * x - b).norm();
        if (res < best_res) {
            best_res = res;
            best = x;
        }
    }
    return best;
}

Grid cube(int n) { return Grid{n, n, n}; }

// Responses whose every-voxel cosine RDM is exactly wa*RDM(Ea) + wb*RDM(Eb):
// unit rows of Ea and Eb scaled by sqrt(w) side by side.
ConditionResponses mixture_responses(const RowMatrix& Ea, const RowMatrix& Eb, double wa, double wb, int voxels_per_side,
                                     double noise, std::uint64_t seed) {
    const Grid g = cube(voxels_per_side);
    const Eigen::Index n = Ea.rows();
    const Eigen::Index da = Ea.cols(), db = Eb.cols();
    if (static_cast<std::size_t>(da + db) > g.size()) throw std::logic_error("grid too small");
    ConditionResponses r;
    r.responses = RowMatrix::Zero(n, static_cast<Eigen::Index>(g.size()));
    for (Eigen::Index i = 0; i < n; ++i) {
        r.responses.row(i).head(da) = std::sqrt(wa) * Ea.row(i).normalized();
        r.responses.row(i).segment(da, db) = std::sqrt(wb) * Eb.row(i).normalized();
    }
    r.responses += noise * random_matrix(n, static_cast<Eigen::Index>(g.size()), seed);
    for (Eigen::Index i = 0; i < n; ++i) r.conditions.push_back("c" + std::to_string(i));
    for (std::size_t v = 0; v < g.size(); ++v) r.voxel_coords.push_back(g.coord(v));
    r.repetitions_used.assign(static_cast<std::size_t>(n), 3);
    return r;
}

}  // namespace

TEST(Nnls, IdentityClampsNegatives) {
    const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(3, 3);
    Vector b(3);
    b << 1, -2, 3;
    const NnlsSolution s = nnls_solve(A, b);
    EXPECT_NEAR(s.weights(0), 1.0, 1e-15);
    EXPECT_EQ(s.weights(1), 0.0);
    EXPECT_NEAR(s.weights(2), 3.0, 1e-15);
    EXPECT_NEAR(s.residual_norm, 2.0, 1e-14);
    EXPECT_TRUE(check_kkt(A, b, s.weights).ok);
}

TEST(Nnls, InsideConeEqualsLeastSquares) {
    const Eigen::MatrixXd A = random_matrix(10, 3, 1).cwiseAbs();
    Vector x0(3);
    x0 << 0.5, 2.0, 1.25;
    const Vector b = A * x0;
    const NnlsSolution s = nnls_solve(A, b);
    EXPECT_LT((s.weights - x0).norm(), 1e-8 * x0.norm());
}

TEST(Nnls, RecoversNonNegativeGenerator) {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::MatrixXd A = random_matrix(12, 4, 100 + trial);
        Vector x0(4);
        for (int j = 0; j < 4; ++j) x0(j) = rng.uniform() < 0.3 ? 0.0 : rng.uniform() * 3;
        const Vector b = A * x0;
        const NnlsSolution s = nnls_solve(A, b);
        EXPECT_LE((s.weights - x0).norm(), 1e-8 * std::max(1.0, x0.norm()));
    }
}

TEST(Nnls, MatchesExhaustiveOracleAndKkt) {
    Rng rng(17);
    for (int trial = 0; trial < 300; ++trial) {
        const auto q = static_cast<Eigen::Index>(1 + rng.below(3));
        const auto m = static_cast<Eigen::Index>(q + rng.below(static_cast<std::uint64_t>(9 - q)));
        const Eigen::MatrixXd A = random_matrix(m, q, 1000 + trial);
        const Vector b = random_matrix(m, 1, 5000 + trial).col(0);
        const NnlsSolution s = nnls_solve(A, b);
        const Vector oracle = exhaustive_nnls(A, b);
        EXPECT_TRUE((s.weights.array() >= 0).all());
        EXPECT_LE((s.weights - oracle).norm(), 1e-8 * std::max(1.0, oracle.norm())) << "trial " << trial;
        EXPECT_TRUE(check_kkt(A, b, s.weights).ok) << "trial " << trial;
    }
}

TEST(Nnls, UnderdeterminedAndCollinearStayFeasible) {
    Eigen::MatrixXd A = random_matrix(2, 3, 4);
    const Vector b = random_matrix(2, 1, 5).col(0);
    NnlsSolution s = nnls_solve(A, b);
    EXPECT_TRUE((s.weights.array() >= 0).all());
    EXPECT_TRUE(check_kkt(A, b, s.weights).ok);
    Eigen::MatrixXd C = random_matrix(8, 3, 6);
    C.col(2) = C.col(0);
    const Vector c = C.col(0) * 2.0 + C.col(1).cwiseAbs();
    s = nnls_solve(C, c);
    EXPECT_TRUE(check_kkt(C, c, s.weights).ok);
}

TEST(Nnls, ZeroResponseGivesZeroWeights) {
    const NnlsSolution s = nnls_solve(random_matrix(5, 2, 1), Vector::Zero(5));
    EXPECT_TRUE(s.weights.isZero(0.0));
    EXPECT_EQ(s.iterations, 0);
}

TEST(Nnls, Errors) {
    EXPECT_THROW(nnls_solve(Eigen::MatrixXd(0, 2), Vector(0)), DimensionError);
    EXPECT_THROW(nnls_solve(random_matrix(3, 2, 1), Vector::Ones(4)), DimensionError);
    Eigen::MatrixXd A = random_matrix(3, 2, 1);
    A(1, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(nnls_solve(A, Vector::Ones(3)), ValidationError);
}

TEST(Kkt, DetectsNonOptimalPoint) {
    const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(2, 2);
    Vector b(2), x(2);
    b << 1, 1;
    x << 0.5, 1;
    EXPECT_FALSE(check_kkt(A, b, x).ok);
    x << 1, 1;
    EXPECT_TRUE(check_kkt(A, b, x).ok);
    x << -1, 1;
    EXPECT_FALSE(check_kkt(A, b, x).ok);
}

TEST(Nnls, ScalingPredictorRescalesWeight) {
    const Eigen::MatrixXd A = random_matrix(20, 3, 2).cwiseAbs();
    const Vector b = A * Vector::Ones(3) + 0.1 * random_matrix(20, 1, 3).col(0);
    Eigen::MatrixXd B = A;
    B.col(1) *= 4.0;
    const NnlsSolution sa = nnls_solve(A, b), sb = nnls_solve(B, b);
    EXPECT_NEAR(sb.weights(1), sa.weights(1) / 4.0, 1e-10);
    EXPECT_LT((A * sa.weights - B * sb.weights).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(CvReweight, PairCountsForSeventyThirty) {
    const RowMatrix Ea = random_matrix(100, 4, 1), Eb = random_matrix(100, 4, 2);
    const auto r = mixture_responses(Ea, Eb, 0.5, 0.5, 2, 0.0, 3);
    const std::vector<Rdm> preds{build_rdm(Ea, Metric::cosine, r.conditions), build_rdm(Eb, Metric::cosine, r.conditions)};
    const Grid g = cube(2);
    const auto index = build_sphere_index(g, std::vector<std::uint8_t>(g.size(), 1), 2.0);
    const CvFitResult res = cv_rdm_reweight(preds, r, index, make_split_plan(100, 100, 1));
    EXPECT_EQ(res.train_pairs, 2415u);
    EXPECT_EQ(res.test_pairs, 435u);
}

TEST(CvReweight, PerfectSinglePredictor) {
    const RowMatrix E = random_matrix(60, 5, 4);
    const Grid g = cube(2);
    ConditionResponses r = mixture_responses(E, random_matrix(60, 3, 9), 1.0, 0.0, 2, 0.0, 1);
    const std::vector<Rdm> preds{build_rdm(E, Metric::cosine, r.conditions)};
    const auto index = build_sphere_index(g, std::vector<std::uint8_t>(g.size(), 1), 2.0);
    const CvFitResult res = cv_rdm_reweight(preds, r, index, make_split_plan(60, 20, 5), {14, false});
    for (double v : res.mean.values) EXPECT_NEAR(v, 1.0, 1e-10);
    EXPECT_GT(res.mean_weights(0, 0), 0.0);
    EXPECT_NEAR(res.mean_weights(0, 0), 1.0, 1e-10);
}

TEST(CvReweight, PlantedMixtureRecovered) {
    const RowMatrix Ea = random_matrix(200, 10, 11), Eb = random_matrix(200, 10, 12);
    const auto r = mixture_responses(Ea, Eb, 0.7, 0.3, 3, 0.0, 13);
    const std::vector<Rdm> preds{build_rdm(Ea, Metric::cosine, r.conditions), build_rdm(Eb, Metric::cosine, r.conditions)};
    const Grid g = cube(3);
    const auto index = build_sphere_index(g, std::vector<std::uint8_t>(g.size(), 1), 4.0);
    const CvFitResult res = cv_rdm_reweight(preds, r, index, make_split_plan(200, 100, 2));
    for (Eigen::Index c = 0; c < res.mean_weights.rows(); ++c) {
        const double s = res.mean_weights.row(c).sum();
        EXPECT_NEAR(res.mean_weights(c, 0) / s, 0.7, 1e-9);
        EXPECT_NEAR(res.mean_weights(c, 1) / s, 0.3, 1e-9);
    }
    for (double v : res.mean.values) EXPECT_GT(v, 0.99);
}

TEST(CvReweight, PredictorOrderAndScaleInvariance) {
    const RowMatrix Ea = random_matrix(100, 6, 21), Eb = random_matrix(100, 6, 22);
    const auto r = mixture_responses(Ea, Eb, 0.6, 0.4, 3, 0.05, 23);
    const Rdm a = build_rdm(Ea, Metric::cosine, r.conditions), b = build_rdm(Eb, Metric::cosine, r.conditions);
    const Grid g = cube(3);
    const auto index = build_sphere_index(g, std::vector<std::uint8_t>(g.size(), 1), 1.0);
    const SplitPlan plan = make_split_plan(100, 50, 4);
    const CvFitOptions opts{35, false};
    const CvFitResult ab = cv_rdm_reweight({a, b}, r, index, plan, opts);
    const CvFitResult ba = cv_rdm_reweight({b, a}, r, index, plan, opts);
    const Rdm a3(a.values() * 3.0, a.condition_ids());
    const CvFitResult scaled = cv_rdm_reweight({a3, b}, r, index, plan, opts);
    for (std::size_t i = 0; i < ab.mean.values.size(); ++i) {
        EXPECT_NEAR(ab.mean.values[i], ba.mean.values[i], 1e-10);
        EXPECT_NEAR(ab.mean.values[i], scaled.mean.values[i], 1e-10);
    }
    for (Eigen::Index c = 0; c < ab.mean_weights.rows(); ++c) {
        EXPECT_NEAR(ab.mean_weights(c, 0), ba.mean_weights(c, 1), 1e-10);
        EXPECT_NEAR(ab.mean_weights(c, 0), 3.0 * scaled.mean_weights(c, 0), 1e-10);
    }
}

TEST(CvReweight, MeanIsAverageOfSplits) {
    const RowMatrix Ea = random_matrix(90, 4, 31), Eb = random_matrix(90, 4, 32);
    const auto r = mixture_responses(Ea, Eb, 0.5, 0.5, 2, 0.3, 33);
    const Grid g = cube(2);
    const auto index = build_sphere_index(g, std::vector<std::uint8_t>(g.size(), 1), 1.0);
    const CvFitResult res = cv_rdm_reweight({build_rdm(Ea, Metric::cosine, r.conditions)}, r, index,
                                            make_split_plan(90, 30, 7), {21, false});
    ASSERT_EQ(res.per_split.size(), 3u);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double m = (res.per_split[0].values[i] + res.per_split[1].values[i] + res.per_split[2].values[i]) / 3.0;
        EXPECT_NEAR(res.mean.values[i], m, 1e-15);
    }
}

TEST(CvReweight, InterceptOnlyChangesWeights) {
    const RowMatrix Ea = random_matrix(100, 5, 41), Eb = random_matrix(100, 5, 42);
    const auto r = mixture_responses(Ea, Eb, 0.5, 0.5, 3, 0.2, 43);
    const Grid g = cube(3);
    const auto index = build_sphere_index(g, std::vector<std::uint8_t>(g.size(), 1), 1.0);
    const std::vector<Rdm> preds{build_rdm(Ea, Metric::cosine, r.conditions), build_rdm(Eb, Metric::cosine, r.conditions)};
    const SplitPlan plan = make_split_plan(100, 100, 1);
    const CvFitResult with = cv_rdm_reweight(preds, r, index, plan, {70, true});
    EXPECT_EQ(with.per_split[0].metadata["intercept"], true);
    for (double v : with.mean.values) EXPECT_TRUE(std::isfinite(v));
}

TEST(CvReweight, Errors) {
    const RowMatrix E = random_matrix(20, 3, 1);
    const auto r = mixture_responses(E, E, 0.5, 0.5, 2, 0.0, 1);
    const Grid g = cube(2);
    const auto index = build_sphere_index(g, std::vector<std::uint8_t>(g.size(), 1), 1.0);
    const SplitPlan plan = make_split_plan(20, 10, 1);
    EXPECT_THROW(cv_rdm_reweight({}, r, index, plan), ValidationError);
    const std::vector<Rdm> preds{build_rdm(E, Metric::cosine, r.conditions)};
    EXPECT_THROW(cv_rdm_reweight(preds, r, index, plan, {9, false}), ValidationError);
    EXPECT_THROW(cv_rdm_reweight({build_rdm(E, Metric::cosine)}, r, index, plan, {5, false}), ValidationError);
}

TEST(ContrastSuite, PairwiseDifferences) {
    const Grid g{2, 1, 1};
    std::vector<std::pair<std::string, Volume>> maps;
    for (double base : {0.1, 0.4, 0.9}) {
        Volume v = Volume::zeros(g, {1, 1}, "cv_pearson_mean");
        v.values = {base, 2 * base};
        maps.emplace_back("m" + std::to_string(static_cast<int>(base * 10)), v);
    }
    const auto out = map_contrast_suite(maps);
    ASSERT_EQ(out.size(), 3u);
    EXPECT_EQ(out[0].first, "m1_minus_m4");
    EXPECT_NEAR(out[0].second.values[1], -0.6, 1e-15);
    EXPECT_EQ(out[2].first, "m4_minus_m9");
    const auto same = map_contrast_suite({maps[0], maps[0]});
    EXPECT_EQ(same[0].second.values[0], 0.0);
    EXPECT_THROW(map_contrast_suite({maps[0]}), ValidationError);
}
