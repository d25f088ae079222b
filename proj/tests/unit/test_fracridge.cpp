#include <cmath>

#include <Eigen/Cholesky>
#include <gtest/gtest.h>

#include <semrsa/error.hpp>
#include <semrsa/fracridge.hpp>

#include "test_support.hpp"

using namespace semrsa;
using semrsa::testing::random_matrix;
using semrsa::testing::TempDir;

namespace {

// (Xc^T Xc + alpha I)^{-1} Xc^T yc, solved directly.
Vector direct_ridge(const RowMatrix& X, const RowMatrix& Y, Eigen::Index col, double alpha) {
    const Eigen::MatrixXd Xc = X.rowwise() - X.colwise().mean();
    const Vector yc = Y.col(col).array() - Y.col(col).mean();
    Eigen::MatrixXd G = Xc.transpose() * Xc;
    G.diagonal().array() += alpha;
    return G.ldlt().solve(Xc.transpose() * yc);
}

}  // namespace

TEST(FractionGrid, DefaultIsTwentySteps) {
    const auto g = default_fraction_grid();
    ASSERT_EQ(g.size(), 20u);
    EXPECT_DOUBLE_EQ(g.front(), 0.05);
    EXPECT_EQ(g.back(), 1.0);
    for (std::size_t i = 1; i < g.size(); ++i) EXPECT_NEAR(g[i] - g[i - 1], 0.05, 1e-15);
}

TEST(FractionGrid, Parsing) {
    EXPECT_EQ(parse_fraction_grid("0.05:1:0.05"), default_fraction_grid());
    EXPECT_EQ(parse_fraction_grid("0.2,0.5,1"), (std::vector<double>{0.2, 0.5, 1.0}));
    EXPECT_THROW(parse_fraction_grid("0.5,0.2"), ValidationError);
    EXPECT_THROW(parse_fraction_grid("0,0.5"), ValidationError);
    EXPECT_THROW(parse_fraction_grid("a,b"), ValidationError);
    EXPECT_THROW(parse_fraction_grid("1.5"), ValidationError);
}

TEST(Fracridge, AchievedFractionAndDirectSolve) {
    const RowMatrix X = random_matrix(200, 50, 1);
    const RowMatrix Y = X * random_matrix(50, 8, 2) + 0.5 * random_matrix(200, 8, 3);
    const auto fractions = default_fraction_grid();
    const FracridgeModel m = fracridge_fit(X, Y, fractions);
    ASSERT_EQ(m.weights.size(), 20u);
    const RowMatrix& ols = m.weights.back();
    for (std::size_t f = 0; f < fractions.size(); ++f) {
        for (Eigen::Index j = 0; j < 8; ++j) {
            const double ratio = m.weights[f].col(j).norm() / ols.col(j).norm();
            EXPECT_NEAR(ratio, fractions[f], 1e-10);
            const Vector direct = direct_ridge(X, Y, j, m.alphas(static_cast<Eigen::Index>(f), j));
            EXPECT_LT((m.weights[f].col(j) - direct).norm(), 1e-8 * direct.norm());
        }
    }
}

TEST(Fracridge, FractionOneIsOrdinaryLeastSquares) {
    const RowMatrix X = random_matrix(60, 5, 4);
    const RowMatrix Y = random_matrix(60, 2, 5);
    const FracridgeModel m = fracridge_fit(X, Y, {1.0});
    EXPECT_EQ(m.alphas(0, 0), 0.0);
    for (Eigen::Index j = 0; j < 2; ++j) {
        const Vector direct = direct_ridge(X, Y, j, 0.0);
        EXPECT_LT((m.weights[0].col(j) - direct).norm(), 1e-10 * direct.norm());
    }
}

TEST(Fracridge, PenaltyDecreasesWithFraction) {
    const RowMatrix X = random_matrix(80, 10, 6);
    const RowMatrix Y = random_matrix(80, 3, 7);
    const FracridgeModel m = fracridge_fit(X, Y);
    for (Eigen::Index j = 0; j < 3; ++j)
        for (Eigen::Index f = 1; f < m.alphas.rows(); ++f) EXPECT_LT(m.alphas(f, j), m.alphas(f - 1, j));
}

TEST(Fracridge, RankDeficientDesignStaysFinite) {
    RowMatrix X = random_matrix(30, 6, 8);
    X.col(5) = X.col(0) + X.col(1);
    const RowMatrix Y = random_matrix(30, 2, 9);
    const FracridgeModel m = fracridge_fit(X, Y, {0.3, 1.0});
    for (const auto& w : m.weights) EXPECT_TRUE(w.allFinite());
    const double r = m.weights[0].col(0).norm() / m.weights[1].col(0).norm();
    EXPECT_NEAR(r, 0.3, 1e-10);
}

TEST(Fracridge, Errors) {
    EXPECT_THROW(fracridge_fit(random_matrix(10, 3, 1), random_matrix(9, 2, 1)), DimensionError);
    EXPECT_THROW(fracridge_fit(RowMatrix::Zero(10, 3), random_matrix(10, 2, 1)), ValidationError);
    RowMatrix bad = random_matrix(10, 3, 1);
    bad(2, 2) = INFINITY;
    EXPECT_THROW(fracridge_fit(bad, random_matrix(10, 2, 1)), ValidationError);
}

TEST(SelectFractions, PicksBestTestCorrelation) {
    const RowMatrix X = random_matrix(120, 20, 10);
    const RowMatrix B = random_matrix(20, 3, 11);
    const RowMatrix Y = X * B + 3.0 * random_matrix(120, 3, 12);
    const FracridgeModel fit = fracridge_fit(X.topRows(80), Y.topRows(80));
    const RowMatrix Xt = X.bottomRows(40), Yt = Y.bottomRows(40);
    const FracridgeModel sel = select_fractions(fit, Xt, Yt);
    for (Eigen::Index j = 0; j < 3; ++j) {
        double best = -2;
        double best_f = 0;
        for (std::size_t f = 0; f < fit.fractions.size(); ++f) {
            const RowMatrix pred = predict_at_fraction(fit, f, Xt);
            const Vector a = pred.col(j), b = Yt.col(j);
            const double r = pearson({a.data(), 40}, {b.data(), 40});
            if (r > best) {
                best = r;
                best_f = fit.fractions[f];
            }
        }
        EXPECT_EQ(sel.chosen_fraction[j], best_f);
    }
}

TEST(SelectFractions, ConstantTestColumnFlagged) {
    const RowMatrix X = random_matrix(50, 4, 1);
    const RowMatrix Y = random_matrix(50, 2, 2);
    RowMatrix Yt = random_matrix(20, 2, 3);
    Yt.col(1).setConstant(1.0);
    Diagnostics diag;
    const FracridgeModel m = select_fractions(fracridge_fit(X, Y), random_matrix(20, 4, 4), Yt, &diag);
    EXPECT_TRUE(diag.flagged(Degeneracy::constant_test_column));
    EXPECT_EQ(m.chosen_fraction[1], 1.0);
}

TEST(Predict, UsesCentering) {
    const RowMatrix X = random_matrix(40, 3, 1).array() + 5.0;
    const RowMatrix Y = (X * random_matrix(3, 2, 2)).array() + 7.0;
    FracridgeModel m = fracridge_fit(X, Y, {1.0});
    m.chosen_fraction = {1.0, 1.0};
    EXPECT_LT((predict(m, X) - Y).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_THROW(predict(m, random_matrix(2, 4, 1)), DimensionError);
}

TEST(Gain, PerfectPredictionsAndOracle) {
    const RowMatrix Y = random_matrix(10, 16, 3);
    const auto g = prediction_accuracy_gain(Y, Y);
    const RowMatrix C = row_correlation_matrix(Y, Y);
    for (Eigen::Index i = 0; i < 10; ++i) {
        EXPECT_EQ(C(i, i), 1.0);
        double off = 0;
        for (Eigen::Index k = 0; k < 10; ++k)
            if (k != i) off += C(i, k);
        EXPECT_NEAR(g[static_cast<std::size_t>(i)], 1.0 - off / 9.0, 1e-15);
    }
}

TEST(Gain, ShuffledPredictionsAverageNearZero) {
    const RowMatrix Y = random_matrix(200, 32, 5);
    const RowMatrix Yhat = random_matrix(200, 32, 6);
    const auto g = prediction_accuracy_gain(Yhat, Y);
    double mean = 0;
    for (double x : g) mean += x;
    EXPECT_LT(std::abs(mean / 200.0), 0.03);
}

TEST(DataSplit, ExplicitValidationAndSeededTest) {
    std::vector<std::string> ids;
    for (int i = 0; i < 50; ++i) ids.push_back("i" + std::to_string(i));
    const DataSplit s = make_data_split(ids, std::vector<std::string>{"i3", "i7"}, 10, 2);
    EXPECT_EQ(s.validation, (std::vector<std::string>{"i3", "i7"}));
    EXPECT_EQ(s.test.size(), 10u);
    EXPECT_EQ(s.train.size(), 38u);
    EXPECT_NO_THROW(s.validate());
    const DataSplit again = make_data_split(ids, std::vector<std::string>{"i3", "i7"}, 10, 2);
    EXPECT_EQ(again.test, s.test);
    const DataSplit sized = make_data_split(ids, std::size_t{5}, 10, 2);
    EXPECT_EQ(sized.validation.size(), 5u);
    EXPECT_THROW(make_data_split(ids, std::vector<std::string>{"nope"}, 10, 2), ValidationError);
    DataSplit overlap{{"a"}, {"a"}, {}};
    EXPECT_THROW(overlap.validate(), ValidationError);
}

TEST(EncodeVoxelwise, RecoversLinearVoxels) {
    const Eigen::Index n = 150;
    EmbeddingMatrix e;
    e.values = random_matrix(n, 6, 1);
    ConditionResponses r;
    const RowMatrix W = random_matrix(6, 8, 2);
    r.responses = e.values * W + 0.1 * random_matrix(n, 8, 3);
    r.responses.col(7) = random_matrix(n, 1, 4);  // pure-noise voxel
    for (Eigen::Index i = 0; i < n; ++i) {
        e.item_ids.push_back("c" + std::to_string(i));
        r.conditions.push_back(e.item_ids.back());
    }
    for (int v = 0; v < 8; ++v) r.voxel_coords.push_back({v, 0, 0});
    const DataSplit split = make_data_split(e.item_ids, std::size_t{30}, 30, 9);
    const EncodingResult res = encode_voxelwise(e, r, split);
    for (int v = 0; v < 7; ++v) EXPECT_GT(res.voxel_pearson[v], 0.95);
    EXPECT_LT(std::abs(res.voxel_pearson[7]), 0.5);
    EXPECT_EQ(res.pearson.at({3, 0, 0}), res.voxel_pearson[3]);
}

TEST(FracridgeFormat, RoundTrip) {
    TempDir dir;
    FracridgeModel m = fracridge_fit(random_matrix(30, 4, 1), random_matrix(30, 3, 2), {0.5, 1.0}, {true, 42});
    m.chosen_fraction = {0.5, 1.0, 0.5};
    write_fracridge(dir / "m.frr", m);
    const FracridgeModel r = read_fracridge(dir / "m.frr");
    EXPECT_EQ(r.fractions, m.fractions);
    EXPECT_EQ(r.chosen_fraction, m.chosen_fraction);
    EXPECT_EQ(r.seed, 42u);
    EXPECT_EQ(r.x_mean, m.x_mean);
    for (std::size_t f = 0; f < 2; ++f) EXPECT_EQ(r.weights[f], m.weights[f].cast<float>().cast<double>());
}
