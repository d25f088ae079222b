#pragma once

#include <string>
#include <utility>
#include <vector>

#include "semrsa/dataset.hpp"
#include "semrsa/diagnostics.hpp"
#include "semrsa/matrix.hpp"
#include "semrsa/rdm.hpp"
#include "semrsa/searchlight.hpp"
#include "semrsa/volume.hpp"

namespace semrsa {

struct NnlsSolution {
    Vector weights;
    double residual_norm = 0.0;
    int iterations = 0;
};

/// min |A x - b| subject to x >= 0 (Lawson-Hanson active set). Variables
/// enter by largest dual value, smallest index on ties.
NnlsSolution nnls_solve(const Eigen::MatrixXd& A, const Vector& b);

/// Karush-Kuhn-Tucker check with gradient g = A^T (A x - b): |g_j| <= tol at
/// positive x_j, g_j >= -tol at zero x_j, tol = rel_tol * |A|_F * |b|.
struct KktReport {
    bool ok = false;
    double max_violation = 0.0;
    double tolerance = 0.0;
};
KktReport check_kkt(const Eigen::MatrixXd& A, const Vector& b, const Vector& x, double rel_tol = 1e-8);

struct CvFitResult {
    std::vector<Volume> per_split;  // test Pearson per split
    Volume mean;                    // arithmetic mean over splits
    RowMatrix mean_weights;         // centers x predictors, averaged over splits
    std::vector<std::size_t> centers;
    std::size_t train_pairs = 0, test_pairs = 0;
};

struct CvFitOptions {
    std::size_t train_count = 70;
    /// Fit an unconstrained offset by centering the training UTVs. Only the
    /// weights change; test Pearson is offset-invariant.
    bool intercept = false;
};

/// Per split and center: weights fit on the pairs among the first
/// `train_count` split conditions, Pearson of the prediction on the pairs
/// among the remaining ones. Raw (unstandardized) cosine UTVs.
CvFitResult cv_rdm_reweight(const std::vector<Rdm>& predictor_rdms, const ConditionResponses& responses,
                            const SearchlightIndex& index, const SplitPlan& plan, const CvFitOptions& options = {},
                            Diagnostics* diag = nullptr);

/// Pairwise differences "<a>_minus_<b>" for every i < j of the given maps.
std::vector<std::pair<std::string, Volume>> map_contrast_suite(
    const std::vector<std::pair<std::string, Volume>>& maps);

}  // namespace semrsa
