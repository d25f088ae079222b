#include "semrsa/nnls.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include <Eigen/QR>

#include "semrsa/error.hpp"

namespace semrsa {

namespace {

constexpr const char* kModule = "nnls_rdm_fit";

// Least squares restricted to the passive columns; zero elsewhere.
Vector passive_solve(const Eigen::MatrixXd& A, const Vector& b, const std::vector<bool>& passive) {
    std::vector<Eigen::Index> cols;
    for (Eigen::Index j = 0; j < A.cols(); ++j)
        if (passive[static_cast<std::size_t>(j)]) cols.push_back(j);
    Eigen::MatrixXd sub(A.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = A.col(cols[k]);
    const Vector zs = sub.colPivHouseholderQr().solve(b);
    Vector z = Vector::Zero(A.cols());
    for (std::size_t k = 0; k < cols.size(); ++k) z(cols[k]) = zs(static_cast<Eigen::Index>(k));
    return z;
}

}  // namespace

NnlsSolution nnls_solve(const Eigen::MatrixXd& A, const Vector& b) {
    const Eigen::Index m = A.rows(), q = A.cols();
    if (m < 1 || q < 1) throw DimensionError(kModule, "design must have at least one row and one column");
    if (b.size() != m) throw DimensionError(kModule, "response length differs from design rows");
    if (!A.allFinite() || !b.allFinite()) throw ValidationError(kModule, "non-finite NNLS input");

    const double tol = 1e-10 * (A.transpose() * b).cwiseAbs().maxCoeff();
    const int cap = 3 * static_cast<int>(q);

    NnlsSolution sol;
    Vector x = Vector::Zero(q);
    std::vector<bool> passive(static_cast<std::size_t>(q), false);
    // Columns whose entry produced a non-positive coefficient (numerically
    // dependent); skipped until x moves again.
    std::vector<bool> blocked(static_cast<std::size_t>(q), false);

    for (;;) {
        const Vector w = A.transpose() * (b - A * x);
        Eigen::Index t = -1;
        double best = tol;
        for (Eigen::Index j = 0; j < q; ++j) {
            const auto uj = static_cast<std::size_t>(j);
            if (passive[uj] || blocked[uj]) continue;
            if (w(j) > best) {
                best = w(j);
                t = j;
            }
        }
        if (t < 0) break;
        if (++sol.iterations > cap)
            throw ConvergenceError(kModule, "active-set iteration cap exceeded", (A * x - b).norm());

        passive[static_cast<std::size_t>(t)] = true;
        Vector z = passive_solve(A, b, passive);
        if (z(t) <= 0.0) {
            passive[static_cast<std::size_t>(t)] = false;
            blocked[static_cast<std::size_t>(t)] = true;
            continue;
        }
        std::fill(blocked.begin(), blocked.end(), false);

        for (;;) {
            bool feasible = true;
            for (Eigen::Index j = 0; j < q; ++j)
                if (passive[static_cast<std::size_t>(j)] && z(j) <= 0.0) feasible = false;
            if (feasible) break;
            double alpha = 1.0;
            Eigen::Index hit = -1;
            for (Eigen::Index j = 0; j < q; ++j) {
                if (!passive[static_cast<std::size_t>(j)] || z(j) > 0.0) continue;
                const double a = x(j) / (x(j) - z(j));
                if (hit < 0 || a < alpha) {
                    alpha = a;
                    hit = j;
                }
            }
            x += alpha * (z - x);
            x(hit) = 0.0;
            for (Eigen::Index j = 0; j < q; ++j) {
                const auto uj = static_cast<std::size_t>(j);
                if (passive[uj] && x(j) <= 0.0) {
                    passive[uj] = false;
                    x(j) = 0.0;
                }
            }
            if (std::none_of(passive.begin(), passive.end(), [](bool p) { return p; })) {
                z.setZero();
                break;
            }
            z = passive_solve(A, b, passive);
        }
        x = z;
    }
    x = x.cwiseMax(0.0);
    sol.weights = x;
    sol.residual_norm = (A * x - b).norm();
    return sol;
}

KktReport check_kkt(const Eigen::MatrixXd& A, const Vector& b, const Vector& x, double rel_tol) {
    if (x.size() != A.cols() || b.size() != A.rows()) throw DimensionError(kModule, "KKT check shape mismatch");
    KktReport r;
    r.tolerance = rel_tol * A.norm() * b.norm();
    const Vector g = A.transpose() * (A * x - b);
    r.ok = true;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        if (x(j) < 0.0) {
            r.ok = false;
            r.max_violation = std::max(r.max_violation, -x(j));
            continue;
        }
        const double v = x(j) > 0.0 ? std::abs(g(j)) : std::max(0.0, -g(j));
        r.max_violation = std::max(r.max_violation, v);
        if (v > r.tolerance) r.ok = false;
    }
    return r;
}

CvFitResult cv_rdm_reweight(const std::vector<Rdm>& predictor_rdms, const ConditionResponses& responses,
                            const SearchlightIndex& index, const SplitPlan& plan, const CvFitOptions& options,
                            Diagnostics* diag) {
    if (predictor_rdms.empty()) throw ValidationError(kModule, "no predictor RDMs");
    if (plan.splits.empty()) throw ValidationError(kModule, "split plan has no splits");
    const std::size_t m = plan.split_size;
    const std::size_t n_train = options.train_count;
    if (n_train < 2 || n_train >= m || m - n_train < 3)
        throw ValidationError(kModule, "train count " + std::to_string(n_train) + " leaves too few pairs in a split of " +
                                           std::to_string(m));
    const std::size_t n_test = m - n_train;
    const auto q = static_cast<Eigen::Index>(predictor_rdms.size());

    const auto columns = neighbor_columns(index, responses.voxel_coords);
    std::vector<std::vector<std::size_t>> positions;
    for (const auto& rdm : predictor_rdms) positions.push_back(rdm_positions(rdm, responses.conditions, kModule));

    CvFitResult result;
    result.train_pairs = utv_length(n_train);
    result.test_pairs = utv_length(n_test);
    result.centers = index.centers;

    // Predictor design per split: within-train and within-test pairs only.
    std::vector<Eigen::MatrixXd> design_train(plan.splits.size()), design_test(plan.splits.size());
    for (std::size_t s = 0; s < plan.splits.size(); ++s) {
        const auto& split = plan.splits[s];
        if (split.size() != m) throw ValidationError(kModule, "split sizes differ");
        for (std::size_t c : split)
            if (c >= responses.condition_count())
                throw ValidationError(kModule, "split refers to a condition outside the responses");
        auto fill = [&](std::size_t lo, std::size_t count, Eigen::MatrixXd& D) {
            D.resize(static_cast<Eigen::Index>(utv_length(count)), q);
            for (Eigen::Index p = 0; p < q; ++p) {
                const auto& pos = positions[static_cast<std::size_t>(p)];
                const Rdm& rdm = predictor_rdms[static_cast<std::size_t>(p)];
                Eigen::Index k = 0;
                for (std::size_t a = 0; a < count; ++a)
                    for (std::size_t b = a + 1; b < count; ++b, ++k)
                        D(k, p) = rdm(pos[split[lo + a]], pos[split[lo + b]]);
            }
        };
        fill(0, n_train, design_train[s]);
        fill(n_train, n_test, design_test[s]);
    }

    for (std::size_t s = 0; s < plan.splits.size(); ++s) {
        Volume v = Volume::zeros(index.grid, index.mask, "cv_pearson");
        v.metadata = {{"split", s},
                      {"train_pairs", result.train_pairs},
                      {"test_pairs", result.test_pairs},
                      {"intercept", options.intercept}};
        result.per_split.push_back(std::move(v));
    }
    std::vector<RowMatrix> split_weights(plan.splits.size(),
                                         RowMatrix::Zero(static_cast<Eigen::Index>(index.centers.size()), q));

    std::exception_ptr failure;
    const auto centers = static_cast<std::ptrdiff_t>(index.centers.size());
#pragma omp parallel
    {
        RowMatrix train_patterns, test_patterns;
        std::vector<double> train_utv(result.train_pairs), test_utv(result.test_pairs);
#pragma omp for schedule(dynamic, 8)
        for (std::ptrdiff_t c = 0; c < centers; ++c) {
            try {
                const auto& cols = columns[static_cast<std::size_t>(c)];
                train_patterns.resize(static_cast<Eigen::Index>(n_train), static_cast<Eigen::Index>(cols.size()));
                test_patterns.resize(static_cast<Eigen::Index>(n_test), static_cast<Eigen::Index>(cols.size()));
                for (std::size_t s = 0; s < plan.splits.size(); ++s) {
                    const auto& split = plan.splits[s];
                    for (std::size_t a = 0; a < m; ++a) {
                        const auto row = responses.responses.row(static_cast<Eigen::Index>(split[a]));
                        RowMatrix& dst = a < n_train ? train_patterns : test_patterns;
                        const auto r = static_cast<Eigen::Index>(a < n_train ? a : a - n_train);
                        for (std::size_t j = 0; j < cols.size(); ++j) dst(r, static_cast<Eigen::Index>(j)) = row(cols[j]);
                    }
                    dissimilarity_utv(train_patterns, Metric::cosine, train_utv, diag);
                    dissimilarity_utv(test_patterns, Metric::cosine, test_utv, diag);

                    const Eigen::Map<const Vector> b(train_utv.data(), static_cast<Eigen::Index>(train_utv.size()));
                    Vector weights;
                    if (options.intercept) {
                        const Eigen::MatrixXd& D = design_train[s];
                        const Eigen::MatrixXd Dc = D.rowwise() - D.colwise().mean();
                        weights = nnls_solve(Dc, b.array() - b.mean()).weights;
                    } else {
                        weights = nnls_solve(design_train[s], b).weights;
                    }
                    const Vector pred = design_test[s] * weights;
                    split_weights[s].row(c) = weights.transpose();
                    result.per_split[s].values[index.centers[static_cast<std::size_t>(c)]] =
                        pearson(std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())), test_utv,
                                diag);
                }
            } catch (...) {
#pragma omp critical(semrsa_nnls_failure)
                if (!failure) failure = std::current_exception();
            }
        }
    }
    if (failure) std::rethrow_exception(failure);

    result.mean = mean_volume(result.per_split, "cv_pearson_mean");
    result.mean_weights = RowMatrix::Zero(static_cast<Eigen::Index>(index.centers.size()), q);
    for (const auto& w : split_weights) result.mean_weights += w;
    result.mean_weights /= static_cast<double>(split_weights.size());
    return result;
}

std::vector<std::pair<std::string, Volume>> map_contrast_suite(
    const std::vector<std::pair<std::string, Volume>>& maps) {
    if (maps.size() < 2) throw ValidationError(kModule, "contrast suite needs at least two maps");
    std::vector<std::pair<std::string, Volume>> out;
    for (std::size_t i = 0; i < maps.size(); ++i)
        for (std::size_t j = i + 1; j < maps.size(); ++j)
            out.emplace_back(maps[i].first + "_minus_" + maps[j].first, contrast_maps(maps[i].second, maps[j].second));
    return out;
}

}  // namespace semrsa
