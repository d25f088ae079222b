#include "semrsa/fracridge.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <Eigen/SVD>

#include "semrsa/binary_format.hpp"
#include "semrsa/error.hpp"
#include "semrsa/random.hpp"
#include "semrsa/rdm.hpp"

namespace semrsa {

namespace {

constexpr const char* kModule = "fracridge";

// Penalty grid, in units of the largest squared singular value.
constexpr double kLogAlphaLow = -6.0 * 2.302585092994046;
constexpr double kLogAlphaHigh = 6.0 * 2.302585092994046;
constexpr int kGridPoints = 241;
constexpr double kRankTolerance = 1e-10;

void validate_fractions(const std::vector<double>& fractions) {
    if (fractions.empty()) throw ValidationError(kModule, "fraction grid is empty");
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        if (!(fractions[i] > 0.0 && fractions[i] <= 1.0))
            throw ValidationError(kModule, "fractions must lie in (0, 1]");
        if (i > 0 && !(fractions[i] > fractions[i - 1]))
            throw ValidationError(kModule, "fractions must be strictly increasing");
    }
}

// Norm ratio |b(alpha)| / |b_ols| for one target, given s_i^2 and the squared
// rotated OLS coefficients.
double norm_ratio(const Vector& s2, const Vector& ols2, double ols_norm2, double alpha) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < s2.size(); ++i) {
        const double shrink = s2(i) / (s2(i) + alpha);
        acc += shrink * shrink * ols2(i);
    }
    return std::sqrt(acc / ols_norm2);
}

// Penalty whose norm ratio equals `fraction`: bracket on the log grid,
// interpolate, then bisect to full precision inside the bracket.
double solve_alpha(const Vector& s2, const Vector& ols2, double ols_norm2, double fraction,
                   const std::vector<double>& log_grid, const std::vector<double>& grid_ratio) {
    if (fraction >= 1.0) return 0.0;
    auto ratio_at_log = [&](double la) { return norm_ratio(s2, ols2, ols_norm2, std::exp(la)); };

    if (fraction > grid_ratio.front()) {
        // Between alpha = 0 (ratio 1) and the bottom of the grid.
        double lo = 0.0, hi = std::exp(log_grid.front());
        for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (mid == lo || mid == hi) break;
            (norm_ratio(s2, ols2, ols_norm2, mid) > fraction ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }
    if (fraction <= grid_ratio.back()) return std::exp(log_grid.back());

    const auto upper = std::find_if(grid_ratio.begin(), grid_ratio.end(), [&](double r) { return r <= fraction; });
    const auto k = static_cast<std::size_t>(std::distance(grid_ratio.begin(), upper));
    double lo = log_grid[k - 1], hi = log_grid[k];
    const double r_lo = grid_ratio[k - 1], r_hi = grid_ratio[k];
    double guess = lo + (r_lo - fraction) / (r_lo - r_hi) * (hi - lo);
    for (int it = 0; it < 100; ++it) {
        const double r = ratio_at_log(guess);
        if (std::abs(r - fraction) <= 1e-13) break;
        (r > fraction ? lo : hi) = guess;
        const double next = 0.5 * (lo + hi);
        if (next == guess) break;
        guess = next;
    }
    return std::exp(guess);
}

double pearson_columns(const RowMatrix& a, const RowMatrix& b, Eigen::Index col, Diagnostics* diag) {
    const Vector x = a.col(col);
    const Vector y = b.col(col);
    return pearson(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                   std::span<const double>(y.data(), static_cast<std::size_t>(y.size())), diag);
}

bool is_constant(const RowMatrix& m, Eigen::Index col) {
    return (m.col(col).array() == m(0, col)).all();
}

}  // namespace

std::size_t FracridgeModel::fraction_index(double fraction) const {
    for (std::size_t i = 0; i < fractions.size(); ++i)
        if (fractions[i] == fraction) return i;
    throw ValidationError(kModule, "fraction not in the fitted grid");
}

RowMatrix FracridgeModel::chosen_weights() const {
    if (chosen_fraction.size() != d) throw ValidationError(kModule, "fractions have not been selected");
    RowMatrix w(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < d; ++j) w.col(j) = weights[fraction_index(chosen_fraction[j])].col(j);
    return w;
}

std::vector<double> default_fraction_grid() {
    std::vector<double> grid;
    for (int k = 1; k <= 20; ++k) grid.push_back(k / 20.0);
    return grid;
}

std::vector<double> parse_fraction_grid(const std::string& text) {
    std::vector<double> out;
    try {
        if (text.find(':') != std::string::npos) {
            std::stringstream ss(text);
            std::string a, b, c;
            std::getline(ss, a, ':');
            std::getline(ss, b, ':');
            std::getline(ss, c, ':');
            const double start = std::stod(a), stop = std::stod(b), step = std::stod(c);
            if (!(step > 0.0)) throw ValidationError(kModule, "fraction step must be positive");
            const auto count = static_cast<long>(std::floor((stop - start) / step + 1e-9)) + 1;
            for (long k = 0; k < count; ++k) out.push_back(std::round((start + k * step) * 1e12) / 1e12);
        } else {
            std::stringstream ss(text);
            std::string item;
            while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
        }
    } catch (const std::logic_error&) {
        throw ValidationError(kModule, "cannot parse fraction grid '" + text + "'");
    }
    validate_fractions(out);
    return out;
}

FracridgeModel fracridge_fit(const RowMatrix& X, const RowMatrix& Y, const std::vector<double>& fractions,
                             const FracridgeOptions& options) {
    if (X.rows() < 2) throw ValidationError(kModule, "fracridge_fit needs n >= 2");
    if (X.rows() != Y.rows()) throw DimensionError(kModule, "X and Y row counts differ");
    if (!X.allFinite() || !Y.allFinite()) throw ValidationError(kModule, "X or Y has a non-finite entry");
    validate_fractions(fractions);

    FracridgeModel model;
    model.fractions = fractions;
    model.n = static_cast<std::size_t>(X.rows());
    model.p = static_cast<std::size_t>(X.cols());
    model.d = static_cast<std::size_t>(Y.cols());
    model.seed = options.seed;
    model.x_mean = options.center ? Vector(X.colwise().mean().transpose()) : Vector::Zero(X.cols());
    model.y_mean = options.center ? Vector(Y.colwise().mean().transpose()) : Vector::Zero(Y.cols());
    const Eigen::MatrixXd Xc = X.rowwise() - model.x_mean.transpose();
    const Eigen::MatrixXd Yc = Y.rowwise() - model.y_mean.transpose();

    Eigen::BDCSVD<Eigen::MatrixXd> svd(Xc, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) == 0.0) throw ValidationError(kModule, "X is all zero");
    Eigen::Index rank = 0;
    while (rank < sv.size() && sv(rank) > kRankTolerance * sv(0)) ++rank;

    const Vector s = sv.head(rank);
    const Vector s2 = s.array().square();
    const Eigen::MatrixXd UY = svd.matrixU().leftCols(rank).transpose() * Yc;  // rank x d
    const Eigen::MatrixXd V = svd.matrixV().leftCols(rank);                   // p x rank

    std::vector<double> log_grid(kGridPoints);
    const double log_scale = std::log(s2(0));
    for (int g = 0; g < kGridPoints; ++g)
        log_grid[g] = log_scale + kLogAlphaLow + (kLogAlphaHigh - kLogAlphaLow) * g / (kGridPoints - 1);

    const auto F = static_cast<Eigen::Index>(fractions.size());
    const auto d = static_cast<Eigen::Index>(model.d);
    model.alphas = RowMatrix::Zero(F, d);
#pragma omp parallel for schedule(dynamic, 8)
    for (Eigen::Index j = 0; j < d; ++j) {
        const Vector ols = UY.col(j).array() / s.array();
        const Vector ols2 = ols.array().square();
        const double ols_norm2 = ols2.sum();
        if (ols_norm2 == 0.0) continue;
        std::vector<double> grid_ratio(kGridPoints);
        for (int g = 0; g < kGridPoints; ++g) grid_ratio[g] = norm_ratio(s2, ols2, ols_norm2, std::exp(log_grid[g]));
        for (Eigen::Index f = 0; f < F; ++f)
            model.alphas(f, j) = solve_alpha(s2, ols2, ols_norm2, fractions[static_cast<std::size_t>(f)], log_grid, grid_ratio);
    }

    model.weights.resize(fractions.size());
    Eigen::MatrixXd rotated(rank, d);
    for (Eigen::Index f = 0; f < F; ++f) {
        for (Eigen::Index j = 0; j < d; ++j) {
            const double alpha = model.alphas(f, j);
            rotated.col(j) = (s.array() / (s2.array() + alpha)) * UY.col(j).array();
        }
        model.weights[static_cast<std::size_t>(f)] = V * rotated;
        if (!model.weights[static_cast<std::size_t>(f)].allFinite())
            throw NumericError(kModule, "non-finite ridge weights");
    }
    return model;
}

FracridgeModel select_fractions(FracridgeModel model, const RowMatrix& X_test, const RowMatrix& Y_test,
                                Diagnostics* diag) {
    if (static_cast<std::size_t>(Y_test.cols()) != model.d || X_test.rows() != Y_test.rows())
        throw DimensionError(kModule, "test set shape does not match the model");
    model.chosen_fraction.assign(model.d, model.fractions.back());
    std::vector<double> best(model.d, -std::numeric_limits<double>::infinity());
    std::vector<bool> constant(model.d);
    for (std::size_t j = 0; j < model.d; ++j) {
        constant[j] = is_constant(Y_test, static_cast<Eigen::Index>(j));
        if (constant[j]) flag(diag, Degeneracy::constant_test_column);
    }
    for (std::size_t f = 0; f < model.fractions.size(); ++f) {
        const RowMatrix pred = predict_at_fraction(model, f, X_test);
        for (std::size_t j = 0; j < model.d; ++j) {
            if (constant[j]) continue;
            const double r = pearson_columns(pred, Y_test, static_cast<Eigen::Index>(j), nullptr);
            if (r > best[j]) {
                best[j] = r;
                model.chosen_fraction[j] = model.fractions[f];
            }
        }
    }
    return model;
}

RowMatrix predict_at_fraction(const FracridgeModel& model, std::size_t fraction_index, const RowMatrix& X_new) {
    if (static_cast<std::size_t>(X_new.cols()) != model.p)
        throw DimensionError(kModule, "predictor count " + std::to_string(X_new.cols()) + " differs from model p " +
                                          std::to_string(model.p));
    const RowMatrix centered = X_new.rowwise() - model.x_mean.transpose();
    RowMatrix out = centered * model.weights.at(fraction_index);
    out.rowwise() += model.y_mean.transpose();
    return out;
}

RowMatrix predict(const FracridgeModel& model, const RowMatrix& X_new) {
    if (static_cast<std::size_t>(X_new.cols()) != model.p)
        throw DimensionError(kModule, "predictor count " + std::to_string(X_new.cols()) + " differs from model p " +
                                          std::to_string(model.p));
    const RowMatrix centered = X_new.rowwise() - model.x_mean.transpose();
    RowMatrix out = centered * model.chosen_weights();
    out.rowwise() += model.y_mean.transpose();
    return out;
}

RowMatrix row_correlation_matrix(const RowMatrix& Y_hat, const RowMatrix& Y_true, Diagnostics* diag) {
    if (Y_hat.rows() != Y_true.rows() || Y_hat.cols() != Y_true.cols())
        throw DimensionError(kModule, "predicted and true embeddings differ in shape");
    const Eigen::Index v = Y_hat.rows();
    const std::size_t d = static_cast<std::size_t>(Y_hat.cols());
    RowMatrix C(v, v);
    for (Eigen::Index i = 0; i < v; ++i) {
        const std::span<const double> a(Y_hat.row(i).data(), d);
        for (Eigen::Index k = 0; k < v; ++k) C(i, k) = pearson(a, std::span<const double>(Y_true.row(k).data(), d), diag);
    }
    return C;
}

std::vector<double> prediction_accuracy_gain(const RowMatrix& Y_hat, const RowMatrix& Y_true, Diagnostics* diag) {
    if (Y_hat.rows() < 2) throw ValidationError(kModule, "prediction_accuracy_gain needs at least 2 items");
    const RowMatrix C = row_correlation_matrix(Y_hat, Y_true, diag);
    const Eigen::Index v = C.rows();
    std::vector<double> gain(static_cast<std::size_t>(v));
    for (Eigen::Index i = 0; i < v; ++i) {
        double off = 0.0;
        for (Eigen::Index k = 0; k < v; ++k)
            if (k != i) off += C(i, k);
        gain[static_cast<std::size_t>(i)] = C(i, i) - off / static_cast<double>(v - 1);
    }
    return gain;
}

void DataSplit::validate() const {
    std::unordered_set<std::string> seen;
    for (const auto* set : {&train, &test, &validation})
        for (const auto& id : *set)
            if (!seen.insert(id).second) throw ValidationError(kModule, "data split sets overlap at '" + id + "'");
}

DataSplit make_data_split(const std::vector<std::string>& ids, const std::vector<std::string>& validation,
                          std::size_t test_size, std::uint64_t seed) {
    const std::unordered_set<std::string> held(validation.begin(), validation.end());
    std::vector<std::string> pool;
    DataSplit split;
    for (const auto& id : ids) {
        if (held.count(id)) split.validation.push_back(id);
        else pool.push_back(id);
    }
    if (split.validation.size() != held.size())
        throw ValidationError(kModule, "validation ids are not all present");
    if (test_size >= pool.size())
        throw ValidationError(kModule, "test size leaves no training items");
    Rng rng(seed);
    const auto perm = rng.permutation(pool.size());
    std::vector<bool> in_test(pool.size(), false);
    for (std::size_t i = 0; i < test_size; ++i) in_test[perm[i]] = true;
    for (std::size_t i = 0; i < pool.size(); ++i) (in_test[i] ? split.test : split.train).push_back(pool[i]);
    split.validate();
    return split;
}

DataSplit make_data_split(const std::vector<std::string>& ids, std::size_t validation_size, std::size_t test_size,
                          std::uint64_t seed) {
    if (validation_size >= ids.size()) throw ValidationError(kModule, "validation size exceeds the item count");
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    const auto perm = rng.permutation(ids.size());
    std::vector<std::string> validation;
    for (std::size_t i = 0; i < validation_size; ++i) validation.push_back(ids[perm[i]]);
    return make_data_split(ids, validation, test_size, seed);
}

RowMatrix response_rows(const ConditionResponses& responses, const std::vector<std::string>& ids) {
    std::unordered_map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < responses.conditions.size(); ++i) row_of.emplace(responses.conditions[i], i);
    RowMatrix out(static_cast<Eigen::Index>(ids.size()), responses.responses.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto it = row_of.find(ids[i]);
        if (it == row_of.end()) throw ValidationError(kModule, "no responses for condition '" + ids[i] + "'");
        out.row(static_cast<Eigen::Index>(i)) = responses.responses.row(static_cast<Eigen::Index>(it->second));
    }
    return out;
}

EncodingResult encode_voxelwise(const EmbeddingMatrix& embeddings, const ConditionResponses& responses,
                                const DataSplit& split, const std::vector<double>& fractions, Diagnostics* diag) {
    split.validate();
    if (split.test.size() < 3) throw ValidationError(kModule, "encode_voxelwise needs at least 3 test items");
    const auto& held = split.validation.empty() ? split.test : split.validation;
    if (held.size() < 3) throw ValidationError(kModule, "encode_voxelwise needs at least 3 held-out items");

    FracridgeModel model = fracridge_fit(rows_for_ids(embeddings, split.train), response_rows(responses, split.train),
                                         fractions);
    model = select_fractions(std::move(model), rows_for_ids(embeddings, split.test),
                             response_rows(responses, split.test), diag);
    const RowMatrix predicted = predict(model, rows_for_ids(embeddings, held));
    const RowMatrix observed = response_rows(responses, held);

    EncodingResult result;
    result.voxel_pearson.resize(responses.voxel_count());
    for (std::size_t v = 0; v < responses.voxel_count(); ++v)
        result.voxel_pearson[v] = pearson_columns(predicted, observed, static_cast<Eigen::Index>(v), diag);

    const Grid grid = grid_for(responses.voxel_coords);
    result.pearson = Volume::zeros(grid, mask_from_coords(grid, responses.voxel_coords), "encoding_pearson");
    for (std::size_t v = 0; v < responses.voxel_count(); ++v)
        result.pearson.at(responses.voxel_coords[v]) = result.voxel_pearson[v];
    result.pearson.metadata = {{"train", split.train.size()},
                               {"test", split.test.size()},
                               {"held_out", held.size()}};
    result.model = std::move(model);
    return result;
}

void write_fracridge(const std::filesystem::path& path, const FracridgeModel& model) {
    auto out = format::open_output(path, "FRR1");
    nlohmann::json header = {{"magic", "FRR1"},
                             {"n", model.n},
                             {"p", model.p},
                             {"d", model.d},
                             {"seed", model.seed},
                             {"fractions", model.fractions},
                             {"chosen_fraction", model.chosen_fraction},
                             {"x_mean", std::vector<double>(model.x_mean.data(), model.x_mean.data() + model.x_mean.size())},
                             {"y_mean", std::vector<double>(model.y_mean.data(), model.y_mean.data() + model.y_mean.size())}};
    format::write_header(out, header);
    for (const auto& w : model.weights)
        format::write_f32(out, std::span<const double>(w.data(), static_cast<std::size_t>(w.size())));
}

FracridgeModel read_fracridge(const std::filesystem::path& path) {
    auto in = format::open_input(path, "FRR1");
    const auto header = format::read_header(in, "FRR1", path.string());
    FracridgeModel model;
    model.n = format::field<std::size_t>(header, "n", "FRR1");
    model.p = format::field<std::size_t>(header, "p", "FRR1");
    model.d = format::field<std::size_t>(header, "d", "FRR1");
    model.seed = header.value("seed", std::uint64_t{0});
    model.fractions = format::field<std::vector<double>>(header, "fractions", "FRR1");
    model.chosen_fraction = format::field<std::vector<double>>(header, "chosen_fraction", "FRR1");
    const auto xm = format::field<std::vector<double>>(header, "x_mean", "FRR1");
    const auto ym = format::field<std::vector<double>>(header, "y_mean", "FRR1");
    validate_fractions(model.fractions);
    if (xm.size() != model.p || ym.size() != model.d) throw ValidationError(kModule, "FRR1 centering vectors have the wrong length");
    if (!model.chosen_fraction.empty() && model.chosen_fraction.size() != model.d)
        throw ValidationError(kModule, "FRR1 chosen_fraction has the wrong length");
    model.x_mean = Eigen::Map<const Vector>(xm.data(), static_cast<Eigen::Index>(xm.size()));
    model.y_mean = Eigen::Map<const Vector>(ym.data(), static_cast<Eigen::Index>(ym.size()));
    for (std::size_t f = 0; f < model.fractions.size(); ++f) {
        const auto raw = format::read_f32(in, model.p * model.d, "FRR1 " + path.string());
        RowMatrix w(static_cast<Eigen::Index>(model.p), static_cast<Eigen::Index>(model.d));
        for (std::size_t i = 0; i < raw.size(); ++i) w.data()[i] = raw[i];
        model.weights.push_back(std::move(w));
    }
    model.alphas = RowMatrix::Zero(static_cast<Eigen::Index>(model.fractions.size()), static_cast<Eigen::Index>(model.d));
    return model;
}

}  // namespace semrsa
