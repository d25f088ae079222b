#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "semrsa/dataset.hpp"
#include "semrsa/diagnostics.hpp"
#include "semrsa/matrix.hpp"
#include "semrsa/volume.hpp"

namespace semrsa {

/// Ridge regression parameterized by the ratio of the regularized to the
/// unregularized coefficient norm. One weight matrix per requested
/// fraction; each target column gets its own penalty.
struct FracridgeModel {
    std::vector<double> fractions;
    std::vector<RowMatrix> weights;  // per fraction, p x d
    RowMatrix alphas;                // fractions x d, the penalty reaching each fraction
    std::vector<double> chosen_fraction;
    Vector x_mean;
    Vector y_mean;
    std::size_t n = 0, p = 0, d = 0;
    std::uint64_t seed = 0;

    std::size_t fraction_index(double fraction) const;
    /// p x d matrix taking column j from the weights of chosen_fraction[j].
    RowMatrix chosen_weights() const;
};

/// 0.05, 0.10, ..., 1.00.
std::vector<double> default_fraction_grid();

/// Parses "a,b,c" or "start:stop:step".
std::vector<double> parse_fraction_grid(const std::string& text);

struct FracridgeOptions {
    bool center = true;
    std::uint64_t seed = 0;
};

FracridgeModel fracridge_fit(const RowMatrix& X, const RowMatrix& Y,
                             const std::vector<double>& fractions = default_fraction_grid(),
                             const FracridgeOptions& options = {});

/// Picks, per target column, the fraction whose test prediction has the
/// highest Pearson correlation; ties go to the smaller fraction.
FracridgeModel select_fractions(FracridgeModel model, const RowMatrix& X_test, const RowMatrix& Y_test,
                                Diagnostics* diag = nullptr);

RowMatrix predict(const FracridgeModel& model, const RowMatrix& X_new);

/// Predictions with the weights of one fraction for every column.
RowMatrix predict_at_fraction(const FracridgeModel& model, std::size_t fraction_index, const RowMatrix& X_new);

/// C[i][k] = pearson(Y_hat row i, Y_true row k).
RowMatrix row_correlation_matrix(const RowMatrix& Y_hat, const RowMatrix& Y_true, Diagnostics* diag = nullptr);

/// gain[i] = C[i][i] - mean over k != i of C[i][k].
std::vector<double> prediction_accuracy_gain(const RowMatrix& Y_hat, const RowMatrix& Y_true,
                                             Diagnostics* diag = nullptr);

/// Train / hyperparameter-test / held-out validation condition ids.
struct DataSplit {
    std::vector<std::string> train;
    std::vector<std::string> test;
    std::vector<std::string> validation;

    void validate() const;
};

/// `validation` is taken as given (for instance the images shared across
/// participants); `test_size` ids are then sampled uniformly with `seed`
/// from the rest, and what remains is the training set. Order follows `ids`.
DataSplit make_data_split(const std::vector<std::string>& ids, const std::vector<std::string>& validation,
                          std::size_t test_size, std::uint64_t seed);

/// Samples `validation_size` validation ids first, then as above.
DataSplit make_data_split(const std::vector<std::string>& ids, std::size_t validation_size,
                          std::size_t test_size, std::uint64_t seed);

struct EncodingResult {
    Volume pearson;                  // per-voxel held-out correlation
    std::vector<double> voxel_pearson;
    FracridgeModel model;
};

/// Embedding -> voxel ridge fit on split.train, fractions chosen on
/// split.test, correlation reported on split.validation (split.test when
/// there is no validation set).
EncodingResult encode_voxelwise(const EmbeddingMatrix& embeddings, const ConditionResponses& responses,
                                const DataSplit& split,
                                const std::vector<double>& fractions = default_fraction_grid(),
                                Diagnostics* diag = nullptr);

/// Rows of `responses` in the order of `ids`.
RowMatrix response_rows(const ConditionResponses& responses, const std::vector<std::string>& ids);

/// FRR1: JSON header {magic, n, p, d, fractions, chosen_fraction, x_mean,
/// y_mean} + float32 weights, fraction-major then row-major p x d.
void write_fracridge(const std::filesystem::path& path, const FracridgeModel& model);
FracridgeModel read_fracridge(const std::filesystem::path& path);

}  // namespace semrsa
