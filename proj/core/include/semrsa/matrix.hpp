#pragma once

#include <Eigen/Dense>

namespace semrsa {

/// Row-major dense matrix; rows are conditions/items, columns are features.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

}  // namespace semrsa
