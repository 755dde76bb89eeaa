#pragma once

#include <Eigen/Dense>

namespace coast {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// One activation per row, contiguous in memory (matches the on-disk layout).
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

}  // namespace coast
