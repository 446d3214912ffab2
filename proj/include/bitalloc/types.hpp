#pragma once

#include <Eigen/Core>

namespace bitalloc {

using RowMatrixXd =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace bitalloc
