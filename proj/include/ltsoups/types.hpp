#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace ltsoups {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

}  // namespace ltsoups
