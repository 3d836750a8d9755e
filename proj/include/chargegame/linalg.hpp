#pragma once

#include <Eigen/Dense>

namespace chargegame {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// Agent actions are stored one agent per row.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace chargegame
