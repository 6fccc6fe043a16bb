#pragma once

#include <Eigen/Dense>

#include <vector>

namespace sfda {

/// Row-major so that a row is one sample and maps directly onto the file layout.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// C probabilities, each in [0, 1], summing to one.
using ProbVector = std::vector<double>;

} // namespace sfda
