#pragma once

#include <Eigen/Core>
#include <cstdint>

namespace fastclip {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Contiguous slice of a flat parameter vector (one weight matrix or one bias).
struct Segment {
  std::int64_t offset = 0;
  std::int64_t size = 0;
};

}  // namespace fastclip
