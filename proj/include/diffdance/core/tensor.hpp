#pragma once

#include <Eigen/Dense>

namespace diffdance {

/// Dense row-major f64 matrix. Every tensor in the library is rank <= 2:
/// sequences are [frames, channels], batches of vectors are [batch, dim].
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Vector = Eigen::VectorXd;

/// Forward differences along rows scaled by `scale`; the last row repeats the
/// previous difference so the output has the input's shape. Requires >= 2 rows.
Matrix forward_difference(const Matrix& x, double scale);

bool all_finite(const Matrix& x);

}  // namespace diffdance
