#pragma once

#include "cifvi/tensor.hpp"

#include <functional>

namespace cifvi {

/// Central-difference gradient of a scalar function, entry by entry.
Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& x, double eps = 1e-5);

/// Central-difference Jacobian of f: R^n -> R^m at a 1 x n point (m x n result).
Matrix finite_diff_jacobian(const std::function<RowVector(const RowVector&)>& f, const RowVector& x,
                            double eps = 1e-6);

/// max |a - b| / max(1, |b|) over entries.
double max_rel_error(const Matrix& a, const Matrix& b);

}  // namespace cifvi
