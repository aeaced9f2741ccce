#include "cifvi/finite_diff.hpp"

#include <stdexcept>

namespace cifvi {

Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& x, double eps) {
  if (!(eps > 0)) throw std::invalid_argument("finite_diff_grad: eps must be positive");
  Matrix g(x.rows(), x.cols());
  Matrix probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + eps;
    const double up = f(probe);
    probe.data()[i] = orig - eps;
    const double down = f(probe);
    probe.data()[i] = orig;
    g.data()[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

Matrix finite_diff_jacobian(const std::function<RowVector(const RowVector&)>& f, const RowVector& x, double eps) {
  if (!(eps > 0)) throw std::invalid_argument("finite_diff_jacobian: eps must be positive");
  const Index n = x.size();
  Matrix jac;
  RowVector probe = x;
  for (Index j = 0; j < n; ++j) {
    probe(j) = x(j) + eps;
    const RowVector up = f(probe);
    probe(j) = x(j) - eps;
    const RowVector down = f(probe);
    probe(j) = x(j);
    if (jac.size() == 0) jac.resize(up.size(), n);
    jac.col(j) = ((up - down) / (2.0 * eps)).transpose();
  }
  return jac;
}

double max_rel_error(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("max_rel_error: shape mismatch");
  double worst = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    const double denom = std::max(1.0, std::abs(b.data()[i]));
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]) / denom);
  }
  return worst;
}

}  // namespace cifvi
