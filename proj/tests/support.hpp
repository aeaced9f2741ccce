#pragma once

#include "cifvi/finite_diff.hpp"
#include "cifvi/rng.hpp"
#include "cifvi/tensor.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace cifvi::test {

inline Matrix uniform_matrix(Rng& rng, Index rows, Index cols, double lo, double hi) {
  return (rng.uniform(rows, cols).array() * (hi - lo) + lo).matrix();
}

using MultiFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Reverse-mode gradient of sum(R * f(xs)) for a fixed random R, against
/// central differences. Returns the worst relative error over all inputs.
inline double input_grad_error(const MultiFn& f, const std::vector<Matrix>& xs, double eps = 1e-5) {
  std::vector<Tensor> consts;
  for (const auto& x : xs) consts.emplace_back(x);
  const Matrix out0 = f(consts).value();
  Rng rng(4242, 99);
  const Matrix r = uniform_matrix(rng, out0.rows(), out0.cols(), -1.0, 1.0);

  Tape tape;
  std::vector<Tensor> vars;
  for (const auto& x : xs) vars.push_back(tape.variable(x));
  const Gradients g = tape.backward(sum(f(vars) * Tensor(r)));

  double worst = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Matrix fd = finite_diff_grad(
        [&](const Matrix& xk) {
          auto c = consts;
          c[k] = Tensor(xk);
          return f(c).value().cwiseProduct(r).sum();
        },
        xs[k], eps);
    worst = std::max(worst, max_rel_error(g.wrt(vars[k]), fd));
  }
  return worst;
}

/// Reverse-mode gradient of a scalar function of parameters against central
/// differences obtained by perturbing the parameter values in place.
inline double param_grad_error(const ParameterList& params, const std::function<Tensor(Tape*)>& f,
                               double eps = 1e-5) {
  Tape tape;
  const Gradients g = tape.backward(f(&tape));
  double worst = 0.0;
  for (Parameter* p : params) {
    if (!p->trainable()) continue;
    const Matrix saved = p->value();
    const Matrix fd = finite_diff_grad(
        [&](const Matrix& v) {
          p->value() = v;
          const double out = f(nullptr).item();
          p->value() = saved;
          return out;
        },
        saved, eps);
    worst = std::max(worst, max_rel_error(g.wrt(*p), fd));
  }
  return worst;
}

/// Worst relative gradient error of every tensor primitive on one random draw
/// of shapes and inputs.
inline std::vector<std::pair<const char*, double>> primitive_grad_errors(Rng& rng) {
  const Index r = 1 + static_cast<Index>(rng.next_u64() % 4);
  const Index c = 1 + static_cast<Index>(rng.next_u64() % 4);
  const Index k = 1 + static_cast<Index>(rng.next_u64() % 4);
  auto U = [&](Index rows, Index cols) { return uniform_matrix(rng, rows, cols, -2, 2); };
  auto P = [&](Index rows, Index cols) { return uniform_matrix(rng, rows, cols, 0.5, 2); };
  // Clamp inputs kept away from the kinks at +-1.
  Matrix cl = U(r, c);
  for (Index i = 0; i < cl.size(); ++i)
    if (std::abs(std::abs(cl.data()[i]) - 1.0) < 1e-3) cl.data()[i] = 0.5;
  using V = const std::vector<Tensor>&;
  return {
      {"add", input_grad_error([](V a) { return add(a[0], a[1]); }, {U(r, c), U(r, c)})},
      {"add row", input_grad_error([](V a) { return add(a[0], a[1]); }, {U(r, c), U(1, c)})},
      {"add col", input_grad_error([](V a) { return add(a[0], a[1]); }, {U(r, 1), U(r, c)})},
      {"add scalar", input_grad_error([](V a) { return add(a[0], a[1]); }, {U(r, c), U(1, 1)})},
      {"sub", input_grad_error([](V a) { return sub(a[0], a[1]); }, {U(r, c), U(1, c)})},
      {"mul", input_grad_error([](V a) { return mul(a[0], a[1]); }, {U(r, c), U(r, 1)})},
      {"div", input_grad_error([](V a) { return div(a[0], a[1]); }, {U(r, c), P(r, c)})},
      {"div row", input_grad_error([](V a) { return div(a[0], a[1]); }, {U(r, c), P(1, c)})},
      {"neg", input_grad_error([](V a) { return neg(a[0]); }, {U(r, c)})},
      {"matmul", input_grad_error([](V a) { return matmul(a[0], a[1]); }, {U(r, k), U(k, c)})},
      {"exp", input_grad_error([](V a) { return exp(a[0]); }, {U(r, c)})},
      {"log", input_grad_error([](V a) { return log(a[0]); }, {P(r, c)})},
      {"tanh", input_grad_error([](V a) { return tanh(a[0]); }, {U(r, c)})},
      {"sigmoid", input_grad_error([](V a) { return sigmoid(a[0]); }, {U(r, c)})},
      {"square", input_grad_error([](V a) { return square(a[0]); }, {U(r, c)})},
      {"sum", input_grad_error([](V a) { return sum(a[0]); }, {U(r, c)})},
      {"mean", input_grad_error([](V a) { return mean(a[0]); }, {U(r, c)})},
      {"row_sum", input_grad_error([](V a) { return row_sum(a[0]); }, {U(r, c)})},
      {"col_sum", input_grad_error([](V a) { return col_sum(a[0]); }, {U(r, c)})},
      {"col_mean", input_grad_error([](V a) { return col_mean(a[0]); }, {U(r, c)})},
      {"broadcast", input_grad_error([&](V a) { return broadcast(a[0], r, c); }, {U(1, c)})},
      {"concat", input_grad_error([](V a) { return concat(a[0], a[1]); }, {U(r, c), U(r, k)})},
      {"slice", input_grad_error([&](V a) { return slice_cols(a[0], 1, c); }, {U(r, c + 2)})},
      {"clamp", input_grad_error([](V a) { return clamp(a[0], -1.0, 1.0); }, {cl})},
      {"softplus", input_grad_error([](V a) { return softplus(a[0]); }, {U(r, c)})},
      {"logsumexp", input_grad_error([](V a) { return logsumexp_rows(a[0]); }, {U(r, c)})},
  };
}

}  // namespace cifvi::test
