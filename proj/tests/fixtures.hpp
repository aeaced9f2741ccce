#pragma once

#include "cifvi/cif.hpp"
#include "cifvi/targets.hpp"
#include "support.hpp"

#include <cmath>
#include <functional>
#include <memory>

namespace cifvi::test {

/// Zeroes every weight and bias of the network, then sets the final bias.
inline void set_constant_output(Mlp& net, const RowVector& out) {
  ParameterList params;
  net.collect(params);
  for (Parameter* p : params) p->value().setZero();
  net.bias(net.num_layers() - 1).value() = out;
}

inline void randomize(ParameterList params, Rng& rng, double scale) {
  for (Parameter* p : params) p->value() = uniform_matrix(rng, p->value().rows(), p->value().cols(), -scale, scale);
}

inline BijectionPtr identity(Index d) { return compose(d, {}); }

/// One CIF layer whose nets all carry random (non-zero) weights.
inline CifLayer random_layer(const std::string& name, BijectionPtr g, Index u_dim, Rng& rng, double scale = 0.5) {
  CifLayerSpec spec;
  spec.u_dim = u_dim;
  spec.st_hidden = {6};
  spec.q_hidden = {6};
  spec.r_hidden = {6};
  CifLayer layer(name, std::move(g), spec, rng);
  ParameterList params;
  layer.collect(params);
  randomize(params, rng, scale);
  return layer;
}

/// Untrained layer: zero-init st, q_u and r_u (u ~ N(0, 1), G = g).
inline CifLayer zero_layer(const std::string& name, BijectionPtr g, Index u_dim, Rng& rng) {
  CifLayerSpec spec;
  spec.u_dim = u_dim;
  spec.zero_q_final = true;
  return CifLayer(name, std::move(g), spec, rng);
}

/// d = 1, u_dim = 1, base N(0, 1), one layer over g(w) = 1.3 w - 0.2 with
/// random st/q/r networks. Small enough for quadrature over (z, u).
inline CifStack tractable_1d_stack(std::uint64_t seed = 17) {
  Rng rng(seed);
  auto g = std::make_shared<ElementwiseAffine>(RowVector::Constant(1, 1.3), RowVector::Constant(1, -0.2));
  std::vector<CifLayer> layers{random_layer("layer1", g, 1, rng, 0.3)};
  return CifStack(Base("base", 1, 1.0, false), std::move(layers));
}

/// Target for the 1-D case: N(0.4, 1.5^2).
inline GaussianTarget tractable_1d_target() {
  return GaussianTarget(RowVector::Constant(1, 0.4), RowVector::Constant(1, 1.5));
}

/// Trapezoid rule for f on [a, b] with n intervals, f evaluated on all nodes at once.
inline double trapezoid(const std::function<Matrix(const Matrix&)>& f, double a, double b, Index n) {
  const Matrix nodes = Matrix(RowVector::LinSpaced(n + 1, a, b).transpose());
  const Matrix v = f(nodes);
  const double h = (b - a) / static_cast<double>(n);
  return h * (v.sum() - 0.5 * (v(0, 0) + v(n, 0)));
}

/// q_Z(z) of a one-layer 1-D stack, integrating exp(joint_log_prob) over u.
inline double quadrature_qz(const CifStack& stack, double z, double lo = -12, double hi = 12, Index n = 4000) {
  return trapezoid(
      [&](const Matrix& us) {
        const Tensor zs(Matrix::Constant(us.rows(), 1, z));
        return Matrix(joint_log_prob(stack, zs, {Tensor(us)}, nullptr, nullptr).value().array().exp());
      },
      lo, hi, n);
}

/// Exact L1 = E_{q_Z}[log p(z) - log q_Z(z)] for a one-layer 1-D stack, with
/// q_Z itself computed by quadrature over u.
inline double quadrature_l1(const CifStack& stack, const Target& target, double lo = -12, double hi = 12,
                            Index nz = 1200, Index nu = 1200) {
  return trapezoid(
      [&](const Matrix& zs) {
        const Matrix log_p = target.log_joint(nullptr, Tensor(zs), nullptr).value();
        Matrix out(zs.rows(), 1);
        for (Index i = 0; i < zs.rows(); ++i) {
          const double q = quadrature_qz(stack, zs(i, 0), lo, hi, nu);
          out(i, 0) = q > 0 ? q * (log_p(i, 0) - std::log(q)) : 0.0;
        }
        return out;
      },
      lo, hi, nz);
}

}  // namespace cifvi::test
