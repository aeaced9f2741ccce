#include "cifvi/gaussian.hpp"

#include <cmath>
#include <numbers>

namespace cifvi {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

void check_dist(const DiagonalGaussian& d) {
  if (d.mean.cols() != d.log_std.cols()) throw ShapeError("DiagonalGaussian: mean/log_std width mismatch");
  if (d.mean.rows() != d.log_std.rows() && d.mean.rows() != 1 && d.log_std.rows() != 1)
    throw ShapeError("DiagonalGaussian: mean/log_std row mismatch");
}

}  // namespace

Tensor log_prob(const DiagonalGaussian& dist, const Tensor& z) {
  check_dist(dist);
  if (z.cols() != dist.dim())
    throw ShapeError("log_prob: z has " + std::to_string(z.cols()) + " columns, distribution has " +
                     std::to_string(dist.dim()));
  Tensor scaled = (z - dist.mean) * exp(neg(dist.log_std));
  Tensor per_coord = neg(dist.log_std) - 0.5 * square(scaled);
  return row_sum(per_coord) - kHalfLog2Pi * static_cast<double>(z.cols());
}

Tensor reparametrize(const DiagonalGaussian& dist, const Matrix& eps) {
  check_dist(dist);
  if (eps.cols() != dist.dim()) throw ShapeError("reparametrize: eps width mismatch");
  return dist.mean + exp(dist.log_std) * Tensor(eps);
}

GaussianDraw rsample(const DiagonalGaussian& dist, Rng& rng, Index rows) {
  const Index dist_rows = std::max(dist.mean.rows(), dist.log_std.rows());
  if (dist_rows != 1 && dist_rows != rows)
    throw ShapeError("rsample: distribution has " + std::to_string(dist_rows) + " rows, asked for " +
                     std::to_string(rows));
  Matrix eps = rng.normal(rows, dist.dim());
  Tensor z = reparametrize(dist, eps);
  return {std::move(z), std::move(eps)};
}

ConditionalGaussianNet::ConditionalGaussianNet(std::string name, Index cond_dim, Index out_dim,
                                               const std::vector<Index>& hidden, Rng& rng, bool zero_final)
    : net_(
          [&] {
            std::vector<Index> w{cond_dim};
            w.insert(w.end(), hidden.begin(), hidden.end());
            w.push_back(2 * out_dim);
            return Mlp(std::move(name), std::move(w), rng, zero_final);
          }()) {}

DiagonalGaussian ConditionalGaussianNet::condition(const Tensor& c, Tape* tape) const {
  auto [mean, raw_log_std] = net_.forward_heads(c, tape);
  return {std::move(mean), clamp(raw_log_std, kLogStdMin, kLogStdMax)};
}

}  // namespace cifvi
