#include "cifvi/targets.hpp"

#include "cifvi/gaussian.hpp"

#include <cmath>
#include <numbers>

namespace cifvi {

GaussianTarget::GaussianTarget(RowVector mean, RowVector std) : mean_(std::move(mean)) {
  if (std.size() != mean_.size()) throw ShapeError("GaussianTarget: mean/std size mismatch");
  if ((std.array() <= 0.0).any()) throw std::invalid_argument("GaussianTarget: std must be positive");
  log_std_ = std.array().log().matrix();
}

GaussianTarget GaussianTarget::standard(Index d) { return GaussianTarget(RowVector::Zero(d), RowVector::Ones(d)); }

Tensor GaussianTarget::log_joint(const Tensor* /*x*/, const Tensor& z, Tape* /*tape*/) const {
  return log_prob(DiagonalGaussian{Tensor(Matrix(mean_)), Tensor(Matrix(log_std_))}, z);
}

MixtureOfGaussiansTarget::MixtureOfGaussiansTarget(std::vector<RowVector> means, double variance)
    : variance_(variance) {
  if (means.empty()) throw std::invalid_argument("MixtureOfGaussiansTarget: need at least one component");
  if (!(variance > 0)) throw std::invalid_argument("MixtureOfGaussiansTarget: variance must be positive");
  means_.resize(static_cast<Index>(means.size()), means.front().size());
  for (std::size_t k = 0; k < means.size(); ++k) {
    if (means[k].size() != means_.cols()) throw ShapeError("MixtureOfGaussiansTarget: ragged means");
    means_.row(static_cast<Index>(k)) = means[k];
  }
}

Tensor MixtureOfGaussiansTarget::log_joint(const Tensor* /*x*/, const Tensor& z, Tape* /*tape*/) const {
  if (z.cols() != dim_z()) throw ShapeError("MixtureOfGaussiansTarget: z has wrong width");
  const double d = static_cast<double>(dim_z());
  const double log_norm = -0.5 * d * std::log(2.0 * std::numbers::pi * variance_) -
                          std::log(static_cast<double>(num_components()));
  Tensor dists;
  for (Index k = 0; k < num_components(); ++k) {
    Tensor sq = row_sum(square(z - Tensor(Matrix(means_.row(k)))));
    dists = k == 0 ? sq : concat(dists, sq);
  }
  return logsumexp_rows(dists * (-0.5 / variance_)) + log_norm;
}

MixtureOfGaussiansTarget mog_lattice(int k) {
  std::vector<double> axis;
  if (k == 9)
    axis = {-2.0, 0.0, 2.0};
  else if (k == 16)
    axis = {-3.0, -1.0, 1.0, 3.0};
  else
    throw std::invalid_argument("mog_lattice: K must be 9 or 16, got " + std::to_string(k));
  std::vector<RowVector> means;
  for (double a : axis)
    for (double b : axis) {
      RowVector m(2);
      m << a, b;
      means.push_back(m);
    }
  return MixtureOfGaussiansTarget(std::move(means), 1.0 / 16.0);
}

LatentBernoulliModel::LatentBernoulliModel(Index latent_dim, Index data_dim, const std::vector<Index>& hidden,
                                           Rng& rng)
    : decoder_(
          [&] {
            std::vector<Index> widths{latent_dim};
            widths.insert(widths.end(), hidden.begin(), hidden.end());
            widths.push_back(data_dim);
            return Mlp("decoder", std::move(widths), rng);
          }()) {}

Tensor LatentBernoulliModel::log_joint(const Tensor* x, const Tensor& z, Tape* tape) const {
  if (x == nullptr) throw std::invalid_argument("LatentBernoulliModel: x is required");
  if (x->cols() != dim_x()) throw ShapeError("LatentBernoulliModel: x has wrong width");
  if (x->rows() != z.rows()) throw ShapeError("LatentBernoulliModel: x and z row mismatch");
  if ((x->value().array() < 0.0).any() || (x->value().array() > 1.0).any())
    throw std::invalid_argument("LatentBernoulliModel: x entries must lie in [0, 1]");
  const Index nz = dim_z();
  Tensor prior = log_prob(DiagonalGaussian{Tensor::zeros(1, nz), Tensor::zeros(1, nz)}, z);
  Tensor logits = decoder_.forward(z, tape);
  Tensor lik = row_sum(*x * logits - softplus(logits));
  return prior + lik;
}

}  // namespace cifvi
