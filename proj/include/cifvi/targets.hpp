#pragma once

#include "cifvi/mlp.hpp"
#include "cifvi/tensor.hpp"

#include <cmath>
#include <memory>
#include <vector>

namespace cifvi {

/// Anything exposing log p_{X,Z}(x, z) row by row.
class Target {
 public:
  virtual ~Target() = default;
  virtual Index dim_z() const = 0;
  /// Width of observed data; 0 when the target has no data.
  virtual Index dim_x() const { return 0; }
  /// n x 1. `x` is null for data-free targets.
  virtual Tensor log_joint(const Tensor* x, const Tensor& z, Tape* tape) const = 0;
  virtual void collect(ParameterList& /*out*/) {}
};

/// Normalized diagonal Gaussian posterior N(mean, diag(std^2)); ignores x.
class GaussianTarget : public Target {
 public:
  GaussianTarget(RowVector mean, RowVector std);
  static GaussianTarget standard(Index d);

  Index dim_z() const override { return mean_.size(); }
  Tensor log_joint(const Tensor* x, const Tensor& z, Tape* tape) const override;

 private:
  RowVector mean_;
  RowVector log_std_;
};

/// Equal-weight mixture of isotropic 2-D Gaussians used directly as the
/// posterior. There is no data, so x is ignored.
class MixtureOfGaussiansTarget : public Target {
 public:
  MixtureOfGaussiansTarget(std::vector<RowVector> means, double variance);

  Index dim_z() const override { return means_.cols(); }
  Tensor log_joint(const Tensor* x, const Tensor& z, Tape* tape) const override;

  Index num_components() const { return means_.rows(); }
  const Matrix& means() const { return means_; }
  double variance() const { return variance_; }
  double stddev() const { return std::sqrt(variance_); }

 private:
  Matrix means_;  // K x d
  double variance_;
};

/// K = 9: means on {-2, 0, 2}^2. K = 16: means on {-3, -1, 1, 3}^2.
/// Both use covariance I / 16.
MixtureOfGaussiansTarget mog_lattice(int k);

/// z ~ N(0, I), x_j ~ Bernoulli(sigmoid(decoder(z)_j)).
class LatentBernoulliModel : public Target {
 public:
  LatentBernoulliModel(Index latent_dim, Index data_dim, const std::vector<Index>& hidden, Rng& rng);

  Index dim_z() const override { return decoder_.in_dim(); }
  Index dim_x() const override { return decoder_.out_dim(); }
  Tensor log_joint(const Tensor* x, const Tensor& z, Tape* tape) const override;
  void collect(ParameterList& out) override { decoder_.collect(out); }

  Mlp& decoder() { return decoder_; }

 private:
  Mlp decoder_;
};

}  // namespace cifvi
