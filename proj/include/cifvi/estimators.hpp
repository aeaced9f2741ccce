#pragma once

#include "cifvi/cif.hpp"
#include "cifvi/rng.hpp"
#include "cifvi/targets.hpp"

#include <vector>

namespace cifvi {

struct EstimatorReport {
  double value = 0.0;
  double std_error = 0.0;
  Index n_outer = 1;  // N, or number of datapoints
  Index n_inner = 1;  // M or S
  double wall_time = 0.0;
};

/// Marginal ELBO with the auxiliary ELBO evaluated on the same outer paths.
struct MarginalElboReport {
  EstimatorReport marginal;
  EstimatorReport auxiliary;
};

/// Outer samples are drawn in chunks of this many rows; chunk c draws its
/// paths from rng.split(2c) and any inner samples from rng.split(2c + 1).
inline constexpr Index kOuterChunk = 250;

/// Mean and standard error (sample std / sqrt(n)) of a column of values.
EstimatorReport summarize(const Matrix& values, Index n_inner = 1);

/// log of the importance-sampling estimate of q_Z(z) per row of z, using M
/// draws u ~ r(. | z) per row (n x 1). Computed with log-sum-exp.
Matrix log_qz_importance_estimate(const CifStack& stack, const Matrix& z, Index m, Rng& rng,
                                  const Matrix* x = nullptr);
Matrix qz_importance_estimate(const CifStack& stack, const Matrix& z, Index m, Rng& rng,
                              const Matrix* x = nullptr);

/// Single-path ELBO draws, n x 1, chunked as the marginal estimator.
Matrix elbo_draws(const CifStack& stack, const Target& target, Index n, const Rng& rng);
EstimatorReport elbo_report(const CifStack& stack, const Target& target, Index n, const Rng& rng);

/// (1/N) sum_i [log p(x, z_i) - log qhat_Z(z_i)] with z_i from the model and
/// fresh inner draws for each z_i. Un-amortized stacks only (x is ignored by
/// data-free targets).
MarginalElboReport marginal_elbo_estimate(const CifStack& stack, const Target& target, Index n, Index m,
                                          const Rng& rng);

/// Importance log-weights log p(x, z) + log r(u | z, x) - log q(z, u | x) for
/// S draws per datapoint (rows of data), n_data x S.
Matrix is_log_weights(const Target& model, const CifStack& stack, const Matrix& data, Index s, const Rng& rng);

/// Average over datapoints of log (1/S) sum_s w_s.
EstimatorReport is_log_likelihood(const Target& model, const CifStack& stack, const Matrix& data, Index s,
                                  const Rng& rng);

/// Per-datapoint log (1/s) sum of the first s columns of the weight matrix.
Matrix log_mean_exp_prefix(const Matrix& log_weights, Index s);

/// One ELBO draw per datapoint; mean and SE across datapoints.
EstimatorReport dataset_elbo(const Target& model, const CifStack& stack, const Matrix& data, const Rng& rng);

}  // namespace cifvi
