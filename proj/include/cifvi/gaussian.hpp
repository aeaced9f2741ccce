#pragma once

#include "cifvi/mlp.hpp"
#include "cifvi/rng.hpp"
#include "cifvi/tensor.hpp"

namespace cifvi {

inline constexpr double kLogStdMin = -7.0;
inline constexpr double kLogStdMax = 7.0;

/// Batched diagonal Gaussian. `mean` and `log_std` are either 1 x d (shared
/// by every row) or n x d (one distribution per row).
struct DiagonalGaussian {
  Tensor mean;
  Tensor log_std;

  Index dim() const { return mean.cols(); }
};

/// Per-row log density, n x 1.
Tensor log_prob(const DiagonalGaussian& dist, const Tensor& z);

struct GaussianDraw {
  Tensor z;
  Matrix eps;
};

/// z = mean + exp(log_std) * eps with eps ~ N(0, I). `rows` is used when
/// the distribution is shared (1 x d); otherwise it must match.
GaussianDraw rsample(const DiagonalGaussian& dist, Rng& rng, Index rows);
Tensor reparametrize(const DiagonalGaussian& dist, const Matrix& eps);

/// Two-headed Mlp from a condition vector to (mean, log_std), log_std clamped.
class ConditionalGaussianNet {
 public:
  ConditionalGaussianNet(std::string name, Index cond_dim, Index out_dim, const std::vector<Index>& hidden,
                         Rng& rng, bool zero_final = true);

  DiagonalGaussian condition(const Tensor& c, Tape* tape) const;

  Index cond_dim() const { return net_.in_dim(); }
  Index out_dim() const { return net_.out_dim() / 2; }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }
  void collect(ParameterList& out) { net_.collect(out); }

 private:
  Mlp net_;
};

}  // namespace cifvi
