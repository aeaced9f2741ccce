#pragma once

#include "cifvi/bijection.hpp"
#include "cifvi/gaussian.hpp"
#include "cifvi/mlp.hpp"
#include "cifvi/rng.hpp"
#include "cifvi/targets.hpp"
#include "cifvi/tensor.hpp"

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cifvi {

/// Raised when log p_{X,Z} is NaN/Inf at some sampled z. Carries that z.
class NonFiniteDensityError : public NumericalError {
 public:
  NonFiniteDensityError(const std::string& what, RowVector z) : NumericalError(what), z_(std::move(z)) {}
  const RowVector& z() const { return z_; }

 private:
  RowVector z_;
};

/// q_{W0|X}: a two-headed network from data to (mean, log_std), plus a
/// feature network whose output is appended to w before every r-network.
class AmortizedEncoder {
 public:
  AmortizedEncoder(std::string name, Index dim_x, Index dim_z, const std::vector<Index>& hidden,
                   Index feature_dim, const std::vector<Index>& feature_hidden, Rng& rng);

  DiagonalGaussian posterior(const Tensor& x, Tape* tape) const { return net_.condition(x, tape); }
  /// n x feature_dim; an n x 0 tensor when features are disabled.
  Tensor features(const Tensor& x, Tape* tape) const;

  Index dim_x() const { return net_.cond_dim(); }
  Index dim_z() const { return net_.out_dim(); }
  Index feature_dim() const { return feature_net_ ? feature_net_->out_dim() : 0; }
  ConditionalGaussianNet& net() { return net_; }
  void collect(ParameterList& out);

 private:
  ConditionalGaussianNet net_;
  std::optional<Mlp> feature_net_;
};

/// q_{W0}: a diagonal Gaussian with its own parameters, or an amortized encoder.
class Base {
 public:
  /// N(0, sigma0^2 I); log sigma0 trainable per coordinate when requested.
  Base(std::string name, Index d, double sigma0, bool trainable_log_std);
  explicit Base(std::shared_ptr<AmortizedEncoder> encoder);

  DiagonalGaussian distribution(const Tensor* x, Tape* tape) const;
  bool amortized() const { return encoder_ != nullptr; }
  Index dim() const { return dim_; }
  Index feature_dim() const { return encoder_ ? encoder_->feature_dim() : 0; }
  Tensor features(const Tensor* x, Tape* tape) const;

  Parameter* mean() { return mean_ ? &*mean_ : nullptr; }
  Parameter* log_std() { return log_std_ ? &*log_std_ : nullptr; }
  AmortizedEncoder* encoder() { return encoder_.get(); }
  void collect(ParameterList& out);

 private:
  Index dim_;
  std::optional<Parameter> mean_;
  std::optional<Parameter> log_std_;
  std::shared_ptr<AmortizedEncoder> encoder_;
};

struct CifLayerSpec {
  Index u_dim = 1;
  std::vector<Index> st_hidden{10, 10};
  std::vector<Index> q_hidden{10, 10};
  std::vector<Index> r_hidden{10, 10};
  /// Extra r-network inputs (data features) in the amortized case.
  Index r_extra_dim = 0;
  /// Zero the final layer of q_{U|W} too, so an untrained layer draws u ~ N(0, I)
  /// independently of w. Off by default: u then carries information about w
  /// from the first step.
  bool zero_q_final = false;
};

/// One indexed layer G(w; u) = exp(s(u)) * (g(w) + t(u)) with its
/// conditionals q_{U|W} and r_{U|W'}. With u_dim == 0 it is a plain flow step g.
class CifLayer {
 public:
  explicit CifLayer(BijectionPtr g);
  CifLayer(const std::string& name, BijectionPtr g, const CifLayerSpec& spec, Rng& rng);

  bool indexed() const { return u_dim_ > 0; }
  Index u_dim() const { return u_dim_; }
  Index dim() const { return g_->dim(); }

  const Bijection& g() const { return *g_; }
  const BijectionPtr& g_ptr() const { return g_; }
  const Mlp& st_net() const { return *st_net_; }
  Mlp& st_net() { return *st_net_; }
  const ConditionalGaussianNet& q_u() const { return *q_u_; }
  ConditionalGaussianNet& q_u() { return *q_u_; }
  const ConditionalGaussianNet& r_u() const { return *r_u_; }
  ConditionalGaussianNet& r_u() { return *r_u_; }

  /// Makes r_{U|W'} the very same network as q_{U|W}.
  void share_r_with_q();
  bool r_shared() const { return r_u_ == q_u_; }

  /// (s(u), t(u)), each n x d.
  std::pair<Tensor, Tensor> shift_scale(const Tensor& u, Tape* tape) const;

  void collect(ParameterList& out);

 private:
  BijectionPtr g_;
  Index u_dim_ = 0;
  std::shared_ptr<Mlp> st_net_;
  std::shared_ptr<ConditionalGaussianNet> q_u_;
  std::shared_ptr<ConditionalGaussianNet> r_u_;
};

/// z = exp(s(u)) * (g(w) + t(u)); logdet = logdet_g(w) + sum s(u).
FlowResult index_transform(const CifLayer& layer, const Tensor& w, const Tensor& u, Tape* tape);
/// w = g^{-1}(exp(-s(u)) * z - t(u)); logdet is log|det D_z G^{-1}(z; u)|.
FlowResult index_inverse(const CifLayer& layer, const Tensor& z, const Tensor& u, Tape* tape);

/// Base distribution followed by L layers, all sharing dim Z. L = 0 is a
/// plain Gaussian (amortized: the VAE posterior).
class CifStack {
 public:
  CifStack(Base base, std::vector<CifLayer> layers);

  Index dim_z() const { return base_.dim(); }
  Index num_layers() const { return static_cast<Index>(layers_.size()); }
  bool amortized() const { return base_.amortized(); }
  /// True when at least one layer carries an auxiliary index variable.
  bool indexed() const;

  const Base& base() const { return base_; }
  Base& base() { return base_; }
  const CifLayer& layer(Index l) const { return layers_[static_cast<std::size_t>(l)]; }
  CifLayer& layer(Index l) { return layers_[static_cast<std::size_t>(l)]; }
  const std::vector<CifLayer>& layers() const { return layers_; }

  /// Composition g_L o ... o g_1 of the base bijections.
  BijectionPtr base_flow() const;

  void collect(ParameterList& out);
  void set_mode(Mode mode);

 private:
  Base base_;
  std::vector<CifLayer> layers_;
};

/// One reparametrized draw through the stack, with the densities met on the
/// way. Index l of u/w/log_q_u/logdet refers to layer l + 1; w.back() is z.
struct SamplePath {
  Tensor w0;
  std::vector<Tensor> u;
  std::vector<Tensor> w;
  Matrix eps_w0;
  std::vector<Matrix> eps_u;
  Tensor log_q0;
  std::vector<Tensor> log_q_u;
  std::vector<Tensor> logdet;

  const Tensor& z() const { return w.empty() ? w0 : w.back(); }
};

/// Standard-normal noise for one batch of paths, in the order it is drawn.
struct PathNoise {
  Matrix w0;
  std::vector<Matrix> u;
};

PathNoise draw_path_noise(const CifStack& stack, Rng& rng, Index n);

/// Draws n paths. `x` must be given (n rows) iff the stack is amortized.
SamplePath sample_path(const CifStack& stack, Rng& rng, Index n, const Tensor* x, Tape* tape);
SamplePath sample_path(const CifStack& stack, const PathNoise& noise, const Tensor* x, Tape* tape);

/// Single-path ELBO integrand per row (n x 1) following the L-layer
/// estimator: -log q0(w0) + sum_l [log r_l(u_l | w_l) - log q_l(u_l | w_{l-1})
/// + log|det D G_l|] + log p_{X,Z}(x, w_L).
Tensor elbo_terms(const CifStack& stack, const Target& target, const SamplePath& path, const Tensor* x,
                  Tape* tape);
Tensor elbo_estimate(const CifStack& stack, const Target& target, const Tensor* x, Rng& rng, Index n,
                     Tape* tape);

/// Flow ELBO integrand log p(x, g(w)) - log q_W(w) + log|det D g(w)| per row.
Tensor baseline_elbo_estimate(const Base& base, const Bijection& g, const Target& target, const Tensor* x,
                              Rng& rng, Index n, Tape* tape);

/// log q_{Z,U_{1:L}}(z, u_{1:L}) per row, peeling layers from L down to 1.
Tensor joint_log_prob(const CifStack& stack, const Tensor& z, const std::vector<Tensor>& u, const Tensor* x,
                      Tape* tape);

/// log r_{U_{1:L}|Z}(u_{1:L} | z) per row, with w_l rebuilt backward from z.
Tensor r_log_prob(const CifStack& stack, const std::vector<Tensor>& u, const Tensor& z, const Tensor* x,
                  Tape* tape);

/// Reconstructs w_0..w_L from (z, u_{1:L}); element l is w_l.
std::vector<Tensor> reconstruct_path(const CifStack& stack, const Tensor& z, const std::vector<Tensor>& u,
                                     Tape* tape);

/// u_{1:L} ~ r(. | z) with log r and log q_{Z,U} at the draw.
struct AuxiliaryDraw {
  std::vector<Tensor> u;
  Tensor log_r;
  Tensor log_joint;
};

AuxiliaryDraw sample_auxiliary(const CifStack& stack, const Tensor& z, const Tensor* x, Rng& rng, Tape* tape);

}  // namespace cifvi
