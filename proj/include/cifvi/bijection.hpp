#pragma once

#include "cifvi/mlp.hpp"
#include "cifvi/rng.hpp"
#include "cifvi/tensor.hpp"

#include <memory>
#include <string>
#include <vector>

namespace cifvi {

/// Output of a bijection on a batch: transformed rows and per-row
/// log|det Jacobian| (n x 1).
struct FlowResult {
  Tensor out;
  Tensor logdet;
};

enum class Mode { train, eval };

class Bijection {
 public:
  virtual ~Bijection() = default;
  virtual Index dim() const = 0;
  virtual FlowResult forward(const Tensor& w, Tape* tape) const = 0;
  virtual FlowResult inverse(const Tensor& z, Tape* tape) const = 0;
  virtual void collect(ParameterList& /*out*/) {}
  virtual void set_mode(Mode /*mode*/) {}
};

using BijectionPtr = std::shared_ptr<Bijection>;

inline constexpr double kLogScaleMin = -5.0;
inline constexpr double kLogScaleMax = 5.0;

/// MADE masks for a conditioner with `hidden` widths. `degrees[j]` in 1..d is
/// the position of input j in the autoregressive ordering. Hidden units get
/// degrees round-robin over 1..d-1; the output layer has 2d units: shift for
/// coordinate j at column j, log-scale at column d + j.
std::vector<Matrix> made_masks(Index d, const std::vector<Index>& hidden, const std::vector<Index>& degrees);

std::vector<Index> identity_ordering(Index d);
std::vector<Index> reversed_ordering(Index d);

/// z = w * exp(log_scale(w)) + shift(w), conditioner masked so that
/// coordinate j only sees inputs of lower degree. Forward is one network
/// pass; inverse runs d passes.
class MaskedAffineAutoregressive : public Bijection {
 public:
  MaskedAffineAutoregressive(std::string name, Index d, const std::vector<Index>& hidden, Rng& rng,
                             std::vector<Index> degrees = {}, bool zero_final = true);

  Index dim() const override { return d_; }
  FlowResult forward(const Tensor& w, Tape* tape) const override;
  FlowResult inverse(const Tensor& z, Tape* tape) const override;
  void collect(ParameterList& out) override { made_.collect(out); }

  Mlp& conditioner() { return made_; }
  const std::vector<Index>& degrees() const { return degrees_; }

 private:
  std::pair<Tensor, Tensor> shift_log_scale(const Tensor& w, Tape* tape) const;

  Index d_;
  std::vector<Index> degrees_;
  Mlp made_;
};

/// Reverses coordinate order. Involution with zero log-det.
class ReversePermutation : public Bijection {
 public:
  explicit ReversePermutation(Index d);
  Index dim() const override { return d_; }
  FlowResult forward(const Tensor& w, Tape* tape) const override;
  FlowResult inverse(const Tensor& z, Tape* tape) const override { return forward(z, tape); }

 private:
  Index d_;
  Matrix perm_;
};

/// Fixed elementwise affine map z = scale * w + shift.
class ElementwiseAffine : public Bijection {
 public:
  ElementwiseAffine(RowVector scale, RowVector shift);
  Index dim() const override { return scale_.size(); }
  FlowResult forward(const Tensor& w, Tape* tape) const override;
  FlowResult inverse(const Tensor& z, Tape* tape) const override;

 private:
  RowVector scale_;
  RowVector shift_;
  double logdet_;
};

/// Batch normalization as a bijection. In train mode it normalizes with the
/// batch statistics and folds them into the running averages; in eval mode
/// it is the fixed affine map given by the running statistics.
class BatchNormBijection : public Bijection {
 public:
  BatchNormBijection(std::string name, Index d, double momentum = 0.1, double eps = 1e-5);

  Index dim() const override { return d_; }
  FlowResult forward(const Tensor& w, Tape* tape) const override;
  FlowResult inverse(const Tensor& z, Tape* tape) const override;
  void collect(ParameterList& out) override;
  void set_mode(Mode mode) override { mode_ = mode; }
  Mode mode() const { return mode_; }

  const Matrix& running_mean() const { return running_mean_.value(); }
  const Matrix& running_var() const { return running_var_.value(); }

 private:
  Index d_;
  double momentum_;
  double eps_;
  Mode mode_ = Mode::eval;
  Parameter log_gain_;
  Parameter bias_;
  // Statistics are not trained; BatchNorm updates them as a side effect of a
  // train-mode forward pass issued by the (single-threaded) training loop.
  mutable Parameter running_mean_;
  mutable Parameter running_var_;
};

/// Applies members in order; log-dets add. Empty composition is the identity.
class Compose : public Bijection {
 public:
  Compose(Index d, std::vector<BijectionPtr> parts);
  Index dim() const override { return d_; }
  FlowResult forward(const Tensor& w, Tape* tape) const override;
  FlowResult inverse(const Tensor& z, Tape* tape) const override;
  void collect(ParameterList& out) override;
  void set_mode(Mode mode) override;
  const std::vector<BijectionPtr>& parts() const { return parts_; }

 private:
  Index d_;
  std::vector<BijectionPtr> parts_;
};

/// Swaps forward and inverse of the wrapped bijection.
class Inverted : public Bijection {
 public:
  explicit Inverted(BijectionPtr inner) : inner_(std::move(inner)) {}
  Index dim() const override { return inner_->dim(); }
  FlowResult forward(const Tensor& w, Tape* tape) const override { return inner_->inverse(w, tape); }
  FlowResult inverse(const Tensor& z, Tape* tape) const override { return inner_->forward(z, tape); }
  void collect(ParameterList& out) override { inner_->collect(out); }
  void set_mode(Mode mode) override { inner_->set_mode(mode); }

 private:
  BijectionPtr inner_;
};

BijectionPtr compose(Index d, std::vector<BijectionPtr> parts);

/// Baseline MAF stack: `steps` autoregressive layers, each followed by an
/// optional batch norm, with order reversals between steps.
BijectionPtr make_maf(const std::string& name, Index d, Index steps, const std::vector<Index>& hidden,
                      bool batch_norm, Rng& rng);

}  // namespace cifvi
