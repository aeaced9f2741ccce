#include "cifvi/bijection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cifvi {

namespace {

void check_dim(const Tensor& t, Index d, const char* who) {
  if (t.cols() != d)
    throw ShapeError(std::string(who) + ": input has " + std::to_string(t.cols()) + " columns, expected " +
                     std::to_string(d));
}

}  // namespace

std::vector<Index> identity_ordering(Index d) {
  std::vector<Index> o(static_cast<std::size_t>(d));
  std::iota(o.begin(), o.end(), Index{1});
  return o;
}

std::vector<Index> reversed_ordering(Index d) {
  auto o = identity_ordering(d);
  std::reverse(o.begin(), o.end());
  return o;
}

std::vector<Matrix> made_masks(Index d, const std::vector<Index>& hidden, const std::vector<Index>& degrees) {
  if (d < 1) throw std::invalid_argument("made_masks: d must be at least 1");
  if (static_cast<Index>(degrees.size()) != d) throw std::invalid_argument("made_masks: ordering has wrong length");
  {
    auto sorted = degrees;
    std::sort(sorted.begin(), sorted.end());
    if (sorted != identity_ordering(d)) throw std::invalid_argument("made_masks: ordering is not a permutation of 1..d");
  }
  const Index cycle = std::max<Index>(d - 1, 1);
  std::vector<std::vector<Index>> layer_degrees;
  layer_degrees.push_back(degrees);
  for (Index width : hidden) {
    std::vector<Index> deg(static_cast<std::size_t>(width));
    for (Index k = 0; k < width; ++k) deg[static_cast<std::size_t>(k)] = (k % cycle) + 1;
    layer_degrees.push_back(std::move(deg));
  }

  std::vector<Matrix> masks;
  for (std::size_t l = 0; l + 1 < layer_degrees.size(); ++l) {
    const auto& in = layer_degrees[l];
    const auto& out = layer_degrees[l + 1];
    Matrix m(static_cast<Index>(in.size()), static_cast<Index>(out.size()));
    for (std::size_t j = 0; j < in.size(); ++j)
      for (std::size_t k = 0; k < out.size(); ++k)
        m(static_cast<Index>(j), static_cast<Index>(k)) = out[k] >= in[j] ? 1.0 : 0.0;
    masks.push_back(std::move(m));
  }
  const auto& last = layer_degrees.back();
  Matrix m(static_cast<Index>(last.size()), 2 * d);
  for (std::size_t k = 0; k < last.size(); ++k)
    for (Index c = 0; c < 2 * d; ++c)
      m(static_cast<Index>(k), c) = degrees[static_cast<std::size_t>(c % d)] > last[k] ? 1.0 : 0.0;
  masks.push_back(std::move(m));
  return masks;
}

MaskedAffineAutoregressive::MaskedAffineAutoregressive(std::string name, Index d, const std::vector<Index>& hidden,
                                                       Rng& rng, std::vector<Index> degrees, bool zero_final)
    : d_(d),
      degrees_(degrees.empty() ? identity_ordering(d) : std::move(degrees)),
      made_(
          [&] {
            std::vector<Index> widths{d};
            widths.insert(widths.end(), hidden.begin(), hidden.end());
            widths.push_back(2 * d);
            return Mlp(std::move(name), std::move(widths), rng, zero_final, made_masks(d, hidden, degrees_));
          }()) {}

std::pair<Tensor, Tensor> MaskedAffineAutoregressive::shift_log_scale(const Tensor& w, Tape* tape) const {
  auto [shift, raw] = made_.forward_heads(w, tape);
  return {std::move(shift), clamp(raw, kLogScaleMin, kLogScaleMax)};
}

FlowResult MaskedAffineAutoregressive::forward(const Tensor& w, Tape* tape) const {
  check_dim(w, d_, "MaskedAffineAutoregressive::forward");
  auto [shift, log_scale] = shift_log_scale(w, tape);
  return {w * exp(log_scale) + shift, row_sum(log_scale)};
}

FlowResult MaskedAffineAutoregressive::inverse(const Tensor& z, Tape* tape) const {
  check_dim(z, d_, "MaskedAffineAutoregressive::inverse");
  // After k sweeps every coordinate of degree <= k is exact, so d sweeps give
  // the inverse as a differentiable expression of z.
  Tensor w = Tensor::zeros(z.rows(), d_);
  Tensor log_scale;
  for (Index k = 0; k < d_; ++k) {
    auto [shift, ls] = shift_log_scale(w, tape);
    w = (z - shift) * exp(neg(ls));
    log_scale = ls;
  }
  return {w, neg(row_sum(log_scale))};
}

ReversePermutation::ReversePermutation(Index d) : d_(d), perm_(Matrix::Zero(d, d)) {
  for (Index i = 0; i < d; ++i) perm_(i, d - 1 - i) = 1.0;
}

FlowResult ReversePermutation::forward(const Tensor& w, Tape* /*tape*/) const {
  check_dim(w, d_, "ReversePermutation");
  return {matmul(w, Tensor(perm_)), Tensor::zeros(w.rows(), 1)};
}

ElementwiseAffine::ElementwiseAffine(RowVector scale, RowVector shift)
    : scale_(std::move(scale)), shift_(std::move(shift)) {
  if (scale_.size() != shift_.size()) throw ShapeError("ElementwiseAffine: scale/shift size mismatch");
  if ((scale_.array() == 0.0).any()) throw std::invalid_argument("ElementwiseAffine: zero scale is not invertible");
  logdet_ = scale_.array().abs().log().sum();
}

FlowResult ElementwiseAffine::forward(const Tensor& w, Tape* /*tape*/) const {
  check_dim(w, dim(), "ElementwiseAffine");
  return {w * Tensor(Matrix(scale_)) + Tensor(Matrix(shift_)), Tensor::constant(w.rows(), 1, logdet_)};
}

FlowResult ElementwiseAffine::inverse(const Tensor& z, Tape* /*tape*/) const {
  check_dim(z, dim(), "ElementwiseAffine");
  return {(z - Tensor(Matrix(shift_))) / Tensor(Matrix(scale_)), Tensor::constant(z.rows(), 1, -logdet_)};
}

BatchNormBijection::BatchNormBijection(std::string name, Index d, double momentum, double eps)
    : d_(d),
      momentum_(momentum),
      eps_(eps),
      log_gain_(name + ".log_gain", Matrix::Zero(1, d)),
      bias_(name + ".bias", Matrix::Zero(1, d)),
      running_mean_(name + ".running_mean", Matrix::Zero(1, d), false),
      running_var_(name + ".running_var", Matrix::Ones(1, d), false) {
  if (!(momentum > 0 && momentum <= 1)) throw std::invalid_argument("BatchNormBijection: momentum in (0, 1]");
}

FlowResult BatchNormBijection::forward(const Tensor& w, Tape* tape) const {
  check_dim(w, d_, "BatchNormBijection::forward");
  Tensor mean, var;
  if (mode_ == Mode::train) {
    if (w.rows() < 2) throw ShapeError("BatchNormBijection: train mode needs at least 2 rows");
    mean = col_mean(w);
    var = col_mean(square(w - mean));
    running_mean_.value() = (1.0 - momentum_) * running_mean_.value() + momentum_ * mean.value();
    running_var_.value() = (1.0 - momentum_) * running_var_.value() + momentum_ * var.value();
  } else {
    mean = Tensor(running_mean_.value());
    var = Tensor(running_var_.value());
  }
  Tensor log_gain = bind(log_gain_, tape);
  Tensor half_log_var = 0.5 * log(var + eps_);
  Tensor log_scale = log_gain - half_log_var;  // 1 x d
  Tensor z = (w - mean) * exp(log_scale) + bind(bias_, tape);
  Tensor logdet = broadcast(sum(log_scale), w.rows(), 1);
  return {z, logdet};
}

FlowResult BatchNormBijection::inverse(const Tensor& z, Tape* tape) const {
  check_dim(z, d_, "BatchNormBijection::inverse");
  Tensor mean(running_mean_.value());
  Tensor var(running_var_.value());
  Tensor log_scale = bind(log_gain_, tape) - 0.5 * log(var + eps_);
  Tensor w = (z - bind(bias_, tape)) * exp(neg(log_scale)) + mean;
  return {w, broadcast(neg(sum(log_scale)), z.rows(), 1)};
}

void BatchNormBijection::collect(ParameterList& out) {
  out.push_back(&log_gain_);
  out.push_back(&bias_);
  out.push_back(&running_mean_);
  out.push_back(&running_var_);
}

Compose::Compose(Index d, std::vector<BijectionPtr> parts) : d_(d), parts_(std::move(parts)) {
  for (const auto& p : parts_) {
    if (!p) throw std::invalid_argument("Compose: null member");
    if (p->dim() != d_) throw ShapeError("Compose: member dimension mismatch");
  }
}

FlowResult Compose::forward(const Tensor& w, Tape* tape) const {
  check_dim(w, d_, "Compose::forward");
  Tensor x = w;
  Tensor logdet = Tensor::zeros(w.rows(), 1);
  for (const auto& p : parts_) {
    auto r = p->forward(x, tape);
    x = r.out;
    logdet = logdet + r.logdet;
  }
  return {x, logdet};
}

FlowResult Compose::inverse(const Tensor& z, Tape* tape) const {
  check_dim(z, d_, "Compose::inverse");
  Tensor x = z;
  Tensor logdet = Tensor::zeros(z.rows(), 1);
  for (auto it = parts_.rbegin(); it != parts_.rend(); ++it) {
    auto r = (*it)->inverse(x, tape);
    x = r.out;
    logdet = logdet + r.logdet;
  }
  return {x, logdet};
}

void Compose::collect(ParameterList& out) {
  for (auto& p : parts_) p->collect(out);
}

void Compose::set_mode(Mode mode) {
  for (auto& p : parts_) p->set_mode(mode);
}

BijectionPtr compose(Index d, std::vector<BijectionPtr> parts) {
  return std::make_shared<Compose>(d, std::move(parts));
}

BijectionPtr make_maf(const std::string& name, Index d, Index steps, const std::vector<Index>& hidden,
                      bool batch_norm, Rng& rng) {
  std::vector<BijectionPtr> parts;
  for (Index s = 0; s < steps; ++s) {
    if (s > 0) parts.push_back(std::make_shared<ReversePermutation>(d));
    const std::string prefix = name + ".step" + std::to_string(s);
    parts.push_back(std::make_shared<MaskedAffineAutoregressive>(prefix + ".made", d, hidden, rng));
    if (batch_norm) parts.push_back(std::make_shared<BatchNormBijection>(prefix + ".bn", d));
  }
  return compose(d, std::move(parts));
}

}  // namespace cifvi
