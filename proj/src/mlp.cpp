#include "cifvi/mlp.hpp"

#include <cmath>

namespace cifvi {

Mlp::Mlp(std::string name, std::vector<Index> widths, Rng& rng, bool zero_final, std::vector<Matrix> masks)
    : name_(std::move(name)), widths_(std::move(widths)), masks_(std::move(masks)) {
  if (widths_.size() < 2) throw std::invalid_argument("Mlp " + name_ + ": need at least input and output widths");
  for (Index w : widths_)
    if (w < 0) throw std::invalid_argument("Mlp " + name_ + ": negative width");
  const std::size_t layers = widths_.size() - 1;
  if (!masks_.empty() && masks_.size() != layers)
    throw std::invalid_argument("Mlp " + name_ + ": one mask per layer required");
  for (std::size_t k = 0; k < layers; ++k) {
    const Index fan_in = widths_[k], fan_out = widths_[k + 1];
    if (!masks_.empty() && (masks_[k].rows() != fan_in || masks_[k].cols() != fan_out))
      throw ShapeError("Mlp " + name_ + ": mask " + std::to_string(k) + " has wrong shape");
    const double bound = fan_in > 0 ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : 0.0;
    Matrix w = (2.0 * rng.uniform(fan_in, fan_out).array() - 1.0).matrix() * bound;
    Matrix b = (2.0 * rng.uniform(1, fan_out).array() - 1.0).matrix() * bound;
    weights_.emplace_back(name_ + ".w" + std::to_string(k), std::move(w));
    biases_.emplace_back(name_ + ".b" + std::to_string(k), std::move(b));
  }
  if (zero_final) zero_final_layer();
}

void Mlp::zero_final_layer() {
  weights_.back().value().setZero();
  biases_.back().value().setZero();
}

Tensor Mlp::forward(const Tensor& x, Tape* tape) const {
  if (x.cols() != in_dim())
    throw ShapeError("Mlp " + name_ + ": input width " + std::to_string(x.cols()) + ", expected " +
                     std::to_string(in_dim()));
  Tensor h = x;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    Tensor w = bind(weights_[k], tape);
    if (!masks_.empty()) w = mul(w, Tensor(masks_[k]));
    h = add(matmul(h, w), bind(biases_[k], tape));
    if (k + 1 < weights_.size()) h = tanh(h);
  }
  return h;
}

std::pair<Tensor, Tensor> Mlp::forward_heads(const Tensor& x, Tape* tape) const {
  if (out_dim() % 2 != 0) throw ShapeError("Mlp " + name_ + ": two-headed output must have even width");
  Tensor out = forward(x, tape);
  const Index half = out_dim() / 2;
  return {slice_cols(out, 0, half), slice_cols(out, half, half)};
}

void Mlp::collect(ParameterList& out) {
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    out.push_back(&weights_[k]);
    out.push_back(&biases_[k]);
  }
}

Index Mlp::num_weights() const {
  Index n = 0;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    n += masks_.empty() ? weights_[k].value().size() : static_cast<Index>(masks_[k].sum());
    n += biases_[k].value().size();
  }
  return n;
}

}  // namespace cifvi
