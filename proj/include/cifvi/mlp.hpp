#pragma once

#include "cifvi/rng.hpp"
#include "cifvi/tensor.hpp"

#include <string>
#include <utility>
#include <vector>

namespace cifvi {

/// Fully-connected network: tanh on hidden layers, identity on the output.
/// Weights are stored input-major (in x out) so a batch multiplies as x * W.
/// Optional fixed binary masks (one per layer) turn it into a MADE conditioner.
class Mlp {
 public:
  Mlp(std::string name, std::vector<Index> widths, Rng& rng, bool zero_final = false,
      std::vector<Matrix> masks = {});

  Tensor forward(const Tensor& x, Tape* tape) const;
  /// Splits the output in half: (first, second).
  std::pair<Tensor, Tensor> forward_heads(const Tensor& x, Tape* tape) const;

  Index in_dim() const { return widths_.front(); }
  Index out_dim() const { return widths_.back(); }
  const std::vector<Index>& widths() const { return widths_; }
  const std::string& name() const { return name_; }
  std::size_t num_layers() const { return weights_.size(); }

  Parameter& weight(std::size_t k) { return weights_[k]; }
  Parameter& bias(std::size_t k) { return biases_[k]; }
  const Matrix& mask(std::size_t k) const { return masks_[k]; }
  bool masked() const { return !masks_.empty(); }

  void zero_final_layer();
  void collect(ParameterList& out);
  Index num_weights() const;

 private:
  std::string name_;
  std::vector<Index> widths_;
  std::vector<Parameter> weights_;
  std::vector<Parameter> biases_;
  std::vector<Matrix> masks_;
};

}  // namespace cifvi
