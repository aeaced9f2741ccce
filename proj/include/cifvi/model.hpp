#pragma once

#include "cifvi/cif.hpp"
#include "cifvi/config.hpp"
#include "cifvi/targets.hpp"

#include <memory>

namespace cifvi {

/// Everything a config describes: the target (with its decoder when the
/// model is generative) and the variational stack.
struct Model {
  Config config;
  std::unique_ptr<Target> target;
  std::unique_ptr<CifStack> stack;

  /// Parameters of the stack followed by those of the target, in a fixed order.
  ParameterList parameters();
  /// The trainable subset of parameters().
  ParameterList trainable();
  /// Number of trainable scalars, masked-out MADE weights excluded.
  Index count_trainable();
  LatentBernoulliModel* generative() const { return dynamic_cast<LatentBernoulliModel*>(target.get()); }
};

/// Builds a freshly initialised model. Data width for image runs is passed in
/// because it depends on the dataset.
Model build_model(const Config& config, Index data_dim = 0);

}  // namespace cifvi
