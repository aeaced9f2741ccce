#pragma once

#include "cifvi/tensor.hpp"

#include <map>
#include <string>
#include <vector>

namespace cifvi {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  /// Steps rejected because a gradient was non-finite.
  long skipped = 0;
  std::map<std::string, Matrix> m;
  std::map<std::string, Matrix> v;
};

/// One Adam update with bias correction, no weight decay. `grads[k]` belongs to
/// `params[k]`. Returns false and leaves everything untouched (apart from the
/// skipped counter) when any gradient entry is non-finite.
bool adam_step(AdamState& state, const ParameterList& params, const std::vector<Matrix>& grads, double lr);

double global_norm(const std::vector<Matrix>& grads);

/// Rescales all gradients by max_norm / ||g|| when ||g|| > max_norm. Returns
/// the norm before clipping.
double clip_global_norm(std::vector<Matrix>& grads, double max_norm);

}  // namespace cifvi
