#include "cifvi/optim.hpp"

#include <cmath>

namespace cifvi {

bool adam_step(AdamState& state, const ParameterList& params, const std::vector<Matrix>& grads, double lr) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: one gradient per parameter required");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k].rows() != params[k]->value().rows() || grads[k].cols() != params[k]->value().cols())
      throw ShapeError("adam_step: gradient shape differs from " + params[k]->name());
    if (!grads[k].allFinite()) {
      ++state.skipped;
      return false;
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    if (!p.trainable()) continue;
    auto [mit, fresh_m] = state.m.try_emplace(p.name(), Matrix::Zero(p.value().rows(), p.value().cols()));
    auto [vit, fresh_v] = state.v.try_emplace(p.name(), Matrix::Zero(p.value().rows(), p.value().cols()));
    Matrix& m = mit->second;
    Matrix& v = vit->second;
    m = state.beta1 * m + (1.0 - state.beta1) * grads[k];
    v = state.beta2 * v + (1.0 - state.beta2) * grads[k].cwiseProduct(grads[k]);
    p.value().array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
  }
  return true;
}

double global_norm(const std::vector<Matrix>& grads) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  return std::sqrt(sq);
}

double clip_global_norm(std::vector<Matrix>& grads, double max_norm) {
  if (!(max_norm > 0)) throw std::invalid_argument("clip_global_norm: max_norm must be positive");
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& g : grads) g *= scale;
  }
  return norm;
}

}  // namespace cifvi
