#include "cifvi/estimators.hpp"

#include "cifvi/parallel.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cifvi {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Rows of `m`, each repeated `times` times consecutively.
Matrix repeat_rows(const Matrix& m, Index times) {
  Matrix out(m.rows() * times, m.cols());
  for (Index i = 0; i < m.rows(); ++i) out.middleRows(i * times, times) = m.row(i).replicate(times, 1);
  return out;
}

double log_mean_exp(const double* v, Index n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (Index j = 0; j < n; ++j) mx = std::max(mx, v[j]);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (Index j = 0; j < n; ++j) s += std::exp(v[j] - mx);
  return mx + std::log(s) - std::log(static_cast<double>(n));
}

void require_finite(const Matrix& lw, const char* what) {
  if (!lw.allFinite()) throw NumericalError(std::string(what) + ": non-finite importance weight");
}

}  // namespace

EstimatorReport summarize(const Matrix& values, Index n_inner) {
  EstimatorReport r;
  const Index n = values.size();
  if (n == 0) throw std::invalid_argument("summarize: no values");
  r.n_outer = n;
  r.n_inner = n_inner;
  r.value = values.mean();
  if (n > 1) {
    const double var = (values.array() - r.value).square().sum() / static_cast<double>(n - 1);
    r.std_error = std::sqrt(var / static_cast<double>(n));
  }
  return r;
}

Matrix log_qz_importance_estimate(const CifStack& stack, const Matrix& z, Index m, Rng& rng, const Matrix* x) {
  if (m < 1) throw std::invalid_argument("qz_importance_estimate: M must be at least 1");
  if (stack.amortized() && x == nullptr) throw std::invalid_argument("qz_importance_estimate: x required");
  const Index n = z.rows();
  Matrix out(n, 1);
  const Index block = std::max<Index>(1, 25000 / m);
  for (Index start = 0; start < n; start += block) {
    const Index rows = std::min(block, n - start);
    const Tensor zr(repeat_rows(z.middleRows(start, rows), m));
    std::optional<Tensor> xr;
    if (x != nullptr) xr.emplace(repeat_rows(x->middleRows(start, rows), m));
    const AuxiliaryDraw draw = sample_auxiliary(stack, zr, xr ? &*xr : nullptr, rng, nullptr);
    const Matrix lw = draw.log_joint.value() - draw.log_r.value();
    require_finite(lw, "qz_importance_estimate");
    for (Index i = 0; i < rows; ++i) out(start + i, 0) = log_mean_exp(lw.data() + i * m, m);
  }
  return out;
}

Matrix qz_importance_estimate(const CifStack& stack, const Matrix& z, Index m, Rng& rng, const Matrix* x) {
  return log_qz_importance_estimate(stack, z, m, rng, x).array().exp().matrix();
}

Matrix elbo_draws(const CifStack& stack, const Target& target, Index n, const Rng& rng) {
  if (n < 1) throw std::invalid_argument("elbo_draws: n must be at least 1");
  const std::size_t chunks = static_cast<std::size_t>((n + kOuterChunk - 1) / kOuterChunk);
  Matrix out(n, 1);
  for_each_chunk(chunks, [&](std::size_t c) {
    const Index start = static_cast<Index>(c) * kOuterChunk;
    const Index rows = std::min(kOuterChunk, n - start);
    Rng outer = rng.split(2 * c);
    out.middleRows(start, rows) = elbo_estimate(stack, target, nullptr, outer, rows, nullptr).value();
  });
  return out;
}

EstimatorReport elbo_report(const CifStack& stack, const Target& target, Index n, const Rng& rng) {
  const auto t0 = Clock::now();
  EstimatorReport r = summarize(elbo_draws(stack, target, n, rng));
  r.wall_time = seconds_since(t0);
  return r;
}

MarginalElboReport marginal_elbo_estimate(const CifStack& stack, const Target& target, Index n, Index m,
                                          const Rng& rng) {
  if (n < 1 || m < 1) throw std::invalid_argument("marginal_elbo_estimate: N and M must be at least 1");
  if (stack.amortized()) throw std::invalid_argument("marginal_elbo_estimate: amortized stacks need data");
  const auto t0 = Clock::now();
  const std::size_t chunks = static_cast<std::size_t>((n + kOuterChunk - 1) / kOuterChunk);
  Matrix marginal(n, 1), auxiliary(n, 1);
  for_each_chunk(chunks, [&](std::size_t c) {
    const Index start = static_cast<Index>(c) * kOuterChunk;
    const Index rows = std::min(kOuterChunk, n - start);
    Rng outer = rng.split(2 * c);
    Rng inner = rng.split(2 * c + 1);
    const SamplePath path = sample_path(stack, outer, rows, nullptr, nullptr);
    auxiliary.middleRows(start, rows) = elbo_terms(stack, target, path, nullptr, nullptr).value();
    const Matrix log_p = target.log_joint(nullptr, path.z(), nullptr).value();
    const Matrix log_qz = log_qz_importance_estimate(stack, path.z().value(), m, inner);
    marginal.middleRows(start, rows) = log_p - log_qz;
  });
  MarginalElboReport report{summarize(marginal, m), summarize(auxiliary, 1)};
  report.marginal.wall_time = report.auxiliary.wall_time = seconds_since(t0);
  return report;
}

Matrix is_log_weights(const Target& model, const CifStack& stack, const Matrix& data, Index s, const Rng& rng) {
  if (s < 1) throw std::invalid_argument("is_log_weights: S must be at least 1");
  if (data.rows() == 0) throw std::invalid_argument("is_log_weights: empty dataset");
  const Index n = data.rows();
  const Index per_chunk = std::max<Index>(1, 20000 / s);
  const std::size_t chunks = static_cast<std::size_t>((n + per_chunk - 1) / per_chunk);
  Matrix out(n, s);
  for_each_chunk(chunks, [&](std::size_t c) {
    const Index start = static_cast<Index>(c) * per_chunk;
    const Index rows = std::min(per_chunk, n - start);
    Rng chunk_rng = rng.split(c);
    const Tensor x(repeat_rows(data.middleRows(start, rows), s));
    const Matrix lw = elbo_estimate(stack, model, &x, chunk_rng, rows * s, nullptr).value();
    require_finite(lw, "is_log_weights");
    out.middleRows(start, rows) = Eigen::Map<const Matrix>(lw.data(), rows, s);
  });
  return out;
}

Matrix log_mean_exp_prefix(const Matrix& log_weights, Index s) {
  if (s < 1 || s > log_weights.cols()) throw std::invalid_argument("log_mean_exp_prefix: bad S");
  Matrix out(log_weights.rows(), 1);
  for (Index i = 0; i < log_weights.rows(); ++i) out(i, 0) = log_mean_exp(log_weights.row(i).data(), s);
  return out;
}

EstimatorReport is_log_likelihood(const Target& model, const CifStack& stack, const Matrix& data, Index s,
                                  const Rng& rng) {
  const auto t0 = Clock::now();
  EstimatorReport r = summarize(log_mean_exp_prefix(is_log_weights(model, stack, data, s, rng), s), s);
  r.wall_time = seconds_since(t0);
  return r;
}

EstimatorReport dataset_elbo(const Target& model, const CifStack& stack, const Matrix& data, const Rng& rng) {
  const auto t0 = Clock::now();
  EstimatorReport r = summarize(is_log_weights(model, stack, data, 1, rng));
  r.wall_time = seconds_since(t0);
  return r;
}

}  // namespace cifvi
