#pragma once

#include "cifvi/tensor.hpp"

#include <cstdint>
#include <optional>

namespace cifvi {

/// Counter-based generator: the n-th draw of a stream is a pure function of
/// (seed, stream, n), so streams can be split deterministically across shards.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  /// Standard normal via Box-Muller.
  double normal();
  Matrix normal(Index rows, Index cols);
  Matrix uniform(Index rows, Index cols);
  bool bernoulli(double p) { return uniform() < p; }

  /// Independent child stream; does not advance this generator.
  Rng split(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::optional<double> spare_;
};

}  // namespace cifvi
