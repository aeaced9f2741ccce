#pragma once

#include "cifvi/checkpoint.hpp"
#include "cifvi/config.hpp"
#include "cifvi/data.hpp"
#include "cifvi/model.hpp"
#include "cifvi/optim.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cifvi {

/// Raised after too many consecutive steps with a non-finite loss or gradient.
class TrainingError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

inline constexpr long kMaxConsecutiveAborts = 100;

struct EpochRecord {
  long epoch = 0;
  double elbo_mean = 0.0;
  double elbo_se = 0.0;
  double wall_s = 0.0;
  std::optional<double> val_elbo;
};

std::string to_jsonl(const EpochRecord& r);

/// Stops once `patience` epochs pass without improving on the best metric.
class EarlyStopper {
 public:
  explicit EarlyStopper(long patience) : patience_(patience) {}
  /// Records the metric for `epoch`; returns true when training should stop.
  bool update(long epoch, double metric);
  bool improved() const { return improved_; }
  long best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  long patience_;
  long best_epoch_ = 0;
  double best_ = -std::numeric_limits<double>::infinity();
  bool improved_ = false;
};

struct TrainOptions {
  /// Where checkpoint.json and metrics.jsonl go; nothing is written when empty.
  std::string out_dir;
  /// Dataset for image runs; loaded from the config when null.
  const BinarizedImageDataset* data = nullptr;
  /// Progress line to stderr every this many epochs; 0 is silent.
  long log_every = 0;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  Model model;
  AdamState optimizer;
  CheckpointInfo info;
  std::vector<EpochRecord> metrics;
  long aborted_steps = 0;
  double wall_s = 0.0;
};

/// Reads the dataset named by an image config (cache directory or IDX pair).
BinarizedImageDataset load_dataset(const Config& config);

/// MoG / gaussian runs take one Adam step per epoch on the mean of
/// samples_per_step single-path ELBO draws. Image runs sweep minibatches over
/// dynamically binarized training data and stop early on the validation ELBO,
/// restoring the best parameters. The stack is left in eval mode.
TrainResult train(const Config& config, const TrainOptions& options = {});

/// Single-path ELBO on a fixed evaluation stream, one draw per datapoint.
double validation_elbo(Model& model, const Matrix& data, std::uint64_t seed);

}  // namespace cifvi
