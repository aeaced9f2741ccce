#pragma once

#include "cifvi/model.hpp"
#include "cifvi/optim.hpp"

#include <json.hpp>

#include <limits>
#include <string>

namespace cifvi {

std::string base64_encode(const Matrix& m);
/// Decodes into a rows x cols matrix; throws if the byte count is wrong.
Matrix base64_decode(const std::string& text, Index rows, Index cols);

struct CheckpointInfo {
  long epoch = 0;
  long best_epoch = 0;
  double best_metric = -std::numeric_limits<double>::infinity();
  Index data_dim = 0;
};

struct LoadedCheckpoint {
  Model model;
  AdamState optimizer;
  CheckpointInfo info;
};

/// Writes `<dir>/checkpoint.json`: config snapshot, every named parameter as
/// base64 little-endian f64, optimizer moments, epoch and best metric.
void save_checkpoint(const std::string& dir, Model& model, const AdamState& optimizer, const CheckpointInfo& info);
/// Accepts the directory or the checkpoint.json path itself.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace cifvi
