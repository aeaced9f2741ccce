#pragma once

#include "cifvi/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cifvi {

/// Experiment description. JSON keys mirror the field names; unknown keys are
/// rejected and missing keys keep the defaults below.
struct Config {
  /// "mog", "image", or "gaussian" (standard-normal posterior, used for checks).
  std::string experiment = "mog";
  std::uint64_t seed = 0;

  struct TargetSpec {
    int K = 9;
    Index dim = 2;  // gaussian experiment only
    double sigma0 = 1.0;
    bool sigma0_trainable = false;
  } target;

  struct FlowSpec {
    Index layers = 5;
    std::vector<Index> hidden{64, 64};
    bool batch_norm = false;
  } flow;

  struct CifSpec {
    bool enabled = true;
    Index u_dim = 1;
    std::vector<Index> net_hidden{10, 10};
  } cif;

  struct OptimizerSpec {
    double lr = 1e-3;
    std::optional<double> clip_norm;
    long max_epochs = 20000;
    Index batch_size = 100;
    Index samples_per_step = 1000;
    long patience = 50;
  } optimizer;

  struct EvalSpec {
    Index N = 10000;
    Index M = 100;
    Index S = 1000;
  } eval;

  struct DataSpec {
    std::string train_idx;
    std::string test_idx;
    /// Directory holding a prepared dataset cache; used instead of the IDX files when set.
    std::string cache;
    int factor = 4;
    Index max_train = 0;  // 0 keeps every training image
    Index latent_dim = 8;
    std::vector<Index> decoder_hidden{64};
    std::vector<Index> encoder_hidden{64};
    Index feature_dim = 8;
    std::vector<Index> feature_hidden{32};
  } data;

  bool is_mog() const { return experiment == "mog"; }
  bool is_image() const { return experiment == "image"; }
};

/// Throws std::invalid_argument naming the offending field.
void validate(const Config& config);

Config config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const Config& config);
Config load_config(const std::string& path);

}  // namespace cifvi
