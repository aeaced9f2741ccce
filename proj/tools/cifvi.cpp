// Command-line front end: train, evaluate, sample and plot CIF models.
#include "cifvi/checkpoint.hpp"
#include "cifvi/estimators.hpp"
#include "cifvi/kde.hpp"
#include "cifvi/png.hpp"
#include "cifvi/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

using namespace cifvi;
using nlohmann::json;

namespace {

/// Bad input the user can fix; exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json report_json(const EstimatorReport& r) {
  return json{{"value", r.value},
              {"std_error", r.std_error},
              {"n_outer", r.n_outer},
              {"n_inner", r.n_inner},
              {"wall_time", r.wall_time}};
}

LoadedCheckpoint open_checkpoint(const std::string& path) {
  try {
    LoadedCheckpoint ck = load_checkpoint(path);
    ck.model.stack->set_mode(Mode::eval);
    return ck;
  } catch (const NumericalError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

/// Evaluation split of an image run.
Matrix eval_split(const Config& config, const std::string& split) {
  BinarizedImageDataset data = [&] {
    try {
      return load_dataset(config);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }();
  if (split == "test") return data.test();
  if (split == "val") return data.val();
  throw UsageError("unknown split " + split);
}

Matrix draw_samples(const CifStack& stack, Index n, std::uint64_t seed) {
  if (stack.amortized()) throw UsageError("sampling needs an un-amortized model");
  Rng rng(seed, 0);
  return sample_path(stack, rng, n, nullptr, nullptr).z().value();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continuously-indexed flows for variational inference"};
  app.require_subcommand(1);

  std::string config_path, out_dir, ckpt, out_path, png_path, split = "test";
  long log_every = 0;
  Index n = 10000, m = 100, s = 1000;
  std::uint64_t seed = 1;
  GridSpec grid{-5.0, 5.0, -5.0, 5.0, 100};

  auto* train_cmd = app.add_subcommand("train", "Train a model from a JSON config");
  train_cmd->add_option("--config", config_path, "Config file")->required();
  train_cmd->add_option("--out", out_dir, "Output directory")->required();
  train_cmd->add_option("--log-every", log_every, "Progress line every N epochs (0: silent)");

  auto* elbo_cmd = app.add_subcommand("eval-elbo", "Mean and SE of single-path ELBO draws");
  elbo_cmd->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  elbo_cmd->add_option("--n", n, "Number of draws (un-amortized models)")->check(CLI::PositiveNumber);
  elbo_cmd->add_option("--split", split, "Data split for image models")->check(CLI::IsMember({"test", "val"}));
  elbo_cmd->add_option("--seed", seed);

  auto* marginal_cmd = app.add_subcommand("eval-marginal", "Marginal ELBO via importance-sampled q_Z");
  marginal_cmd->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  marginal_cmd->add_option("--n", n, "Outer samples N")->check(CLI::PositiveNumber);
  marginal_cmd->add_option("--m", m, "Inner samples M")->check(CLI::PositiveNumber);
  marginal_cmd->add_option("--seed", seed);

  auto* loglik_cmd = app.add_subcommand("eval-loglik", "Importance-sampled log-likelihood");
  loglik_cmd->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  loglik_cmd->add_option("--s", s, "Importance samples per datapoint")->check(CLI::PositiveNumber);
  loglik_cmd->add_option("--split", split, "Data split")->check(CLI::IsMember({"test", "val"}));
  loglik_cmd->add_option("--seed", seed);

  auto* sample_cmd = app.add_subcommand("sample", "Write samples of z as CSV");
  sample_cmd->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  sample_cmd->add_option("--n", n, "Number of samples")->check(CLI::PositiveNumber);
  sample_cmd->add_option("--out", out_path, "CSV path")->required();
  sample_cmd->add_option("--seed", seed);

  auto* grid_cmd = app.add_subcommand("density-grid", "KDE of samples on a grid");
  grid_cmd->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  grid_cmd->add_option("--out", out_path, "CSV path")->required();
  grid_cmd->add_option("--png", png_path, "Optional greyscale PNG");
  grid_cmd->add_option("--n", n, "Number of samples")->check(CLI::PositiveNumber);
  grid_cmd->add_option("--xmin", grid.xmin);
  grid_cmd->add_option("--xmax", grid.xmax);
  grid_cmd->add_option("--ymin", grid.ymin);
  grid_cmd->add_option("--ymax", grid.ymax);
  grid_cmd->add_option("--steps", grid.steps)->check(CLI::PositiveNumber);
  grid_cmd->add_option("--seed", seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    if (app.get_subcommands().empty()) std::cerr << app.help();
    return 1;
  }

  try {
    if (*train_cmd) {
      const Config config = [&] {
        try {
          return load_config(config_path);
        } catch (const std::exception& e) {
          throw UsageError(e.what());
        }
      }();
      TrainOptions options;
      options.out_dir = out_dir;
      options.log_every = log_every;
      const TrainResult result = train(config, options);
      json summary{{"epochs", result.info.epoch},
                   {"best_epoch", result.info.best_epoch},
                   {"aborted_steps", result.aborted_steps},
                   {"wall_s", result.wall_s}};
      if (!result.metrics.empty()) summary["final_elbo"] = result.metrics.back().elbo_mean;
      std::cout << summary.dump() << "\n";
    } else if (*elbo_cmd) {
      LoadedCheckpoint ck = open_checkpoint(ckpt);
      const Rng rng(seed, 0);
      EstimatorReport r;
      if (ck.model.stack->amortized())
        r = dataset_elbo(*ck.model.target, *ck.model.stack, eval_split(ck.model.config, split), rng);
      else
        r = elbo_report(*ck.model.stack, *ck.model.target, n, rng);
      std::cout << report_json(r).dump() << "\n";
    } else if (*marginal_cmd) {
      LoadedCheckpoint ck = open_checkpoint(ckpt);
      if (ck.model.stack->amortized()) throw UsageError("eval-marginal needs an un-amortized model");
      const MarginalElboReport r = marginal_elbo_estimate(*ck.model.stack, *ck.model.target, n, m, Rng(seed, 0));
      std::cout << json{{"marginal", report_json(r.marginal)}, {"auxiliary", report_json(r.auxiliary)}}.dump()
                << "\n";
    } else if (*loglik_cmd) {
      LoadedCheckpoint ck = open_checkpoint(ckpt);
      if (!ck.model.stack->amortized()) throw UsageError("eval-loglik needs a generative (image) model");
      const EstimatorReport r = is_log_likelihood(*ck.model.target, *ck.model.stack,
                                                  eval_split(ck.model.config, split), s, Rng(seed, 0));
      std::cout << report_json(r).dump() << "\n";
    } else if (*sample_cmd) {
      LoadedCheckpoint ck = open_checkpoint(ckpt);
      const Matrix z = draw_samples(*ck.model.stack, n, seed);
      std::ofstream out(out_path);
      if (!out) throw UsageError("cannot write " + out_path);
      out.precision(17);
      for (Index j = 0; j < z.cols(); ++j) out << (j ? "," : "") << "z" << j + 1;
      out << "\n";
      for (Index i = 0; i < z.rows(); ++i) {
        for (Index j = 0; j < z.cols(); ++j) out << (j ? "," : "") << z(i, j);
        out << "\n";
      }
    } else if (*grid_cmd) {
      LoadedCheckpoint ck = open_checkpoint(ckpt);
      if (ck.model.stack->dim_z() != 2) throw UsageError("density-grid needs a 2-D model");
      if (n < 2) throw UsageError("density-grid needs at least 2 samples");
      if (!(grid.xmax > grid.xmin) || !(grid.ymax > grid.ymin)) throw UsageError("empty grid range");
      const Matrix density = kde_density_grid(draw_samples(*ck.model.stack, n, seed), grid);
      write_grid_csv(out_path, grid, density);
      // Image rows run top to bottom, so flip y.
      if (!png_path.empty()) write_greyscale_png(png_path, density.transpose().colwise().reverse());
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
