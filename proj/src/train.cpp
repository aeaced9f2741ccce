#include "cifvi/train.hpp"

#include "cifvi/estimators.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

namespace cifvi {

namespace {

using Clock = std::chrono::steady_clock;

struct StepOutcome {
  bool applied = false;
  Matrix draws;
  std::string failure;
};

/// One gradient step on -mean(draws); draws come from `objective(tape)`.
StepOutcome gradient_step(Model& model, AdamState& opt, const ParameterList& params,
                          const std::function<Tensor(Tape&)>& objective) {
  StepOutcome out;
  Tape tape;
  Tensor draws;
  try {
    draws = objective(tape);
  } catch (const NonFiniteDensityError& e) {
    out.failure = e.what();
    return out;
  }
  out.draws = draws.value();
  if (!out.draws.allFinite()) {
    out.failure = "non-finite ELBO draw";
    return out;
  }
  const Gradients g = tape.backward(neg(mean(draws)));
  std::vector<Matrix> grads;
  grads.reserve(params.size());
  for (Parameter* p : params) grads.push_back(g.wrt(*p));
  if (model.config.optimizer.clip_norm) {
    for (const auto& gr : grads)
      if (!gr.allFinite()) {
        ++opt.skipped;
        out.failure = "non-finite gradient";
        return out;
      }
    clip_global_norm(grads, *model.config.optimizer.clip_norm);
  }
  out.applied = adam_step(opt, params, grads, model.config.optimizer.lr);
  if (!out.applied) out.failure = "non-finite gradient";
  return out;
}

class AbortCounter {
 public:
  void record(const StepOutcome& s, long epoch) {
    if (s.applied) {
      consecutive_ = 0;
      return;
    }
    ++total_;
    if (++consecutive_ > kMaxConsecutiveAborts) {
      std::ostringstream os;
      os << "training aborted at epoch " << epoch << " after " << consecutive_
         << " consecutive non-finite steps; last failure: " << s.failure;
      throw TrainingError(os.str());
    }
  }
  long total() const { return total_; }

 private:
  long consecutive_ = 0;
  long total_ = 0;
};

double seconds(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::vector<Matrix> snapshot(const ParameterList& params) {
  std::vector<Matrix> out;
  for (Parameter* p : params) out.push_back(p->value());
  return out;
}

void restore(const ParameterList& params, const std::vector<Matrix>& values) {
  for (std::size_t k = 0; k < params.size(); ++k) params[k]->value() = values[k];
}

/// Fisher-Yates on 0..n-1.
std::vector<Index> permutation(Index n, Rng& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& dir) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    out_.open(dir + "/metrics.jsonl", std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot write " + dir + "/metrics.jsonl");
  }
  void write(const EpochRecord& r) {
    if (out_.is_open()) out_ << to_jsonl(r) << "\n" << std::flush;
  }

 private:
  std::ofstream out_;
};

void emit(const TrainOptions& options, MetricsWriter& writer, TrainResult& result, const EpochRecord& rec) {
  result.metrics.push_back(rec);
  writer.write(rec);
  if (options.on_epoch) options.on_epoch(rec);
  if (options.log_every > 0 && rec.epoch % options.log_every == 0) {
    std::cerr << "epoch " << rec.epoch << " elbo " << rec.elbo_mean << " +- " << rec.elbo_se;
    if (rec.val_elbo) std::cerr << " val " << *rec.val_elbo;
    std::cerr << " (" << rec.wall_s << " s)\n";
  }
}

void train_unamortized(TrainResult& result, const TrainOptions& options, MetricsWriter& writer) {
  Model& model = result.model;
  const Config& cfg = model.config;
  const ParameterList params = model.trainable();
  const Rng stream(cfg.seed, 2);
  AbortCounter aborts;
  const auto t0 = Clock::now();
  for (long epoch = 1; epoch <= cfg.optimizer.max_epochs; ++epoch) {
    Rng rng = stream.split(static_cast<std::uint64_t>(epoch));
    model.stack->set_mode(Mode::train);
    const StepOutcome step = gradient_step(model, result.optimizer, params, [&](Tape& tape) {
      return elbo_estimate(*model.stack, *model.target, nullptr, rng, cfg.optimizer.samples_per_step, &tape);
    });
    aborts.record(step, epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    if (step.draws.size() > 0 && step.draws.allFinite()) {
      const EstimatorReport r = summarize(step.draws);
      rec.elbo_mean = r.value;
      rec.elbo_se = r.std_error;
    } else {
      rec.elbo_mean = std::numeric_limits<double>::quiet_NaN();
    }
    rec.wall_s = seconds(t0);
    emit(options, writer, result, rec);
  }
  model.stack->set_mode(Mode::eval);
  result.info.epoch = cfg.optimizer.max_epochs;
  result.info.best_epoch = cfg.optimizer.max_epochs;
  result.aborted_steps = aborts.total();
}

void train_image(TrainResult& result, const TrainOptions& options, MetricsWriter& writer,
                 const BinarizedImageDataset& data) {
  Model& model = result.model;
  const Config& cfg = model.config;
  const ParameterList params = model.trainable();
  const ParameterList all = model.parameters();
  const Rng step_stream(cfg.seed, 2);
  const Rng shuffle_stream(cfg.seed, 3);
  const Rng binarize_stream(cfg.seed, 4);
  const std::uint64_t val_seed = cfg.seed ^ 0x5EED5EEDULL;
  EarlyStopper stopper(cfg.optimizer.patience);
  std::vector<Matrix> best = snapshot(all);
  AbortCounter aborts;
  std::uint64_t global_step = 0;
  const auto t0 = Clock::now();
  long epoch = 0;
  for (epoch = 1; epoch <= cfg.optimizer.max_epochs; ++epoch) {
    Rng shuffle = shuffle_stream.split(static_cast<std::uint64_t>(epoch));
    const std::vector<Index> order = permutation(data.n_train(), shuffle);
    double sum = 0.0, sum_sq = 0.0;
    Index count = 0;
    model.stack->set_mode(Mode::train);
    for (Index start = 0; start < data.n_train(); start += cfg.optimizer.batch_size) {
      const Index rows = std::min(cfg.optimizer.batch_size, data.n_train() - start);
      if (rows < 2 && cfg.flow.batch_norm) continue;
      ++global_step;
      Rng bin = binarize_stream.split(global_step);
      Rng rng = step_stream.split(global_step);
      const std::vector<Index> idx(order.begin() + start, order.begin() + start + rows);
      const Tensor x(data.train_batch(idx, bin));
      const StepOutcome step = gradient_step(model, result.optimizer, params, [&](Tape& tape) {
        return elbo_estimate(*model.stack, *model.target, &x, rng, rows, &tape);
      });
      aborts.record(step, epoch);
      if (step.draws.size() > 0 && step.draws.allFinite()) {
        sum += step.draws.sum();
        sum_sq += step.draws.squaredNorm();
        count += step.draws.size();
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    if (count > 0) {
      rec.elbo_mean = sum / static_cast<double>(count);
      const double var = count > 1 ? (sum_sq - count * rec.elbo_mean * rec.elbo_mean) / (count - 1) : 0.0;
      rec.elbo_se = std::sqrt(std::max(var, 0.0) / static_cast<double>(count));
    } else {
      rec.elbo_mean = std::numeric_limits<double>::quiet_NaN();
    }
    const double val = validation_elbo(model, data.val(), val_seed);
    rec.val_elbo = val;
    rec.wall_s = seconds(t0);
    emit(options, writer, result, rec);
    const bool stop = stopper.update(epoch, std::isfinite(val) ? val : -std::numeric_limits<double>::infinity());
    if (stopper.improved()) best = snapshot(all);
    if (stop) break;
  }
  restore(all, best);
  model.stack->set_mode(Mode::eval);
  result.info.epoch = std::min(epoch, cfg.optimizer.max_epochs);
  result.info.best_epoch = stopper.best_epoch();
  result.info.best_metric = stopper.best();
  result.aborted_steps = aborts.total();
}

}  // namespace

std::string to_jsonl(const EpochRecord& r) {
  nlohmann::json j{{"epoch", r.epoch},
                   {"elbo_mean", std::isfinite(r.elbo_mean) ? nlohmann::json(r.elbo_mean) : nlohmann::json(nullptr)},
                   {"elbo_se", r.elbo_se},
                   {"wall_s", r.wall_s}};
  if (r.val_elbo) j["val_elbo"] = std::isfinite(*r.val_elbo) ? nlohmann::json(*r.val_elbo) : nlohmann::json(nullptr);
  return j.dump();
}

bool EarlyStopper::update(long epoch, double metric) {
  improved_ = metric > best_;
  if (improved_) {
    best_ = metric;
    best_epoch_ = epoch;
  }
  return epoch - best_epoch_ >= patience_;
}

BinarizedImageDataset load_dataset(const Config& config) {
  if (!config.data.cache.empty() && std::filesystem::exists(config.data.cache + "/dataset.json"))
    return load_dataset_cache(config.data.cache);
  IdxFile train = load_idx(config.data.train_idx);
  IdxFile test = load_idx(config.data.test_idx);
  if (train.magic != kIdxImageMagic || test.magic != kIdxImageMagic)
    throw std::runtime_error("data.train_idx and data.test_idx must be image files");
  if (train.dims[1] != train.dims[2]) throw std::runtime_error("images must be square");
  Matrix train_images = train.data;
  if (config.data.max_train > 0 && config.data.max_train < train_images.rows())
    train_images = train.data.topRows(config.data.max_train);
  BinarizedImageDataset data =
      downsample_binarize(train_images, test.data, train.dims[1], config.data.factor, config.seed);
  if (!config.data.cache.empty()) save_dataset_cache(data, config.data.cache);
  return data;
}

double validation_elbo(Model& model, const Matrix& data, std::uint64_t seed) {
  model.stack->set_mode(Mode::eval);
  try {
    return dataset_elbo(*model.target, *model.stack, data, Rng(seed, 5)).value;
  } catch (const NumericalError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

TrainResult train(const Config& config, const TrainOptions& options) {
  validate(config);
  std::optional<BinarizedImageDataset> owned;
  const BinarizedImageDataset* data = options.data;
  if (config.is_image() && data == nullptr) {
    owned.emplace(load_dataset(config));
    data = &*owned;
  }
  const auto t0 = Clock::now();
  TrainResult result{build_model(config, data ? data->dim() : 0), {}, {}, {}, 0, 0.0};
  result.info.data_dim = data ? data->dim() : 0;
  MetricsWriter writer(options.out_dir);
  if (config.is_image())
    train_image(result, options, writer, *data);
  else
    train_unamortized(result, options, writer);
  result.wall_s = seconds(t0);
  if (!options.out_dir.empty()) save_checkpoint(options.out_dir, result.model, result.optimizer, result.info);
  return result;
}

}  // namespace cifvi
