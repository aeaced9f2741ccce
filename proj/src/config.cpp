#include "cifvi/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace cifvi {

namespace {

using nlohmann::json;

/// Reads fields of one JSON object, then complains about keys nobody asked for.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw std::invalid_argument(where_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument(where_ + "." + key + ": " + e.what());
    }
  }

  void get(const char* key, std::optional<double>& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if (j_.at(key).is_null()) {
      out.reset();
      return;
    }
    double v = 0;
    get(key, v);
    out = v;
  }

  const json* object(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw std::invalid_argument(where_ + ": unknown key \"" + k + "\"");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("config: " + what);
}

void require_widths(const std::vector<Index>& w, const std::string& what) {
  for (Index v : w) require(v > 0, what + " entries must be positive");
}

}  // namespace

void validate(const Config& c) {
  require(c.experiment == "mog" || c.experiment == "image" || c.experiment == "gaussian",
          "experiment must be mog, image or gaussian");
  if (c.is_mog()) require(c.target.K == 9 || c.target.K == 16, "target.K must be 9 or 16");
  require(c.target.dim > 0, "target.dim must be positive");
  require(c.target.sigma0 > 0, "target.sigma0 must be positive");
  require(c.flow.layers >= 0, "flow.layers must be non-negative");
  require_widths(c.flow.hidden, "flow.hidden");
  require(!(c.cif.enabled && c.flow.batch_norm), "cif.enabled and flow.batch_norm are mutually exclusive");
  require(c.cif.u_dim > 0, "cif.u_dim must be positive");
  require_widths(c.cif.net_hidden, "cif.net_hidden");
  require(c.optimizer.lr > 0, "optimizer.lr must be positive");
  require(!c.optimizer.clip_norm || *c.optimizer.clip_norm > 0, "optimizer.clip_norm must be positive or null");
  require(c.optimizer.max_epochs >= 0, "optimizer.max_epochs must be non-negative");
  require(c.optimizer.batch_size > 0, "optimizer.batch_size must be positive");
  require(c.optimizer.samples_per_step > 0, "optimizer.samples_per_step must be positive");
  require(c.optimizer.patience > 0, "optimizer.patience must be positive");
  require(c.eval.N > 0 && c.eval.M > 0 && c.eval.S > 0, "eval.N, eval.M and eval.S must be positive");
  if (c.flow.batch_norm) require(c.optimizer.samples_per_step >= 2 && c.optimizer.batch_size >= 2, "batch norm needs batches of at least 2");
  if (c.is_image()) {
    require(!c.data.cache.empty() || (!c.data.train_idx.empty() && !c.data.test_idx.empty()),
            "image runs need data.cache or data.train_idx and data.test_idx");
    require(c.data.factor == 1 || c.data.factor == 2 || c.data.factor == 4, "data.factor must be 1, 2 or 4");
    require(c.data.max_train >= 0, "data.max_train must be non-negative");
    require(c.data.latent_dim > 0, "data.latent_dim must be positive");
    require(c.data.feature_dim >= 0, "data.feature_dim must be non-negative");
    require_widths(c.data.decoder_hidden, "data.decoder_hidden");
    require_widths(c.data.encoder_hidden, "data.encoder_hidden");
    require_widths(c.data.feature_hidden, "data.feature_hidden");
  }
}

Config config_from_json(const json& j) {
  Config c;
  Reader top(j, "config");
  top.get("experiment", c.experiment);
  top.get("seed", c.seed);
  if (const json* t = top.object("target")) {
    Reader r(*t, "target");
    r.get("K", c.target.K);
    r.get("dim", c.target.dim);
    r.get("sigma0", c.target.sigma0);
    r.get("sigma0_trainable", c.target.sigma0_trainable);
    r.finish();
  }
  if (const json* f = top.object("flow")) {
    Reader r(*f, "flow");
    r.get("layers", c.flow.layers);
    r.get("hidden", c.flow.hidden);
    r.get("batch_norm", c.flow.batch_norm);
    r.finish();
  }
  if (const json* f = top.object("cif")) {
    Reader r(*f, "cif");
    r.get("enabled", c.cif.enabled);
    r.get("u_dim", c.cif.u_dim);
    r.get("net_hidden", c.cif.net_hidden);
    r.finish();
  }
  if (const json* f = top.object("optimizer")) {
    Reader r(*f, "optimizer");
    r.get("lr", c.optimizer.lr);
    r.get("clip_norm", c.optimizer.clip_norm);
    r.get("max_epochs", c.optimizer.max_epochs);
    r.get("batch_size", c.optimizer.batch_size);
    r.get("samples_per_step", c.optimizer.samples_per_step);
    r.get("patience", c.optimizer.patience);
    r.finish();
  }
  if (const json* f = top.object("eval")) {
    Reader r(*f, "eval");
    r.get("N", c.eval.N);
    r.get("M", c.eval.M);
    r.get("S", c.eval.S);
    r.finish();
  }
  if (const json* f = top.object("data")) {
    Reader r(*f, "data");
    r.get("train_idx", c.data.train_idx);
    r.get("test_idx", c.data.test_idx);
    r.get("cache", c.data.cache);
    r.get("factor", c.data.factor);
    r.get("max_train", c.data.max_train);
    r.get("latent_dim", c.data.latent_dim);
    r.get("decoder_hidden", c.data.decoder_hidden);
    r.get("encoder_hidden", c.data.encoder_hidden);
    r.get("feature_dim", c.data.feature_dim);
    r.get("feature_hidden", c.data.feature_hidden);
    r.finish();
  }
  top.finish();
  validate(c);
  return c;
}

json config_to_json(const Config& c) {
  json clip = c.optimizer.clip_norm ? json(*c.optimizer.clip_norm) : json(nullptr);
  return json{
      {"experiment", c.experiment},
      {"seed", c.seed},
      {"target",
       {{"K", c.target.K}, {"dim", c.target.dim}, {"sigma0", c.target.sigma0},
        {"sigma0_trainable", c.target.sigma0_trainable}}},
      {"flow", {{"layers", c.flow.layers}, {"hidden", c.flow.hidden}, {"batch_norm", c.flow.batch_norm}}},
      {"cif", {{"enabled", c.cif.enabled}, {"u_dim", c.cif.u_dim}, {"net_hidden", c.cif.net_hidden}}},
      {"optimizer",
       {{"lr", c.optimizer.lr},
        {"clip_norm", clip},
        {"max_epochs", c.optimizer.max_epochs},
        {"batch_size", c.optimizer.batch_size},
        {"samples_per_step", c.optimizer.samples_per_step},
        {"patience", c.optimizer.patience}}},
      {"eval", {{"N", c.eval.N}, {"M", c.eval.M}, {"S", c.eval.S}}},
      {"data",
       {{"train_idx", c.data.train_idx},
        {"test_idx", c.data.test_idx},
        {"cache", c.data.cache},
        {"factor", c.data.factor},
        {"max_train", c.data.max_train},
        {"latent_dim", c.data.latent_dim},
        {"decoder_hidden", c.data.decoder_hidden},
        {"encoder_hidden", c.data.encoder_hidden},
        {"feature_dim", c.data.feature_dim},
        {"feature_hidden", c.data.feature_hidden}}},
  };
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace cifvi
