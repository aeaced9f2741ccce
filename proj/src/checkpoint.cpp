#include "cifvi/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace cifvi {

namespace {

using nlohmann::json;

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

json matrix_json(const Matrix& m) { return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", base64_encode(m)}}; }

Matrix matrix_from_json(const json& j) {
  return base64_decode(j.at("data").get<std::string>(), j.at("rows").get<Index>(), j.at("cols").get<Index>());
}

json moments_json(const std::map<std::string, Matrix>& m) {
  json out = json::object();
  for (const auto& [k, v] : m) out[k] = matrix_json(v);
  return out;
}

std::map<std::string, Matrix> moments_from_json(const json& j) {
  std::map<std::string, Matrix> out;
  for (const auto& [k, v] : j.items()) out[k] = matrix_from_json(v);
  return out;
}

}  // namespace

std::string base64_encode(const Matrix& m) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
  const std::size_t n = static_cast<std::size_t>(m.size()) * sizeof(double);
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  for (std::size_t i = 0; i < n; i += 3) {
    std::uint32_t chunk = std::uint32_t(bytes[i]) << 16;
    if (i + 1 < n) chunk |= std::uint32_t(bytes[i + 1]) << 8;
    if (i + 2 < n) chunk |= bytes[i + 2];
    out += kAlphabet[(chunk >> 18) & 63];
    out += kAlphabet[(chunk >> 12) & 63];
    out += i + 1 < n ? kAlphabet[(chunk >> 6) & 63] : '=';
    out += i + 2 < n ? kAlphabet[chunk & 63] : '=';
  }
  return out;
}

Matrix base64_decode(const std::string& text, Index rows, Index cols) {
  std::vector<unsigned char> bytes;
  bytes.reserve(text.size() / 4 * 3);
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=') break;
    const int v = decode_char(c);
    if (v < 0) throw std::runtime_error("base64: invalid character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      bytes.push_back(static_cast<unsigned char>((acc >> bits) & 0xFF));
    }
  }
  Matrix m(rows, cols);
  const std::size_t expected = static_cast<std::size_t>(m.size()) * sizeof(double);
  if (bytes.size() != expected)
    throw std::runtime_error("base64: expected " + std::to_string(expected) + " bytes, got " +
                             std::to_string(bytes.size()));
  if (expected > 0) std::memcpy(m.data(), bytes.data(), expected);
  return m;
}

void save_checkpoint(const std::string& dir, Model& model, const AdamState& optimizer, const CheckpointInfo& info) {
  std::filesystem::create_directories(dir);
  json params = json::object();
  for (Parameter* p : model.parameters()) {
    json entry = matrix_json(p->value());
    entry["trainable"] = p->trainable();
    params[p->name()] = std::move(entry);
  }
  json j{{"config", config_to_json(model.config)},
         {"epoch", info.epoch},
         {"best_epoch", info.best_epoch},
         {"best_metric", std::isfinite(info.best_metric) ? json(info.best_metric) : json(nullptr)},
         {"data_dim", info.data_dim},
         {"parameters", std::move(params)},
         {"optimizer",
          {{"step", optimizer.step},
           {"skipped", optimizer.skipped},
           {"m", moments_json(optimizer.m)},
           {"v", moments_json(optimizer.v)}}}};
  const std::string path = dir + "/checkpoint.json";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump() << "\n";
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::string file = path;
  if (std::filesystem::is_directory(path)) file = path + "/checkpoint.json";
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open checkpoint " + file);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(file + ": " + e.what());
  }
  LoadedCheckpoint ck{build_model(config_from_json(j.at("config")), j.at("data_dim").get<Index>()), {}, {}};
  ck.info.epoch = j.at("epoch").get<long>();
  ck.info.best_epoch = j.at("best_epoch").get<long>();
  if (!j.at("best_metric").is_null()) ck.info.best_metric = j.at("best_metric").get<double>();
  ck.info.data_dim = j.at("data_dim").get<Index>();
  const json& params = j.at("parameters");
  for (Parameter* p : ck.model.parameters()) {
    if (!params.contains(p->name())) throw std::runtime_error(file + ": missing parameter " + p->name());
    Matrix v = matrix_from_json(params.at(p->name()));
    if (v.rows() != p->value().rows() || v.cols() != p->value().cols())
      throw std::runtime_error(file + ": parameter " + p->name() + " has the wrong shape");
    p->value() = std::move(v);
  }
  const json& opt = j.at("optimizer");
  ck.optimizer.step = opt.at("step").get<long>();
  ck.optimizer.skipped = opt.at("skipped").get<long>();
  ck.optimizer.m = moments_from_json(opt.at("m"));
  ck.optimizer.v = moments_from_json(opt.at("v"));
  return ck;
}

}  // namespace cifvi
