#include "cifvi/data.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace cifvi {

namespace {

std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t at) {
  return (std::uint32_t(b[at]) << 24) | (std::uint32_t(b[at + 1]) << 16) | (std::uint32_t(b[at + 2]) << 8) |
         std::uint32_t(b[at + 3]);
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_le(std::ofstream& out, const Matrix& m) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

Matrix read_le(std::ifstream& in, Index rows, Index cols, const std::string& path) {
  Matrix m(rows, cols);
  const auto bytes = static_cast<std::streamsize>(m.size() * sizeof(double));
  in.read(reinterpret_cast<char*>(m.data()), bytes);
  if (in.gcount() != bytes) throw std::runtime_error(path + ": truncated dataset cache");
  return m;
}

}  // namespace

IdxFile parse_idx(const std::vector<unsigned char>& bytes, const std::string& origin) {
  if (bytes.size() < 4) throw std::runtime_error(origin + ": file too short for an IDX header");
  IdxFile f;
  f.magic = read_be32(bytes, 0);
  std::size_t ndims = 0;
  if (f.magic == kIdxImageMagic)
    ndims = 3;
  else if (f.magic == kIdxLabelMagic)
    ndims = 1;
  else
    throw std::runtime_error(origin + ": bad IDX magic " + std::to_string(f.magic));
  const std::size_t header = 4 + 4 * ndims;
  if (bytes.size() < header) throw std::runtime_error(origin + ": truncated IDX header");
  std::size_t payload = 1;
  for (std::size_t k = 0; k < ndims; ++k) {
    f.dims.push_back(static_cast<Index>(read_be32(bytes, 4 + 4 * k)));
    payload *= static_cast<std::size_t>(f.dims.back());
  }
  if (bytes.size() - header < payload)
    throw std::runtime_error(origin + ": truncated IDX payload, expected " + std::to_string(payload) +
                             " bytes, got " + std::to_string(bytes.size() - header));
  const Index n = f.dims[0];
  const Index width = ndims == 3 ? f.dims[1] * f.dims[2] : 1;
  f.data.resize(n, width);
  const double scale = ndims == 3 ? 1.0 / 255.0 : 1.0;
  for (Index i = 0; i < f.data.size(); ++i) f.data.data()[i] = bytes[header + static_cast<std::size_t>(i)] * scale;
  return f;
}

IdxFile load_idx(const std::string& path) { return parse_idx(read_file(path), path); }

Matrix average_pool(const Matrix& images, Index side, int factor) {
  if (factor != 1 && factor != 2 && factor != 4) throw std::invalid_argument("factor must be 1, 2 or 4");
  if (side % factor != 0) throw std::invalid_argument("image side not divisible by factor");
  if (images.cols() != side * side) throw ShapeError("images are not side x side");
  const Index out_side = side / factor;
  Matrix out(images.rows(), out_side * out_side);
  const double norm = 1.0 / (factor * factor);
  for (Index n = 0; n < images.rows(); ++n) {
    const Eigen::Map<const Matrix> img(images.row(n).data(), side, side);
    for (Index r = 0; r < out_side; ++r)
      for (Index c = 0; c < out_side; ++c)
        out(n, r * out_side + c) = img.block(r * factor, c * factor, factor, factor).sum() * norm;
  }
  return out;
}

Matrix binarize(const Matrix& greyscale, Rng& rng) {
  Matrix out(greyscale.rows(), greyscale.cols());
  for (Index i = 0; i < greyscale.size(); ++i) out.data()[i] = rng.bernoulli(greyscale.data()[i]) ? 1.0 : 0.0;
  return out;
}

BinarizedImageDataset::BinarizedImageDataset(Matrix train, Matrix val, Matrix test, bool dynamic,
                                             std::uint64_t seed)
    : train_(std::move(train)), val_(std::move(val)), test_(std::move(test)), dynamic_(dynamic), seed_(seed) {
  if (val_.cols() != train_.cols() || test_.cols() != train_.cols()) throw ShapeError("dataset splits differ in width");
}

Matrix BinarizedImageDataset::train_batch(const std::vector<Index>& indices, Rng& rng) const {
  Matrix batch(static_cast<Index>(indices.size()), dim());
  for (std::size_t k = 0; k < indices.size(); ++k) batch.row(static_cast<Index>(k)) = train_.row(indices[k]);
  return dynamic_ ? binarize(batch, rng) : batch;
}

BinarizedImageDataset downsample_binarize(const Matrix& train_file, const Matrix& test_file, Index side, int factor,
                                          std::uint64_t seed, bool dynamic) {
  Matrix train = average_pool(train_file, side, factor);
  Matrix test = average_pool(test_file, side, factor);
  const Index n_val = train.rows() / 10;
  const Index n_train = train.rows() - n_val;
  Rng rng(seed, 0xB1A);
  Matrix val = binarize(train.bottomRows(n_val), rng);
  Matrix test_bin = binarize(test, rng);
  Matrix train_part = train.topRows(n_train);
  if (!dynamic) train_part = binarize(train_part, rng);
  return BinarizedImageDataset(std::move(train_part), std::move(val), std::move(test_bin), dynamic, seed);
}

void save_dataset_cache(const BinarizedImageDataset& data, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream bin(dir + "/dataset.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write " + dir + "/dataset.bin");
  write_le(bin, data.train_greyscale());
  write_le(bin, data.val());
  write_le(bin, data.test());
  nlohmann::json manifest{{"d", data.dim()},
                          {"n_train", data.n_train()},
                          {"n_val", data.n_val()},
                          {"n_test", data.n_test()},
                          {"seed", data.seed()}};
  std::ofstream(dir + "/dataset.json") << manifest.dump(2) << "\n";
}

BinarizedImageDataset load_dataset_cache(const std::string& dir, bool dynamic) {
  std::ifstream mf(dir + "/dataset.json");
  if (!mf) throw std::runtime_error("cannot open " + dir + "/dataset.json");
  const auto manifest = nlohmann::json::parse(mf);
  const Index d = manifest.at("d").get<Index>();
  const std::string path = dir + "/dataset.bin";
  std::ifstream bin(path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + path);
  Matrix train = read_le(bin, manifest.at("n_train").get<Index>(), d, path);
  Matrix val = read_le(bin, manifest.at("n_val").get<Index>(), d, path);
  Matrix test = read_le(bin, manifest.at("n_test").get<Index>(), d, path);
  return BinarizedImageDataset(std::move(train), std::move(val), std::move(test), dynamic,
                               manifest.at("seed").get<std::uint64_t>());
}

}  // namespace cifvi
