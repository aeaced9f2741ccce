#include "cifvi/png.hpp"

#include <zlib.h>

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace cifvi {

namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_be32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

std::vector<std::uint8_t> encode_greyscale_png(const Matrix& values) {
  if (values.size() == 0) throw std::invalid_argument("png: empty image");
  const double lo = values.minCoeff();
  const double hi = values.maxCoeff();
  const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;

  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(values.rows() * (values.cols() + 1)));
  for (Index r = 0; r < values.rows(); ++r) {
    raw.push_back(0);  // filter: none
    for (Index c = 0; c < values.cols(); ++c)
      raw.push_back(static_cast<std::uint8_t>(std::lround((values(r, c) - lo) * scale)));
  }
  uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> packed(packed_size);
  if (compress(packed.data(), &packed_size, raw.data(), static_cast<uLong>(raw.size())) != Z_OK)
    throw std::runtime_error("png: compression failed");
  packed.resize(packed_size);

  std::vector<std::uint8_t> out{0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  std::vector<std::uint8_t> header;
  put_be32(header, static_cast<std::uint32_t>(values.cols()));
  put_be32(header, static_cast<std::uint32_t>(values.rows()));
  header.insert(header.end(), {8, 0, 0, 0, 0});  // depth 8, greyscale
  put_chunk(out, "IHDR", header);
  put_chunk(out, "IDAT", packed);
  put_chunk(out, "IEND", {});
  return out;
}

void write_greyscale_png(const std::string& path, const Matrix& values) {
  const auto bytes = encode_greyscale_png(values);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace cifvi
