#pragma once

#include "cifvi/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cifvi {

/// 8-bit greyscale PNG of `values`, min mapped to 0 and max to 255. Row 0 of
/// the matrix is the top image row.
std::vector<std::uint8_t> encode_greyscale_png(const Matrix& values);
void write_greyscale_png(const std::string& path, const Matrix& values);

}  // namespace cifvi
