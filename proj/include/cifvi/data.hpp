#pragma once

#include "cifvi/rng.hpp"
#include "cifvi/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cifvi {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Contents of one IDX file. Images come back as n x (rows * cols) with
/// pixels scaled to [0, 1]; labels as n x 1 raw values.
struct IdxFile {
  std::uint32_t magic = 0;
  std::vector<Index> dims;
  Matrix data;
};

IdxFile parse_idx(const std::vector<unsigned char>& bytes, const std::string& origin = "<memory>");
IdxFile load_idx(const std::string& path);

/// Mean over non-overlapping factor x factor blocks of square images.
Matrix average_pool(const Matrix& images, Index side, int factor);

/// Independent Bernoulli(p) draw for every pixel.
Matrix binarize(const Matrix& greyscale, Rng& rng);

/// Downsampled digits. Training images stay greyscale when dynamic binarization
/// is on and are re-binarized on every access; validation and test images are
/// binarized once with a fixed seed.
class BinarizedImageDataset {
 public:
  BinarizedImageDataset(Matrix train, Matrix val, Matrix test, bool dynamic, std::uint64_t seed);

  Index dim() const { return train_.cols(); }
  Index n_train() const { return train_.rows(); }
  Index n_val() const { return val_.rows(); }
  Index n_test() const { return test_.rows(); }
  bool dynamic() const { return dynamic_; }
  std::uint64_t seed() const { return seed_; }

  /// Rows `indices` of the training split, binarized with `rng` when dynamic.
  Matrix train_batch(const std::vector<Index>& indices, Rng& rng) const;
  const Matrix& train_greyscale() const { return train_; }
  const Matrix& val() const { return val_; }
  const Matrix& test() const { return test_; }

 private:
  Matrix train_;
  Matrix val_;
  Matrix test_;
  bool dynamic_;
  std::uint64_t seed_;
};

/// Pools both files by `factor`, splits off the last 10% of the training
/// file as validation, and binarizes validation/test once with `seed`.
BinarizedImageDataset downsample_binarize(const Matrix& train_file, const Matrix& test_file, Index side, int factor,
                                          std::uint64_t seed, bool dynamic = true);

/// Cache layout: `<dir>/dataset.bin` holds train, val and test row-major as
/// little-endian f64; `<dir>/dataset.json` is {d, n_train, n_val, n_test, seed}.
void save_dataset_cache(const BinarizedImageDataset& data, const std::string& dir);
BinarizedImageDataset load_dataset_cache(const std::string& dir, bool dynamic = true);

}  // namespace cifvi
