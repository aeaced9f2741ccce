#include "cifvi/data.hpp"
#include "cifvi/targets.hpp"
#include "fixtures.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace cifvi;
using namespace cifvi::test;

namespace {

bool has_mean(const MixtureOfGaussiansTarget& t, double a, double b) {
  for (Index k = 0; k < t.num_components(); ++k)
    if (t.means()(k, 0) == a && t.means()(k, 1) == b) return true;
  return false;
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<unsigned char>((v >> s) & 0xFF));
}

std::vector<unsigned char> idx_images(std::uint32_t n, std::uint32_t side, std::size_t payload) {
  std::vector<unsigned char> b;
  put_u32(b, kIdxImageMagic);
  put_u32(b, n);
  put_u32(b, side);
  put_u32(b, side);
  for (std::size_t i = 0; i < payload; ++i) b.push_back(static_cast<unsigned char>(i % 256));
  return b;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("cifvi_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE("targets-data") {

TEST_CASE("mixture lattices") {
  const auto k9 = mog_lattice(9);
  CHECK(k9.num_components() == 9);
  CHECK(has_mean(k9, 0, 0));
  CHECK(has_mean(k9, -2, 2));
  const auto k16 = mog_lattice(16);
  CHECK(k16.num_components() == 16);
  CHECK(has_mean(k16, -3, -3));
  CHECK(has_mean(k16, 1, 3));
  CHECK_FALSE(has_mean(k16, 0, 0));
  CHECK(k9.stddev() == 0.25);
  CHECK(k16.stddev() == 0.25);
  CHECK_THROWS_AS(mog_lattice(4), std::invalid_argument);
}

TEST_CASE("mixture log_joint values") {
  const auto t = mog_lattice(9);
  // Centre component plus four neighbours at distance 2; the rest are below 1e-50.
  const double centre = std::log((1 + 4 * std::exp(-32.0)) / 9) + std::log(16 / (2 * std::numbers::pi));
  CHECK(t.log_joint(nullptr, Tensor::row({0, 0}), nullptr).item() == doctest::Approx(centre).epsilon(1e-14));
  CHECK(std::abs(centre + 1.262558) < 1e-4);
  // Only the (2, 2) component matters: log(1/9) + log N(z; (2, 2), I/16).
  const double far = std::log(1.0 / 9) - std::log(2 * std::numbers::pi / 16) - 8.0 * 128;
  CHECK(t.log_joint(nullptr, Tensor::row({10, 10}), nullptr).item() == doctest::Approx(far).epsilon(1e-12));
  CHECK(far == doctest::Approx(-1025.26).epsilon(1e-5));
  CHECK(std::isfinite(t.log_joint(nullptr, Tensor::row({1e6, -1e6}), nullptr).item()));

  Rng rng(1);
  const Matrix z = uniform_matrix(rng, 200, 2, -4, 4);
  CHECK(t.log_joint(nullptr, Tensor(z), nullptr).value() == t.log_joint(nullptr, Tensor(Matrix(-z)), nullptr).value());
  CHECK(input_grad_error([&](const std::vector<Tensor>& in) { return t.log_joint(nullptr, in[0], nullptr); },
                         {uniform_matrix(rng, 5, 2, -3, 3)}) < 1e-6);
}

TEST_CASE("mixture integrates to one") {
  for (int k : {9, 16}) {
    const auto t = mog_lattice(k);
    const Index n = 640;
    const RowVector axis = RowVector::LinSpaced(n + 1, -8, 8);
    Matrix grid((n + 1) * (n + 1), 2);
    for (Index i = 0; i <= n; ++i)
      for (Index j = 0; j <= n; ++j) grid.row(i * (n + 1) + j) << axis(i), axis(j);
    const Matrix p = t.log_joint(nullptr, Tensor(grid), nullptr).value().array().exp().matrix();
    const double h = 16.0 / n;
    double total = 0;
    for (Index i = 0; i <= n; ++i)
      for (Index j = 0; j <= n; ++j) {
        const double wi = (i == 0 || i == n) ? 0.5 : 1.0, wj = (j == 0 || j == n) ? 0.5 : 1.0;
        total += wi * wj * p(i * (n + 1) + j, 0);
      }
    CHECK(std::abs(total * h * h - 1.0) < 1e-3);
  }
}

TEST_CASE("latent Bernoulli model") {
  Rng rng(2);
  LatentBernoulliModel model(2, 4, {5}, rng);
  set_constant_output(model.decoder(), RowVector::Zero(4));
  const Tensor ones(Matrix::Ones(1, 4));
  CHECK(model.log_joint(&ones, Tensor::row({0, 0}), nullptr).item() == doctest::Approx(-4.610466).epsilon(1e-6));

  LatentBernoulliModel random(3, 6, {8}, rng);
  ParameterList params;
  random.collect(params);
  randomize(params, rng, 1.0);
  const Matrix x = (rng.uniform(10, 6).array() < 0.5).cast<double>().matrix();
  const Tensor xt(x);
  const Matrix z = rng.normal(10, 3);
  const Matrix prior = log_prob(DiagonalGaussian{Tensor(Matrix::Zero(1, 3)), Tensor(Matrix::Zero(1, 3))}, Tensor(z)).value();
  CHECK((random.log_joint(&xt, Tensor(z), nullptr).value().array() <= prior.array()).all());
  CHECK(input_grad_error([&](const std::vector<Tensor>& in) { return random.log_joint(&xt, in[0], nullptr); }, {z}) < 1e-6);
  CHECK(param_grad_error(params, [&](Tape* t) { return sum(random.log_joint(&xt, Tensor(z), t)); }) < 1e-6);

  // Extreme logits stay finite.
  set_constant_output(random.decoder(), RowVector::Constant(6, 800.0));
  CHECK(random.log_joint(&xt, Tensor(z), nullptr).value().allFinite());

  const Tensor bad(Matrix::Constant(10, 6, 1.5));
  CHECK_THROWS_AS(random.log_joint(&bad, Tensor(z), nullptr), std::invalid_argument);
  CHECK_THROWS_AS(random.log_joint(nullptr, Tensor(z), nullptr), std::invalid_argument);
}

TEST_CASE("IDX parsing") {
  const auto bytes = idx_images(2, 28, 2 * 784);
  const IdxFile f = parse_idx(bytes);
  CHECK(f.magic == kIdxImageMagic);
  CHECK(f.dims == std::vector<Index>{2, 28, 28});
  CHECK(f.data.rows() == 2);
  CHECK(f.data.cols() == 784);
  CHECK(f.data(0, 0) == 0.0);
  CHECK(f.data(0, 255) == 1.0);

  std::vector<unsigned char> labels;
  put_u32(labels, kIdxLabelMagic);
  put_u32(labels, 3);
  labels.insert(labels.end(), {7, 0, 9});
  const IdxFile l = parse_idx(labels);
  CHECK(l.data.rows() == 3);
  CHECK(l.data(2, 0) == 9.0);

  try {
    parse_idx(idx_images(2, 28, 1000));
    FAIL("expected truncation error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("1568") != std::string::npos);
    CHECK(msg.find("1000") != std::string::npos);
  }
  auto bad = bytes;
  bad[3] = 0x05;
  CHECK_THROWS_AS(parse_idx(bad), std::runtime_error);

  const auto dir = scratch_dir("idx");
  const auto path = (dir / "images.idx").string();
  std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                               static_cast<std::streamsize>(bytes.size()));
  CHECK(load_idx(path).data == f.data);
  CHECK_THROWS(load_idx((dir / "missing").string()));
}

TEST_CASE("pooling and binarization") {
  Rng rng(3);
  const Matrix images = rng.uniform(3, 784);
  const Matrix pooled = average_pool(images, 28, 4);
  CHECK(pooled.cols() == 49);
  CHECK(pooled(1, 0) == doctest::Approx(images.row(1).reshaped(28, 28).topLeftCorner(4, 4).mean()).epsilon(1e-14));
  CHECK(average_pool(images, 28, 1) == images);
  CHECK_THROWS(average_pool(images, 28, 3));

  const Matrix zero = Matrix::Zero(2, 49);
  CHECK(binarize(zero, rng) == zero);
  const Matrix p = Matrix::Constant(1, 10000, 0.3);
  CHECK(std::abs(binarize(p, rng).mean() - 0.3) < 0.02);
}

TEST_CASE("dataset splits and cache") {
  Rng rng(4);
  const Matrix train = rng.uniform(50, 784), test = rng.uniform(20, 784);
  const BinarizedImageDataset d = downsample_binarize(train, test, 28, 4, 99);
  CHECK(d.n_train() == 45);
  CHECK(d.n_val() == 5);
  CHECK(d.n_test() == 20);
  CHECK(d.dim() == 49);
  CHECK(d.val() == d.val().array().round().matrix());
  CHECK(d.train_greyscale().row(0) == average_pool(train.topRows(1), 28, 4));
  // Validation is the last tenth of the file, binarized the same way every time.
  CHECK(downsample_binarize(train, test, 28, 4, 99).val() == d.val());

  Rng a(1), b(2);
  const Matrix ba = d.train_batch({0, 1, 2}, a), bb = d.train_batch({0, 1, 2}, b);
  CHECK(ba == ba.array().round().matrix());
  CHECK(ba != bb);

  const auto dir = scratch_dir("cache").string();
  save_dataset_cache(d, dir);
  const auto manifest = nlohmann::json::parse(std::ifstream(dir + "/dataset.json"));
  CHECK(manifest["d"] == 49);
  CHECK(manifest["n_train"] == 45);
  CHECK(manifest["n_val"] == 5);
  CHECK(manifest["n_test"] == 20);
  CHECK(manifest["seed"] == 99);
  const BinarizedImageDataset r = load_dataset_cache(dir);
  CHECK(r.train_greyscale() == d.train_greyscale());
  CHECK(r.val() == d.val());
  CHECK(r.test() == d.test());
  CHECK(std::filesystem::file_size(dir + "/dataset.bin") == (45 + 5 + 20) * 49 * sizeof(double));
}

}  // TEST_SUITE
