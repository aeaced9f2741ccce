#include "cifvi/checkpoint.hpp"
#include "cifvi/config.hpp"
#include "cifvi/estimators.hpp"
#include "cifvi/kde.hpp"
#include "cifvi/model.hpp"
#include "cifvi/optim.hpp"
#include "cifvi/png.hpp"
#include "cifvi/train.hpp"
#include "fixtures.hpp"

#include <doctest.h>
#include <json.hpp>
#include <zlib.h>

#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace cifvi;
using namespace cifvi::test;
using nlohmann::json;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("cifvi_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

struct Run {
  int code;
  std::string output;
};

/// Runs the command line tool with `args`, capturing stdout and stderr.
Run cli(const std::string& args) {
  const std::string cmd = std::string(CIFVI_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe) != nullptr) out += buf.data();
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

json last_json_line(const std::string& text) {
  std::istringstream in(text);
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty() && line.front() == '{') last = line;
  return json::parse(last);
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Config small_mog(long epochs) {
  Config c;
  c.experiment = "mog";
  c.seed = 3;
  c.flow.layers = 2;
  c.flow.hidden = {8, 8};
  c.optimizer.max_epochs = epochs;
  c.optimizer.samples_per_step = 64;
  return c;
}

}  // namespace

TEST_SUITE("train-cli") {

TEST_CASE("Adam updates") {
  Parameter theta("theta", Matrix::Zero(1, 1));
  ParameterList params{&theta};
  AdamState s;
  CHECK(adam_step(s, params, {Matrix::Ones(1, 1)}, 1e-3));
  CHECK(theta.value()(0, 0) == doctest::Approx(-0.000999999990).epsilon(1e-12));
  const double after_one = std::abs(theta.value()(0, 0));
  CHECK(adam_step(s, params, {-Matrix::Ones(1, 1)}, 1e-3));
  CHECK(std::abs(theta.value()(0, 0)) < after_one);
  CHECK(s.step == 2);

  Parameter phi("phi", Matrix::Constant(1, 2, 0.5));
  ParameterList p2{&phi};
  AdamState z;
  adam_step(z, p2, {Matrix::Constant(1, 2, 2.0)}, 1e-3);
  const Matrix m1 = z.m["phi"], v1 = z.v["phi"], value = phi.value();
  adam_step(z, p2, {Matrix::Zero(1, 2)}, 1e-3);
  CHECK(z.m["phi"] == (0.9 * m1).eval());
  CHECK(z.v["phi"] == (0.999 * v1).eval());
  // Bias-corrected moments keep moving the parameter a little; a pure zero
  // gradient from the start leaves it fixed.
  AdamState fresh;
  Parameter still("still", Matrix::Constant(1, 2, 0.5));
  adam_step(fresh, {&still}, {Matrix::Zero(1, 2)}, 1e-3);
  CHECK(still.value() == Matrix::Constant(1, 2, 0.5));

  Matrix nan = Matrix::Ones(1, 2);
  nan(0, 1) = std::nan("");
  CHECK_FALSE(adam_step(fresh, {&still}, {nan}, 1e-3));
  CHECK(fresh.skipped == 1);
  CHECK(still.value() == Matrix::Constant(1, 2, 0.5));
  CHECK_THROWS(adam_step(fresh, {&still}, {Matrix::Zero(2, 2)}, 1e-3));

  Parameter frozen("frozen", Matrix::Ones(1, 1), false);
  adam_step(fresh, {&frozen}, {Matrix::Ones(1, 1)}, 1e-3);
  CHECK(frozen.value()(0, 0) == 1.0);
}

TEST_CASE("global-norm clipping") {
  std::vector<Matrix> g{(Matrix(1, 2) << 6, 0).finished(), (Matrix(1, 1) << 8).finished()};
  const std::vector<Matrix> before = g;
  CHECK(clip_global_norm(g, 5.0) == doctest::Approx(10.0).epsilon(1e-15));
  CHECK(std::abs(global_norm(g) - 5.0) < 1e-12);
  CHECK(g[0](0, 0) == doctest::Approx(0.5 * before[0](0, 0)).epsilon(1e-15));
  CHECK(g[1](0, 0) == doctest::Approx(0.5 * before[1](0, 0)).epsilon(1e-15));

  std::vector<Matrix> small{(Matrix(1, 2) << 3, 0).finished()};
  clip_global_norm(small, 5.0);
  CHECK(small[0] == (Matrix(1, 2) << 3, 0).finished());
}

TEST_CASE("early stopping") {
  EarlyStopper stop(50);
  long halted = -1;
  for (long epoch = 1; epoch <= 200; ++epoch) {
    const double metric = -std::abs(double(epoch) - 10.0);
    if (stop.update(epoch, metric)) {
      halted = epoch;
      break;
    }
  }
  CHECK(halted == 60);
  CHECK(stop.best_epoch() == 10);
  CHECK(stop.best() == 0.0);
}

TEST_CASE("config parsing") {
  const Config defaults = config_from_json(json::object());
  CHECK(defaults.optimizer.lr == 1e-3);
  CHECK(defaults.optimizer.samples_per_step == 1000);
  CHECK(defaults.optimizer.patience == 50);
  CHECK(defaults.flow.layers == 5);
  CHECK(defaults.eval.N == 10000);
  CHECK(defaults.eval.M == 100);
  CHECK(defaults.eval.S == 1000);
  CHECK_FALSE(defaults.optimizer.clip_norm.has_value());

  const Config c = config_from_json(json::parse(R"({"seed": 4, "target": {"K": 16, "sigma0_trainable": true},
      "optimizer": {"clip_norm": 5}})"));
  CHECK(c.seed == 4);
  CHECK(c.target.K == 16);
  CHECK(*c.optimizer.clip_norm == 5.0);
  CHECK(config_to_json(config_from_json(config_to_json(c))) == config_to_json(c));

  CHECK_THROWS_AS(config_from_json(json::parse(R"({"optimiser": {}})")), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"flow": {"layer": 3}})")), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"flow": {"batch_norm": true}})")), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"optimizer": {"lr": -1}})")), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"target": {"K": 4}})")), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"experiment": "image"})")), std::invalid_argument);
}

TEST_CASE("L = 0 Gaussian run reaches the exact posterior") {
  Config c;
  c.experiment = "gaussian";
  c.target.dim = 2;
  c.target.sigma0 = 3.0;
  c.target.sigma0_trainable = true;
  c.flow.layers = 0;
  c.cif.enabled = false;
  c.optimizer.lr = 1e-2;
  c.optimizer.max_epochs = 2000;
  const TrainResult r = train(c);
  CHECK(r.metrics.size() == 2000);
  CHECK(std::abs(r.metrics.back().elbo_mean) < 0.02);
  CHECK(std::abs(elbo_report(*r.model.stack, *r.model.target, 10000, Rng(1)).value) < 0.02);
}

TEST_CASE("training is deterministic and checkpoints round-trip") {
  const auto dir_a = scratch_dir("run_a"), dir_b = scratch_dir("run_b");
  Config c = small_mog(30);
  c.optimizer.clip_norm = 1.0;
  TrainOptions oa, ob;
  oa.out_dir = dir_a.string();
  ob.out_dir = dir_b.string();
  TrainResult a = train(c, oa);
  const TrainResult b = train(c, ob);
  REQUIRE(a.metrics.size() == 30);
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    CHECK(a.metrics[i].epoch == static_cast<long>(i + 1));
    CHECK(a.metrics[i].elbo_mean == b.metrics[i].elbo_mean);
    CHECK(a.metrics[i].elbo_se == b.metrics[i].elbo_se);
  }

  // metrics.jsonl: one record per epoch, numbered 1..30.
  std::ifstream log(dir_a / "metrics.jsonl");
  std::string line;
  long expected = 1;
  while (std::getline(log, line)) {
    const json rec = json::parse(line);
    CHECK(rec["epoch"] == expected++);
    CHECK(rec.contains("elbo_mean"));
    CHECK(rec.contains("elbo_se"));
    CHECK(rec.contains("wall_s"));
  }
  CHECK(expected == 31);

  LoadedCheckpoint loaded = load_checkpoint(dir_a.string());
  CHECK(loaded.info.epoch == 30);
  CHECK(loaded.optimizer.step == a.optimizer.step);
  CHECK(loaded.optimizer.m == a.optimizer.m);
  const ParameterList pa = a.model.parameters(), pl = loaded.model.parameters();
  REQUIRE(pa.size() == pl.size());
  for (std::size_t k = 0; k < pa.size(); ++k) {
    CHECK(pa[k]->name() == pl[k]->name());
    CHECK(pa[k]->value() == pl[k]->value());
  }
  const Rng stream(12);
  CHECK(elbo_report(*loaded.model.stack, *loaded.model.target, 500, stream).value ==
        elbo_report(*a.model.stack, *a.model.target, 500, stream).value);
  CHECK_THROWS(load_checkpoint((dir_a / "missing").string()));
}

TEST_CASE("base64 round trip") {
  Rng rng(1);
  const Matrix m = rng.normal(3, 5);
  CHECK(base64_decode(base64_encode(m), 3, 5) == m);
  CHECK(base64_encode(Matrix::Zero(1, 1)) == "AAAAAAAAAAA=");
  CHECK_THROWS(base64_decode(base64_encode(m), 2, 5));
}

TEST_CASE("image training on a synthetic dataset") {
  Rng rng(2);
  const Matrix train_grey = rng.uniform(120, 49), test_grey = rng.uniform(30, 49);
  const BinarizedImageDataset data(train_grey.topRows(100), binarize(train_grey.bottomRows(20), rng),
                                   binarize(test_grey, rng), true, 5);
  Config c;
  c.experiment = "image";
  c.data.cache = "unused";
  c.flow.layers = 2;
  c.flow.hidden = {16};
  c.cif.u_dim = 2;
  c.optimizer.max_epochs = 4;
  c.optimizer.batch_size = 25;
  c.optimizer.patience = 2;
  TrainOptions opts;
  opts.data = &data;
  TrainResult r = train(c, opts);
  REQUIRE(!r.metrics.empty());
  CHECK(r.metrics.size() <= 4);
  for (const auto& m : r.metrics) CHECK(m.val_elbo.has_value());
  CHECK(r.model.stack->amortized());
  const double final_val = validation_elbo(r.model, data.val(), c.seed ^ 0x5EED5EEDULL);
  CHECK(final_val == doctest::Approx(r.info.best_metric).epsilon(1e-12));
}

TEST_CASE("KDE density grid") {
  SUBCASE("single kernel") {
    const Matrix s = Matrix::Zero(1, 2);
    const GridSpec g{-1, 1, -1, 1, 101};
    const double h = 0.2;
    const Matrix d = kde_density_grid(s, g, RowVector::Constant(2, h));
    CHECK(std::abs(grid_x(g, 50)) < 1e-15);
    CHECK(d(50, 50) == doctest::Approx(1 / (2 * std::numbers::pi * h * h)).epsilon(1e-12));
  }
  SUBCASE("mode and normalisation") {
    Rng rng(3);
    const Matrix s = 0.5 * rng.normal(20000, 2);
    const GridSpec g;
    const Matrix d = kde_density_grid(s, g);
    Index bi = 0, bj = 0;
    d.maxCoeff(&bi, &bj);
    CHECK(std::abs(grid_x(g, bi)) < 0.05);
    CHECK(std::abs(grid_y(g, bj)) < 0.05);
    CHECK(std::abs(d.sum() * cell_area(g) - 1.0) < 0.02);
    const RowVector h = scott_bandwidth(s);
    CHECK(h(0) == doctest::Approx(std::pow(20000.0, -1.0 / 6) * 0.5).epsilon(0.02));
  }
  SUBCASE("degenerate samples use the floor") {
    const Matrix s = Matrix::Ones(10, 2);
    CHECK(scott_bandwidth(s) == RowVector::Constant(2, kBandwidthFloor));
    CHECK_THROWS(scott_bandwidth(Matrix::Ones(1, 2)));
  }
  SUBCASE("csv") {
    const auto dir = scratch_dir("kde");
    const GridSpec g{0, 1, 0, 1, 2};
    write_grid_csv((dir / "g.csv").string(), g, Matrix::Ones(2, 2));
    const std::string text = read_file(dir / "g.csv");
    CHECK(text.rfind("x,y,density\n0.25,0.25,1\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);
  }
}

TEST_CASE("greyscale PNG") {
  const Matrix v = (Matrix(2, 3) << 0, 1, 2, 3, 4, 5).finished();
  const std::vector<std::uint8_t> png = encode_greyscale_png(v);
  const std::array<std::uint8_t, 8> sig{0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  CHECK(std::equal(sig.begin(), sig.end(), png.begin()));
  auto be32 = [&](std::size_t at) {
    return (std::uint32_t(png[at]) << 24) | (std::uint32_t(png[at + 1]) << 16) | (std::uint32_t(png[at + 2]) << 8) |
           std::uint32_t(png[at + 3]);
  };
  CHECK(std::string(png.begin() + 12, png.begin() + 16) == "IHDR");
  CHECK(be32(16) == 3);  // width
  CHECK(be32(20) == 2);  // height
  CHECK(png[24] == 8);   // bit depth
  CHECK(png[25] == 0);   // greyscale
  // IHDR CRC.
  CHECK(be32(29) == crc32(0, png.data() + 12, 17));

  const std::size_t idat = 33;
  REQUIRE(std::string(png.begin() + idat + 4, png.begin() + idat + 8) == "IDAT");
  const std::uint32_t len = be32(idat);
  std::vector<std::uint8_t> raw(2 * 4);
  uLongf raw_len = raw.size();
  REQUIRE(uncompress(raw.data(), &raw_len, png.data() + idat + 8, len) == Z_OK);
  CHECK(raw_len == 8);
  CHECK(raw[0] == 0);  // filter byte
  CHECK(raw[1] == 0);
  CHECK(raw[2] == 51);
  CHECK(raw[7] == 255);
}

TEST_CASE("command line interface") {
  const auto dir = scratch_dir("cli");
  const std::string d = dir.string();

  const Run none = cli("");
  CHECK(none.code == 1);
  CHECK(none.output.find("Usage") != std::string::npos);
  CHECK(cli("frobnicate").code == 1);
  CHECK(cli("eval-elbo").code == 1);
  CHECK(cli("eval-elbo --ckpt " + d + "/nowhere").code == 1);
  CHECK(cli("sample --ckpt " + d + " --n -3 --out x.csv").code == 1);

  std::ofstream(dir / "typo.json") << R"({"optimiser": {"lr": 0.1}})";
  const Run typo = cli("train --config " + d + "/typo.json --out " + d + "/typo");
  CHECK(typo.code == 1);
  CHECK(typo.output.find("optimiser") != std::string::npos);

  // Untrained model with q_u zeroed as well: st, q_u and r_u all at zero
  // initialisation, so every importance weight equals q_Z(z).
  {
    std::ofstream(dir / "small.json") << config_to_json(small_mog(3)).dump();
    const Run train_run = cli("train --config " + d + "/small.json --out " + d + "/small");
    REQUIRE(train_run.code == 0);
    CHECK(std::filesystem::exists(dir / "small" / "checkpoint.json"));
    CHECK(std::filesystem::exists(dir / "small" / "metrics.jsonl"));
    CHECK(last_json_line(train_run.output)["epochs"] == 3);

    Model degenerate = build_model(small_mog(0));
    for (Index l = 0; l < degenerate.stack->num_layers(); ++l) degenerate.stack->layer(l).q_u().net().zero_final_layer();
    save_checkpoint(d + "/untrained", degenerate, AdamState{}, CheckpointInfo{});
  }

  const std::string ck = " --ckpt " + d + "/untrained";
  const json elbo = last_json_line(cli("eval-elbo" + ck + " --n 2000 --seed 5").output);
  const json marg = last_json_line(cli("eval-marginal" + ck + " --n 2000 --m 7 --seed 5").output);
  CHECK(std::abs(marg["marginal"]["value"].get<double>() - elbo["value"].get<double>()) < 1e-12);
  CHECK(marg["auxiliary"]["value"].get<double>() == elbo["value"].get<double>());
  CHECK(marg["marginal"]["n_inner"] == 7);

  REQUIRE(cli("sample" + ck + " --n 3 --out " + d + "/samples.csv").code == 0);
  const std::string samples = read_file(dir / "samples.csv");
  CHECK(samples.rfind("z1,z2\n", 0) == 0);
  CHECK(std::count(samples.begin(), samples.end(), '\n') == 4);

  REQUIRE(cli("density-grid" + ck + " --n 500 --steps 20 --out " + d + "/grid.csv --png " + d + "/grid.png").code == 0);
  const std::string grid = read_file(dir / "grid.csv");
  CHECK(grid.rfind("x,y,density\n", 0) == 0);
  CHECK(std::count(grid.begin(), grid.end(), '\n') == 401);
  CHECK(read_file(dir / "grid.png").substr(1, 3) == "PNG");

  CHECK(cli("eval-loglik" + ck).code == 1);
}

}  // TEST_SUITE
