#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "commands.hpp"
#include "config.hpp"
#include "pnm.hpp"
#include "report.hpp"
#include "sparn/error.hpp"
#include "support/oracles.hpp"

namespace sparn::app {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Parses "key=value" report lines; the last value wins for repeated keys.
std::map<std::string, std::string> parse_report(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

struct Invocation {
  int code;
  std::string out;
  std::string err;
};

Invocation invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "sparn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class Workspace : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("sparn_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Raw {0,1} splits drawn from one random sparse network.
  void write_binary_splits(std::size_t D, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Matrix all = oracle::sample_binary_data(rng, 360, D);
    const Matrix raw = decode_binary(all);
    save_matrix(dir_ / "train.txt", raw.topRows(200), MatrixFormat::dense_text);
    save_matrix(dir_ / "valid.txt", raw.middleRows(200, 80), MatrixFormat::dense_text);
    save_matrix(dir_ / "test.txt", raw.bottomRows(80), MatrixFormat::dense_text);
  }

  std::vector<std::string> split_flags() const {
    return {"--train", (dir_ / "train.txt").string(), "--valid", (dir_ / "valid.txt").string(),
            "--test",  (dir_ / "test.txt").string()};
  }

  fs::path dir_;
};

TEST(Config, LambdaGrid) {
  const auto a = parse_lambda_grid("auto");
  EXPECT_TRUE(a.values.empty());
  EXPECT_EQ(a.count, 30u);
  const auto b = parse_lambda_grid("auto:12:0.01");
  EXPECT_EQ(b.count, 12u);
  EXPECT_DOUBLE_EQ(b.ratio, 0.01);
  EXPECT_EQ(parse_lambda_grid("3, 1.5,0").values, (std::vector<double>{3.0, 1.5, 0.0}));
  EXPECT_THROW(parse_lambda_grid("auto:0"), InvalidArgument);
  EXPECT_THROW(parse_lambda_grid("-1"), InvalidArgument);
  EXPECT_THROW(parse_lambda_grid("one"), InvalidArgument);
}

TEST(Config, ComponentsGrid) {
  using G = std::vector<std::vector<std::size_t>>;
  EXPECT_EQ(parse_components_grid("1,2,20"), (G{{1}, {2}, {20}}));
  EXPECT_EQ(parse_components_grid("2/3,4/4"), (G{{2, 3}, {4, 4}}));
  EXPECT_THROW(parse_components_grid("0"), InvalidArgument);
  EXPECT_THROW(parse_components_grid("2,,3"), InvalidArgument);
}

TEST(Config, DefaultComponentsGridIsCappedAndNeverEmpty) {
  using G = std::vector<std::vector<std::size_t>>;
  EXPECT_EQ(default_components_grid(100, SharingMode::untied), (G{{1}, {2}, {3}, {5}}));
  EXPECT_EQ(default_components_grid(100, SharingMode::tied), (G{{1}, {2}, {3}, {5}, {10}, {20}}));
  EXPECT_EQ(default_components_grid(3, SharingMode::untied), (G{{1}}));
}

TEST(Config, Partitions) {
  const Partition b = parse_partition("boundaries:0,3,7", 10);
  EXPECT_EQ(b.boundaries(), (std::vector<std::size_t>{0, 3, 7, 10}));
  EXPECT_TRUE(b.order().empty());
  const Partition g = parse_partition("grid:4x4:2x2", 16);
  EXPECT_EQ(g.blocks(), 4u);
  EXPECT_EQ(g.order()[0], 0u);
  EXPECT_EQ(g.order()[2], 4u);
  const Partition l = parse_partition("blocks:3", 10);
  EXPECT_EQ(l.boundaries(), (std::vector<std::size_t>{0, 3, 6, 10}));
  EXPECT_THROW(parse_partition("grid:4x4:2x2", 15), Error);
  EXPECT_THROW(parse_partition("stripes:2", 10), InvalidArgument);
}

TEST(Config, SettingsAndFile) {
  ExperimentConfig cfg;
  apply_setting(cfg, "mode", "auto");
  apply_setting(cfg, "seed", "77");
  apply_setting(cfg, "family", "sequence");
  EXPECT_EQ(cfg.mode, SharingMode::automatic);
  EXPECT_EQ(cfg.seed, 77u);
  EXPECT_EQ(cfg.family, ModelFamily::sequence);
  EXPECT_THROW(apply_setting(cfg, "colour", "red"), InvalidArgument);
  EXPECT_THROW(apply_setting(cfg, "threads", "two"), InvalidArgument);

  const fs::path p = fs::temp_directory_path() / "sparn_cli_config.txt";
  std::ofstream(p) << "# comment\n\nkind = continuous\nlambda-grid=1,2\n";
  const auto kv = read_config_file(p);
  fs::remove(p);
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv.at("kind"), "continuous");
  EXPECT_EQ(kv.at("lambda-grid"), "1,2");
}

TEST(Report, SummarizeArithmetic) {
  const Eigen::VectorXd v = (Eigen::VectorXd(4) << 1.0, 2.0, 3.0, 4.0).finished();
  const Summary s = summarize(v);
  EXPECT_EQ(s.n, 4u);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  // Sample variance 5/3 over n = 4.
  EXPECT_NEAR(s.stderr_of_mean, std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
  EXPECT_EQ(summarize(Eigen::VectorXd::Constant(1, 7.0)).stderr_of_mean, 0.0);
}

TEST(Report, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -13.04, 1e-300, 123456789.0}) EXPECT_EQ(std::stod(format_double(v)), v);
}

TEST(Nearest, HammingPicksLowestIndexOnTies) {
  Matrix train(3, 3), samples(2, 3);
  train << 1, 0, 0, 0, 1, 0, 1, 1, 1;
  samples << 0, 0, 0, 1, 1, 1;
  const auto r = nearest(samples, train, Metric::hamming);
  EXPECT_EQ(r[0].index, 0u);
  EXPECT_EQ(r[0].distance, 1.0);
  EXPECT_EQ(r[1].index, 2u);
  EXPECT_EQ(r[1].distance, 0.0);
}

TEST(Nearest, EuclideanDistance) {
  Matrix train(2, 2), samples(1, 2);
  train << 0, 0, 3, 4;
  samples << 3, 5;
  const auto r = nearest(samples, train, Metric::euclidean);
  EXPECT_EQ(r[0].index, 1u);
  EXPECT_DOUBLE_EQ(r[0].distance, 1.0);
}

TEST(Nearest, RejectsNonBinaryHammingAndShapeMismatch) {
  Matrix a(1, 2), b(1, 3);
  a << 0, 0.5;
  b << 0, 1, 0;
  EXPECT_THROW(nearest(a, a, Metric::hamming), InvalidArgument);
  EXPECT_THROW(nearest(a, b, Metric::euclidean), DimensionError);
}

TEST(Images, SymmetricDifferenceColors) {
  const std::vector<double> s{1, 0, 1, 0}, t{1, 1, 0, 0};
  const auto d = symmetric_difference(s, t);
  EXPECT_EQ(d[0], kAgree);
  EXPECT_EQ(d[1], kOnlyInTrain);
  EXPECT_EQ(d[2], kOnlyInSample);
  EXPECT_EQ(d[3], kAgree);
  for (const auto& px : symmetric_difference(s, s)) EXPECT_EQ(px, kAgree);
}

TEST(Images, GrayAndShape) {
  EXPECT_EQ(to_gray(std::vector<double>{0, 1}, true), (std::vector<std::uint8_t>{0, 255}));
  EXPECT_EQ(to_gray(std::vector<double>{-3.0, 127.6, 900.0}, false), (std::vector<std::uint8_t>{0, 128, 255}));
  const ImageShape s = parse_shape("28x28");
  EXPECT_EQ(s.pixels(), 784u);
  EXPECT_THROW(parse_shape("28"), InvalidArgument);
}

TEST_F(Workspace, PgmAndPpmLayout) {
  write_pgm(dir_ / "a.pgm", {2, 3}, std::vector<std::uint8_t>{0, 1, 2, 3, 4, 5});
  EXPECT_EQ(slurp(dir_ / "a.pgm"), std::string("P5\n3 2\n255\n") + std::string("\0\1\2\3\4\5", 6));
  write_ppm(dir_ / "a.ppm", {1, 1}, std::vector<Rgb>{kOnlyInSample});
  EXPECT_EQ(slurp(dir_ / "a.ppm"), std::string("P6\n1 1\n255\n\xff\xa5\0", 14));
}

TEST(Run, UsageErrorsExitWithOne) {
  EXPECT_EQ(invoke({}).code, kUsage);
  EXPECT_EQ(invoke({"fly"}).code, kUsage);
  EXPECT_EQ(invoke({"eval", "--model", "m"}).code, kUsage);
  EXPECT_EQ(invoke({"nearest", "--samples", "a", "--train", "b", "--metric", "cosine"}).code, kUsage);
  EXPECT_EQ(invoke({"train", "--kind", "ternary"}).code, kUsage);
}

TEST_F(Workspace, MissingDataExitsWithTwo) {
  const auto r = invoke({"eval", "--model", (dir_ / "none.sparn").string(), "--data", (dir_ / "none.txt").string()});
  EXPECT_EQ(r.code, kDataError);
  EXPECT_FALSE(r.err.empty());
}

TEST_F(Workspace, NonBinaryTrainingDataExitsWithTwo) {
  write_binary_splits(5, 1);
  std::ofstream(dir_ / "train.txt", std::ios::app) << "0 1 2 0 1\n";
  auto args = split_flags();
  for (const char* a : {"--lambda-grid", "1", "--out"}) args.push_back(a);
  args.push_back((dir_ / "out").string());
  args.insert(args.begin(), "train");
  EXPECT_EQ(invoke(args).code, kDataError);
}

TEST_F(Workspace, UniformModelEvaluatesToDLogTwo) {
  const std::size_t D = 784;
  std::vector<Conditional> c(D);
  save_model(dir_ / "uniform.sparn", AutoregressiveNet(Kind::binary, c, EncodingMeta{}));
  std::mt19937_64 rng(2);
  Matrix raw(5, static_cast<Eigen::Index>(D));
  for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] = static_cast<double>(rng() & 1u);
  save_matrix(dir_ / "data.txt", raw, MatrixFormat::dense_text);
  const auto r = invoke({"eval", "--model", (dir_ / "uniform.sparn").string(), "--data", (dir_ / "data.txt").string(),
                         "--dump", (dir_ / "ll.txt").string()});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto kv = parse_report(r.out);
  EXPECT_NEAR(std::stod(kv.at("mean")), -784.0 * std::log(2.0), 1e-9);
  EXPECT_EQ(std::stod(kv.at("stderr")), 0.0);
  EXPECT_EQ(kv.at("n"), "5");
  std::ifstream dump(dir_ / "ll.txt");
  int lines = 0;
  for (std::string line; std::getline(dump, line);) ++lines;
  EXPECT_EQ(lines, 5);
}

TEST_F(Workspace, TrainEvalSampleNearestEndToEnd) {
  write_binary_splits(16, 3);
  auto args = split_flags();
  args.insert(args.begin(), "train");
  for (const char* a : {"--family", "mixture", "--mode", "auto", "--lambda-grid", "auto:4", "--components-grid",
                        "1,2", "--seed", "9", "--out"})
    args.push_back(a);
  args.push_back((dir_ / "run").string());
  const auto trained = invoke(args);
  ASSERT_EQ(trained.code, kOk) << trained.err;
  const auto kv = parse_report(trained.out);
  EXPECT_EQ(kv.at("family"), "mixture");
  EXPECT_EQ(kv.at("grid_failed"), "0");
  EXPECT_EQ(kv.at("test_n"), "80");
  const double test_mean = std::stod(kv.at("test_mean"));
  EXPECT_LT(test_mean, 0.0);
  EXPECT_GT(test_mean, -16.0 * std::log(2.0));
  EXPECT_TRUE(fs::exists(dir_ / "run" / "report.txt"));

  const std::string model = (dir_ / "run" / "model.sparn").string();
  const auto evaluated = invoke({"eval", "--model", model, "--data", (dir_ / "test.txt").string(), "--threads", "3"});
  ASSERT_EQ(evaluated.code, kOk) << evaluated.err;
  EXPECT_EQ(std::stod(parse_report(evaluated.out).at("mean")), test_mean);

  const auto s1 = invoke({"sample", "--model", model, "--count", "6", "--seed", "4", "--out", (dir_ / "s1").string(),
                          "--image", "4x4"});
  const auto s2 = invoke({"sample", "--model", model, "--count", "6", "--seed", "4", "--out", (dir_ / "s2").string()});
  ASSERT_EQ(s1.code, kOk) << s1.err;
  ASSERT_EQ(s2.code, kOk) << s2.err;
  EXPECT_EQ(slurp(dir_ / "s1" / "samples.txt"), slurp(dir_ / "s2" / "samples.txt"));
  EXPECT_TRUE(fs::exists(dir_ / "s1" / "sample_00005.pgm"));
  const Matrix samples = load_matrix(dir_ / "s1" / "samples.txt");
  EXPECT_EQ(samples.rows(), 6);
  EXPECT_TRUE(((samples.array() == 0.0) || (samples.array() == 1.0)).all());

  const auto near = invoke({"nearest", "--samples", (dir_ / "s1" / "samples.txt").string(), "--train",
                            (dir_ / "train.txt").string(), "--out", (dir_ / "nn").string(), "--image", "4x4"});
  ASSERT_EQ(near.code, kOk) << near.err;
  EXPECT_TRUE(fs::exists(dir_ / "nn" / "diff_00000.ppm"));
  EXPECT_TRUE(fs::exists(dir_ / "nn" / "nearest_00005.pgm"));
}

TEST_F(Workspace, ZeroSamplesWritesAnEmptyFile) {
  std::vector<Conditional> c(3);
  save_model(dir_ / "m.sparn", AutoregressiveNet(Kind::binary, c, EncodingMeta{}));
  const auto r = invoke({"sample", "--model", (dir_ / "m.sparn").string(), "--count", "0", "--out", (dir_ / "s").string()});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_EQ(slurp(dir_ / "s" / "samples.txt"), "");
}

TEST_F(Workspace, ImageShapeMustMatchDimension) {
  std::vector<Conditional> c(3);
  save_model(dir_ / "m.sparn", AutoregressiveNet(Kind::binary, c, EncodingMeta{}));
  const auto r = invoke({"sample", "--model", (dir_ / "m.sparn").string(), "--image", "2x2"});
  EXPECT_NE(r.code, kOk);
}

TEST_F(Workspace, EqualValidationScoresPreferTheLargerLambda) {
  write_binary_splits(6, 5);
  ExperimentConfig cfg;
  cfg.train = dir_ / "train.txt";
  cfg.valid = dir_ / "valid.txt";
  cfg.test = dir_ / "test.txt";
  // Both values exceed λ_max, so both fits are the uniform model.
  cfg.lambdas = parse_lambda_grid("1e6,1e7");
  cfg.components = parse_components_grid("1");
  const Dataset train = load_split(cfg.train, cfg.kind, nullptr, Role::train);
  const Dataset valid = load_split(cfg.valid, cfg.kind, &train.meta(), Role::valid);
  const Dataset test = load_split(cfg.test, cfg.kind, &train.meta(), Role::test);
  const auto r = select_train(cfg, train, valid, test);
  ASSERT_EQ(r.grid.size(), 2u);
  EXPECT_EQ(r.grid[0].valid_mean, r.grid[1].valid_mean);
  EXPECT_EQ(r.chosen.lambda, 1e7);
  EXPECT_NEAR(r.test.mean, -6.0 * std::log(2.0), 1e-12);
}

TEST_F(Workspace, SinglePointGrid) {
  write_binary_splits(6, 6);
  auto args = split_flags();
  args.insert(args.begin(), "train");
  for (const char* a : {"--lambda-grid", "2.5", "--out"}) args.push_back(a);
  args.push_back((dir_ / "run").string());
  const auto r = invoke(args);
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto kv = parse_report(r.out);
  EXPECT_EQ(std::stod(kv.at("selected_lambda")), 2.5);
  EXPECT_EQ(kv.at("selected_components"), "1");
}

TEST_F(Workspace, ConfigFileAndFlagOverride) {
  write_binary_splits(6, 7);
  std::ofstream(dir_ / "exp.cfg") << "train=" << (dir_ / "train.txt").string() << "\nvalid="
                                  << (dir_ / "valid.txt").string() << "\ntest=" << (dir_ / "test.txt").string()
                                  << "\nlambda-grid=100\nout=" << (dir_ / "run").string() << "\n";
  const auto r = invoke({"train", "--config", (dir_ / "exp.cfg").string(), "--lambda-grid", "3"});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_EQ(std::stod(parse_report(r.out).at("selected_lambda")), 3.0);
}

}  // namespace
}  // namespace sparn::app
