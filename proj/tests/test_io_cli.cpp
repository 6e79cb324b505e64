#include <gtest/gtest.h>

#include <clocale>
#include <filesystem>
#include <sstream>

#include "qmf/io.hpp"
#include "qmf_cli.hpp"
#include "support.hpp"

using namespace qmf;
using testing_support::Rng;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "qmf");
  std::vector<const char *> argv;
  for (const auto &a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class TempDir {
public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("qmf_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string &name) const { return (path_ / name).string(); }

private:
  fs::path path_;
};

std::string generate_sphere(const TempDir &dir, int n, const std::string &seed = "3") {
  const std::string path = dir / "cloud.csv";
  const CliRun r = run_cli({"generate", "--shape", "unit-sphere", "--n", std::to_string(n), "--sigma", "0.2", "--seed",
                            seed, "--out", path});
  EXPECT_EQ(r.code, 0) << r.err;
  return path;
}

} // namespace

TEST(Io, RealsRoundTripExactly) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.gaussian(1)[0] * std::pow(10.0, rng.uniform(-20, 20));
    EXPECT_EQ(io::parse_real(io::format_real(v)), v);
  }
  EXPECT_EQ(io::parse_real(" +1.5e3\r"), 1500.0);
  EXPECT_THROW(io::parse_real("1,5"), ParseError);
  EXPECT_THROW(io::parse_real(""), ParseError);
}

TEST(Io, FormattingIgnoresTheLocale) {
  const char *old = std::setlocale(LC_ALL, nullptr);
  const std::string saved = old ? old : "C";
  const bool switched = std::setlocale(LC_ALL, "de_DE.UTF-8") || std::setlocale(LC_ALL, "fr_FR.UTF-8");
  EXPECT_EQ(io::format_real(0.5), "0.5");
  EXPECT_EQ(io::parse_real("0.25"), 0.25);
  std::setlocale(LC_ALL, saved.c_str());
  if (!switched) GTEST_SKIP() << "no comma-decimal locale installed";
}

TEST(Io, PointsCsvRoundTrip) {
  Rng rng(2);
  const Matrix X = rng.gaussian(3, 25);
  std::istringstream in(io::points_csv(X));
  EXPECT_EQ(io::parse_points_csv(in), X);
}

TEST(Io, CsvHeaderAndErrors) {
  std::istringstream with_header("x,y\r\n1,2\r\n\n3,4\n");
  Matrix expected(2, 2);
  expected << 1, 3, 2, 4;
  EXPECT_EQ(io::parse_points_csv(with_header), expected);

  std::istringstream ragged("1,2\n3\n");
  EXPECT_THROW(io::parse_points_csv(ragged), ParseError);
  std::istringstream late_text("1,2\nx,y\n");
  EXPECT_THROW(io::parse_points_csv(late_text), ParseError);
  std::istringstream empty("x,y\n");
  EXPECT_THROW(io::parse_points_csv(empty), ParseError);
  std::istringstream nan("1,nan\n");
  EXPECT_THROW(io::parse_points_csv(nan), ParseError);
  EXPECT_THROW(io::read_points_csv("/nonexistent/cloud.csv"), IoError);
}

TEST(Io, ModelJsonRoundTrip) {
  Rng rng(3);
  const QuadModel m{rng.gaussian(4), rng.gaussian(4, 3), rng.gaussian(4, quad_dim(3))};
  const QuadModel back = io::model_from_json(nlohmann::json::parse(io::model_to_json(m).dump()));
  EXPECT_EQ(back.c, m.c);
  EXPECT_EQ(back.A, m.A);
  EXPECT_EQ(back.Q, m.Q);
  auto bad = io::model_to_json(m);
  bad["Q"][0].erase(0);
  EXPECT_THROW(io::model_from_json(bad), ParseError);
}

TEST(Io, GenSpecJsonRoundTripAndUnknownKeys) {
  GenSpec g;
  g.shape = ShapeKind::SwissRoll;
  g.n = 77;
  g.noise_sigma = 0.05;
  g.seed = 123456789012345ULL;
  const GenSpec back = io::genspec_from_json(io::genspec_to_json(g));
  EXPECT_EQ(back.shape, g.shape);
  EXPECT_EQ(back.n, g.n);
  EXPECT_EQ(back.noise_sigma, g.noise_sigma);
  EXPECT_EQ(back.seed, g.seed);
  auto extra = io::genspec_to_json(g);
  extra["colour"] = "red";
  EXPECT_THROW(io::genspec_from_json(extra), ParseError);
  auto missing = io::genspec_to_json(g);
  missing.erase("n");
  EXPECT_THROW(io::genspec_from_json(missing), ParseError);
}

TEST(Io, DescriptorJsonRoundTrip) {
  Matrix s(2, 2);
  s << 1, 2, 3, 4;
  for (const auto &m : {ManifoldDescriptor::unit_circle(), ManifoldDescriptor::unit_sphere(),
                        ManifoldDescriptor::sine_curve(), ManifoldDescriptor::swiss_roll(),
                        ManifoldDescriptor::sample_set(s)}) {
    const ManifoldDescriptor back = io::descriptor_from_json(io::descriptor_to_json(m));
    EXPECT_EQ(back.kind, m.kind);
    EXPECT_EQ(back.t_min, m.t_min);
    EXPECT_EQ(back.t_max, m.t_max);
    EXPECT_EQ(back.scale, m.scale);
    EXPECT_EQ(back.samples, m.samples);
  }
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"generate", "--out", "x.csv"}).code, 2);
  EXPECT_EQ(run_cli({"generate", "--shape", "torus", "--out", "x.csv"}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
  EXPECT_EQ(run_cli({"bench", "--help"}).code, 0);
}

TEST(Cli, GenerateIsDeterministicAndWritesTruth) {
  TempDir dir;
  const std::string path = generate_sphere(dir, 40);
  const std::string first = io::read_text(path);
  generate_sphere(dir, 40);
  EXPECT_EQ(io::read_text(path), first);

  const auto truth = nlohmann::json::parse(io::read_text(path + ".truth.json"));
  EXPECT_EQ(truth.at("truth").at("kind"), "unit-sphere");
  const GenSpec g = io::genspec_from_json(truth.at("spec"));
  EXPECT_EQ(io::points_csv(generate(g).points), first);
}

TEST(Cli, DenoiseMatchesTheLibrary) {
  TempDir dir;
  const std::string in = generate_sphere(dir, 60);
  const std::string out = dir / "den.csv";
  const CliRun r = run_cli({"--threads", "2", "denoise", "--in", in, "--out", out, "--d", "2", "--k", "16", "--mode",
                            "e", "--delta", "sphere-paper"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("denoised MSE"), std::string::npos);

  const Matrix X = io::read_points_csv(in);
  DenoiseConfig cfg;
  cfg.d = 2;
  cfg.neighborhood = Neighborhood::knn(16);
  cfg.reg = RegConfig::adaptive(sphere_delta_preset(16));
  const DenoiseOutput lib = denoise_all(X, cfg);
  EXPECT_EQ(io::read_text(out), io::points_csv(lib.points));

  const auto report = nlohmann::json::parse(io::read_text(out + ".report.json"));
  ASSERT_EQ(report.size(), 60u);
  for (std::size_t i = 0; i < 60; ++i) EXPECT_EQ(report[i].at("lambda_used").get<double>(), lib.report[i].lambda_used);
}

TEST(Cli, DenoiseWarnsBelowFeatureDimension) {
  TempDir dir;
  const std::string in = generate_sphere(dir, 30);
  const CliRun r =
      run_cli({"denoise", "--in", in, "--out", dir / "den.csv", "--d", "2", "--k", "3", "--lambda", "0.01"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("warning"), std::string::npos);
}

TEST(Cli, ValidationFailureLeavesNoOutput) {
  TempDir dir;
  const std::string in = generate_sphere(dir, 30);
  const std::string out = dir / "den.csv";
  EXPECT_EQ(run_cli({"denoise", "--in", in, "--out", out, "--d", "2", "--k", "8", "--radius", "0.3", "--delta", "1"}).code, 2);
  EXPECT_EQ(run_cli({"denoise", "--in", in, "--out", out, "--d", "2", "--k", "8"}).code, 2);
  EXPECT_EQ(run_cli({"denoise", "--in", in, "--out", out, "--d", "2", "--k", "80", "--delta", "1"}).code, 2);
  EXPECT_EQ(run_cli({"denoise", "--in", in, "--out", out, "--d", "2", "--k", "8", "--mode", "x", "--delta", "1"}).code, 2);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_FALSE(fs::exists(out + ".report.json"));
  EXPECT_EQ(run_cli({"denoise", "--in", dir / "missing.csv", "--out", out, "--d", "2", "--k", "8", "--delta", "1"}).code, 1);
  EXPECT_FALSE(fs::exists(out));
}

TEST(Cli, TuneMatchesTheLibrary) {
  TempDir dir;
  const std::string in = generate_sphere(dir, 60);
  const std::string out = dir / "curve.csv";
  const CliRun r = run_cli({"tune", "--in", in, "--out", out, "--d", "2", "--k", "16", "--target", "4", "--grid", "20",
                            "--delta", "3"});
  ASSERT_EQ(r.code, 0) << r.err;

  const Matrix X = io::read_points_csv(in);
  const auto idx = testing_support::knn_oracle(X, X.col(4), 16);
  Matrix C = gather(X, idx);
  C = C.colwise() - C.rowwise().mean();
  const RidgeProblem problem(C, init_embedding(C, 2));
  EXPECT_EQ(io::read_text(out), io::tuning_curve_csv(tuning_curve(problem, linear_grid(1e-3, 0.1, 20))));
  const auto summary = nlohmann::json::parse(io::read_text(out + ".json"));
  EXPECT_EQ(summary.at("lambda").get<double>(), tune_lambda(problem, 3.0).lambda);
}

TEST(Cli, BenchTableShape) {
  const CliRun r = run_cli({"bench", "--n", "60", "--methods", "rqmf-e,local-pca", "--k", "10,14,18", "--repeats", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "method,K,mse,sd");
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  EXPECT_EQ(rows, 6);
  EXPECT_EQ(run_cli({"bench", "--k", "0"}).code, 2);
  EXPECT_EQ(run_cli({"bench", "--methods", "magic"}).code, 2);
}

TEST(Cli, ConfigFileWithFlagsWinning) {
  TempDir dir;
  const std::string cfg = dir / "run.json";
  io::write_text(cfg, R"({"bench": {"n": 60, "methods": "local-pca", "k": "8,12", "repeats": 2, "seed": 5}})");
  const CliRun from_file = run_cli({"--config", cfg, "bench", "--n", "50"});
  ASSERT_EQ(from_file.code, 0) << from_file.err;
  const CliRun from_flags =
      run_cli({"bench", "--n", "50", "--methods", "local-pca", "--k", "8,12", "--repeats", "2", "--seed", "5"});
  EXPECT_EQ(from_file.out, from_flags.out);

  io::write_text(cfg, R"({"bench": {"n": 60, "colour": "red"}})");
  EXPECT_EQ(run_cli({"--config", cfg, "bench"}).code, 2);
  io::write_text(cfg, "not json");
  EXPECT_EQ(run_cli({"--config", cfg, "bench"}).code, 2);
}

TEST(Cli, OutputsIndependentOfThreadCount) {
  TempDir dir;
  const std::string in = generate_sphere(dir, 50);
  std::vector<std::string> outputs;
  for (const char *t : {"1", "4", "1"}) {
    const std::string out = dir / (std::string("den") + t + ".csv");
    ASSERT_EQ(run_cli({"--threads", t, "denoise", "--in", in, "--out", out, "--d", "2", "--k", "12", "--delta", "2"}).code, 0);
    outputs.push_back(io::read_text(out));
    const CliRun b = run_cli({"--threads", t, "bench", "--n", "50", "--k", "12", "--repeats", "2",
                              "--methods", "rqmf-e,rqmf-k"});
    outputs.push_back(b.out);
  }
  EXPECT_EQ(outputs[0], outputs[2]);
  EXPECT_EQ(outputs[0], outputs[4]);
  EXPECT_EQ(outputs[1], outputs[3]);
  EXPECT_EQ(outputs[1], outputs[5]);
}
