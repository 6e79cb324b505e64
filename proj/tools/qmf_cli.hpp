#pragma once

// Command-line front end. Kept in a header so tests can drive it in-process.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qmf/datasets.hpp"
#include "qmf/denoise.hpp"
#include "qmf/io.hpp"
#include "qmf/parallel.hpp"
#include "qmf/rqmf.hpp"

namespace qmf::cli {

using nlohmann::json;

enum ExitCode { kOk = 0, kRuntime = 1, kUsage = 2 };

// Reads --config files written as JSON. Top-level keys name subcommands;
// their members are long option names without dashes.
class JsonConfig : public CLI::Config {
public:
  std::string to_config(const CLI::App *, bool, bool, std::string) const override { return "{}\n"; }

  std::vector<CLI::ConfigItem> from_config(std::istream &input) const override {
    json j;
    try {
      j = json::parse(input);
    } catch (const json::exception &e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    collect(j, {}, items);
    return items;
  }

private:
  static std::string scalar(const json &v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void collect(const json &j, const std::vector<std::string> &parents, std::vector<CLI::ConfigItem> &out) {
    for (const auto &[key, value] : j.items()) {
      if (value.is_object()) {
        auto p = parents;
        p.push_back(key);
        collect(value, p, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto &v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      out.push_back(std::move(item));
    }
  }
};

inline std::vector<std::string> split_list(const std::string &s) {
  std::vector<std::string> out;
  for (auto tok : io::split(s)) {
    std::string t(tok);
    t.erase(0, t.find_first_not_of(" \t"));
    t.erase(t.find_last_not_of(" \t") + 1);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

inline std::vector<int> split_ints(const std::string &s) {
  std::vector<int> out;
  for (const auto &t : split_list(s)) {
    std::size_t pos = 0;
    int v = 0;
    try {
      v = std::stoi(t, &pos);
    } catch (const std::exception &) {
      pos = 0;
    }
    if (pos != t.size()) throw InvalidArgument("not an integer: '" + t + "'");
    out.push_back(v);
  }
  return out;
}

struct GenerateArgs {
  std::string shape;
  int n = 240;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::string out;
};

struct SolverArgs {
  double eps = 1e-6;
  int max_outer = 100;
  double inner_tol = 1e-8;
  int inner_max_iter = 200;

  SolverConfig config() const {
    SolverConfig s;
    s.eps = eps;
    s.max_outer = max_outer;
    s.inner.tol = inner_tol;
    s.inner.max_iter = inner_max_iter;
    return s;
  }
};

struct DenoiseArgs {
  std::string in, out, report, truth;
  int d = 0;
  std::optional<int> k;
  std::optional<double> radius;
  std::string mode = "e";
  std::string delta;
  std::optional<double> lambda;
  std::string bandwidth = "sphere-paper";
  SolverArgs solver;
};

struct TuneArgs {
  std::string in, out;
  int d = 0;
  std::optional<int> k;
  int target = 0;
  std::string mode = "e";
  std::string bandwidth = "sphere-paper";
  double lambda_min = 1e-3;
  double lambda_max = 0.1;
  int grid = 50;
  std::optional<double> delta;
};

struct BenchArgs {
  std::string shape = "sphere";
  int n = 240;
  double sigma = 0.2;
  std::string methods = "rqmf-e,rqmf-k,local-pca,lmf";
  std::string ks = "7,10,13,16,19,22,25,28";
  int repeats = 10;
  std::uint64_t seed = 1;
  std::string delta = "sphere-paper";
  int d = 2;
  std::string bandwidth = "sphere-paper";
  std::string out;
  SolverArgs solver;
};

inline void add_solver_options(CLI::App *sub, SolverArgs &s) {
  sub->add_option("--eps", s.eps, "Outer stopping tolerance on the subspace gap")->capture_default_str();
  sub->add_option("--max-outer", s.max_outer, "Maximum outer iterations")->capture_default_str();
  sub->add_option("--inner-tol", s.inner_tol, "Projection step tolerance")->capture_default_str();
  sub->add_option("--inner-max-iter", s.inner_max_iter, "Projection iteration cap")->capture_default_str();
}

inline unsigned resolve_threads(const std::optional<unsigned> &flag) {
  return flag ? std::max(1u, *flag) : default_thread_count();
}

inline int cmd_generate(const GenerateArgs &a, std::ostream &out) {
  GenSpec spec;
  spec.shape = parse_shape(a.shape);
  spec.n = a.n;
  spec.noise_sigma = a.sigma;
  spec.seed = a.seed;
  spec.validate();
  const PointCloud cloud = generate(spec);
  const std::string csv = io::points_csv(cloud.points);
  const json truth{{"spec", io::genspec_to_json(spec)}, {"truth", io::descriptor_to_json(*cloud.truth)}};
  io::write_text(a.out, csv);
  io::write_text(a.out + ".truth.json", truth.dump(2) + "\n");
  out << "wrote " << cloud.size() << " points (D = " << cloud.dim() << ") to " << a.out << "\n";
  return kOk;
}

inline DenoiseConfig denoise_config(const DenoiseArgs &a) {
  if (a.d < 1) throw InvalidArgument("--d must be >= 1");
  if (a.k.has_value() == a.radius.has_value()) throw InvalidArgument("give exactly one of --k or --radius");
  if (a.mode != "e" && a.mode != "k") throw InvalidArgument("--mode must be 'e' or 'k'");
  if (a.delta.empty() == !a.lambda.has_value()) throw InvalidArgument("give exactly one of --delta or --lambda");

  DenoiseConfig cfg;
  cfg.d = a.d;
  cfg.neighborhood = a.k ? Neighborhood::knn(*a.k) : Neighborhood::within(*a.radius);
  if (a.k && *a.k < 1) throw InvalidArgument("--k must be >= 1");
  if (a.radius && !(*a.radius > 0.0)) throw InvalidArgument("--radius must be positive");
  cfg.weighting = a.mode == "k" ? Weighting::Gaussian : Weighting::Equal;
  cfg.bandwidth = parse_bandwidth_rule(a.bandwidth);

  const SolverConfig solver = a.solver.config();
  if (a.lambda) {
    cfg.reg = RegConfig::fixed(*a.lambda, solver);
  } else if (a.delta == "sphere-paper") {
    if (!a.k) throw InvalidArgument("--delta sphere-paper needs --k");
    cfg.reg = RegConfig::adaptive(a.mode == "k" ? kSphereKernelDelta : sphere_delta_preset(*a.k), solver);
  } else {
    cfg.reg = RegConfig::adaptive(io::parse_real(a.delta), solver);
  }
  cfg.reg.validate();
  return cfg;
}

inline std::optional<ManifoldDescriptor> load_truth(const std::string &path) {
  if (path.empty() || !std::filesystem::exists(path)) return std::nullopt;
  const json j = json::parse(io::read_text(path));
  return io::descriptor_from_json(j.contains("truth") ? j.at("truth") : j);
}

inline int cmd_denoise(const DenoiseArgs &a, unsigned threads, std::ostream &out, std::ostream &err) {
  const DenoiseConfig cfg = denoise_config(a);
  const Matrix X = io::read_points_csv(a.in);
  if (a.k && *a.k > X.cols())
    throw InvalidArgument("--k " + std::to_string(*a.k) + " exceeds the number of points " + std::to_string(X.cols()));
  const std::string truth_path = a.truth.empty() ? a.in + ".truth.json" : a.truth;
  std::optional<ManifoldDescriptor> truth;
  try {
    truth = load_truth(truth_path);
  } catch (const std::exception &e) {
    throw ParseError("truth sidecar '" + truth_path + "': " + e.what());
  }
  if (truth && truth->ambient_dim() != X.rows()) throw ParseError("truth sidecar does not match the point dimension");
  if (a.k && *a.k <= feature_dim(cfg.d))
    err << "warning: K = " << *a.k << " is not larger than the feature dimension " << feature_dim(cfg.d)
        << " for d = " << cfg.d << "; fits will interpolate\n";

  const DenoiseOutput res = denoise_all(X, cfg, threads);
  const std::string report_path = a.report.empty() ? a.out + ".report.json" : a.report;
  io::write_text(a.out, io::points_csv(res.points));
  io::write_text(report_path, io::report_to_json(res.report).dump(2) + "\n");

  int fallback = 0, failed = 0;
  for (const auto &r : res.report) {
    fallback += r.status == PointStatus::Fallback;
    failed += r.status == PointStatus::Failed;
  }
  out << "denoised " << X.cols() << " points";
  if (fallback || failed) out << " (" << fallback << " fallback, " << failed << " failed)";
  out << "\n";
  if (truth) {
    const EvalReport before = evaluate(X, *truth);
    const EvalReport after = evaluate(res.points, *truth);
    out << "input    MSE " << io::format_real(before.mse) << " SD " << io::format_real(before.sd) << "\n";
    out << "denoised MSE " << io::format_real(after.mse) << " SD " << io::format_real(after.sd) << "\n";
  }
  return kOk;
}

inline int cmd_tune(const TuneArgs &a, std::ostream &out, std::ostream &err) {
  if (a.d < 1) throw InvalidArgument("--d must be >= 1");
  if (a.mode != "e" && a.mode != "k") throw InvalidArgument("--mode must be 'e' or 'k'");
  if (!(a.lambda_min >= 0.0) || !(a.lambda_max >= a.lambda_min)) throw InvalidArgument("need 0 <= lambda-min <= lambda-max");
  if (a.grid < 1) throw InvalidArgument("--grid must be >= 1");
  if (a.delta && !(*a.delta > 0.0)) throw InvalidArgument("--delta must be positive");
  const BandwidthRule rule = parse_bandwidth_rule(a.bandwidth);

  const Matrix X = io::read_points_csv(a.in);
  if (a.target < 0 || a.target >= X.cols()) throw InvalidArgument("--target is out of range");
  DenoiseConfig cfg;
  cfg.d = a.d;
  cfg.neighborhood = Neighborhood::knn(a.k.value_or(static_cast<int>(X.cols())));
  cfg.weighting = a.mode == "k" ? Weighting::Gaussian : Weighting::Equal;
  cfg.bandwidth = rule;
  const Chart chart = build_chart(X, X.col(a.target), cfg);
  Matrix members = gather(X, chart.members);
  members = members.colwise() - members.rowwise().mean();
  const std::optional<Vector> w = cfg.weighting == Weighting::Gaussian ? std::optional<Vector>(chart.weights) : std::nullopt;

  const RidgeProblem problem(members, init_embedding(members, a.d), w);
  const TuningCurve curve = tuning_curve(problem, linear_grid(a.lambda_min, a.lambda_max, a.grid));
  json summary{{"target", a.target}, {"chart_size", members.cols()}};
  if (a.delta) {
    const TuneResult t = tune_lambda(problem, *a.delta);
    summary["delta"] = *a.delta;
    summary["lambda"] = t.lambda;
    summary["status"] = to_string(t.status);
    summary["s_prime"] = t.s_prime;
    if (t.status == TuneStatus::Floor)
      err << "warning: delta exceeds -s'(lambda_floor); lambda set to the floor " << io::format_real(kLambdaFloor) << "\n";
    if (t.status == TuneStatus::Ceiling) err << "warning: no root below the lambda ceiling\n";
    out << "lambda* = " << io::format_real(t.lambda) << " (" << to_string(t.status) << ")\n";
  }
  io::write_text(a.out, io::tuning_curve_csv(curve));
  io::write_text(a.out + ".json", summary.dump(2) + "\n");
  return kOk;
}

inline int cmd_bench(const BenchArgs &a, unsigned threads, std::ostream &out, std::ostream &err) {
  GenSpec spec;
  spec.shape = parse_shape(a.shape);
  spec.n = a.n;
  spec.noise_sigma = a.sigma;
  spec.validate();
  std::vector<BenchMethod> methods;
  for (const auto &m : split_list(a.methods)) methods.push_back(parse_method(m));
  const std::vector<int> ks = split_ints(a.ks);
  if (methods.empty() || ks.empty()) throw InvalidArgument("--methods and --k must be non-empty");
  for (int k : ks)
    if (k < 1 || k > a.n) throw InvalidArgument("K = " + std::to_string(k) + " is outside [1, n]");
  if (a.repeats < 1) throw InvalidArgument("--repeats must be >= 1");
  const DeltaRule delta = a.delta == "sphere-paper" ? DeltaRule::sphere_preset() : DeltaRule::fixed(io::parse_real(a.delta));
  if (delta.kind == DeltaRule::Kind::Fixed && !(delta.value > 0.0)) throw InvalidArgument("--delta must be positive");
  if (a.d < 1) throw InvalidArgument("--d must be >= 1");

  BenchConfig bc;
  bc.d = a.d;
  bc.bandwidth = parse_bandwidth_rule(a.bandwidth);
  bc.solver = a.solver.config();
  bc.solver.validate();
  bc.threads = threads;
  const BenchResult res = benchmark_sweep(spec, methods, ks, delta, a.repeats, a.seed, bc);
  for (const auto &line : res.log) err << "run failed: " << line << "\n";
  const std::string csv = io::bench_csv(res);
  if (a.out.empty())
    out << csv;
  else
    io::write_text(a.out, csv);
  return kOk;
}

inline int run(int argc, const char *const *argv, std::ostream &out = std::cout, std::ostream &err = std::cerr) {
  CLI::App app{"Local quadratic manifold fitting and denoising.\n"
               "Point clouds are CSV with one row per point ('.' decimals, 17 significant digits).\n"
               "Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error."};
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file {\"<subcommand>\": {\"<option>\": value}}; flags win");
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<unsigned> threads;
  app.add_option("--threads", threads, "Worker threads (default: QMF_THREADS, else hardware concurrency)");

  GenerateArgs ga;
  auto *gen = app.add_subcommand("generate", "Sample a noisy synthetic manifold; writes <out> and <out>.truth.json");
  gen->add_option("--shape", ga.shape, "unit-circle | unit-sphere | sine-curve | swiss-roll (or circle, sphere, sine, swiss)")
      ->required();
  gen->add_option("--n", ga.n, "Number of points")->capture_default_str();
  gen->add_option("--sigma", ga.sigma, "Noise standard deviation")->capture_default_str();
  gen->add_option("--seed", ga.seed, "Seed")->capture_default_str();
  gen->add_option("--out", ga.out, "Output CSV")->required();

  DenoiseArgs da;
  auto *den = app.add_subcommand("denoise", "Denoise every point of a cloud; writes CSV and a JSON report");
  den->add_option("--in", da.in, "Input CSV")->required();
  den->add_option("--out", da.out, "Output CSV")->required();
  den->add_option("--report", da.report, "Report JSON (default <out>.report.json)");
  den->add_option("--truth", da.truth, "Truth sidecar (default <in>.truth.json when present)");
  den->add_option("--d", da.d, "Latent dimension")->required();
  den->add_option("--k", da.k, "Chart size (nearest neighbours)");
  den->add_option("--radius", da.radius, "Chart radius");
  den->add_option("--mode", da.mode, "e: equal weights, k: Gaussian kernel weights")->capture_default_str();
  den->add_option("--delta", da.delta, "Sensitivity level: number or sphere-paper");
  den->add_option("--lambda", da.lambda, "Fixed ridge parameter instead of --delta");
  den->add_option("--bandwidth", da.bandwidth, "sphere-paper | knn-dist | fixed(h)")->capture_default_str();
  add_solver_options(den, da.solver);

  TuneArgs ta;
  auto *tun = app.add_subcommand("tune", "Export s(lambda) and its derivatives for one chart; writes <out> and <out>.json");
  tun->add_option("--in", ta.in, "Input CSV")->required();
  tun->add_option("--out", ta.out, "Curve CSV (lambda,s,s_prime,s_double_prime)")->required();
  tun->add_option("--d", ta.d, "Latent dimension")->required();
  tun->add_option("--k", ta.k, "Chart size (default: all points)");
  tun->add_option("--target", ta.target, "Index of the chart's target point")->capture_default_str();
  tun->add_option("--mode", ta.mode, "e or k")->capture_default_str();
  tun->add_option("--bandwidth", ta.bandwidth, "Bandwidth rule for --mode k")->capture_default_str();
  tun->add_option("--lambda-min", ta.lambda_min, "Grid start")->capture_default_str();
  tun->add_option("--lambda-max", ta.lambda_max, "Grid end")->capture_default_str();
  tun->add_option("--grid", ta.grid, "Grid points")->capture_default_str();
  tun->add_option("--delta", ta.delta, "Also solve s'(lambda) = -delta");

  BenchArgs ba;
  auto *ben = app.add_subcommand("bench", "MSE/SD sweep over methods and chart sizes; CSV method,K,mse,sd");
  ben->add_option("--shape", ba.shape, "Generator shape")->capture_default_str();
  ben->add_option("--n", ba.n, "Points per cloud")->capture_default_str();
  ben->add_option("--sigma", ba.sigma, "Noise standard deviation")->capture_default_str();
  ben->add_option("--methods", ba.methods, "Comma list of rqmf-e, rqmf-k, local-pca, lmf")->capture_default_str();
  ben->add_option("--k", ba.ks, "Comma list of chart sizes")->capture_default_str();
  ben->add_option("--repeats", ba.repeats, "Clouds per cell (seeds seed, seed+1, ...)")->capture_default_str();
  ben->add_option("--seed", ba.seed, "First seed")->capture_default_str();
  ben->add_option("--delta", ba.delta, "Number or sphere-paper")->capture_default_str();
  ben->add_option("--d", ba.d, "Latent dimension")->capture_default_str();
  ben->add_option("--bandwidth", ba.bandwidth, "Bandwidth rule for rqmf-k")->capture_default_str();
  ben->add_option("--out", ba.out, "Output CSV (default stdout)");
  add_solver_options(ben, ba.solver);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp &) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError &e) {
    err << "error: " << e.what() << "\n";
    auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kUsage;
  }

  const unsigned nthreads = resolve_threads(threads);
  try {
    if (*gen) return cmd_generate(ga, out);
    if (*den) return cmd_denoise(da, nthreads, out, err);
    if (*tun) return cmd_tune(ta, out, err);
    if (*ben) return cmd_bench(ba, nthreads, out, err);
  } catch (const InvalidArgument &e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}

} // namespace qmf::cli
