#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "qmf/datasets.hpp"
#include "qmf/denoise.hpp"
#include "qmf/errors.hpp"
#include "qmf/manifold.hpp"
#include "qmf/poly_features.hpp"
#include "qmf/qmf.hpp"
#include "qmf/rqmf.hpp"

namespace qmf {

class IoError : public Error {
public:
  using Error::Error;
};

class ParseError : public Error {
public:
  using Error::Error;
};

namespace io {

using json = nlohmann::json;

/// Shortest-safe decimal form: 17 significant digits, '.' separator,
/// independent of the global locale.
inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline double parse_real(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ParseError("not a number: '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Point cloud CSV: one row per point. A first line that does not parse as
/// numbers is taken as a header. Returns D x m.
inline Matrix parse_points_csv(std::istream &in, const std::string &name = "<stream>") {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> vals;
    try {
      for (auto tok : split(line)) vals.push_back(parse_real(tok));
    } catch (const ParseError &e) {
      if (rows.empty() && lineno == 1) continue; // header
      throw ParseError(name + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!rows.empty() && vals.size() != rows.front().size())
      throw ParseError(name + ":" + std::to_string(lineno) + ": expected " + std::to_string(rows.front().size()) +
                       " columns, got " + std::to_string(vals.size()));
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw ParseError(name + ": no data rows");
  Matrix X(static_cast<Index>(rows.front().size()), static_cast<Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (std::size_t i = 0; i < rows[j].size(); ++i) X(static_cast<Index>(i), static_cast<Index>(j)) = rows[j][i];
  if (!X.allFinite()) throw ParseError(name + ": non-finite coordinates");
  return X;
}

inline Matrix read_points_csv(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return parse_points_csv(in, path);
}

inline std::string points_csv(const Matrix &X) {
  std::string out;
  for (Index j = 0; j < X.cols(); ++j) {
    for (Index i = 0; i < X.rows(); ++i) {
      if (i) out += ',';
      out += format_real(X(i, j));
    }
    out += '\n';
  }
  return out;
}

inline void write_text(const std::string &path, const std::string &content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
  out.flush();
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline std::string read_text(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_points_csv(const std::string &path, const Matrix &X) { write_text(path, points_csv(X)); }

inline json matrix_to_json(const Matrix &M) {
  json rows = json::array();
  for (Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const json &j, Index rows, Index cols, const std::string &what) {
  if (!j.is_array() || static_cast<Index>(j.size()) != rows)
    throw ParseError(what + ": expected " + std::to_string(rows) + " rows");
  Matrix M(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const json &row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols)
      throw ParseError(what + ": expected " + std::to_string(cols) + " columns in row " + std::to_string(i));
    for (Index c = 0; c < cols; ++c) M(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return M;
}

inline json vector_to_json(const Vector &v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

/// {"d", "D", "c", "A", "Q"}; Q columns follow the FeatureIndex pair order.
inline json model_to_json(const QuadModel &m) {
  return json{{"d", m.latent_dim()},
              {"D", m.ambient_dim()},
              {"c", vector_to_json(m.c)},
              {"A", matrix_to_json(m.A)},
              {"Q", matrix_to_json(m.Q)}};
}

inline QuadModel model_from_json(const json &j) {
  try {
    const Index d = j.at("d").get<Index>();
    const Index D = j.at("D").get<Index>();
    if (d < 1 || D < 1) throw ParseError("model: d and D must be positive");
    QuadModel m;
    const auto c = j.at("c").get<std::vector<double>>();
    if (static_cast<Index>(c.size()) != D) throw ParseError("model: c has wrong length");
    m.c = Eigen::Map<const Vector>(c.data(), D);
    m.A = matrix_from_json(j.at("A"), D, d, "model A");
    m.Q = matrix_from_json(j.at("Q"), D, quad_dim(d), "model Q");
    return m;
  } catch (const json::exception &e) {
    throw ParseError(std::string("model: ") + e.what());
  }
}

inline json fit_to_json(const FitResult &f) {
  return json{{"model", model_to_json(f.model)},
              {"iterations", f.iterations},
              {"converged", f.converged},
              {"final_gap", f.final_gap},
              {"interpolation_regime", f.interpolation_regime},
              {"inner_nonconverged", f.inner_nonconverged},
              {"max_grad_norm", f.max_grad_norm},
              {"loss_trace", f.loss_trace},
              {"residual_trace", f.residual_trace},
              {"lambda_trace", f.lambda_trace}};
}

inline json descriptor_to_json(const ManifoldDescriptor &m) {
  json j{{"kind", to_string(m.kind)}};
  if (m.kind == ShapeKind::SineCurve || m.kind == ShapeKind::SwissRoll) {
    j["t_min"] = m.t_min;
    j["t_max"] = m.t_max;
    j["scale"] = m.scale;
  }
  if (m.kind == ShapeKind::SampleSet) j["samples"] = matrix_to_json(m.samples.transpose());
  return j;
}

inline ManifoldDescriptor descriptor_from_json(const json &j) {
  try {
    ManifoldDescriptor m;
    m.kind = parse_shape(j.at("kind").get<std::string>());
    if (m.kind == ShapeKind::SineCurve || m.kind == ShapeKind::SwissRoll) {
      m.t_min = j.at("t_min").get<double>();
      m.t_max = j.at("t_max").get<double>();
      m.scale = j.value("scale", 1.0);
    }
    if (m.kind == ShapeKind::SampleSet) {
      const json &s = j.at("samples");
      if (!s.is_array() || s.empty() || !s[0].is_array()) throw ParseError("sample-set: samples must be rows");
      m.samples = matrix_from_json(s, static_cast<Index>(s.size()), static_cast<Index>(s[0].size()), "samples")
                      .transpose();
    }
    return m;
  } catch (const json::exception &e) {
    throw ParseError(std::string("manifold descriptor: ") + e.what());
  }
}

inline json genspec_to_json(const GenSpec &g) {
  return json{{"shape", to_string(g.shape)}, {"n", g.n}, {"noise_sigma", g.noise_sigma}, {"seed", g.seed}};
}

inline GenSpec genspec_from_json(const json &j) {
  try {
    for (const auto &[key, _] : j.items())
      if (key != "shape" && key != "n" && key != "noise_sigma" && key != "seed")
        throw ParseError("GenSpec: unknown key '" + key + "'");
    GenSpec g;
    g.shape = parse_shape(j.at("shape").get<std::string>());
    g.n = j.at("n").get<int>();
    g.noise_sigma = j.at("noise_sigma").get<double>();
    g.seed = j.at("seed").get<std::uint64_t>();
    g.validate();
    return g;
  } catch (const json::exception &e) {
    throw ParseError(std::string("GenSpec: ") + e.what());
  }
}

/// Per-point report: [{index, status, lambda_used, iterations, warning}, ...]
inline json report_to_json(const std::vector<PointReport> &report) {
  json arr = json::array();
  for (const auto &r : report)
    arr.push_back(json{{"index", r.index},
                       {"status", to_string(r.status)},
                       {"lambda_used", r.lambda_used},
                       {"iterations", r.iterations},
                       {"warning", r.warning}});
  return arr;
}

inline std::string tuning_curve_csv(const TuningCurve &c) {
  std::string out = "lambda,s,s_prime,s_double_prime\n";
  for (std::size_t i = 0; i < c.lambda_grid.size(); ++i)
    out += format_real(c.lambda_grid[i]) + ',' + format_real(c.s[i]) + ',' + format_real(c.s_prime[i]) + ',' +
           format_real(c.s_double_prime[i]) + '\n';
  return out;
}

inline std::string bench_csv(const BenchResult &r) {
  std::string out = "method,K,mse,sd\n";
  for (const auto &row : r.rows)
    out += std::string(to_string(row.method)) + ',' + std::to_string(row.K) + ',' + format_real(row.mse) + ',' +
           format_real(row.sd) + '\n';
  return out;
}

} // namespace io
} // namespace qmf
