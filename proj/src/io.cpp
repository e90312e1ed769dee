#include "svar/io.hpp"

#include "svar/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace svar {

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

json matrix_to_json(const MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array()) throw IoError("matrix must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  MatrixXd M(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (!j[r].is_array() || static_cast<Eigen::Index>(j[r].size()) != cols)
      throw IoError("matrix rows must have equal length");
    for (Eigen::Index c = 0; c < cols; ++c) M(r, c) = j[r][c].get<double>();
  }
  return M;
}

namespace {

json vector_to_json(const VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json shocks_to_json(const std::vector<MixtureSpec>& shocks) {
  json arr = json::array();
  for (const auto& s : shocks)
    arr.push_back({{"weights", vector_to_json(s.weights)},
                   {"means", vector_to_json(s.means)},
                   {"variances", vector_to_json(s.variances)}});
  return arr;
}

std::vector<MixtureSpec> shocks_from_json(const json& arr) {
  std::vector<MixtureSpec> out;
  for (const auto& s : arr)
    out.push_back({vector_from_json(s.at("weights")), vector_from_json(s.at("means")),
                   vector_from_json(s.at("variances"))});
  return out;
}

double number_or_neg_inf(const json& j) {
  return j.is_null() ? -std::numeric_limits<double>::infinity() : j.get<double>();
}

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

const char* step_name(StepKind k) {
  switch (k) {
    case StepKind::Initial: return "initial";
    case StepKind::Plain: return "plain";
    case StepKind::Extrapolated: return "extrapolated";
    case StepKind::Reseed: return "reseed";
  }
  return "unknown";
}

StepKind step_from_name(const std::string& s) {
  if (s == "initial") return StepKind::Initial;
  if (s == "plain") return StepKind::Plain;
  if (s == "extrapolated") return StepKind::Extrapolated;
  if (s == "reseed") return StepKind::Reseed;
  throw IoError("unknown step kind: " + s);
}

}  // namespace

json model_to_json(const SvarModel& model) {
  return {{"p", model.p()},
          {"A", matrix_to_json(model.A)},
          {"C", matrix_to_json(model.C)},
          {"shocks", shocks_to_json(model.shocks)}};
}

SvarModel model_from_json(const json& j) {
  try {
    SvarModel m{matrix_from_json(j.at("A")), matrix_from_json(j.at("C")),
                shocks_from_json(j.at("shocks"))};
    if (j.contains("p") && j.at("p").get<int>() != m.p())
      throw IoError("model field p disagrees with A");
    m.check_dimensions();
    for (const auto& s : m.shocks) s.check();
    return m;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed model JSON: ") + e.what());
  } catch (const StructuralError& e) {
    throw IoError(std::string("malformed model JSON: ") + e.what());
  } catch (const ArgumentError& e) {
    throw IoError(std::string("malformed model JSON: ") + e.what());
  }
}

json theta_to_json(const Theta& theta) {
  json j = model_to_json(theta.model());
  j["W"] = matrix_to_json(theta.W);
  return j;
}

Theta theta_from_json(const json& j) {
  try {
    Theta t;
    t.A = matrix_from_json(j.at("A"));
    t.W = j.contains("W") ? matrix_from_json(j.at("W")) : MatrixXd(matrix_from_json(j.at("C")).inverse());
    t.shocks = shocks_from_json(j.at("shocks"));
    return t;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed parameter JSON: ") + e.what());
  }
}

json fit_to_json(const FitResult& fit) {
  json trace = json::array();
  for (double x : fit.trace) trace.push_back(finite_or_null(x));
  json steps = json::array();
  for (auto s : fit.steps) steps.push_back(step_name(s));
  json restarts = json::array();
  for (const auto& r : fit.restarts)
    restarts.push_back({{"index", r.index},
                        {"loglik", finite_or_null(r.loglik)},
                        {"iterations", r.iterations},
                        {"converged", r.converged},
                        {"failed", r.failed},
                        {"warm_start", r.warm_start}});
  return {{"theta", theta_to_json(fit.theta)},
          {"loglik", finite_or_null(fit.loglik)},
          {"observed_count", fit.observed_count},
          {"iterations", fit.iterations},
          {"reseeds", fit.reseeds},
          {"converged", fit.converged},
          {"failed", fit.failed},
          {"message", fit.message},
          {"restart", fit.restart},
          {"trace", trace},
          {"steps", steps},
          {"restarts", restarts}};
}

FitResult fit_from_json(const json& j) {
  try {
    FitResult f;
    f.theta = theta_from_json(j.at("theta"));
    f.loglik = number_or_neg_inf(j.at("loglik"));
    f.observed_count = j.value("observed_count", 0L);
    f.iterations = j.value("iterations", 0);
    f.reseeds = j.value("reseeds", 0);
    f.converged = j.value("converged", false);
    f.failed = j.value("failed", false);
    f.message = j.value("message", std::string());
    f.restart = j.value("restart", 0);
    for (const auto& x : j.value("trace", json::array())) f.trace.push_back(number_or_neg_inf(x));
    for (const auto& s : j.value("steps", json::array())) f.steps.push_back(step_from_name(s.get<std::string>()));
    for (const auto& r : j.value("restarts", json::array()))
      f.restarts.push_back({r.at("index").get<int>(), number_or_neg_inf(r.at("loglik")),
                            r.at("iterations").get<int>(), r.at("converged").get<bool>(),
                            r.at("failed").get<bool>(), r.value("warm_start", false)});
    return f;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed fit JSON: ") + e.what());
  }
}

json fit_timings_json(const FitResult& fit) {
  return {{"seconds", fit.seconds}, {"restarts", fit.restarts.size()}};
}

json selection_to_json(const std::vector<ScoredModel>& scored) {
  json arr = json::array();
  for (const auto& s : scored)
    arr.push_back({{"variant", s.variant.name},
                   {"constraint", s.variant.constraint.describe()},
                   {"k", s.variant.k},
                   {"m", s.variant.m},
                   {"d", s.d},
                   {"n", s.n},
                   {"loglik", finite_or_null(s.fit.loglik)},
                   {"bic", finite_or_null(s.bic)},
                   {"converged", s.fit.converged},
                   {"failed", s.fit.failed},
                   {"fit", fit_to_json(s.fit)}});
  return arr;
}

std::string series_to_csv(const MaskedSeries& series) {
  std::string out = "t";
  for (int j = 0; j < series.p(); ++j) out += ",x" + std::to_string(j + 1);
  out += '\n';
  for (int t = 0; t < series.T(); ++t) {
    out += std::to_string(t + 1);
    for (int j = 0; j < series.p(); ++j) {
      out += ',';
      if (series.mask(t, j)) out += format_double(series.values(j, t));
    }
    out += '\n';
  }
  return out;
}

MaskedSeries series_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(s);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };
  const auto header = split(line);
  if (header.size() < 2 || header[0] != "t") throw IoError("CSV header must be t,x1,...,xp");
  const int p = static_cast<int>(header.size()) - 1;
  for (int j = 0; j < p; ++j)
    if (header[j + 1] != "x" + std::to_string(j + 1))
      throw IoError("CSV header must be t,x1,...,xp");

  std::vector<std::vector<double>> rows;
  std::vector<std::vector<bool>> present;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (static_cast<int>(cells.size()) != p + 1)
      throw IoError("CSV line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                    " fields, expected " + std::to_string(p + 1));
    long t = 0;
    const auto tr = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), t);
    if (tr.ec != std::errc() || tr.ptr != cells[0].data() + cells[0].size() ||
        t != static_cast<long>(rows.size()) + 1)
      throw IoError("CSV line " + std::to_string(lineno) + ": t must count 1, 2, 3, ...");
    std::vector<double> vals(p, std::numeric_limits<double>::quiet_NaN());
    std::vector<bool> have(p, false);
    for (int j = 0; j < p; ++j) {
      const std::string& c = cells[j + 1];
      if (c.empty()) continue;
      double v = 0.0;
      const auto r = std::from_chars(c.data(), c.data() + c.size(), v);
      if (r.ec != std::errc() || r.ptr != c.data() + c.size() || !std::isfinite(v))
        throw IoError("CSV line " + std::to_string(lineno) + ": bad number '" + c + "'");
      vals[j] = v;
      have[j] = true;
    }
    rows.push_back(std::move(vals));
    present.push_back(std::move(have));
  }
  MaskedSeries s;
  const auto T = static_cast<Eigen::Index>(rows.size());
  s.values = MatrixXd(p, T);
  s.mask = MaskMatrix(T, p);
  for (Eigen::Index t = 0; t < T; ++t)
    for (int j = 0; j < p; ++j) {
      s.values(j, t) = rows[t][j];
      s.mask(t, j) = present[t][j];
    }
  return s;
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << text;
  if (!f) throw IoError("write failed for " + path);
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw IoError(path + ": " + e.what());
  }
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace svar
