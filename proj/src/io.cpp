#include "wgfvi/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "wgfvi/errors.hpp"
#include "wgfvi/svg.hpp"

namespace wgfvi {

using nlohmann::json;

namespace {

json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Index i = 0; i < m.rows(); ++i) a.push_back(vector_json(m.row(i).transpose()));
  return a;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_number(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError(where + ": not a number: '" + s + "'");
  }
  if (used != s.size()) throw ConfigError(where + ": trailing characters in '" + s + "'");
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v == 0.0 ? 0.0 : v);
  return buf;
}

std::string gaussian_trace_csv(const FlowTrace<double>& trace) {
  if (trace.states.empty()) return "";
  const Index d = trace.states.front().dim();
  const bool with_ref = !trace.w2sq_to_ref.empty();
  std::ostringstream os;
  os << "t,kl";
  for (Index i = 1; i <= d; ++i) os << ",m_" << i;
  for (Index i = 1; i <= d; ++i) {
    for (Index j = 1; j <= d; ++j) os << ",sigma_" << i << '_' << j;
  }
  if (with_ref) os << ",w2sq_to_ref";
  os << '\n';
  for (std::size_t k = 0; k < trace.states.size(); ++k) {
    const auto& p = trace.states[k];
    os << format_double(trace.times[k]) << ',';
    if (k < trace.kl_values.size()) os << format_double(trace.kl_values[k]);
    for (Index i = 0; i < d; ++i) os << ',' << format_double(p.mean()(i));
    for (Index i = 0; i < d; ++i) {
      for (Index j = 0; j < d; ++j) os << ',' << format_double(p.cov()(i, j));
    }
    if (with_ref) os << ',' << format_double(trace.w2sq_to_ref[k]);
    os << '\n';
  }
  return os.str();
}

std::string mixture_trace_jsonl(const MixtureTrace<double>& trace) {
  std::string out;
  for (std::size_t k = 0; k < trace.states.size(); ++k) {
    json rec;
    rec["t"] = trace.times[k];
    rec["kl"] = k < trace.kl_values.size() ? json(trace.kl_values[k]) : json(nullptr);
    rec["kl_stderr"] = k < trace.kl_std_errors.size() ? json(trace.kl_std_errors[k]) : json(nullptr);
    json comps = json::array();
    for (const auto& c : trace.states[k].components()) {
      comps.push_back({{"w", c.weight}, {"m", vector_json(c.param.mean())}, {"sigma", matrix_json(c.param.cov())}});
    }
    rec["components"] = std::move(comps);
    out += rec.dump() + '\n';
  }
  return out;
}

std::string ellipse_csv(const MixtureTrace<double>& trace, int points_per_ellipse) {
  std::ostringstream os;
  os << "snapshot,t,component,w,x,y\n";
  for (std::size_t k = 0; k < trace.states.size(); ++k) {
    const auto& mu = trace.states[k];
    if (mu.dim() != 2) throw Unsupported("ellipse_csv: only defined in two dimensions");
    for (std::size_t i = 0; i < mu.size(); ++i) {
      auto pts = ellipse_polyline(sigma_ellipse(mu[i].param), points_per_ellipse);
      pts.push_back(pts.front());
      for (const auto& p : pts) {
        os << k << ',' << format_double(trace.times[k]) << ',' << i << ',' << format_double(mu[i].weight) << ','
           << format_double(p.x()) << ',' << format_double(p.y()) << '\n';
      }
    }
  }
  return os.str();
}

std::string dataset_csv(const LogisticDataset<double>& ds) {
  ds.validate();
  std::ostringstream os;
  os << 'y';
  for (Index j = 1; j <= ds.dim(); ++j) os << ",x" << j;
  os << '\n';
  for (Index i = 0; i < ds.size(); ++i) {
    os << ds.labels[static_cast<std::size_t>(i)];
    for (Index j = 0; j < ds.dim(); ++j) os << ',' << format_double(ds.covariates(i, j));
    os << '\n';
  }
  return os.str();
}

std::string dataset_sidecar_json(const LogisticDataset<double>& ds) {
  json j;
  j["m_star"] = vector_json(ds.m_star);
  j["sigma_star"] = matrix_json(ds.sigma_star);
  j["s"] = ds.separation;
  j["seed"] = ds.seed;
  return j.dump(2) + '\n';
}

LogisticDataset<double> parse_dataset(const std::string& csv, const std::string& sidecar_json) {
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("dataset: empty CSV");
  const auto header = split(line, ',');
  if (header.size() < 2 || header[0] != "y") throw ConfigError("dataset: header must be y,x1,...,xd");
  const Index d = static_cast<Index>(header.size()) - 1;
  for (Index j = 1; j <= d; ++j) {
    if (header[static_cast<std::size_t>(j)] != "x" + std::to_string(j)) {
      throw ConfigError("dataset: header column " + std::to_string(j + 1) + " must be x" + std::to_string(j));
    }
  }
  std::vector<std::vector<double>> rows;
  LogisticDataset<double> ds;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    const std::string where = "dataset line " + std::to_string(line_no);
    if (cells.size() != header.size()) throw ConfigError(where + ": expected " + std::to_string(header.size()) + " fields");
    const double y = parse_number(cells[0], where);
    if (y != 0.0 && y != 1.0) throw ConfigError(where + ": label must be 0 or 1");
    ds.labels.push_back(static_cast<int>(y));
    std::vector<double> x;
    for (std::size_t j = 1; j < cells.size(); ++j) x.push_back(parse_number(cells[j], where));
    rows.push_back(std::move(x));
  }
  if (rows.empty()) throw ConfigError("dataset: no examples");
  ds.covariates.resize(static_cast<Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Index j = 0; j < d; ++j) ds.covariates(static_cast<Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  }

  json side;
  try {
    side = json::parse(sidecar_json);
    const auto m = side.at("m_star").get<std::vector<double>>();
    const auto s = side.at("sigma_star").get<std::vector<std::vector<double>>>();
    ds.m_star = Eigen::Map<const Eigen::VectorXd>(m.data(), static_cast<Index>(m.size()));
    ds.sigma_star.resize(static_cast<Index>(s.size()), static_cast<Index>(s.size()));
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i].size() != s.size()) throw ConfigError("dataset sidecar: sigma_star must be square");
      for (std::size_t j = 0; j < s.size(); ++j) ds.sigma_star(Index(i), Index(j)) = s[i][j];
    }
    ds.separation = side.at("s").get<double>();
    ds.seed = side.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dataset sidecar: ") + e.what());
  }
  try {
    ds.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("dataset: ") + e.what());
  }
  return ds;
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".json");
  return p;
}

LogisticDataset<double> load_dataset(const std::filesystem::path& csv_path) {
  return parse_dataset(read_text_file(csv_path), read_text_file(sidecar_path(csv_path)));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace wgfvi
