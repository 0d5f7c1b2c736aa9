#include "wgfvi/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <set>
#include <thread>

#include <json.hpp>

#include "wgfvi/errors.hpp"
#include "wgfvi/io.hpp"
#include "wgfvi/mixture_flow.hpp"
#include "wgfvi/quadrature.hpp"
#include "wgfvi/svg.hpp"

namespace wgfvi {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Kinds and presets

std::string kind_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kGaussianVi: return "gaussian-vi";
    case ExperimentKind::kMixtureVi: return "mixture-vi";
    case ExperimentKind::kWfrVi: return "wfr-vi";
    case ExperimentKind::kBwSgd: return "bw-sgd";
    case ExperimentKind::kLaplace: return "laplace";
    case ExperimentKind::kKlGrid: return "kl-grid";
  }
  return "";
}

ExperimentKind parse_kind(const std::string& name) {
  for (auto k : {ExperimentKind::kGaussianVi, ExperimentKind::kMixtureVi, ExperimentKind::kWfrVi,
                 ExperimentKind::kBwSgd, ExperimentKind::kLaplace, ExperimentKind::kKlGrid}) {
    if (kind_name(k) == name) return k;
  }
  throw ConfigError("unknown experiment kind '" + name +
                    "' (expected gaussian-vi, mixture-vi, wfr-vi, bw-sgd, laplace or kl-grid)");
}

MixtureTarget<double> mixture_preset(const std::string& name) {
  auto v = [](double a, double b) { return Eigen::Vector2d(a, b).eval(); };
  auto vx = [](const Eigen::Vector2d& x) { return Eigen::VectorXd(x); };
  if (name == "bimodal") {
    Eigen::MatrixXd c1(2, 2), c2(2, 2);
    c1 << 0.6, 0.0, 0.0, 0.2;
    c2 << 0.4, 0.2, 0.2, 0.4;
    return {{0.5, 0.5}, {vx(v(-2, 0)), vx(v(2, 0))}, {c1, c2}};
  }
  if (name == "four-mode" || name == "four-mode-unequal") {
    const Eigen::MatrixXd c = 0.5 * Eigen::MatrixXd::Identity(2, 2);
    std::vector<double> w = name == "four-mode" ? std::vector<double>{0.25, 0.25, 0.25, 0.25}
                                                : std::vector<double>{0.4, 0.3, 0.2, 0.1};
    return {w, {vx(v(2, 2)), vx(v(-2, 2)), vx(v(-2, -2)), vx(v(2, -2))}, {c, c, c, c}};
  }
  throw ConfigError("unknown mixture preset '" + name + "' (expected bimodal, four-mode or four-mode-unequal)");
}

Index TargetSpec::dim() const {
  switch (type) {
    case TargetType::kGaussian: return mean.size();
    case TargetType::kMixture: return preset.empty() ? means.front().size() : 2;
    case TargetType::kLogistic: return d;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config field '" + path + "': " + what);
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

const json& require_object(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path.empty() ? "<root>" : path, "expected an object");
  return j;
}

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) fail(join(path, key), "unknown field");
  }
}

double number(const json& obj, const std::string& path, const std::string& key, double fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) fail(join(path, key), "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) fail(join(path, key), "must be finite");
  return x;
}

long integer(const json& obj, const std::string& path, const std::string& key, long fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer()) fail(join(path, key), "expected an integer");
  return v.get<long>();
}

std::uint64_t unsigned_integer(const json& obj, const std::string& path, const std::string& key,
                               std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_unsigned()) fail(join(path, key), "expected a non-negative integer");
  return v.get<std::uint64_t>();
}

bool boolean(const json& obj, const std::string& path, const std::string& key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_boolean()) fail(join(path, key), "expected true or false");
  return v.get<bool>();
}

std::string string(const json& obj, const std::string& path, const std::string& key, const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_string()) fail(join(path, key), "expected a string");
  return v.get<std::string>();
}

Eigen::VectorXd vector(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) fail(path, "expected a non-empty array of numbers");
  Eigen::VectorXd out(static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) fail(path + "[" + std::to_string(i) + "]", "expected a number");
    out(static_cast<Index>(i)) = v[i].get<double>();
  }
  if (!out.allFinite()) fail(path, "entries must be finite");
  return out;
}

Eigen::MatrixXd matrix(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) fail(path, "expected a non-empty array of rows");
  const auto n = static_cast<Index>(v.size());
  Eigen::MatrixXd out(n, n);
  for (Index i = 0; i < n; ++i) {
    const std::string row_path = path + "[" + std::to_string(i) + "]";
    const Eigen::VectorXd row = vector(v[static_cast<std::size_t>(i)], row_path);
    if (row.size() != n) fail(row_path, "expected " + std::to_string(n) + " entries (square matrix)");
    out.row(i) = row.transpose();
  }
  return out;
}

void require_spd(const Eigen::MatrixXd& m, const std::string& path) {
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff())) {
    fail(path, "matrix must be symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) fail(path, "matrix must be positive definite");
}

TargetSpec parse_target(const json& root, std::uint64_t seed, const fs::path& base_dir) {
  if (!root.contains("target")) fail("target", "missing");
  const json& t = require_object(root.at("target"), "target");
  const std::string type = string(t, "target", "type", "");
  TargetSpec spec;
  if (type == "gaussian") {
    check_keys(t, "target", {"type", "mean", "cov"});
    spec.type = TargetType::kGaussian;
    if (!t.contains("mean")) fail("target.mean", "missing");
    if (!t.contains("cov")) fail("target.cov", "missing");
    spec.mean = vector(t.at("mean"), "target.mean");
    spec.cov = matrix(t.at("cov"), "target.cov");
    if (spec.cov.rows() != spec.mean.size()) fail("target.cov", "dimension does not match target.mean");
    require_spd(spec.cov, "target.cov");
  } else if (type == "mixture") {
    check_keys(t, "target", {"type", "preset", "weights", "means", "covs"});
    spec.type = TargetType::kMixture;
    if (t.contains("preset")) {
      if (t.contains("weights") || t.contains("means") || t.contains("covs")) {
        fail("target.preset", "cannot be combined with explicit weights, means or covs");
      }
      spec.preset = string(t, "target", "preset", "");
      mixture_preset(spec.preset);
    } else {
      for (const char* k : {"weights", "means", "covs"}) {
        if (!t.contains(k)) fail(std::string("target.") + k, "missing (or give a preset)");
      }
      const Eigen::VectorXd w = vector(t.at("weights"), "target.weights");
      spec.weights.assign(w.data(), w.data() + w.size());
      const json& ms = t.at("means");
      const json& cs = t.at("covs");
      if (!ms.is_array() || ms.size() != spec.weights.size()) fail("target.means", "expected one mean per weight");
      if (!cs.is_array() || cs.size() != spec.weights.size()) fail("target.covs", "expected one covariance per weight");
      for (std::size_t i = 0; i < ms.size(); ++i) {
        const std::string mp = "target.means[" + std::to_string(i) + "]";
        const std::string cp = "target.covs[" + std::to_string(i) + "]";
        spec.means.push_back(vector(ms[i], mp));
        spec.covs.push_back(matrix(cs[i], cp));
        if (spec.means.back().size() != spec.means.front().size()) fail(mp, "dimension differs from target.means[0]");
        if (spec.covs.back().rows() != spec.means.back().size()) fail(cp, "dimension does not match its mean");
        require_spd(spec.covs.back(), cp);
      }
      try {
        MixtureTarget<double>(spec.weights, spec.means, spec.covs);
      } catch (const std::exception& e) {
        fail("target.weights", e.what());
      }
    }
  } else if (type == "logistic") {
    check_keys(t, "target", {"type", "d", "n", "s", "data_seed", "prior_precision", "dataset"});
    spec.type = TargetType::kLogistic;
    spec.prior_precision = number(t, "target", "prior_precision", 0.0);
    if (spec.prior_precision < 0.0) fail("target.prior_precision", "must be non-negative");
    if (t.contains("dataset")) {
      for (const char* k : {"d", "n", "s", "data_seed"}) {
        if (t.contains(k)) fail(std::string("target.") + k, "cannot be combined with target.dataset");
      }
      fs::path p = string(t, "target", "dataset", "");
      if (p.is_relative()) p = base_dir / p;
      if (!fs::exists(p)) fail("target.dataset", "file not found: " + p.string());
      if (!fs::exists(sidecar_path(p))) fail("target.dataset", "sidecar not found: " + sidecar_path(p).string());
      LogisticDataset<double> ds;
      try {
        ds = load_dataset(p);
      } catch (const ConfigError& e) {
        fail("target.dataset", e.what());
      }
      spec.dataset = fs::absolute(p).lexically_normal().string();
      spec.d = ds.dim();
      spec.n = ds.size();
      spec.s = ds.separation;
      spec.data_seed = ds.seed;
    } else {
      spec.d = integer(t, "target", "d", 2);
      spec.n = integer(t, "target", "n", 10);
      spec.s = number(t, "target", "s", 2.0);
      spec.data_seed = unsigned_integer(t, "target", "data_seed", seed);
      if (spec.d < 1) fail("target.d", "must be at least 1");
      if (spec.n < 1) fail("target.n", "must be at least 1");
      if (!(spec.s > 0.0)) fail("target.s", "must be positive");
    }
    if (spec.prior_precision == 0.0) {
      const LogisticDataset<double> ds = spec.dataset.empty()
                                             ? generate_logistic_data<double>(spec.d, spec.n, spec.s, spec.data_seed)
                                             : load_dataset(spec.dataset);
      if (logistic_data_separable(ds)) {
        fail("target", "the data are linearly separable, so the flat-prior posterior is improper "
                       "(choose another data_seed or set prior_precision > 0)");
      }
    }
  } else {
    fail("target.type", "expected gaussian, mixture or logistic");
  }
  return spec;
}

FlowConfig parse_flow(const json& root, ExperimentConfig& cfg) {
  FlowConfig f;
  f.seed = cfg.seed;
  f.mc_samples = 20000;
  if (!root.contains("flow")) return f;
  const json& j = require_object(root.at("flow"), "flow");
  check_keys(j, "flow", {"step_size", "total_time", "record_every", "covariance_rhs", "mc_samples", "log_z"});
  f.step_size = number(j, "flow", "step_size", f.step_size);
  f.total_time = number(j, "flow", "total_time", f.total_time);
  f.record_every = integer(j, "flow", "record_every", f.record_every);
  f.mc_samples = integer(j, "flow", "mc_samples", f.mc_samples);
  const std::string rhs = string(j, "flow", "covariance_rhs", "gradient");
  if (rhs == "gradient") {
    f.covariance_rhs = CovarianceRhs::kGradient;
  } else if (rhs == "hessian") {
    f.covariance_rhs = CovarianceRhs::kHessian;
  } else {
    fail("flow.covariance_rhs", "expected gradient or hessian");
  }
  if (j.contains("log_z")) {
    const json& lz = j.at("log_z");
    if (lz.is_string()) {
      const std::string s = lz.get<std::string>();
      if (s == "grid") {
        cfg.log_z_source = LogZSource::kGrid;
      } else if (s == "analytic") {
        cfg.log_z_source = LogZSource::kAnalytic;
      } else {
        fail("flow.log_z", "expected a number, \"grid\" or \"analytic\"");
      }
    } else {
      f.log_z = number(j, "flow", "log_z", 0.0);
    }
  }
  try {
    f.validate();
  } catch (const DomainError& e) {
    fail("flow", e.what());
  }
  if (f.steps() > 10'000'000) fail("flow.total_time", "more than 1e7 steps requested");
  return f;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, ExperimentKind cli_kind,
                              std::optional<std::uint64_t> seed_override, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  require_object(root, "");
  check_keys(root, "", {"kind", "seed", "target", "init", "flow", "sgd", "wfr", "laplace", "grid", "compare_laplace",
                        "svg"});
  ExperimentConfig cfg;
  cfg.kind = cli_kind;
  if (root.contains("kind")) {
    const std::string k = string(root, "", "kind", "");
    ExperimentKind parsed = cli_kind;
    try {
      parsed = parse_kind(k);
    } catch (const ConfigError& e) {
      fail("kind", e.what());
    }
    if (parsed != cli_kind) fail("kind", "'" + k + "' does not match the command-line kind '" + kind_name(cli_kind) + "'");
  }
  cfg.seed = seed_override ? *seed_override : unsigned_integer(root, "", "seed", 0);
  cfg.target = parse_target(root, cfg.seed, base_dir);
  const Index d = cfg.target.dim();

  // init
  cfg.init.mean = Eigen::VectorXd::Zero(d);
  cfg.init.cov = Eigen::MatrixXd::Identity(d, d);
  if (root.contains("init")) {
    const json& j = require_object(root.at("init"), "init");
    check_keys(j, "init", {"mean", "cov", "particles", "radius"});
    if (j.contains("mean")) cfg.init.mean = vector(j.at("mean"), "init.mean");
    if (j.contains("cov")) cfg.init.cov = matrix(j.at("cov"), "init.cov");
    cfg.init.particles = integer(j, "init", "particles", cfg.init.particles);
    cfg.init.radius = number(j, "init", "radius", cfg.init.radius);
  }
  if (cfg.init.mean.size() != d) fail("init.mean", "expected " + std::to_string(d) + " entries");
  if (cfg.init.cov.rows() != d) fail("init.cov", "expected a " + std::to_string(d) + "x" + std::to_string(d) + " matrix");
  require_spd(cfg.init.cov, "init.cov");
  if (cfg.init.particles < 1) fail("init.particles", "must be at least 1");
  if (!(cfg.init.radius > 0.0)) fail("init.radius", "must be positive");

  cfg.flow = parse_flow(root, cfg);
  if (cfg.flow.covariance_rhs == CovarianceRhs::kHessian && cfg.kind != ExperimentKind::kGaussianVi) {
    fail("flow.covariance_rhs", "the hessian form is only available for gaussian-vi");
  }
  if (cfg.log_z_source == LogZSource::kGrid && d != 2) fail("flow.log_z", "\"grid\" requires a two-dimensional target");
  if (cfg.log_z_source == LogZSource::kAnalytic && cfg.target.type == TargetType::kLogistic) {
    fail("flow.log_z", "\"analytic\" is only available for gaussian and mixture targets");
  }

  // sgd
  {
    const json empty = json::object();
    const json& j = root.contains("sgd") ? require_object(root.at("sgd"), "sgd") : empty;
    check_keys(j, "sgd", {"alpha", "step_size", "iterations", "clip", "record_every", "seeds", "allow_large_step"});
    cfg.sgd.seed = cfg.seed;
    if (j.contains("alpha")) {
      cfg.sgd.alpha = number(j, "sgd", "alpha", 1.0);
    } else if (cfg.target.type == TargetType::kGaussian) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cfg.target.cov, Eigen::EigenvaluesOnly);
      cfg.sgd.alpha = 1.0 / es.eigenvalues().maxCoeff();
    } else if (cfg.kind == ExperimentKind::kBwSgd) {
      fail("sgd.alpha", "required unless the target is gaussian");
    }
    if (!(cfg.sgd.alpha > 0.0)) fail("sgd.alpha", "must be positive");
    cfg.sgd.step_size = number(j, "sgd", "step_size", cfg.sgd.max_step());
    cfg.sgd.iterations = integer(j, "sgd", "iterations", 1000);
    cfg.sgd.clip = boolean(j, "sgd", "clip", true);
    cfg.sgd.record_every = integer(j, "sgd", "record_every", 1);
    cfg.sgd.allow_large_step = boolean(j, "sgd", "allow_large_step", false);
    cfg.sgd_seeds = integer(j, "sgd", "seeds", 1);
    if (cfg.sgd_seeds < 1) fail("sgd.seeds", "must be at least 1");
    try {
      cfg.sgd.validate();
    } catch (const DomainError& e) {
      fail("sgd", e.what());
    }
  }

  if (root.contains("wfr")) {
    const json& j = require_object(root.at("wfr"), "wfr");
    check_keys(j, "wfr", {"centering", "freeze_weights", "extinct_threshold"});
    const std::string c = string(j, "wfr", "centering", "weighted");
    if (c == "weighted") {
      cfg.wfr.centering = Centering::kWeighted;
    } else if (c == "unweighted") {
      cfg.wfr.centering = Centering::kUnweighted;
    } else {
      fail("wfr.centering", "expected weighted or unweighted");
    }
    cfg.wfr.freeze_weights = boolean(j, "wfr", "freeze_weights", false);
    cfg.wfr.extinct_threshold = number(j, "wfr", "extinct_threshold", cfg.wfr.extinct_threshold);
    if (cfg.wfr.extinct_threshold < 0.0 || cfg.wfr.extinct_threshold >= 1.0) {
      fail("wfr.extinct_threshold", "must lie in [0, 1)");
    }
  }

  if (root.contains("laplace")) {
    const json& j = require_object(root.at("laplace"), "laplace");
    check_keys(j, "laplace", {"tol", "max_iter"});
    cfg.laplace_tol = number(j, "laplace", "tol", cfg.laplace_tol);
    cfg.laplace_max_iter = static_cast<int>(integer(j, "laplace", "max_iter", cfg.laplace_max_iter));
    if (!(cfg.laplace_tol > 0.0)) fail("laplace.tol", "must be positive");
    if (cfg.laplace_max_iter < 1) fail("laplace.max_iter", "must be at least 1");
  }

  if (root.contains("grid")) {
    const json& j = require_object(root.at("grid"), "grid");
    check_keys(j, "grid", {"resolution", "bounds"});
    cfg.grid_resolution = integer(j, "grid", "resolution", cfg.grid_resolution);
    if (cfg.grid_resolution < 2 || cfg.grid_resolution > 5000) fail("grid.resolution", "must lie in [2, 5000]");
    if (j.contains("bounds")) {
      const Eigen::VectorXd b = vector(j.at("bounds"), "grid.bounds");
      if (b.size() != 4) fail("grid.bounds", "expected [x_lo, x_hi, y_lo, y_hi]");
      GridBounds g{b(0), b(1), b(2), b(3)};
      try {
        g.validate();
      } catch (const DomainError& e) {
        fail("grid.bounds", e.what());
      }
      cfg.grid_bounds = g;
    }
  }

  cfg.compare_laplace = boolean(root, "", "compare_laplace", false);
  cfg.svg = boolean(root, "", "svg", true);

  if (cfg.kind == ExperimentKind::kKlGrid && d != 2) fail("target", "kl-grid requires a two-dimensional target");
  return cfg;
}

namespace {

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json mat_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Index i = 0; i < m.rows(); ++i) a.push_back(vec_json(m.row(i).transpose()));
  return a;
}

json config_json(const ExperimentConfig& cfg) {
  json j;
  j["kind"] = kind_name(cfg.kind);
  j["seed"] = cfg.seed;
  json t;
  switch (cfg.target.type) {
    case TargetType::kGaussian:
      t = {{"type", "gaussian"}, {"mean", vec_json(cfg.target.mean)}, {"cov", mat_json(cfg.target.cov)}};
      break;
    case TargetType::kMixture:
      t["type"] = "mixture";
      if (!cfg.target.preset.empty()) {
        t["preset"] = cfg.target.preset;
      } else {
        t["weights"] = cfg.target.weights;
        json ms = json::array(), cs = json::array();
        for (const auto& m : cfg.target.means) ms.push_back(vec_json(m));
        for (const auto& c : cfg.target.covs) cs.push_back(mat_json(c));
        t["means"] = ms;
        t["covs"] = cs;
      }
      break;
    case TargetType::kLogistic:
      t["type"] = "logistic";
      if (!cfg.target.dataset.empty()) {
        t["dataset"] = cfg.target.dataset;
      } else {
        t["d"] = cfg.target.d;
        t["n"] = cfg.target.n;
        t["s"] = cfg.target.s;
        t["data_seed"] = cfg.target.data_seed;
      }
      t["prior_precision"] = cfg.target.prior_precision;
      break;
  }
  j["target"] = t;
  j["init"] = {{"mean", vec_json(cfg.init.mean)},
               {"cov", mat_json(cfg.init.cov)},
               {"particles", cfg.init.particles},
               {"radius", cfg.init.radius}};
  json f = {{"step_size", cfg.flow.step_size},
            {"total_time", cfg.flow.total_time},
            {"record_every", cfg.flow.record_every},
            {"covariance_rhs", cfg.flow.covariance_rhs == CovarianceRhs::kGradient ? "gradient" : "hessian"},
            {"mc_samples", cfg.flow.mc_samples}};
  switch (cfg.log_z_source) {
    case LogZSource::kValue: f["log_z"] = cfg.flow.log_z; break;
    case LogZSource::kGrid: f["log_z"] = "grid"; break;
    case LogZSource::kAnalytic: f["log_z"] = "analytic"; break;
  }
  j["flow"] = f;
  j["sgd"] = {{"alpha", cfg.sgd.alpha},
              {"step_size", cfg.sgd.step_size},
              {"iterations", cfg.sgd.iterations},
              {"clip", cfg.sgd.clip},
              {"record_every", cfg.sgd.record_every},
              {"seeds", cfg.sgd_seeds},
              {"allow_large_step", cfg.sgd.allow_large_step}};
  j["wfr"] = {{"centering", cfg.wfr.centering == Centering::kWeighted ? "weighted" : "unweighted"},
              {"freeze_weights", cfg.wfr.freeze_weights},
              {"extinct_threshold", cfg.wfr.extinct_threshold}};
  j["laplace"] = {{"tol", cfg.laplace_tol}, {"max_iter", cfg.laplace_max_iter}};
  json g = {{"resolution", cfg.grid_resolution}};
  if (cfg.grid_bounds) {
    const auto& b = *cfg.grid_bounds;
    g["bounds"] = {b.x_lo, b.x_hi, b.y_lo, b.y_hi};
  }
  j["grid"] = g;
  j["compare_laplace"] = cfg.compare_laplace;
  j["svg"] = cfg.svg;
  return j;
}

}  // namespace

std::string echo_config(const ExperimentConfig& cfg) { return config_json(cfg).dump(2) + '\n'; }

// ---------------------------------------------------------------------------
// Targets

BuiltTarget build_target(const TargetSpec& spec) {
  BuiltTarget out;
  switch (spec.type) {
    case TargetType::kGaussian:
      out.gaussian = GaussianParam<double>(spec.mean, spec.cov);
      out.target = gaussian_target(*out.gaussian);
      break;
    case TargetType::kMixture:
      out.mixture = spec.preset.empty() ? MixtureTarget<double>(spec.weights, spec.means, spec.covs)
                                        : mixture_preset(spec.preset);
      out.target = mixture_target(*out.mixture);
      break;
    case TargetType::kLogistic:
      out.dataset = spec.dataset.empty() ? generate_logistic_data<double>(spec.d, spec.n, spec.s, spec.data_seed)
                                         : load_dataset(spec.dataset);
      out.target = logistic_target(*out.dataset, spec.prior_precision);
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Running

namespace {

template <typename F>
void parallel_for(std::size_t n, unsigned threads, F&& body) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) body(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

json param_json(const GaussianParam<double>& p) { return {{"mean", vec_json(p.mean())}, {"cov", mat_json(p.cov())}}; }

struct LogZ {
  double value = 0.0;
  std::string source;
};

struct RunContext {
  const ExperimentConfig& cfg;
  fs::path out;
  unsigned parallel;
  BuiltTarget built;
  json summary;
  std::optional<AutoGridResult> grid;

  void write(const std::string& name, const std::string& content) const { write_text_file(out / name, content); }

  // Centre and half-width of the first grid box.
  std::pair<Eigen::Vector2d, double> grid_guess() {
    if (built.gaussian) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(built.gaussian->cov(), Eigen::EigenvaluesOnly);
      return {built.gaussian->mean(), 8.0 * std::sqrt(es.eigenvalues().maxCoeff())};
    }
    if (built.mixture) {
      Eigen::Vector2d c = Eigen::Vector2d::Zero();
      for (std::size_t i = 0; i < built.mixture->weights.size(); ++i) {
        c += built.mixture->weights[i] * built.mixture->means[i];
      }
      double w = 0.0;
      for (std::size_t i = 0; i < built.mixture->weights.size(); ++i) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(built.mixture->covs[i], Eigen::EigenvaluesOnly);
        w = std::max(w, (built.mixture->means[i] - c).norm() + 8.0 * std::sqrt(es.eigenvalues().maxCoeff()));
      }
      return {c, w};
    }
    const GaussianParam<double> lap =
        laplace_approx(built.target, Eigen::VectorXd::Zero(2).eval(), cfg.laplace_tol, cfg.laplace_max_iter);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lap.cov(), Eigen::EigenvaluesOnly);
    return {lap.mean(), 8.0 * std::sqrt(es.eigenvalues().maxCoeff())};
  }

  const AutoGridResult& normalization_grid() {
    if (!grid) {
      AutoGridResult g;
      if (cfg.grid_bounds) {
        g.grid = evaluate_grid(built.target, *cfg.grid_bounds, cfg.grid_resolution);
        g.log_z = grid_log_normalizer(g.grid);
        g.boundary_fraction = grid_boundary_fraction(g.grid);
      } else {
        const auto [c, w] = grid_guess();
        g = grid_normalize_2d_auto(built.target, c, w, cfg.grid_resolution);
      }
      grid = g;
      const auto& b = g.grid.bounds;
      summary["grid"] = {{"log_z", g.log_z},
                         {"bounds", {b.x_lo, b.x_hi, b.y_lo, b.y_hi}},
                         {"resolution", g.grid.resolution},
                         {"boundary_fraction", g.boundary_fraction},
                         {"expansions", g.expansions}};
    }
    return *grid;
  }

  LogZ log_z() {
    switch (cfg.log_z_source) {
      case LogZSource::kValue: return {cfg.flow.log_z, "config"};
      case LogZSource::kGrid: return {normalization_grid().log_z, "grid"};
      case LogZSource::kAnalytic:
        if (built.gaussian) return {gaussian_log_normalizer(*built.gaussian), "analytic"};
        return {0.0, "analytic"};
    }
    return {};
  }

  ContourSet contours(const GridBounds& view) const {
    return density_contours(evaluate_grid(built.target, view, 160));
  }

  void svg(const std::string& name, const MixtureState<double>& snapshot, const std::string& title) const {
    if (!cfg.svg || snapshot.dim() != 2) return;
    // view box: the snapshot's ellipses plus the target's bulk
    double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
    auto include = [&](const GaussianParam<double>& p) {
      for (const auto& q : ellipse_polyline(sigma_ellipse(p, 2.5), 32)) {
        x_lo = std::min(x_lo, q.x());
        x_hi = std::max(x_hi, q.x());
        y_lo = std::min(y_lo, q.y());
        y_hi = std::max(y_hi, q.y());
      }
    };
    for (const auto& c : snapshot.components()) include(c.param);
    if (built.gaussian) include(*built.gaussian);
    if (built.mixture) {
      const MixtureState<double> modes = built.mixture->as_mixture();
      for (const auto& c : modes.components()) include(c.param);
    }
    const double span = std::max(x_hi - x_lo, y_hi - y_lo) * 1.1;
    const double cx = 0.5 * (x_lo + x_hi), cy = 0.5 * (y_lo + y_hi);
    SvgOptions opt;
    opt.view = GridBounds{cx - span / 2, cx + span / 2, cy - span / 2, cy + span / 2};
    opt.title = title;
    const ContourSet cs = contours(*opt.view);
    write(name, emit_ellipse_svg(snapshot, &cs, opt));
  }
};

json kl_json(double value, const std::string& mode, const LogZ& lz) {
  return {{"value", value}, {"mode", mode}, {"log_z", lz.value}, {"log_z_source", lz.source}};
}

MixtureState<double> trajectory_snapshot(const FlowTrace<double>& trace, std::size_t max_shown = 12) {
  std::vector<GaussianParam<double>> shown;
  const std::size_t n = trace.states.size();
  const std::size_t stride = std::max<std::size_t>(1, (n + max_shown - 1) / max_shown);
  for (std::size_t k = 0; k < n; k += stride) shown.push_back(trace.states[k]);
  if ((n - 1) % stride != 0) shown.push_back(trace.states.back());
  return MixtureState<double>::equal_weights(shown);
}

void run_gaussian_vi(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  FlowConfig flow = cfg.flow;
  const LogZ lz = ctx.log_z();
  flow.log_z = lz.value;
  const GaussianParam<double> p0(cfg.init.mean, cfg.init.cov);
  const FlowTrace<double> trace = integrate_gaussian_flow(p0, ctx.built.target, flow);
  ctx.write("trace.csv", gaussian_trace_csv(trace));
  const GaussianParam<double>& last = trace.states.back();
  ctx.summary["steps"] = trace.steps;
  ctx.summary["records"] = trace.size();
  ctx.summary["final"] = param_json(last);
  ctx.summary["final_kl"] = kl_json(trace.kl_values.back(), "cubature+log_z", lz);
  ctx.summary["findings"] = trace.findings;

  if (cfg.compare_laplace) {
    const GaussianParam<double> lap =
        laplace_approx(ctx.built.target, Eigen::VectorXd::Zero(p0.dim()).eval(), cfg.laplace_tol, cfg.laplace_max_iter);
    ctx.summary["laplace"] = param_json(lap);
    if (p0.dim() == 2) {
      const LogZ glz{ctx.normalization_grid().log_z, "grid"};
      const double vi = normalized_kl_grid(last, ctx.built.target, glz.value, cfg.grid_resolution);
      const double la = normalized_kl_grid(lap, ctx.built.target, glz.value, cfg.grid_resolution);
      ctx.summary["vi_kl"] = kl_json(vi, "normalized-grid", glz);
      ctx.summary["laplace_kl"] = kl_json(la, "normalized-grid", glz);
      ctx.summary["vi_kl_cubature"] =
          kl_json(unnormalized_kl_cubature(last, ctx.built.target, glz.value), "cubature+log_z", glz);
      ctx.summary["laplace_kl_cubature"] =
          kl_json(unnormalized_kl_cubature(lap, ctx.built.target, glz.value), "cubature+log_z", glz);
      ctx.summary["vi_better"] = vi < la;
    } else {
      const double vi = unnormalized_kl_cubature(last, ctx.built.target, lz.value);
      const double la = unnormalized_kl_cubature(lap, ctx.built.target, lz.value);
      ctx.summary["vi_kl"] = kl_json(vi, "cubature+log_z", lz);
      ctx.summary["laplace_kl"] = kl_json(la, "cubature+log_z", lz);
      ctx.summary["vi_better"] = vi < la;
    }
  }
  ctx.svg("flow.svg", trajectory_snapshot(trace), "gaussian-vi trajectory");
}

void write_mixture_outputs(RunContext& ctx, const MixtureTrace<double>& trace, const LogZ& lz) {
  ctx.write("trace.jsonl", mixture_trace_jsonl(trace));
  if (trace.states.front().dim() == 2) {
    MixtureTrace<double> ends;
    ends.times = {trace.times.front(), trace.times.back()};
    ends.states = {trace.states.front(), trace.states.back()};
    ctx.write("ellipses.csv", ellipse_csv(ends));
  }
  ctx.summary["steps"] = trace.steps;
  ctx.summary["records"] = trace.size();
  ctx.summary["components"] = trace.states.back().size();
  json kl = kl_json(trace.kl_values.back(), "monte-carlo+log_z", lz);
  kl["std_error"] = trace.kl_std_errors.back();
  kl["samples"] = ctx.cfg.flow.mc_samples;
  ctx.summary["final_kl"] = kl;
  ctx.summary["final_weights"] = trace.states.back().weights();
  ctx.summary["findings"] = trace.findings;
  ctx.svg("initial.svg", trace.states.front(), "initial mixture");
  ctx.svg("final.svg", trace.states.back(), "final mixture");
}

MixtureState<double> initial_particles(const ExperimentConfig& cfg) {
  return init_particles<double>(cfg.init.particles, cfg.init.radius, cfg.init.cov, cfg.seed, cfg.init.mean);
}

void run_mixture_vi(RunContext& ctx) {
  FlowConfig flow = ctx.cfg.flow;
  const LogZ lz = ctx.log_z();
  flow.log_z = lz.value;
  const MixtureTrace<double> trace = integrate_mixture_flow(initial_particles(ctx.cfg), ctx.built.target, flow);
  write_mixture_outputs(ctx, trace, lz);
}

void run_wfr_vi(RunContext& ctx) {
  FlowConfig flow = ctx.cfg.flow;
  const LogZ lz = ctx.log_z();
  flow.log_z = lz.value;
  const MixtureTrace<double> trace =
      integrate_wfr_flow(WfrState<double>(initial_particles(ctx.cfg)), ctx.built.target, flow, ctx.cfg.wfr);
  double drift = 0.0;
  for (const auto& mu : trace.states) {
    double total = 0.0;
    for (const double w : mu.weights()) total += w;
    drift = std::max(drift, std::abs(total - 1.0));
  }
  ctx.summary["centering"] = ctx.cfg.wfr.centering == Centering::kWeighted ? "weighted" : "unweighted";
  ctx.summary["max_weight_sum_deviation"] = drift;
  write_mixture_outputs(ctx, trace, lz);
}

void run_bw_sgd_kind(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const GaussianParam<double> p0(cfg.init.mean, cfg.init.cov);
  std::vector<std::uint64_t> seeds;
  for (Index i = 0; i < cfg.sgd_seeds; ++i) seeds.push_back(cfg.seed + static_cast<std::uint64_t>(i));
  SgdConfig sgd = cfg.sgd;
  const LogZ lz = ctx.log_z();
  sgd.log_z = lz.value;
  sgd.seed = seeds.front();
  const Index d = p0.dim();

  if (ctx.built.gaussian) {
    const GaussianParam<double>& ref = *ctx.built.gaussian;
    const FlowTrace<double> trace = run_bw_sgd(p0, ctx.built.target, sgd, std::optional<GaussianParam<double>>(ref));
    ctx.write("trace.csv", gaussian_trace_csv(trace));
    const SgdSweep<double> sweep = sweep_bw_sgd(p0, ctx.built.target, sgd, ref, seeds, ctx.parallel);
    const double w0 = w2_distance_sq(p0, ref);
    std::vector<double> bound;
    bool holds = true;
    for (std::size_t j = 0; j < sweep.iterations.size(); ++j) {
      bound.push_back(std::exp(-sgd.alpha * sweep.iterations[j] * sgd.step_size) * w0 +
                      36.0 * double(d) * sgd.step_size / (sgd.alpha * sgd.alpha));
      holds = holds && sweep.mean_w2sq[j] <= bound.back();
    }
    json sw = {{"iterations", sweep.iterations}, {"mean_w2sq", sweep.mean_w2sq}, {"var_w2sq", sweep.var_w2sq},
               {"bound", bound}, {"seeds", sweep.seeds}};
    ctx.write("sweep.json", sw.dump(2) + '\n');
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ref.cov(), Eigen::EigenvaluesOnly);
    std::vector<std::string> findings = trace.findings;
    if (1.0 / es.eigenvalues().minCoeff() > 1.0 + 1e-12) {
      findings.push_back("target Hessian exceeds the identity; the bound assumes hess V <= I");
    }
    ctx.summary["iterations"] = sgd.iterations;
    ctx.summary["alpha"] = sgd.alpha;
    ctx.summary["step_size"] = sgd.step_size;
    ctx.summary["final_mean_w2sq"] = sweep.mean_w2sq.back();
    ctx.summary["final_bound"] = bound.back();
    ctx.summary["bound_holds"] = holds;
    ctx.summary["findings"] = findings;
    ctx.svg("sgd.svg", trajectory_snapshot(trace), "bw-sgd iterates");
    return;
  }

  std::vector<FlowTrace<double>> runs(seeds.size());
  parallel_for(seeds.size(), ctx.parallel, [&](std::size_t i) {
    SgdConfig local = sgd;
    local.seed = seeds[i];
    runs[i] = run_bw_sgd(p0, ctx.built.target, local);
  });
  ctx.write("trace.csv", gaussian_trace_csv(runs.front()));
  double mean_kl = 0.0;
  for (const auto& r : runs) mean_kl += r.kl_values.back();
  mean_kl /= double(runs.size());
  ctx.summary["iterations"] = sgd.iterations;
  ctx.summary["alpha"] = sgd.alpha;
  ctx.summary["step_size"] = sgd.step_size;
  ctx.summary["final_kl"] = kl_json(runs.front().kl_values.back(), "cubature+log_z", lz);
  ctx.summary["final_kl_seed_mean"] = mean_kl;
  ctx.summary["findings"] = runs.front().findings;
  ctx.svg("sgd.svg", trajectory_snapshot(runs.front()), "bw-sgd iterates");
}

void run_laplace(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const Index d = ctx.built.target.dim;
  const GaussianParam<double> lap =
      laplace_approx(ctx.built.target, Eigen::VectorXd::Zero(d).eval(), cfg.laplace_tol, cfg.laplace_max_iter);
  const LogZ lz = ctx.log_z();
  FlowTrace<double> trace;
  trace.times = {0.0};
  trace.states = {lap};
  trace.kl_values = {unnormalized_kl_cubature(lap, ctx.built.target, lz.value)};
  ctx.write("trace.csv", gaussian_trace_csv(trace));
  ctx.summary["laplace"] = param_json(lap);
  ctx.summary["kl_cubature"] = kl_json(trace.kl_values.front(), "cubature+log_z", lz);
  if (d == 2) {
    const LogZ glz{ctx.normalization_grid().log_z, "grid"};
    ctx.summary["kl"] = kl_json(normalized_kl_grid(lap, ctx.built.target, glz.value, cfg.grid_resolution),
                                "normalized-grid", glz);
  }
  ctx.svg("laplace.svg", MixtureState<double>::equal_weights({lap}), "laplace approximation");
}

void run_kl_grid(RunContext& ctx) {
  const auto& g = ctx.normalization_grid();
  const GaussianParam<double> p(ctx.cfg.init.mean, ctx.cfg.init.cov);
  const LogZ glz{g.log_z, "grid"};
  ctx.summary["init_kl"] =
      kl_json(normalized_kl_grid(p, ctx.built.target, g.log_z, ctx.cfg.grid_resolution), "normalized-grid", glz);
  ctx.svg("target.svg", MixtureState<double>::equal_weights({p}), "target contours");
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir, unsigned parallel) {
  const auto start = std::chrono::steady_clock::now();
  // Building the target can still reject the config (e.g. unreadable data),
  // so it happens before anything touches the output directory.
  BuiltTarget built;
  try {
    built = build_target(cfg.target);
  } catch (const ConfigError& e) {
    return {kExitConfig, e.what()};
  }
  fs::create_directories(out_dir);
  RunContext ctx{cfg, out_dir, std::max(1u, parallel), std::move(built), json::object(), std::nullopt};
  ctx.write("config.echo.json", echo_config(cfg));
  if (ctx.built.dataset && cfg.target.dataset.empty()) {
    ctx.write("dataset.csv", dataset_csv(*ctx.built.dataset));
    ctx.write("dataset.json", dataset_sidecar_json(*ctx.built.dataset));
  }
  ctx.summary["kind"] = kind_name(cfg.kind);
  ctx.summary["seed"] = cfg.seed;
  ctx.summary["dim"] = ctx.built.target.dim;

  RunOutcome outcome;
  try {
    switch (cfg.kind) {
      case ExperimentKind::kGaussianVi: run_gaussian_vi(ctx); break;
      case ExperimentKind::kMixtureVi: run_mixture_vi(ctx); break;
      case ExperimentKind::kWfrVi: run_wfr_vi(ctx); break;
      case ExperimentKind::kBwSgd: run_bw_sgd_kind(ctx); break;
      case ExperimentKind::kLaplace: run_laplace(ctx); break;
      case ExperimentKind::kKlGrid: run_kl_grid(ctx); break;
    }
    ctx.summary["status"] = "ok";
  } catch (const DegeneracyError& e) {
    ctx.summary["status"] = "degenerate";
    ctx.summary["error"] = e.what();
    if (e.step() >= 0) ctx.summary["step"] = e.step();
    outcome = {kExitDegenerate, e.what()};
  } catch (const ConvergenceError& e) {
    ctx.summary["status"] = "degenerate";
    ctx.summary["error"] = e.what();
    outcome = {kExitDegenerate, e.what()};
  } catch (const DomainError& e) {
    ctx.summary["status"] = "degenerate";
    ctx.summary["error"] = e.what();
    outcome = {kExitDegenerate, e.what()};
  }
  ctx.write("summary.json", ctx.summary.dump(2) + '\n');
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ctx.write("timing.json", json{{"wall_seconds", seconds}}.dump(2) + '\n');
  return outcome;
}

}  // namespace wgfvi
