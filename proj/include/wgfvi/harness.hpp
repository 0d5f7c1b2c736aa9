#pragma once

// Experiment configuration and orchestration behind the wgfvi CLI.
//
// Config schema (JSON, unknown fields rejected):
//
//   {
//     "kind": "gaussian-vi",            optional, must match the CLI kind
//     "seed": 0,
//     "target": {"type": "gaussian", "mean": [..], "cov": [[..]]}
//             | {"type": "mixture", "preset": "bimodal" | "four-mode" | "four-mode-unequal"}
//             | {"type": "mixture", "weights": [..], "means": [[..]], "covs": [[[..]]]}
//             | {"type": "logistic", "d": 2, "n": 10, "s": 2.0, "data_seed": 0,
//                "prior_precision": 0.0, "dataset": "file.csv"},
//     "init": {"mean": [..], "cov": [[..]], "particles": 20, "radius": 3.0},
//             particle kinds draw means uniformly in the ball around "mean"
//     "flow": {"step_size": 0.1, "total_time": 30, "record_every": 1,
//              "covariance_rhs": "gradient" | "hessian", "mc_samples": 20000,
//              "log_z": 0.0 | "grid" | "analytic"},
//     "sgd": {"alpha": .., "step_size": .., "iterations": 1000, "clip": true,
//             "record_every": 1, "seeds": 1, "allow_large_step": false},
//     "wfr": {"centering": "weighted" | "unweighted", "freeze_weights": false,
//             "extinct_threshold": 1e-8},
//     "laplace": {"tol": 1e-10, "max_iter": 200},
//     "grid": {"resolution": 200, "bounds": [x_lo, x_hi, y_lo, y_hi]},
//     "compare_laplace": false,
//     "svg": true
//   }

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wgfvi/bw_sgd.hpp"
#include "wgfvi/gaussian_flow.hpp"
#include "wgfvi/grid.hpp"
#include "wgfvi/targets.hpp"
#include "wgfvi/wfr_flow.hpp"

namespace wgfvi {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDegenerate = 3;

enum class ExperimentKind { kGaussianVi, kMixtureVi, kWfrVi, kBwSgd, kLaplace, kKlGrid };

std::string kind_name(ExperimentKind kind);
ExperimentKind parse_kind(const std::string& name);

enum class TargetType { kGaussian, kMixture, kLogistic };

struct TargetSpec {
  TargetType type = TargetType::kGaussian;

  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  std::string preset;
  std::vector<double> weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;

  Index d = 2;
  Index n = 10;
  double s = 2.0;
  std::uint64_t data_seed = 0;
  double prior_precision = 0.0;
  std::string dataset;  // CSV path; generated from (d, n, s, data_seed) when empty

  Index dim() const;
};

struct InitSpec {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  Index particles = 20;
  double radius = 3.0;
};

enum class LogZSource { kValue, kGrid, kAnalytic };

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kGaussianVi;
  std::uint64_t seed = 0;
  TargetSpec target;
  InitSpec init;
  FlowConfig flow;
  LogZSource log_z_source = LogZSource::kValue;
  SgdConfig sgd;
  Index sgd_seeds = 1;
  WfrOptions wfr;
  double laplace_tol = 1e-10;
  int laplace_max_iter = 200;
  Index grid_resolution = 200;
  std::optional<GridBounds> grid_bounds;
  bool compare_laplace = false;
  bool svg = true;
};

/// Parses and validates a config. Relative dataset paths resolve against
/// `base_dir`. The CLI kind wins over a missing "kind" field and must agree
/// with a present one. Throws ConfigError with the offending field path.
ExperimentConfig parse_config(const std::string& text, ExperimentKind cli_kind,
                              std::optional<std::uint64_t> seed_override = std::nullopt,
                              const std::filesystem::path& base_dir = {});

/// Fully resolved config as JSON; parsing it reproduces the same run.
std::string echo_config(const ExperimentConfig& cfg);

struct BuiltTarget {
  Target<double> target;
  std::optional<LogisticDataset<double>> dataset;
  std::optional<GaussianParam<double>> gaussian;  // set for Gaussian targets
  std::optional<MixtureTarget<double>> mixture;   // set for mixture targets
};

BuiltTarget build_target(const TargetSpec& spec);

/// Named mixture targets in two dimensions.
MixtureTarget<double> mixture_preset(const std::string& name);

struct RunOutcome {
  int exit_code = kExitOk;
  std::string message;
};

/// Runs the experiment and writes its artifacts into `out_dir`. `parallel`
/// bounds the worker threads used for independent seeds.
RunOutcome run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, unsigned parallel = 1);

}  // namespace wgfvi
