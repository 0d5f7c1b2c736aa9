#pragma once

// Bures-Wasserstein stochastic gradient descent with eigenvalue clipping.
//
// One iteration draws X ~ N(m, cov) and sets
//   m'   = m - h grad V(X)
//   M    = I - h (hess V(X) - cov^{-1})
//   cov' = clip^{1/alpha}(M cov M)

#include <algorithm>
#include <cmath>
#include <exception>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "wgfvi/bw_geometry.hpp"
#include "wgfvi/errors.hpp"
#include "wgfvi/gaussian_flow.hpp"
#include "wgfvi/quadrature.hpp"
#include "wgfvi/rng.hpp"
#include "wgfvi/targets.hpp"

namespace wgfvi {

struct SgdConfig {
  double alpha = 1.0;  // strong log-concavity parameter
  double step_size = 1.0 / 60.0;
  long iterations = 1000;
  std::uint64_t seed = 0;
  bool clip = true;
  long record_every = 1;
  double log_z = 0.0;
  // Step sizes above alpha^2 / 60 are rejected unless this is set; the run
  // then records a finding instead.
  bool allow_large_step = false;

  double clip_threshold() const { return 1.0 / alpha; }
  double max_step() const { return alpha * alpha / 60.0; }

  void validate() const {
    if (!(alpha > 0.0)) throw DomainError("SgdConfig: alpha must be positive");
    if (!(step_size >= 0.0)) throw DomainError("SgdConfig: step_size must be non-negative");
    if (iterations < 0) throw DomainError("SgdConfig: iterations must be non-negative");
    if (record_every < 1) throw DomainError("SgdConfig: record_every must be at least 1");
    if (step_size > max_step() && !allow_large_step) {
      throw DomainError("SgdConfig: step_size exceeds alpha^2/60 (set allow_large_step to override)");
    }
  }

  bool records(long k) const { return k % record_every == 0 || k == iterations; }
};

/// One iteration of BW-SGD. `iteration` is only used for diagnostics.
template <typename Scalar>
GaussianParam<Scalar> bw_sgd_step(const GaussianParam<Scalar>& p, const Target<Scalar>& target, const SgdConfig& cfg,
                                  Rng& rng, long iteration = 0) {
  if (!target.has_hessian()) throw DomainError("bw_sgd_step: target has no Hessian oracle");
  if (target.dim != p.dim()) throw ShapeError("bw_sgd_step: dimension mismatch");
  const Index d = p.dim();
  const Scalar h = Scalar(cfg.step_size);
  Eigen::LLT<MatrixX<Scalar>> llt(p.cov());
  const MatrixX<Scalar> factor = llt.matrixL();
  const VectorX<Scalar> sample = p.mean() + factor * rng.normal_vector<Scalar>(d);

  const VectorX<Scalar> mean = p.mean() - h * target.grad(sample);
  const MatrixX<Scalar> precision = llt.solve(MatrixX<Scalar>::Identity(d, d));
  const MatrixX<Scalar> m = MatrixX<Scalar>::Identity(d, d) - h * (symmetrize(target.hess(sample)) - symmetrize(precision));
  const MatrixX<Scalar> cov_plus = symmetrize(m * p.cov() * m);

  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(cov_plus, Eigen::EigenvaluesOnly);
  if (!(es.eigenvalues()(0) > Scalar(0)) || !cov_plus.allFinite()) {
    throw DegeneracyError("bw_sgd_step: covariance lost positive definiteness (h = " + std::to_string(cfg.step_size) +
                              ", iteration " + std::to_string(iteration) + ")",
                          iteration);
  }
  if (!cfg.clip) return {mean, cov_plus};
  return {mean, clip_eigenvalues<Scalar>(cov_plus, Scalar(cfg.clip_threshold()))};
}

/// Runs `iterations` steps of BW-SGD from p0. With a reference, the trace
/// records W2^2(p_k, reference); otherwise the cubature KL with cfg.log_z.
template <typename Scalar>
FlowTrace<Scalar> run_bw_sgd(const GaussianParam<Scalar>& p0, const Target<Scalar>& target, const SgdConfig& cfg,
                             const std::optional<GaussianParam<Scalar>>& reference = std::nullopt) {
  cfg.validate();
  FlowTrace<Scalar> trace;
  if (cfg.step_size > cfg.max_step()) {
    trace.findings.push_back("step size " + std::to_string(cfg.step_size) + " exceeds alpha^2/60 = " +
                             std::to_string(cfg.max_step()));
  }
  if (target.dim != p0.dim()) throw ShapeError("run_bw_sgd: dimension mismatch");

  const Scalar lower = Scalar(cfg.alpha / 9.0);
  const Scalar upper = Scalar(1.0 / cfg.alpha);
  auto spectrum = [](const MatrixX<Scalar>& cov) {
    Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(cov, Eigen::EigenvaluesOnly);
    return std::pair<Scalar, Scalar>(es.eigenvalues()(0), es.eigenvalues()(es.eigenvalues().size() - 1));
  };
  {
    const auto [lo, hi] = spectrum(p0.cov());
    if (lo < lower || hi > upper) {
      trace.findings.push_back("initial covariance outside [alpha/9, 1/alpha] spectral band");
    }
  }

  auto record = [&](long k, const GaussianParam<Scalar>& p) {
    trace.times.push_back(Scalar(k));
    if (reference) {
      trace.w2sq_to_ref.push_back(w2_distance_sq(p, *reference));
    } else {
      trace.kl_values.push_back(unnormalized_kl_cubature(p, target, Scalar(cfg.log_z)));
    }
    trace.states.push_back(p);
  };

  Rng rng(cfg.seed);
  GaussianParam<Scalar> p = p0;
  trace.steps = cfg.iterations;
  record(0, p);
  long lower_violations = 0;
  for (long k = 1; k <= cfg.iterations; ++k) {
    p = bw_sgd_step(p, target, cfg, rng, k);
    if (spectrum(p.cov()).first < lower) ++lower_violations;
    if (cfg.records(k)) record(k, p);
  }
  if (lower_violations > 0) {
    trace.findings.push_back("smallest covariance eigenvalue fell below alpha/9 at " +
                             std::to_string(lower_violations) + " iterations");
  }
  return trace;
}

/// Per-record mean and variance of W2^2 to a reference across seeds.
template <typename Scalar = double>
struct SgdSweep {
  std::vector<Scalar> iterations;
  std::vector<Scalar> mean_w2sq;
  std::vector<Scalar> var_w2sq;
  std::vector<std::uint64_t> seeds;
};

/// Runs BW-SGD for each seed (optionally on `threads` worker threads) and
/// aggregates in seed order, so results do not depend on the schedule.
template <typename Scalar>
SgdSweep<Scalar> sweep_bw_sgd(const GaussianParam<Scalar>& p0, const Target<Scalar>& target, SgdConfig cfg,
                              const GaussianParam<Scalar>& reference, const std::vector<std::uint64_t>& seeds,
                              unsigned threads = 1) {
  if (seeds.empty()) throw DomainError("sweep_bw_sgd: no seeds");
  std::vector<std::vector<Scalar>> runs(seeds.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < seeds.size(); i += stride) {
      SgdConfig local = cfg;
      local.seed = seeds[i];
      runs[i] = run_bw_sgd(p0, target, local, std::optional<GaussianParam<Scalar>>(reference)).w2sq_to_ref;
    }
  };
  threads = std::max(1u, threads);
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          work(t, threads);
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
  SgdSweep<Scalar> out;
  out.seeds = seeds;
  const std::size_t n_rec = runs.front().size();
  for (long k = 0; k <= cfg.iterations; ++k) {
    if (k == 0 || cfg.records(k)) out.iterations.push_back(Scalar(k));
  }
  out.mean_w2sq.assign(n_rec, Scalar(0));
  out.var_w2sq.assign(n_rec, Scalar(0));
  for (const auto& run : runs) {
    for (std::size_t j = 0; j < n_rec; ++j) out.mean_w2sq[j] += run[j];
  }
  for (auto& v : out.mean_w2sq) v /= Scalar(runs.size());
  if (runs.size() > 1) {
    for (const auto& run : runs) {
      for (std::size_t j = 0; j < n_rec; ++j) {
        const Scalar e = run[j] - out.mean_w2sq[j];
        out.var_w2sq[j] += e * e;
      }
    }
    for (auto& v : out.var_w2sq) v /= Scalar(runs.size() - 1);
  }
  return out;
}

/// Target rescaled so that hess V <= I given an upper bound beta on its
/// Hessian: y = sqrt(beta) x. Strong convexity alpha becomes alpha / beta.
template <typename Scalar = double>
struct RescaledTarget {
  Target<Scalar> target;
  Scalar scale;  // y = scale * x

  GaussianParam<Scalar> to_scaled(const GaussianParam<Scalar>& p) const {
    return {scale * p.mean(), scale * scale * p.cov()};
  }
  GaussianParam<Scalar> from_scaled(const GaussianParam<Scalar>& p) const {
    return {p.mean() / scale, p.cov() / (scale * scale)};
  }
};

template <typename Scalar>
RescaledTarget<Scalar> rescale_for_sgd(const Target<Scalar>& target, Scalar beta) {
  if (!(beta > Scalar(0))) throw DomainError("rescale_for_sgd: beta must be positive");
  const Scalar scale = std::sqrt(beta);
  return {rescale_target(target, scale), scale};
}

}  // namespace wgfvi
