#pragma once

// Bures-Wasserstein gradient flow of KL(. || pi) restricted to Gaussians:
//
//   dm/dt     = -E[grad V(Y)]
//   dcov/dt   = 2 I - E[grad V(Y) (Y - m)^T + (Y - m) grad V(Y)^T],   Y ~ N(m, cov)
//
// with expectations by sigma-point cubature. The covariance is integrated
// in square-root form (cov = R R^T, R lower triangular) with classical RK4.
//
// Flat state layout: the mean first, then the lower triangle of R in
// column-major order.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "wgfvi/bw_geometry.hpp"
#include "wgfvi/errors.hpp"
#include "wgfvi/quadrature.hpp"
#include "wgfvi/targets.hpp"

namespace wgfvi {

enum class CovarianceRhs {
  kGradient,  // Hessian-free form: 2I - E[grad V (x) (Y - m) + (Y - m) (x) grad V]
  kHessian,   // 2I - cov E[hess V] - E[hess V] cov
};

struct FlowConfig {
  double step_size = 0.1;
  double total_time = 30.0;
  long record_every = 1;
  double log_z = 0.0;
  std::uint64_t seed = 0;
  CovarianceRhs covariance_rhs = CovarianceRhs::kGradient;
  long mc_samples = 50000;  // mixture flows only
  bool record_kl = true;

  long steps() const { return std::lround(total_time / step_size); }

  void validate() const {
    if (!(step_size > 0.0)) throw DomainError("FlowConfig: step_size must be positive");
    if (!(total_time >= step_size)) throw DomainError("FlowConfig: total_time must be at least step_size");
    if (record_every < 1) throw DomainError("FlowConfig: record_every must be at least 1");
    if (mc_samples < 1) throw DomainError("FlowConfig: mc_samples must be at least 1");
  }

  // True when step k (1-based, after the update) should be recorded.
  bool records(long k) const { return k % record_every == 0 || k == steps(); }
};

/// Time-stamped sequence of states with KL estimates.
template <typename State, typename Scalar = double>
struct Trace {
  std::vector<Scalar> times;
  std::vector<State> states;
  std::vector<Scalar> kl_values;
  std::vector<Scalar> kl_std_errors;  // Monte Carlo traces only
  std::vector<Scalar> w2sq_to_ref;    // when a reference distribution is known
  std::vector<std::string> findings;  // non-fatal diagnostics
  long steps = 0;

  std::size_t size() const { return times.size(); }
};

template <typename Scalar = double>
using FlowTrace = Trace<GaussianParam<Scalar>, Scalar>;

// ---------------------------------------------------------------------------
// Right-hand sides

template <typename Scalar = double>
struct GaussianRhs {
  VectorX<Scalar> dm;
  MatrixX<Scalar> dSigma;
};

/// Right-hand side from sigma points of N(mean, factor factor^T).
template <typename Scalar>
GaussianRhs<Scalar> sarkka_rhs(const VectorX<Scalar>& mean, const MatrixX<Scalar>& factor,
                               const Target<Scalar>& target, const CubatureRule<Scalar>& rule,
                               CovarianceRhs form = CovarianceRhs::kGradient) {
  const Index d = mean.size();
  if (target.dim != d) throw ShapeError("sarkka_rhs: target dimension mismatch");
  const SigmaPoints<Scalar> sp = sigma_points<Scalar>(mean, factor, rule);
  GaussianRhs<Scalar> out{VectorX<Scalar>::Zero(d), MatrixX<Scalar>::Zero(d, d)};
  MatrixX<Scalar> cross = MatrixX<Scalar>::Zero(d, d);
  MatrixX<Scalar> mean_hess = MatrixX<Scalar>::Zero(d, d);
  for (Index n = 0; n < sp.count(); ++n) {
    const VectorX<Scalar> x = sp.points.col(n);
    const VectorX<Scalar> g = target.grad(x);
    out.dm -= sp.weights(n) * g;
    if (form == CovarianceRhs::kGradient) {
      cross.noalias() += sp.weights(n) * g * (x - mean).transpose();
    } else {
      mean_hess += sp.weights(n) * target.hess(x);
    }
  }
  out.dSigma = Scalar(2) * MatrixX<Scalar>::Identity(d, d);
  if (form == CovarianceRhs::kGradient) {
    out.dSigma -= cross + cross.transpose();
  } else {
    if (!target.has_hessian()) throw DomainError("sarkka_rhs: Hessian form requires a Hessian oracle");
    const MatrixX<Scalar> cov = factor * factor.transpose();
    const MatrixX<Scalar> prod = cov * mean_hess;
    out.dSigma -= prod + prod.transpose();
  }
  return out;
}

template <typename Scalar>
GaussianRhs<Scalar> sarkka_rhs(const GaussianParam<Scalar>& p, const Target<Scalar>& target,
                               const CubatureRule<Scalar>& rule, CovarianceRhs form = CovarianceRhs::kGradient) {
  if (form == CovarianceRhs::kHessian && !target.has_hessian()) {
    throw DomainError("sarkka_rhs: Hessian form requires a Hessian oracle");
  }
  return sarkka_rhs<Scalar>(p.mean(), p.chol(), target, rule, form);
}

/// Lower-triangular L with L_ii = A_ii / 2 and L_ij = A_ij below the diagonal.
template <typename Scalar>
MatrixX<Scalar> tria(const MatrixX<Scalar>& a) {
  detail::require_square(a, "tria");
  MatrixX<Scalar> l = a.template triangularView<Eigen::StrictlyLower>();
  l.diagonal() = a.diagonal() / Scalar(2);
  return l;
}

/// Mean plus lower-triangular factor R with positive diagonal.
template <typename Scalar = double>
struct SqrtGaussianState {
  VectorX<Scalar> mean;
  MatrixX<Scalar> chol;

  SqrtGaussianState(VectorX<Scalar> m, MatrixX<Scalar> r) : mean(std::move(m)), chol(std::move(r)) {
    if (chol.rows() != mean.size() || chol.cols() != mean.size()) {
      throw ShapeError("SqrtGaussianState: dimension mismatch");
    }
    if (!chol.template triangularView<Eigen::StrictlyUpper>().toDenseMatrix().isZero(0)) {
      throw DomainError("SqrtGaussianState: factor is not lower triangular");
    }
    if (!(chol.diagonal().array() > Scalar(0)).all()) {
      throw DomainError("SqrtGaussianState: factor diagonal must be positive");
    }
  }

  explicit SqrtGaussianState(const GaussianParam<Scalar>& p) : SqrtGaussianState(p.mean(), p.chol()) {}

  Index dim() const { return mean.size(); }
  MatrixX<Scalar> cov() const { return symmetrize(chol * chol.transpose()); }
  GaussianParam<Scalar> param() const { return {mean, cov()}; }
};

template <typename Scalar = double>
struct SqrtRhs {
  VectorX<Scalar> dm;
  MatrixX<Scalar> dR;
};

namespace detail {

constexpr double kMinFactorDiagonal = 1e-12;

template <typename Scalar>
void require_nondegenerate_factor(const MatrixX<Scalar>& r, const char* what) {
  const Scalar smallest = r.diagonal().cwiseAbs().minCoeff();
  if (!(smallest >= Scalar(kMinFactorDiagonal)) || !r.allFinite()) {
    throw DegeneracyError(std::string(what) + ": covariance factor is degenerate (diagonal entry " +
                          std::to_string(static_cast<double>(smallest)) + ")");
  }
}

// dR = R tria(R^{-1} dSigma R^{-T}); assumes dSigma symmetric.
template <typename Scalar>
MatrixX<Scalar> factor_derivative(const MatrixX<Scalar>& r, const MatrixX<Scalar>& d_sigma) {
  require_nondegenerate_factor(r, "sqrt_rhs");
  const auto lower = r.template triangularView<Eigen::Lower>();
  const MatrixX<Scalar> left = lower.solve(d_sigma);                        // R^{-1} dSigma
  const MatrixX<Scalar> whitened = lower.solve(left.transpose());          // R^{-1} dSigma R^{-T}
  MatrixX<Scalar> dr = r.template triangularView<Eigen::Lower>() * tria<Scalar>(symmetrize(whitened));
  return dr.template triangularView<Eigen::Lower>();
}

}  // namespace detail

/// Square-root form of the covariance ODE.
template <typename Scalar>
SqrtRhs<Scalar> sqrt_rhs(const SqrtGaussianState<Scalar>& state, const GaussianRhs<Scalar>& rhs) {
  if (rhs.dSigma.rows() != state.dim() || rhs.dm.size() != state.dim()) {
    throw ShapeError("sqrt_rhs: dimension mismatch");
  }
  return {rhs.dm, detail::factor_derivative<Scalar>(state.chol, rhs.dSigma)};
}

// ---------------------------------------------------------------------------
// Integration

/// Classical fourth-order Runge-Kutta step x + h/6 (k1 + 2 k2 + 2 k3 + k4).
template <typename Vector, typename Rhs>
Vector rk4_step(const Vector& x, Rhs&& rhs, double h) {
  using S = typename Vector::Scalar;
  const S hs = static_cast<S>(h);
  const Vector k1 = rhs(x);
  const Vector k2 = rhs(Vector(x + (hs / 2) * k1));
  const Vector k3 = rhs(Vector(x + (hs / 2) * k2));
  const Vector k4 = rhs(Vector(x + hs * k3));
  return x + (hs / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
}

/// Packs the lower triangle of a square matrix column by column.
template <typename Scalar>
void pack_lower(const MatrixX<Scalar>& r, Eigen::Ref<VectorX<Scalar>> out) {
  const Index d = r.rows();
  Index k = 0;
  for (Index j = 0; j < d; ++j) {
    for (Index i = j; i < d; ++i) out(k++) = r(i, j);
  }
}

template <typename Scalar, typename Segment>
MatrixX<Scalar> unpack_lower(const Segment& packed, Index d) {
  MatrixX<Scalar> r = MatrixX<Scalar>::Zero(d, d);
  Index k = 0;
  for (Index j = 0; j < d; ++j) {
    for (Index i = j; i < d; ++i) r(i, j) = packed(k++);
  }
  return r;
}

constexpr Index packed_lower_size(Index d) { return d * (d + 1) / 2; }

namespace detail {

template <typename Scalar>
void check_flow_inputs(const Index d, const Target<Scalar>& target, const FlowConfig& cfg) {
  cfg.validate();
  if (target.dim != d) throw ShapeError("flow: target dimension mismatch");
  if (cfg.covariance_rhs == CovarianceRhs::kHessian && !target.has_hessian()) {
    throw DomainError("flow: Hessian covariance form requires a Hessian oracle");
  }
}

template <typename Scalar>
void record_gaussian(FlowTrace<Scalar>& trace, Scalar t, GaussianParam<Scalar> p, const Target<Scalar>& target,
                     const FlowConfig& cfg) {
  trace.times.push_back(t);
  if (cfg.record_kl) trace.kl_values.push_back(unnormalized_kl_cubature(p, target, Scalar(cfg.log_z)));
  trace.states.push_back(std::move(p));
}

}  // namespace detail

/// Integrates the square-root Gaussian flow from p0 over [0, T] with RK4 step
/// h, recording every `record_every` steps (plus the first and last state).
template <typename Scalar>
FlowTrace<Scalar> integrate_gaussian_flow(const GaussianParam<Scalar>& p0, const Target<Scalar>& target,
                                          const FlowConfig& cfg) {
  const Index d = p0.dim();
  detail::check_flow_inputs(d, target, cfg);
  const CubatureRule<Scalar> rule = CubatureRule<Scalar>::degree3(d);
  const Index packed = packed_lower_size(d);

  VectorX<Scalar> x(d + packed);
  x.head(d) = p0.mean();
  pack_lower<Scalar>(p0.chol(), x.tail(packed));

  auto rhs = [&](const VectorX<Scalar>& state) -> VectorX<Scalar> {
    const VectorX<Scalar> m = state.head(d);
    const MatrixX<Scalar> r = unpack_lower<Scalar>(state.tail(packed), d);
    detail::require_nondegenerate_factor(r, "integrate_gaussian_flow");
    const GaussianRhs<Scalar> g = sarkka_rhs<Scalar>(m, r, target, rule, cfg.covariance_rhs);
    VectorX<Scalar> out(state.size());
    out.head(d) = g.dm;
    pack_lower<Scalar>(detail::factor_derivative<Scalar>(r, g.dSigma), out.tail(packed));
    return out;
  };
  auto to_param = [&](const VectorX<Scalar>& state) {
    const MatrixX<Scalar> r = unpack_lower<Scalar>(state.tail(packed), d);
    return GaussianParam<Scalar>(state.head(d), r * r.transpose());
  };

  FlowTrace<Scalar> trace;
  const long n_steps = cfg.steps();
  trace.steps = n_steps;
  detail::record_gaussian(trace, Scalar(0), p0, target, cfg);
  for (long k = 1; k <= n_steps; ++k) {
    try {
      x = rk4_step(x, rhs, cfg.step_size);
      const MatrixX<Scalar> r = unpack_lower<Scalar>(x.tail(packed), d);
      if (!x.allFinite() || !(r.diagonal().array() > Scalar(detail::kMinFactorDiagonal)).all()) {
        throw DegeneracyError("integrate_gaussian_flow: covariance factor lost positive diagonal", k);
      }
      if (cfg.records(k)) detail::record_gaussian(trace, Scalar(k * cfg.step_size), to_param(x), target, cfg);
    } catch (const DegeneracyError& e) {
      throw DegeneracyError(std::string(e.what()) + " at step " + std::to_string(k), k);
    } catch (const DomainError& e) {
      throw DegeneracyError(std::string("integrate_gaussian_flow: ") + e.what() + " at step " + std::to_string(k), k);
    }
  }
  return trace;
}

/// Same flow integrated on the full covariance matrix instead of its factor.
/// Sigma points use a fresh Cholesky factor at every stage.
template <typename Scalar>
FlowTrace<Scalar> integrate_gaussian_flow_full(const GaussianParam<Scalar>& p0, const Target<Scalar>& target,
                                               const FlowConfig& cfg) {
  const Index d = p0.dim();
  detail::check_flow_inputs(d, target, cfg);
  const CubatureRule<Scalar> rule = CubatureRule<Scalar>::degree3(d);

  VectorX<Scalar> x(d + d * d);
  x.head(d) = p0.mean();
  x.tail(d * d) = p0.cov().reshaped();

  auto rhs = [&](const VectorX<Scalar>& state) -> VectorX<Scalar> {
    const MatrixX<Scalar> cov = symmetrize(state.tail(d * d).reshaped(d, d));
    Eigen::LLT<MatrixX<Scalar>> llt(cov);
    if (llt.info() != Eigen::Success) throw DegeneracyError("integrate_gaussian_flow_full: covariance not PD");
    const GaussianRhs<Scalar> g = sarkka_rhs<Scalar>(state.head(d), llt.matrixL(), target, rule, cfg.covariance_rhs);
    VectorX<Scalar> out(state.size());
    out.head(d) = g.dm;
    out.tail(d * d) = symmetrize(g.dSigma).reshaped();
    return out;
  };

  FlowTrace<Scalar> trace;
  const long n_steps = cfg.steps();
  trace.steps = n_steps;
  detail::record_gaussian(trace, Scalar(0), p0, target, cfg);
  for (long k = 1; k <= n_steps; ++k) {
    try {
      x = rk4_step(x, rhs, cfg.step_size);
      if (cfg.records(k)) {
        const MatrixX<Scalar> cov = x.tail(d * d).reshaped(d, d);
        detail::record_gaussian(trace, Scalar(k * cfg.step_size), GaussianParam<Scalar>(x.head(d), cov), target, cfg);
      }
    } catch (const DegeneracyError& e) {
      throw DegeneracyError(std::string(e.what()) + " at step " + std::to_string(k), k);
    } catch (const DomainError& e) {
      throw DegeneracyError(std::string("integrate_gaussian_flow_full: ") + e.what() + " at step " + std::to_string(k), k);
    }
  }
  return trace;
}

}  // namespace wgfvi
