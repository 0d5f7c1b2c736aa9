#pragma once

// Target distributions pi ∝ exp(-V) exposed through potential, gradient and
// (optional) Hessian oracles: Gaussians, Gaussian mixtures and the Bayesian
// logistic-regression posterior, plus the Laplace approximation baseline.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <vector>

#include "wgfvi/bw_geometry.hpp"
#include "wgfvi/errors.hpp"
#include "wgfvi/mixture.hpp"
#include "wgfvi/rng.hpp"

namespace wgfvi {

/// Potential V (up to an additive constant) with derivative oracles.
template <typename Scalar = double>
struct Target {
  using Vector = VectorX<Scalar>;
  using Matrix = MatrixX<Scalar>;

  Index dim = 0;
  std::function<Scalar(const Vector&)> potential;
  std::function<Vector(const Vector&)> grad;
  std::function<Matrix(const Vector&)> hess;  // empty when unavailable

  bool has_hessian() const { return static_cast<bool>(hess); }
};

// ---------------------------------------------------------------------------
// Gaussian targets

/// V(x) = 1/2 (x - m)^T cov^{-1} (x - m). The matching log-normalizer is
/// gaussian_log_normalizer(p).
template <typename Scalar>
Target<Scalar> gaussian_target(const GaussianParam<Scalar>& p) {
  const MatrixX<Scalar> precision = p.cov().llt().solve(MatrixX<Scalar>::Identity(p.dim(), p.dim()));
  const MatrixX<Scalar> prec = symmetrize(precision);
  const VectorX<Scalar> m = p.mean();
  Target<Scalar> t;
  t.dim = p.dim();
  t.potential = [prec, m](const VectorX<Scalar>& x) {
    const VectorX<Scalar> r = x - m;
    return Scalar(0.5) * r.dot(prec * r);
  };
  t.grad = [prec, m](const VectorX<Scalar>& x) -> VectorX<Scalar> { return prec * (x - m); };
  t.hess = [prec](const VectorX<Scalar>&) -> MatrixX<Scalar> { return prec; };
  return t;
}

/// log of int exp(-V) for the potential of gaussian_target(p).
template <typename Scalar>
Scalar gaussian_log_normalizer(const GaussianParam<Scalar>& p) {
  const MatrixX<Scalar> l = p.chol();
  return Scalar(0.5) * Scalar(p.dim()) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>) +
         l.diagonal().array().log().sum();
}

/// Target in rescaled coordinates y = scale * x: U(y) = V(y / scale).
/// Hessian bounds shrink by scale^2.
template <typename Scalar>
Target<Scalar> rescale_target(const Target<Scalar>& t, Scalar scale) {
  if (!(scale > Scalar(0))) throw DomainError("rescale_target: scale must be positive");
  Target<Scalar> out;
  out.dim = t.dim;
  auto base = std::make_shared<Target<Scalar>>(t);
  out.potential = [base, scale](const VectorX<Scalar>& y) { return base->potential(y / scale); };
  out.grad = [base, scale](const VectorX<Scalar>& y) -> VectorX<Scalar> { return base->grad(y / scale) / scale; };
  if (t.has_hessian()) {
    out.hess = [base, scale](const VectorX<Scalar>& y) -> MatrixX<Scalar> {
      return base->hess(y / scale) / (scale * scale);
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gaussian-mixture targets

template <typename Scalar = double>
struct MixtureTarget {
  std::vector<Scalar> weights;
  std::vector<VectorX<Scalar>> means;
  std::vector<MatrixX<Scalar>> covs;

  MixtureTarget(std::vector<Scalar> w, std::vector<VectorX<Scalar>> m, std::vector<MatrixX<Scalar>> c)
      : weights(std::move(w)), means(std::move(m)), covs(std::move(c)) {
    if (weights.empty() || weights.size() != means.size() || weights.size() != covs.size()) {
      throw ShapeError("MixtureTarget: inconsistent component lists");
    }
    Scalar total = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (!(weights[i] > Scalar(0))) throw DomainError("MixtureTarget: weights must be positive");
      if (means[i].size() != means[0].size()) throw ShapeError("MixtureTarget: dimension mismatch");
      GaussianParam<Scalar> check(means[i], covs[i]);
      covs[i] = check.cov();
      total += weights[i];
    }
    if (std::abs(total - Scalar(1)) > Scalar(1e-12)) throw DomainError("MixtureTarget: weights must sum to 1");
  }

  Index dim() const { return means.front().size(); }

  MixtureState<Scalar> as_mixture() const {
    std::vector<MixtureComponent<Scalar>> comps;
    for (std::size_t i = 0; i < weights.size(); ++i) comps.push_back({weights[i], {means[i], covs[i]}});
    return MixtureState<Scalar>(std::move(comps));
  }

  GaussianMixtureDensity<Scalar> density() const { return GaussianMixtureDensity<Scalar>(as_mixture()); }
};

/// grad_x log pi(x) for a mixture target, log-sum-exp stabilized.
template <typename Scalar>
VectorX<Scalar> mixture_target_grad_logpi(const MixtureTarget<Scalar>& t, const VectorX<Scalar>& x) {
  if (x.size() != t.dim()) throw ShapeError("mixture_target_grad_logpi: dimension mismatch");
  return t.density().score(x);
}

/// V = -log pi with pi the normalized mixture density, so log Z = 0.
template <typename Scalar>
Target<Scalar> mixture_target(const MixtureTarget<Scalar>& mt) {
  auto density = std::make_shared<const GaussianMixtureDensity<Scalar>>(mt.density());
  Target<Scalar> t;
  t.dim = mt.dim();
  t.potential = [density](const VectorX<Scalar>& x) { return -density->log_density(x); };
  t.grad = [density](const VectorX<Scalar>& x) -> VectorX<Scalar> { return -density->score(x); };
  t.hess = [density](const VectorX<Scalar>& x) -> MatrixX<Scalar> { return -density->log_hessian(x); };
  return t;
}

// ---------------------------------------------------------------------------
// Bayesian logistic regression

template <typename Scalar = double>
struct LogisticDataset {
  MatrixX<Scalar> covariates;  // one row per example
  std::vector<int> labels;     // 0 or 1
  VectorX<Scalar> m_star;      // class-1 mean; class 0 has mean -m_star
  MatrixX<Scalar> sigma_star;  // shared class-conditional covariance
  Scalar separation = 0;
  std::uint64_t seed = 0;

  Index dim() const { return covariates.cols(); }
  Index size() const { return covariates.rows(); }

  /// Fisher's linear discriminant 2 sigma_star^{-1} m_star.
  VectorX<Scalar> fisher_direction() const { return Scalar(2) * sigma_star.llt().solve(m_star); }

  void validate() const {
    if (static_cast<Index>(labels.size()) != covariates.rows()) {
      throw ShapeError("LogisticDataset: label count does not match covariate rows");
    }
    for (int y : labels) {
      if (y != 0 && y != 1) throw DomainError("LogisticDataset: labels must be 0 or 1");
    }
    if (m_star.size() != covariates.cols() || sigma_star.rows() != covariates.cols() ||
        sigma_star.cols() != covariates.cols()) {
      throw ShapeError("LogisticDataset: generating parameters have the wrong dimension");
    }
  }
};

template <typename Scalar = double>
struct LogisticEval {
  Scalar value;
  VectorX<Scalar> grad;
  MatrixX<Scalar> hess;
};

namespace detail {

// log(1 + exp(t)) without overflow.
template <typename Scalar>
Scalar softplus(Scalar t) {
  return t > Scalar(0) ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

template <typename Scalar>
Scalar sigmoid(Scalar t) {
  if (t >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-t));
  const Scalar e = std::exp(t);
  return e / (Scalar(1) + e);
}

}  // namespace detail

/// Negative log-likelihood of the logistic model and its derivatives, with
/// an optional isotropic Gaussian prior of the given precision (0 = flat).
template <typename Scalar>
LogisticEval<Scalar> logistic_potential(const LogisticDataset<Scalar>& ds, const VectorX<Scalar>& z,
                                        Scalar prior_precision = Scalar(0), bool with_hessian = true) {
  const Index d = ds.dim();
  if (z.size() != d) throw ShapeError("logistic_potential: dimension mismatch");
  LogisticEval<Scalar> out{Scalar(0), VectorX<Scalar>::Zero(d),
                           with_hessian ? MatrixX<Scalar>::Zero(d, d) : MatrixX<Scalar>()};
  const VectorX<Scalar> logits = ds.covariates * z;
  VectorX<Scalar> curvature(ds.size());
  for (Index i = 0; i < ds.size(); ++i) {
    const Scalar t = logits(i);
    const int y = ds.labels[static_cast<std::size_t>(i)];
    out.value += y ? detail::softplus(-t) : detail::softplus(t);
    const Scalar s = detail::sigmoid(t);
    out.grad -= (Scalar(y) - s) * ds.covariates.row(i).transpose();
    curvature(i) = s * (Scalar(1) - s);
  }
  if (with_hessian) {
    out.hess = ds.covariates.transpose() * curvature.asDiagonal() * ds.covariates;
    out.hess = symmetrize(out.hess);
  }
  if (prior_precision > Scalar(0)) {
    out.value += Scalar(0.5) * prior_precision * z.squaredNorm();
    out.grad += prior_precision * z;
    if (with_hessian) out.hess.diagonal().array() += prior_precision;
  }
  return out;
}

template <typename Scalar>
Target<Scalar> logistic_target(const LogisticDataset<Scalar>& ds, Scalar prior_precision = Scalar(0)) {
  ds.validate();
  auto data = std::make_shared<const LogisticDataset<Scalar>>(ds);
  Target<Scalar> t;
  t.dim = ds.dim();
  t.potential = [data, prior_precision](const VectorX<Scalar>& z) {
    return logistic_potential(*data, z, prior_precision, false).value;
  };
  t.grad = [data, prior_precision](const VectorX<Scalar>& z) -> VectorX<Scalar> {
    return logistic_potential(*data, z, prior_precision, false).grad;
  };
  t.hess = [data, prior_precision](const VectorX<Scalar>& z) -> MatrixX<Scalar> {
    return logistic_potential(*data, z, prior_precision, true).hess;
  };
  return t;
}

/// Default class-conditional covariance: diag(0.5, 0.17) in d = 2 (eigenvalue
/// ratio about 3), I/d otherwise.
template <typename Scalar = double>
MatrixX<Scalar> default_sigma_star(Index d) {
  if (d == 2) return VectorX<Scalar>((VectorX<Scalar>(2) << Scalar(0.5), Scalar(0.17)).finished()).asDiagonal();
  return MatrixX<Scalar>::Identity(d, d) / Scalar(d);
}

/// Synthetic two-class data: y uniform on {0,1}, x ~ N(+-m_star, sigma_star)
/// with ||2 m_star|| = s and m_star along (1, ..., 1) / sqrt(d).
template <typename Scalar = double>
LogisticDataset<Scalar> generate_logistic_data(Index d, Index n, Scalar s, std::uint64_t seed,
                                               std::optional<MatrixX<Scalar>> sigma_star = std::nullopt) {
  if (d < 1 || n < 1) throw DomainError("generate_logistic_data: d and n must be at least 1");
  if (!(s > Scalar(0))) throw DomainError("generate_logistic_data: separation must be positive");
  LogisticDataset<Scalar> ds;
  ds.sigma_star = sigma_star ? symmetrize(*sigma_star) : default_sigma_star<Scalar>(d);
  if (ds.sigma_star.rows() != d || ds.sigma_star.cols() != d) {
    throw ShapeError("generate_logistic_data: sigma_star has the wrong dimension");
  }
  detail::require_spd<Scalar>(ds.sigma_star, "generate_logistic_data");
  ds.m_star = VectorX<Scalar>::Constant(d, Scalar(0.5) * s / std::sqrt(Scalar(d)));
  ds.separation = s;
  ds.seed = seed;
  const MatrixX<Scalar> l = ds.sigma_star.llt().matrixL();
  Rng rng(seed);
  ds.covariates.resize(n, d);
  ds.labels.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const int y = rng.uniform() < 0.5 ? 0 : 1;
    ds.labels[static_cast<std::size_t>(i)] = y;
    const VectorX<Scalar> mean = y ? ds.m_star : VectorX<Scalar>(-ds.m_star);
    ds.covariates.row(i) = (mean + l * rng.normal_vector<Scalar>(d)).transpose();
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Laplace approximation

/// N(z0, H^{-1}) at a mode z0 of V found by damped Newton with Armijo
/// backtracking. Requires a Hessian oracle.
template <typename Scalar>
GaussianParam<Scalar> laplace_approx(const Target<Scalar>& t, const VectorX<Scalar>& init, Scalar tol,
                                     int max_iter) {
  if (!t.has_hessian()) throw DomainError("laplace_approx: target has no Hessian oracle");
  if (init.size() != t.dim) throw ShapeError("laplace_approx: dimension mismatch");
  const Index d = t.dim;
  VectorX<Scalar> z = init;
  Scalar value = t.potential(z);
  VectorX<Scalar> g = t.grad(z);
  const Scalar runaway = Scalar(1e8);
  for (int iter = 0; iter <= max_iter; ++iter) {
    if (g.norm() <= tol) {
      const MatrixX<Scalar> h = symmetrize(t.hess(z));
      Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(h);
      if (es.eigenvalues()(0) <= Scalar(1e-12) * std::max(Scalar(1), es.eigenvalues().maxCoeff())) {
        throw DomainError("laplace_approx: Hessian at the mode is singular");
      }
      return {z, symmetrize(es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                            es.eigenvectors().transpose())};
    }
    if (iter == max_iter) break;
    MatrixX<Scalar> h = symmetrize(t.hess(z));
    // Levenberg shift until the Newton system is positive definite.
    Scalar shift = 0;
    Eigen::LLT<MatrixX<Scalar>> llt;
    for (;;) {
      llt.compute(h + shift * MatrixX<Scalar>::Identity(d, d));
      if (llt.info() == Eigen::Success) break;
      shift = shift == Scalar(0) ? Scalar(1e-8) * std::max(Scalar(1), h.diagonal().cwiseAbs().maxCoeff())
                                 : shift * Scalar(10);
    }
    const VectorX<Scalar> step = -llt.solve(g);
    const Scalar slope = g.dot(step);
    Scalar a = 1;
    VectorX<Scalar> candidate;
    Scalar cand_value = 0;
    for (int k = 0; k < 60; ++k, a *= Scalar(0.5)) {
      candidate = z + a * step;
      cand_value = t.potential(candidate);
      if (std::isfinite(cand_value) && cand_value <= value + Scalar(1e-4) * a * slope) break;
    }
    if (!(cand_value <= value)) {
      // No further decrease representable: accept if stationary, otherwise fail.
      break;
    }
    z = candidate;
    value = cand_value;
    g = t.grad(z);
    if (z.norm() > runaway) {
      throw ConvergenceError("laplace_approx: iterates diverge (potential has no finite minimizer)");
    }
  }
  throw ConvergenceError("laplace_approx: no convergence within max_iter");
}

/// True when some z != 0 gives every example a non-negative margin
/// (2y - 1) x^T z, so that the flat-prior posterior is improper. At a genuine
/// minimizer of V the margins average to zero under positive weights, while
/// on separable data Newton drifts towards infinity with all margins positive.
template <typename Scalar>
bool logistic_data_separable(const LogisticDataset<Scalar>& ds) {
  ds.validate();
  Eigen::FullPivLU<MatrixX<Scalar>> lu(ds.covariates);
  if (lu.rank() < ds.dim()) return true;
  const Target<Scalar> t = logistic_target(ds);
  VectorX<Scalar> z;
  try {
    z = laplace_approx(t, VectorX<Scalar>::Zero(ds.dim()).eval(), Scalar(1e-10), 500).mean();
  } catch (const ConvergenceError&) {
    return true;
  } catch (const DomainError&) {
    return true;
  }
  Scalar min_margin = std::numeric_limits<Scalar>::infinity();
  for (Index i = 0; i < ds.size(); ++i) {
    const Scalar sign = ds.labels[static_cast<std::size_t>(i)] ? Scalar(1) : Scalar(-1);
    min_margin = std::min(min_margin, sign * ds.covariates.row(i).dot(z));
  }
  return min_margin > Scalar(1e-6) * std::max(Scalar(1), z.norm());
}

}  // namespace wgfvi
