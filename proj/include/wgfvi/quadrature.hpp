#pragma once

// Sigma-point cubature for Gaussian expectations and the KL estimators built
// on it. The rule is the 2d-point degree-3 spherical cubature: points
// m +- sqrt(d) R e_n with weights 1/(2d), where R R^T = cov is the
// lower-triangular factor.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <type_traits>
#include <utility>
#include <vector>

#include "wgfvi/bw_geometry.hpp"
#include "wgfvi/errors.hpp"
#include "wgfvi/mixture.hpp"
#include "wgfvi/rng.hpp"
#include "wgfvi/targets.hpp"

namespace wgfvi {

template <typename Scalar = double>
struct CubatureRule {
  VectorX<Scalar> weights;  // alpha_n
  VectorX<Scalar> scales;   // c_n
  Index dimension = 0;

  Index count() const { return 2 * dimension; }

  static CubatureRule degree3(Index d) {
    if (d < 1) throw DomainError("CubatureRule: dimension must be positive");
    CubatureRule rule;
    rule.dimension = d;
    rule.weights = VectorX<Scalar>::Constant(2 * d, Scalar(1) / Scalar(2 * d));
    rule.scales = VectorX<Scalar>::Constant(2 * d, std::sqrt(Scalar(d)));
    return rule;
  }
};

/// Weighted point set; column n of `points` carries weight `weights(n)`.
template <typename Scalar = double>
struct SigmaPoints {
  VectorX<Scalar> weights;
  MatrixX<Scalar> points;

  Index count() const { return points.cols(); }
  auto point(Index n) const { return points.col(n); }
};

/// Sigma points from a mean and a lower-triangular factor: column n is
/// mean + c_n R e_n for n < d and mean - c_n R e_{n-d} otherwise.
template <typename Scalar>
SigmaPoints<Scalar> sigma_points(const VectorX<Scalar>& mean, const MatrixX<Scalar>& factor,
                                 const CubatureRule<Scalar>& rule) {
  const Index d = mean.size();
  if (factor.rows() != d || factor.cols() != d || rule.dimension != d) {
    throw ShapeError("sigma_points: dimension mismatch");
  }
  SigmaPoints<Scalar> sp;
  sp.weights = rule.weights;
  sp.points.resize(d, 2 * d);
  for (Index n = 0; n < d; ++n) {
    sp.points.col(n) = mean + rule.scales(n) * factor.col(n);
    sp.points.col(n + d) = mean - rule.scales(n + d) * factor.col(n);
  }
  return sp;
}

template <typename Scalar>
SigmaPoints<Scalar> sigma_points(const GaussianParam<Scalar>& p) {
  Eigen::LLT<MatrixX<Scalar>> llt(p.cov());
  if (llt.info() != Eigen::Success) throw DomainError("sigma_points: covariance factorization failed");
  return sigma_points<Scalar>(p.mean(), llt.matrixL(), CubatureRule<Scalar>::degree3(p.dim()));
}

/// sum_n alpha_n f(x_n). `f` must return a plain value (scalar, vector or
/// matrix), not an Eigen expression.
template <typename Scalar, typename F>
auto gauss_expect(const SigmaPoints<Scalar>& sp, F&& f) {
  using Result = std::decay_t<decltype(f(std::declval<const VectorX<Scalar>&>()))>;
  VectorX<Scalar> x = sp.points.col(0);
  Result acc = sp.weights(0) * f(x);
  for (Index n = 1; n < sp.count(); ++n) {
    x = sp.points.col(n);
    acc += sp.weights(n) * f(x);
  }
  return acc;
}

template <typename Scalar, typename F>
VectorX<Scalar> gauss_expect_vec(const GaussianParam<Scalar>& p, F&& f) {
  return gauss_expect(sigma_points(p), [&](const VectorX<Scalar>& x) -> VectorX<Scalar> { return f(x); });
}

template <typename Scalar, typename F>
MatrixX<Scalar> gauss_expect_mat(const GaussianParam<Scalar>& p, F&& f) {
  return gauss_expect(sigma_points(p), [&](const VectorX<Scalar>& x) -> MatrixX<Scalar> { return f(x); });
}

template <typename Scalar, typename F>
Scalar gauss_expect_scalar(const GaussianParam<Scalar>& p, F&& f) {
  return gauss_expect(sigma_points(p), [&](const VectorX<Scalar>& x) -> Scalar { return f(x); });
}

/// int p log p = -(d/2) log(2 pi e) - (1/2) log det cov.
template <typename Scalar>
Scalar gaussian_neg_entropy(const GaussianParam<Scalar>& p) {
  const Scalar d = Scalar(p.dim());
  const MatrixX<Scalar> l = p.chol();
  return -Scalar(0.5) * d * std::log(Scalar(2) * std::numbers::pi_v<Scalar> * std::numbers::e_v<Scalar>) -
         l.diagonal().array().log().sum();
}

/// KL(p || pi) with pi = exp(-V) / Z: E_p V (by cubature) + neg-entropy + log Z.
/// With log_z = 0 this is the KL to exp(-V) up to the unknown log Z.
template <typename Scalar>
Scalar unnormalized_kl_cubature(const GaussianParam<Scalar>& p, const Target<Scalar>& target, Scalar log_z) {
  if (target.dim != p.dim()) throw ShapeError("unnormalized_kl_cubature: dimension mismatch");
  return gauss_expect_scalar(p, [&](const VectorX<Scalar>& x) { return target.potential(x); }) +
         gaussian_neg_entropy(p) + log_z;
}

template <typename Scalar = double>
struct McEstimate {
  Scalar value = 0;
  Scalar std_error = 0;  // standard error of the mean
};

/// Monte Carlo KL(q || pi) for a mixture q: mean of log q(X) + V(X) over
/// X ~ q, plus log_z. Deterministic given seed.
template <typename Scalar>
McEstimate<Scalar> mc_kl_mixture(const MixtureState<Scalar>& q, const Target<Scalar>& target, Index n_samples,
                                 std::uint64_t seed, Scalar log_z) {
  if (n_samples < 1) throw DomainError("mc_kl_mixture: n_samples must be at least 1");
  if (target.dim != q.dim()) throw ShapeError("mc_kl_mixture: dimension mismatch");
  const GaussianMixtureDensity<Scalar> density(q);
  Rng rng(seed);
  std::vector<Scalar> values(static_cast<std::size_t>(n_samples));
  Scalar mean = 0;
  for (auto& v : values) {
    const VectorX<Scalar> x = density.sample(rng);
    v = density.log_density(x) + target.potential(x);
    mean += v;
  }
  mean /= Scalar(n_samples);
  Scalar var = 0;
  for (const Scalar v : values) var += (v - mean) * (v - mean);
  var = n_samples > 1 ? var / Scalar(n_samples - 1) : Scalar(0);
  return {mean + log_z, std::sqrt(var / Scalar(n_samples))};
}

}  // namespace wgfvi
