#pragma once

// Closed-form Bures-Wasserstein geometry on non-degenerate Gaussians:
// distances, optimal transport maps, exponential/logarithm maps, geodesics
// and spectral eigenvalue clipping.
//
// Matrix square roots go through a symmetric eigendecomposition. Every
// matrix-valued result is symmetrized before it is returned.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "wgfvi/errors.hpp"

namespace wgfvi {

using Eigen::Index;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Derived>
auto symmetrize(const Eigen::MatrixBase<Derived>& a) {
  using Plain = typename Derived::PlainObject;
  return Plain((a + a.transpose()) / typename Derived::Scalar(2));
}

namespace detail {

template <typename Scalar>
constexpr Scalar kNegativeEigenTolerance = Scalar(1e-10);

template <typename Derived>
void require_square(const Eigen::MatrixBase<Derived>& a, const char* what) {
  if (a.rows() != a.cols()) {
    throw ShapeError(std::string(what) + ": matrix is not square");
  }
}

template <typename A, typename B>
void require_same_dim(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b,
                      const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": dimension mismatch");
  }
}

// Eigendecomposition of a symmetric matrix that is required to be positive
// semidefinite. Eigenvalues in [-1e-10, 0] are clamped to zero, anything more
// negative is a domain error.
template <typename Scalar>
Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> psd_eigen(const MatrixX<Scalar>& s,
                                                          const char* what) {
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(symmetrize(s));
  if (es.info() != Eigen::Success) {
    throw DomainError(std::string(what) + ": eigendecomposition failed");
  }
  if (s.size() > 0 && es.eigenvalues()(0) < -kNegativeEigenTolerance<Scalar>) {
    throw DomainError(std::string(what) + ": matrix is not positive semidefinite");
  }
  return es;
}

template <typename Scalar, typename F>
MatrixX<Scalar> spectral_apply(const Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>>& es, F f) {
  const auto& u = es.eigenvectors();
  VectorX<Scalar> lam = es.eigenvalues().unaryExpr(f);
  return symmetrize(u * lam.asDiagonal() * u.transpose());
}

template <typename Scalar>
void require_spd(const MatrixX<Scalar>& s, const char* what) {
  require_square(s, what);
  if (!s.allFinite()) throw DomainError(std::string(what) + ": non-finite entries");
  Eigen::LLT<MatrixX<Scalar>> llt(symmetrize(s));
  if (llt.info() != Eigen::Success) {
    throw DomainError(std::string(what) + ": matrix is not positive definite");
  }
}

}  // namespace detail

// Principal square root of a positive semidefinite matrix.
template <typename Scalar>
MatrixX<Scalar> spd_sqrt(const MatrixX<Scalar>& s) {
  detail::require_square(s, "spd_sqrt");
  auto es = detail::psd_eigen<Scalar>(s, "spd_sqrt");
  return detail::spectral_apply<Scalar>(es, [](Scalar x) { return std::sqrt(std::max(x, Scalar(0))); });
}

template <typename Scalar>
MatrixX<Scalar> spd_inv_sqrt(const MatrixX<Scalar>& s) {
  detail::require_square(s, "spd_inv_sqrt");
  auto es = detail::psd_eigen<Scalar>(s, "spd_inv_sqrt");
  if (s.size() > 0 && !(es.eigenvalues()(0) > Scalar(0))) {
    throw DomainError("spd_inv_sqrt: matrix is singular");
  }
  return detail::spectral_apply<Scalar>(es, [](Scalar x) { return Scalar(1) / std::sqrt(x); });
}

/// A non-degenerate Gaussian N(mean, cov), i.e. a point of BW(R^d).
///
/// The covariance is symmetrized on construction and must be positive
/// definite.
template <typename Scalar = double>
class GaussianParam {
 public:
  using Vector = VectorX<Scalar>;
  using Matrix = MatrixX<Scalar>;

  GaussianParam(Vector mean, const Matrix& cov) : mean_(std::move(mean)), cov_(symmetrize(cov)) {
    if (cov_.rows() != cov_.cols() || cov_.rows() != mean_.size()) {
      throw ShapeError("GaussianParam: mean/covariance dimension mismatch");
    }
    if (!mean_.allFinite()) throw DomainError("GaussianParam: non-finite mean");
    detail::require_spd<Scalar>(cov_, "GaussianParam");
  }

  static GaussianParam standard(Index d) { return {Vector::Zero(d), Matrix::Identity(d, d)}; }

  Index dim() const { return mean_.size(); }
  const Vector& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }

  // Lower-triangular factor R with R R^T = cov.
  Matrix chol() const { return cov_.llt().matrixL(); }

 private:
  Vector mean_;
  Matrix cov_;
};

/// Tangent vector x -> a + S (x - m) at a point of BW(R^d).
template <typename Scalar = double>
struct BWTangent {
  VectorX<Scalar> a;
  MatrixX<Scalar> S;

  BWTangent(VectorX<Scalar> a_, const MatrixX<Scalar>& s_) : a(std::move(a_)), S(symmetrize(s_)) {
    if (S.rows() != S.cols() || S.rows() != a.size()) {
      throw ShapeError("BWTangent: dimension mismatch");
    }
  }

  static BWTangent zero(Index d) { return {VectorX<Scalar>::Zero(d), MatrixX<Scalar>::Zero(d, d)}; }

  friend BWTangent operator*(Scalar t, const BWTangent& v) { return {t * v.a, t * v.S}; }
};

/// Squared Bures metric tr(S0 + S1 - 2 (S0^{1/2} S1 S0^{1/2})^{1/2}).
template <typename Scalar>
Scalar bures_metric_sq(const MatrixX<Scalar>& s0, const MatrixX<Scalar>& s1) {
  detail::require_square(s0, "bures_metric_sq");
  detail::require_square(s1, "bures_metric_sq");
  detail::require_same_dim(s0, s1, "bures_metric_sq");
  detail::require_spd<Scalar>(s0, "bures_metric_sq");
  detail::require_spd<Scalar>(s1, "bures_metric_sq");
  const MatrixX<Scalar> root0 = spd_sqrt<Scalar>(s0);
  const MatrixX<Scalar> cross = symmetrize(root0 * s1 * root0);
  auto es = detail::psd_eigen<Scalar>(cross, "bures_metric_sq");
  const Scalar trace_root =
      es.eigenvalues().unaryExpr([](Scalar x) { return std::sqrt(std::max(x, Scalar(0))); }).sum();
  const Scalar value = s0.trace() + s1.trace() - Scalar(2) * trace_root;
  return std::max(value, Scalar(0));
}

/// Closed-form squared 2-Wasserstein distance between Gaussians.
template <typename Scalar>
Scalar w2_distance_sq(const GaussianParam<Scalar>& p0, const GaussianParam<Scalar>& p1) {
  if (p0.dim() != p1.dim()) throw ShapeError("w2_distance_sq: dimension mismatch");
  return (p0.mean() - p1.mean()).squaredNorm() + bures_metric_sq<Scalar>(p0.cov(), p1.cov());
}

/// Linear part of the optimal transport map pushing N(0, from) to N(0, to):
/// from^{-1/2} (from^{1/2} to from^{1/2})^{1/2} from^{-1/2}.
template <typename Scalar>
MatrixX<Scalar> ot_map(const MatrixX<Scalar>& from, const MatrixX<Scalar>& to) {
  detail::require_square(from, "ot_map");
  detail::require_same_dim(from, to, "ot_map");
  detail::require_spd<Scalar>(from, "ot_map");
  detail::require_spd<Scalar>(to, "ot_map");
  auto es = detail::psd_eigen<Scalar>(from, "ot_map");
  const MatrixX<Scalar> root = detail::spectral_apply<Scalar>(es, [](Scalar x) { return std::sqrt(x); });
  const MatrixX<Scalar> inv_root =
      detail::spectral_apply<Scalar>(es, [](Scalar x) { return Scalar(1) / std::sqrt(x); });
  const MatrixX<Scalar> middle = spd_sqrt<Scalar>(symmetrize(root * to * root));
  return symmetrize(inv_root * middle * inv_root);
}

/// exp_p(a, S) = N(m + a, (S + I) cov (S + I)); requires S + I positive definite.
template <typename Scalar>
GaussianParam<Scalar> bw_exp(const GaussianParam<Scalar>& p, const BWTangent<Scalar>& v) {
  if (v.a.size() != p.dim()) throw ShapeError("bw_exp: dimension mismatch");
  const MatrixX<Scalar> shifted = v.S + MatrixX<Scalar>::Identity(p.dim(), p.dim());
  Eigen::LLT<MatrixX<Scalar>> llt(shifted);
  if (llt.info() != Eigen::Success) {
    throw DomainError("bw_exp: tangent outside injectivity domain (S + I not positive definite)");
  }
  return {p.mean() + v.a, symmetrize(shifted * p.cov() * shifted)};
}

/// log_p(q) = (m_q - m_p, T^{cov_p -> cov_q} - I).
template <typename Scalar>
BWTangent<Scalar> bw_log(const GaussianParam<Scalar>& p, const GaussianParam<Scalar>& q) {
  if (p.dim() != q.dim()) throw ShapeError("bw_log: dimension mismatch");
  MatrixX<Scalar> s = ot_map<Scalar>(p.cov(), q.cov());
  s.diagonal().array() -= Scalar(1);
  return {q.mean() - p.mean(), s};
}

/// Riemannian metric <(a,S),(a',S')>_p = <a,a'> + tr(S cov S').
template <typename Scalar>
Scalar bw_inner(const GaussianParam<Scalar>& p, const BWTangent<Scalar>& u, const BWTangent<Scalar>& v) {
  return u.a.dot(v.a) + (u.S * p.cov() * v.S).trace();
}

/// Point at time t of the constant-speed geodesic from p0 to p1.
template <typename Scalar>
GaussianParam<Scalar> geodesic_point(const GaussianParam<Scalar>& p0, const GaussianParam<Scalar>& p1,
                                     Scalar t) {
  if (!(t >= Scalar(0) && t <= Scalar(1))) throw DomainError("geodesic_point: t outside [0, 1]");
  if (t == Scalar(1)) return p1;
  return bw_exp<Scalar>(p0, t * bw_log<Scalar>(p0, p1));
}

/// Replaces every eigenvalue lambda of s by min(lambda, tau).
///
/// Matrices whose spectrum already lies below tau (up to a few ulps) are
/// returned unchanged, which makes the map exactly idempotent.
template <typename Scalar>
MatrixX<Scalar> clip_eigenvalues(const MatrixX<Scalar>& s, Scalar tau) {
  if (!(tau > Scalar(0))) throw DomainError("clip_eigenvalues: tau must be positive");
  detail::require_square(s, "clip_eigenvalues");
  detail::require_spd<Scalar>(s, "clip_eigenvalues");
  const MatrixX<Scalar> sym = symmetrize(s);
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(sym);
  const Scalar slack = Scalar(64) * std::numeric_limits<Scalar>::epsilon();
  if (es.eigenvalues().maxCoeff() <= tau * (Scalar(1) + slack)) return sym;
  return detail::spectral_apply<Scalar>(es, [tau](Scalar x) { return std::min(x, tau); });
}

}  // namespace wgfvi
