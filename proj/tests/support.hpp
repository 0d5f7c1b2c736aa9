#pragma once
// Random instances for property tests. Every generator takes an explicit Rng
// so failures reproduce from the seed printed by the test.

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "wgfvi/bw_geometry.hpp"
#include "wgfvi/rng.hpp"

namespace wgfvi::testing {

inline Eigen::MatrixXd random_orthogonal(Rng& rng, Index d) {
  Eigen::MatrixXd a(d, d);
  for (Index j = 0; j < d; ++j) a.col(j) = rng.normal_vector(d);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  // Fix column signs so that q is Haar distributed.
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < d; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  return q;
}

/// SPD matrix with a random eigenbasis and eigenvalues log-uniform in
/// [lo, hi]; the condition number is at most hi / lo.
inline Eigen::MatrixXd random_spd(Rng& rng, Index d, double lo = 0.1, double hi = 10.0) {
  const Eigen::MatrixXd q = random_orthogonal(rng, d);
  Eigen::VectorXd lam(d);
  for (Index i = 0; i < d; ++i) lam(i) = lo * std::pow(hi / lo, rng.uniform());
  return symmetrize(q * lam.asDiagonal() * q.transpose());
}

inline Eigen::VectorXd random_vector(Rng& rng, Index d, double scale = 1.0) {
  return scale * rng.normal_vector(d);
}

inline GaussianParam<double> random_gaussian(Rng& rng, Index d, double lo = 0.1, double hi = 10.0,
                                             double mean_scale = 1.0) {
  return {random_vector(rng, d, mean_scale), random_spd(rng, d, lo, hi)};
}

inline Index random_dim(Rng& rng, Index lo, Index hi) {
  return lo + static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
}

inline Eigen::MatrixXd random_symmetric(Rng& rng, Index d, double scale = 1.0) {
  Eigen::MatrixXd a(d, d);
  for (Index j = 0; j < d; ++j) a.col(j) = rng.normal_vector(d);
  return scale * symmetrize(a);
}

inline double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

/// Central finite-difference gradient of a scalar function.
template <typename F>
Eigen::VectorXd fd_gradient(F&& f, const Eigen::VectorXd& x) {
  const double h = 1e-5 * (1.0 + x.norm());
  Eigen::VectorXd g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

/// Central finite-difference Jacobian of a vector function (column i is the
/// derivative along e_i).
template <typename F>
Eigen::MatrixXd fd_jacobian(F&& f, const Eigen::VectorXd& x) {
  const double h = 1e-5 * (1.0 + x.norm());
  Eigen::MatrixXd j(x.size(), x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    j.col(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return j;
}

struct Quadrature1d {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

/// Gauss-Hermite rule for the standard normal weight (Golub-Welsch).
inline Quadrature1d gauss_hermite(Index n) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (Index k = 1; k < n; ++k) jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(double(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  return {es.eigenvalues(), es.eigenvectors().row(0).transpose().array().square().matrix()};
}

}  // namespace wgfvi::testing
