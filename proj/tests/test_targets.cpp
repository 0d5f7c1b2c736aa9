#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "wgfvi/targets.hpp"

using namespace wgfvi;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void check_derivatives(const Target<double>& t, const VectorXd& x) {
  const VectorXd g = t.grad(x);
  const VectorXd fd = testing::fd_gradient(t.potential, x);
  CHECK((g - fd).norm() <= 1e-5 * std::max(1.0, g.norm()));
  if (t.has_hessian()) {
    const MatrixXd h = t.hess(x);
    const MatrixXd fdh = testing::fd_jacobian(t.grad, x);
    CHECK((h - fdh).norm() <= 1e-4 * std::max(1.0, h.norm()));
  }
}

MixtureTarget<double> symmetric_pair() {
  VectorXd m(2);
  m << 2.0, 0.0;
  return {{0.5, 0.5}, {m, -m}, {MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2)}};
}

}  // namespace

TEST_CASE("gaussian target derivatives and normalizer") {
  Rng rng(21);
  const auto p = testing::random_gaussian(rng, 3);
  const auto t = gaussian_target(p);
  for (int i = 0; i < 10; ++i) check_derivatives(t, testing::random_vector(rng, 3, 2.0));
  CHECK(t.potential(p.mean()) == 0.0);
  const double expected = 1.5 * std::log(2 * std::numbers::pi) + 0.5 * std::log(p.cov().determinant());
  CHECK(gaussian_log_normalizer(p) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("mixture target score") {
  Rng rng(22);
  const auto a = testing::random_gaussian(rng, 2);
  const MixtureTarget<double> one({1.0}, {a.mean()}, {a.cov()});
  const VectorXd x = testing::random_vector(rng, 2);
  CHECK(mixture_target_grad_logpi(one, x).isApprox(a.cov().llt().solve(a.mean() - x), 1e-12));

  CHECK(mixture_target_grad_logpi(symmetric_pair(), VectorXd::Zero(2).eval()).norm() <= 1e-15);

  const auto b = testing::random_gaussian(rng, 2);
  const MixtureTarget<double> two({0.25, 0.75}, {a.mean(), b.mean()}, {a.cov(), b.cov()});
  const auto density = two.density();
  for (int i = 0; i < 100; ++i) {
    const VectorXd y = testing::random_vector(rng, 2, 2.0);
    const VectorXd fd = testing::fd_gradient([&](const VectorXd& z) { return density.log_density(z); }, y);
    CHECK((mixture_target_grad_logpi(two, y) - fd).norm() <= 1e-6 * std::max(1.0, fd.norm()));
  }
  const auto t = mixture_target(two);
  for (int i = 0; i < 10; ++i) check_derivatives(t, testing::random_vector(rng, 2, 2.0));

  // Translation equivariance.
  const VectorXd shift = testing::random_vector(rng, 2, 5.0);
  const MixtureTarget<double> moved({0.25, 0.75}, {a.mean() + shift, b.mean() + shift}, {a.cov(), b.cov()});
  CHECK(mixture_target_grad_logpi(moved, VectorXd(x + shift)).isApprox(mixture_target_grad_logpi(two, x), 1e-10));
}

TEST_CASE("mixture target survives far-away points") {
  const auto t = mixture_target(symmetric_pair());
  VectorXd far(2);
  far << 400.0, -300.0;
  CHECK(std::isfinite(t.potential(far)));
  CHECK(t.grad(far).allFinite());
}

TEST_CASE("mixture target validation") {
  const VectorXd m = VectorXd::Zero(2);
  const MatrixXd c = MatrixXd::Identity(2, 2);
  CHECK_THROWS_AS(MixtureTarget<double>({0.5, 0.4}, {m, m}, {c, c}), DomainError);
  CHECK_THROWS_AS(MixtureTarget<double>({1.0, 0.0}, {m, m}, {c, c}), DomainError);
  CHECK_THROWS_AS(MixtureTarget<double>({1.0}, {m, m}, {c}), ShapeError);
}

TEST_CASE("logistic data generation") {
  const auto ds = generate_logistic_data<double>(3, 4000, 2.0, 5);
  CHECK((2 * ds.m_star).norm() == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(ds.sigma_star.isApprox(MatrixXd::Identity(3, 3) / 3.0));
  const auto again = generate_logistic_data<double>(3, 4000, 2.0, 5);
  CHECK(again.covariates == ds.covariates);
  CHECK(again.labels == ds.labels);

  VectorXd mean1 = VectorXd::Zero(3), mean0 = VectorXd::Zero(3);
  int n1 = 0, n0 = 0;
  for (Index i = 0; i < ds.size(); ++i) {
    if (ds.labels[static_cast<std::size_t>(i)]) {
      mean1 += ds.covariates.row(i).transpose();
      ++n1;
    } else {
      mean0 += ds.covariates.row(i).transpose();
      ++n0;
    }
  }
  mean1 /= n1;
  mean0 /= n0;
  CHECK((mean1 - ds.m_star).norm() <= 5.0 / std::sqrt(double(n1)));
  CHECK((mean0 + ds.m_star).norm() <= 5.0 / std::sqrt(double(n0)));
  CHECK(std::abs(n1 - n0) < 4 * std::sqrt(4000.0));

  const auto d2 = generate_logistic_data<double>(2, 10, 1.5, 1);
  const MatrixXd s2 = d2.sigma_star;
  CHECK(s2(0, 0) / s2(1, 1) == doctest::Approx(0.5 / 0.17));

  CHECK_THROWS_AS(generate_logistic_data<double>(0, 10, 2.0, 1), DomainError);
  CHECK_THROWS_AS(generate_logistic_data<double>(2, 10, 0.0, 1), DomainError);
}

TEST_CASE("logistic potential") {
  const auto ds = generate_logistic_data<double>(3, 30, 2.0, 8);
  const auto at0 = logistic_potential(ds, VectorXd::Zero(3).eval());
  VectorXd expected = VectorXd::Zero(3);
  for (Index i = 0; i < ds.size(); ++i) {
    expected -= (ds.labels[static_cast<std::size_t>(i)] - 0.5) * ds.covariates.row(i).transpose();
  }
  CHECK(at0.grad.isApprox(expected, 1e-14));
  CHECK(at0.value == doctest::Approx(30 * std::log(2.0)));

  Rng rng(23);
  const auto t = logistic_target(ds);
  const double bound = 0.25 * Eigen::SelfAdjointEigenSolver<MatrixXd>(ds.covariates.transpose() * ds.covariates)
                                  .eigenvalues()
                                  .maxCoeff();
  for (int i = 0; i < 100; ++i) {
    const VectorXd z = testing::random_vector(rng, 3, 3.0);
    const auto lam = Eigen::SelfAdjointEigenSolver<MatrixXd>(t.hess(z)).eigenvalues();
    CHECK(lam(0) >= -1e-12);
    CHECK(lam(2) <= bound * (1 + 1e-12));
    if (i < 10) check_derivatives(t, z);
  }
  // Extreme logits stay finite.
  const VectorXd huge = VectorXd::Constant(3, 1e4);
  CHECK(std::isfinite(t.potential(huge)));
  CHECK(t.grad(huge).allFinite());

  const auto with_prior = logistic_target(ds, 0.5);
  const VectorXd z = testing::random_vector(rng, 3);
  CHECK(with_prior.potential(z) == doctest::Approx(t.potential(z) + 0.25 * z.squaredNorm()));
  check_derivatives(with_prior, z);
}

TEST_CASE("laplace approximation") {
  Rng rng(24);
  const auto p = testing::random_gaussian(rng, 3);
  const auto lap = laplace_approx(gaussian_target(p), VectorXd::Zero(3).eval(), 1e-12, 50);
  CHECK((lap.mean() - p.mean()).norm() <= 1e-10);
  CHECK(testing::rel_err(lap.cov(), p.cov()) <= 1e-10);

  const auto ds = generate_logistic_data<double>(2, 10, 2.0, 19);
  REQUIRE_FALSE(logistic_data_separable(ds));
  const auto t = logistic_target(ds);
  const auto mode = laplace_approx(t, VectorXd::Zero(2).eval(), 1e-10, 200);
  CHECK(t.grad(mode.mean()).norm() <= 1e-8);
  CHECK(testing::rel_err(mode.cov().inverse(), t.hess(mode.mean())) <= 1e-8);

  Target<double> shifted = t;
  shifted.potential = [t](const VectorXd& z) { return t.potential(z) + 123.0; };
  const auto mode2 = laplace_approx(shifted, VectorXd::Zero(2).eval(), 1e-10, 200);
  CHECK((mode2.mean() - mode.mean()).norm() <= 1e-10);

  Target<double> no_hess = t;
  no_hess.hess = nullptr;
  CHECK_THROWS_AS(laplace_approx(no_hess, VectorXd::Zero(2).eval(), 1e-10, 200), DomainError);
}

TEST_CASE("separable data are detected") {
  const auto ds = generate_logistic_data<double>(2, 10, 2.0, 1);
  REQUIRE(logistic_data_separable(ds));
  // A prior restores a proper posterior.
  const auto t = logistic_target(ds, 1.0);
  CHECK(t.grad(laplace_approx(t, VectorXd::Zero(2).eval(), 1e-10, 200).mean()).norm() <= 1e-10);

  for (std::uint64_t seed : {16u, 19u, 26u, 33u, 35u}) {
    CHECK_FALSE(logistic_data_separable(generate_logistic_data<double>(2, 10, 1.5, seed)));
  }
}

TEST_CASE("rescaled target") {
  Rng rng(25);
  const auto p = testing::random_gaussian(rng, 2);
  const auto t = gaussian_target(p);
  const auto r = rescale_target(t, 2.0);
  const VectorXd y = testing::random_vector(rng, 2);
  CHECK(r.potential(y) == doctest::Approx(t.potential(y / 2.0)));
  check_derivatives(r, y);
  CHECK_THROWS_AS(rescale_target(t, 0.0), DomainError);
}
