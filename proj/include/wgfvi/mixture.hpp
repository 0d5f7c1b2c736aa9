#pragma once

// Finite Gaussian mixtures: the mixing-measure state shared by the mixture
// and Wasserstein-Fisher-Rao flows, plus a factorized evaluator used for
// densities, scores and sampling.

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "wgfvi/bw_geometry.hpp"
#include "wgfvi/errors.hpp"
#include "wgfvi/rng.hpp"

namespace wgfvi {

template <typename Scalar = double>
struct MixtureComponent {
  Scalar weight;
  GaussianParam<Scalar> param;
};

/// Weighted list of Gaussians sum_i w_i N(m_i, cov_i).
template <typename Scalar = double>
class MixtureState {
 public:
  static constexpr double kWeightTolerance = 1e-9;

  explicit MixtureState(std::vector<MixtureComponent<Scalar>> components)
      : components_(std::move(components)) {
    if (components_.empty()) throw DomainError("MixtureState: no components");
    const Index d = components_.front().param.dim();
    Scalar total = 0;
    for (const auto& c : components_) {
      if (c.param.dim() != d) throw ShapeError("MixtureState: components of different dimension");
      if (!(c.weight >= Scalar(0))) throw DomainError("MixtureState: negative weight");
      total += c.weight;
    }
    if (std::abs(total - Scalar(1)) > Scalar(kWeightTolerance)) {
      throw DomainError("MixtureState: weights do not sum to 1");
    }
  }

  static MixtureState equal_weights(const std::vector<GaussianParam<Scalar>>& params) {
    std::vector<MixtureComponent<Scalar>> comps;
    comps.reserve(params.size());
    const Scalar w = Scalar(1) / static_cast<Scalar>(params.size());
    for (const auto& p : params) comps.push_back({w, p});
    return MixtureState(std::move(comps));
  }

  std::size_t size() const { return components_.size(); }
  Index dim() const { return components_.front().param.dim(); }
  const MixtureComponent<Scalar>& operator[](std::size_t i) const { return components_[i]; }
  const std::vector<MixtureComponent<Scalar>>& components() const { return components_; }

  std::vector<Scalar> weights() const {
    std::vector<Scalar> w;
    w.reserve(components_.size());
    for (const auto& c : components_) w.push_back(c.weight);
    return w;
  }

 private:
  std::vector<MixtureComponent<Scalar>> components_;
};

/// Mixture density with cached lower-triangular factors. All evaluations are
/// done in log space with log-sum-exp over components; zero-weight
/// components are skipped.
template <typename Scalar = double>
class GaussianMixtureDensity {
 public:
  using Vector = VectorX<Scalar>;
  using Matrix = MatrixX<Scalar>;

  GaussianMixtureDensity() = default;

  // Factors must be lower-triangular with positive diagonal (R R^T = cov).
  GaussianMixtureDensity(std::vector<Scalar> weights, std::vector<Vector> means, std::vector<Matrix> factors)
      : weights_(std::move(weights)), means_(std::move(means)), factors_(std::move(factors)) {
    if (weights_.size() != means_.size() || weights_.size() != factors_.size() || weights_.empty()) {
      throw ShapeError("GaussianMixtureDensity: inconsistent component lists");
    }
    dim_ = means_.front().size();
    const Scalar half_log_2pi = Scalar(0.5) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
    log_norm_.resize(weights_.size());
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      if (means_[i].size() != dim_ || factors_[i].rows() != dim_ || factors_[i].cols() != dim_) {
        throw ShapeError("GaussianMixtureDensity: component dimension mismatch");
      }
      const Scalar log_w = weights_[i] > Scalar(0) ? std::log(weights_[i])
                                                    : -std::numeric_limits<Scalar>::infinity();
      log_norm_[i] = log_w - factors_[i].diagonal().array().log().sum() - Scalar(dim_) * half_log_2pi;
    }
  }

  explicit GaussianMixtureDensity(const MixtureState<Scalar>& mu) {
    std::vector<Scalar> w;
    std::vector<Vector> m;
    std::vector<Matrix> r;
    for (const auto& c : mu.components()) {
      w.push_back(c.weight);
      m.push_back(c.param.mean());
      r.push_back(c.param.chol());
    }
    *this = GaussianMixtureDensity(std::move(w), std::move(m), std::move(r));
  }

  Index dim() const { return dim_; }
  std::size_t size() const { return weights_.size(); }

  Scalar log_density(const Vector& x) const {
    std::vector<Scalar> terms(weights_.size());
    return accumulate(x, terms, nullptr);
  }

  // grad_x log p(x) = sum_i r_i(x) cov_i^{-1} (m_i - x). Returns log p(x).
  Scalar log_density_and_score(const Vector& x, Vector& score) const {
    std::vector<Scalar> terms(weights_.size());
    std::vector<Vector> scores(weights_.size());
    const Scalar logp = accumulate(x, terms, &scores);
    score = Vector::Zero(dim_);
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      if (weights_[i] > Scalar(0)) score += std::exp(terms[i] - logp) * scores[i];
    }
    return logp;
  }

  Vector score(const Vector& x) const {
    Vector s;
    log_density_and_score(x, s);
    return s;
  }

  // Hessian of log p: sum_i r_i (s_i s_i^T - cov_i^{-1}) - s s^T.
  Matrix log_hessian(const Vector& x) const {
    std::vector<Scalar> terms(weights_.size());
    std::vector<Vector> scores(weights_.size());
    const Scalar logp = accumulate(x, terms, &scores);
    Vector s = Vector::Zero(dim_);
    Matrix h = Matrix::Zero(dim_, dim_);
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      if (weights_[i] <= Scalar(0)) continue;
      const Scalar r = std::exp(terms[i] - logp);
      const Matrix l_inv =
          factors_[i].template triangularView<Eigen::Lower>().solve(Matrix::Identity(dim_, dim_));
      s += r * scores[i];
      h += r * (scores[i] * scores[i].transpose() - l_inv.transpose() * l_inv);
    }
    h -= s * s.transpose();
    return symmetrize(h);
  }

  Vector sample(Rng& rng) const {
    const std::size_t i = rng.categorical(weights_);
    return means_[i] + factors_[i] * rng.normal_vector<Scalar>(dim_);
  }

 private:
  Scalar component_log_term(std::size_t i, const Vector& x, Vector* score) const {
    if (weights_[i] <= Scalar(0)) {
      if (score) *score = Vector::Zero(dim_);
      return -std::numeric_limits<Scalar>::infinity();
    }
    const auto l = factors_[i].template triangularView<Eigen::Lower>();
    const Vector z = l.solve(x - means_[i]);
    if (score) *score = -l.transpose().solve(z);
    return log_norm_[i] - Scalar(0.5) * z.squaredNorm();
  }

  // Fills per-component log terms log(w_i N(x | m_i, cov_i)) and returns
  // their log-sum-exp.
  Scalar accumulate(const Vector& x, std::vector<Scalar>& terms, std::vector<Vector>* scores) const {
    Scalar top = -std::numeric_limits<Scalar>::infinity();
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      terms[i] = component_log_term(i, x, scores ? &(*scores)[i] : nullptr);
      top = std::max(top, terms[i]);
    }
    Scalar acc = 0;
    for (const Scalar t : terms) acc += std::exp(t - top);
    return top + std::log(acc);
  }

  Index dim_ = 0;
  std::vector<Scalar> weights_;
  std::vector<Vector> means_;
  std::vector<Matrix> factors_;
  std::vector<Scalar> log_norm_;
};

template <typename Scalar>
Scalar mixture_logdensity(const MixtureState<Scalar>& mu, const VectorX<Scalar>& x) {
  if (x.size() != mu.dim()) throw ShapeError("mixture_logdensity: dimension mismatch");
  return GaussianMixtureDensity<Scalar>(mu).log_density(x);
}

template <typename Scalar>
VectorX<Scalar> mixture_score(const MixtureState<Scalar>& mu, const VectorX<Scalar>& x) {
  if (x.size() != mu.dim()) throw ShapeError("mixture_score: dimension mismatch");
  return GaussianMixtureDensity<Scalar>(mu).score(x);
}

/// Gaussian log-density, closed form.
template <typename Scalar>
Scalar gaussian_logdensity(const GaussianParam<Scalar>& p, const VectorX<Scalar>& x) {
  return mixture_logdensity(MixtureState<Scalar>({{Scalar(1), p}}), x);
}

/// Negative entropy int p log p of a one-dimensional mixture by the
/// trapezoid rule on [lo, hi] with n nodes.
template <typename Scalar>
Scalar mixture_neg_entropy_1d(const MixtureState<Scalar>& mu, Scalar lo, Scalar hi, Index n) {
  if (mu.dim() != 1) throw Unsupported("mixture_neg_entropy_1d: mixture must be one-dimensional");
  if (n < 2 || !(hi > lo)) throw DomainError("mixture_neg_entropy_1d: invalid grid");
  const GaussianMixtureDensity<Scalar> density(mu);
  const Scalar dx = (hi - lo) / Scalar(n - 1);
  Scalar acc = 0;
  VectorX<Scalar> x(1);
  for (Index k = 0; k < n; ++k) {
    x(0) = lo + dx * Scalar(k);
    const Scalar lp = density.log_density(x);
    const Scalar term = std::exp(lp) * lp;
    acc += (k == 0 || k == n - 1) ? Scalar(0.5) * term : term;
  }
  return acc * dx;
}

}  // namespace wgfvi
