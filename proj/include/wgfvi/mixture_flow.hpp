#pragma once

// Interacting Gaussian particles: the Wasserstein gradient flow of
// mu -> KL(p_mu || pi) over mixing measures on BW(R^d), in Hessian-free form.
// Each particle (m_i, cov_i) moves under the score difference
// g = grad log p_mu - grad log pi evaluated at its own sigma points:
//
//   dm_i   = -E_i[g(Y)]
//   dcov_i = -E_i[g(Y) (Y - m_i)^T] - E_i[(Y - m_i) g(Y)^T]
//
// Flat state layout: all means, then the packed lower-triangular factors
// of all components (and, for the WFR flow, all square-root masses).

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "wgfvi/bw_geometry.hpp"
#include "wgfvi/errors.hpp"
#include "wgfvi/gaussian_flow.hpp"
#include "wgfvi/mixture.hpp"
#include "wgfvi/quadrature.hpp"
#include "wgfvi/rng.hpp"
#include "wgfvi/targets.hpp"

namespace wgfvi {

template <typename Scalar = double>
using MixtureTrace = Trace<MixtureState<Scalar>, Scalar>;

template <typename Scalar = double>
struct ComponentRhs {
  VectorX<Scalar> dm;
  MatrixX<Scalar> dSigma;
};

namespace detail {

template <typename Scalar>
struct FactoredMixture {
  std::vector<Scalar> weights;
  std::vector<VectorX<Scalar>> means;
  std::vector<MatrixX<Scalar>> factors;

  static FactoredMixture from(const MixtureState<Scalar>& mu) {
    FactoredMixture f;
    for (const auto& c : mu.components()) {
      f.weights.push_back(c.weight);
      f.means.push_back(c.param.mean());
      f.factors.push_back(c.param.chol());
    }
    return f;
  }
};

// Per-component right-hand sides. When `free_energy` is non-null it receives
// F_i = E_i[log p_mu(Y) + V(Y)] for every component.
template <typename Scalar>
std::vector<ComponentRhs<Scalar>> mixture_rhs_factored(const FactoredMixture<Scalar>& mix, const Target<Scalar>& target,
                                                       const CubatureRule<Scalar>& rule,
                                                       std::vector<Scalar>* free_energy = nullptr) {
  const std::size_t k = mix.weights.size();
  const Index d = mix.means.front().size();
  if (target.dim != d) throw ShapeError("mixture_rhs: target dimension mismatch");
  const GaussianMixtureDensity<Scalar> density(mix.weights, mix.means, mix.factors);
  std::vector<ComponentRhs<Scalar>> out(k);
  if (free_energy) free_energy->assign(k, Scalar(0));
  VectorX<Scalar> score(d);
  for (std::size_t i = 0; i < k; ++i) {
    const SigmaPoints<Scalar> sp = sigma_points<Scalar>(mix.means[i], mix.factors[i], rule);
    VectorX<Scalar> dm = VectorX<Scalar>::Zero(d);
    MatrixX<Scalar> cross = MatrixX<Scalar>::Zero(d, d);
    Scalar energy = 0;
    for (Index n = 0; n < sp.count(); ++n) {
      const VectorX<Scalar> x = sp.points.col(n);
      const Scalar log_p = density.log_density_and_score(x, score);
      const VectorX<Scalar> g = score + target.grad(x);
      dm -= sp.weights(n) * g;
      cross.noalias() += sp.weights(n) * g * (x - mix.means[i]).transpose();
      if (free_energy) energy += sp.weights(n) * (log_p + target.potential(x));
    }
    out[i].dm = std::move(dm);
    out[i].dSigma = -(cross + cross.transpose());
    if (free_energy) (*free_energy)[i] = energy;
  }
  return out;
}

// Index arithmetic for the flat particle-system state.
struct ParticleLayout {
  Index dim;
  Index count;
  bool with_mass;

  Index packed() const { return packed_lower_size(dim); }
  Index mean_offset(Index i) const { return i * dim; }
  Index factor_offset(Index i) const { return count * dim + i * packed(); }
  Index mass_offset(Index i) const { return count * (dim + packed()) + i; }
  Index size() const { return count * (dim + packed()) + (with_mass ? count : 0); }
};

}  // namespace detail

/// Per-component right-hand side of the particle system.
template <typename Scalar>
std::vector<ComponentRhs<Scalar>> mixture_rhs(const MixtureState<Scalar>& mu, const Target<Scalar>& target,
                                              const CubatureRule<Scalar>& rule) {
  if (rule.dimension != mu.dim()) throw ShapeError("mixture_rhs: cubature rule dimension mismatch");
  return detail::mixture_rhs_factored(detail::FactoredMixture<Scalar>::from(mu), target, rule);
}

/// Equal-weight particles with means uniform in the ball of the given radius
/// around `center` (origin by default) and covariance `base_cov`.
template <typename Scalar>
MixtureState<Scalar> init_particles(Index n, Scalar radius, const MatrixX<Scalar>& base_cov, std::uint64_t seed,
                                    const VectorX<Scalar>& center = VectorX<Scalar>()) {
  if (n < 1) throw DomainError("init_particles: n must be at least 1");
  if (!(radius > Scalar(0))) throw DomainError("init_particles: radius must be positive");
  const Index d = base_cov.rows();
  const VectorX<Scalar> c = center.size() == 0 ? VectorX<Scalar>::Zero(d) : center;
  if (c.size() != d) throw ShapeError("init_particles: center dimension mismatch");
  Rng rng(seed);
  std::vector<GaussianParam<Scalar>> params;
  for (Index i = 0; i < n; ++i) {
    VectorX<Scalar> dir = rng.normal_vector<Scalar>(d);
    while (dir.norm() == Scalar(0)) dir = rng.normal_vector<Scalar>(d);
    dir.normalize();
    const Scalar r = radius * std::pow(Scalar(rng.uniform()), Scalar(1) / Scalar(d));
    params.emplace_back(c + r * dir, base_cov);
  }
  return MixtureState<Scalar>::equal_weights(params);
}

namespace detail {

template <typename Scalar>
void pack_mixture(const MixtureState<Scalar>& mu, const ParticleLayout& layout, VectorX<Scalar>& x) {
  x.resize(layout.size());
  for (Index i = 0; i < layout.count; ++i) {
    const auto& c = mu[static_cast<std::size_t>(i)];
    x.segment(layout.mean_offset(i), layout.dim) = c.param.mean();
    pack_lower<Scalar>(c.param.chol(), x.segment(layout.factor_offset(i), layout.packed()));
    if (layout.with_mass) x(layout.mass_offset(i)) = std::sqrt(c.weight);
  }
}

template <typename Scalar>
FactoredMixture<Scalar> unpack_mixture(const VectorX<Scalar>& x, const ParticleLayout& layout,
                                       const std::vector<Scalar>& fixed_weights) {
  FactoredMixture<Scalar> f;
  for (Index i = 0; i < layout.count; ++i) {
    f.means.push_back(x.segment(layout.mean_offset(i), layout.dim));
    f.factors.push_back(unpack_lower<Scalar>(x.segment(layout.factor_offset(i), layout.packed()), layout.dim));
    if (layout.with_mass) {
      const Scalar r = x(layout.mass_offset(i));
      f.weights.push_back(r * r);
    } else {
      f.weights.push_back(fixed_weights[static_cast<std::size_t>(i)]);
    }
  }
  return f;
}

template <typename Scalar>
MixtureState<Scalar> to_mixture_state(const FactoredMixture<Scalar>& f) {
  std::vector<MixtureComponent<Scalar>> comps;
  for (std::size_t i = 0; i < f.weights.size(); ++i) {
    comps.push_back({f.weights[i], GaussianParam<Scalar>(f.means[i], f.factors[i] * f.factors[i].transpose())});
  }
  return MixtureState<Scalar>(std::move(comps));
}

template <typename Scalar>
void record_mixture(MixtureTrace<Scalar>& trace, Scalar t, MixtureState<Scalar> mu, const Target<Scalar>& target,
                    const FlowConfig& cfg) {
  trace.times.push_back(t);
  if (cfg.record_kl) {
    const McEstimate<Scalar> kl = mc_kl_mixture(mu, target, cfg.mc_samples, cfg.seed, Scalar(cfg.log_z));
    trace.kl_values.push_back(kl.value);
    trace.kl_std_errors.push_back(kl.std_error);
  }
  trace.states.push_back(std::move(mu));
}

// Writes the derivative of component i's (mean, factor) block.
template <typename Scalar>
void write_component_derivative(const ParticleLayout& layout, Index i, const MatrixX<Scalar>& factor,
                                const ComponentRhs<Scalar>& rhs, VectorX<Scalar>& out) {
  out.segment(layout.mean_offset(i), layout.dim) = rhs.dm;
  pack_lower<Scalar>(factor_derivative<Scalar>(factor, rhs.dSigma),
                     out.segment(layout.factor_offset(i), layout.packed()));
}

template <typename Scalar>
void check_factors(const VectorX<Scalar>& x, const ParticleLayout& layout, long step,
                   const std::vector<bool>* frozen = nullptr) {
  if (!x.allFinite()) throw DegeneracyError("particle flow: non-finite state at step " + std::to_string(step), step);
  for (Index i = 0; i < layout.count; ++i) {
    if (frozen && (*frozen)[static_cast<std::size_t>(i)]) continue;
    const MatrixX<Scalar> r = unpack_lower<Scalar>(x.segment(layout.factor_offset(i), layout.packed()), layout.dim);
    if (!(r.diagonal().array() > Scalar(kMinFactorDiagonal)).all()) {
      throw DegeneracyError("particle flow: component " + std::to_string(i) +
                                " covariance factor lost positive diagonal at step " + std::to_string(step),
                            step);
    }
  }
}

}  // namespace detail

/// RK4 integration of the particle system with fixed weights. Records the
/// mixture and its Monte Carlo KL (seeded by cfg.seed) every
/// `record_every` steps.
template <typename Scalar>
MixtureTrace<Scalar> integrate_mixture_flow(const MixtureState<Scalar>& mu0, const Target<Scalar>& target,
                                            const FlowConfig& cfg) {
  cfg.validate();
  const Index d = mu0.dim();
  if (target.dim != d) throw ShapeError("integrate_mixture_flow: target dimension mismatch");
  const detail::ParticleLayout layout{d, static_cast<Index>(mu0.size()), false};
  const CubatureRule<Scalar> rule = CubatureRule<Scalar>::degree3(d);
  const std::vector<Scalar> weights = mu0.weights();

  VectorX<Scalar> x;
  detail::pack_mixture(mu0, layout, x);

  auto rhs = [&](const VectorX<Scalar>& state) -> VectorX<Scalar> {
    const auto mix = detail::unpack_mixture(state, layout, weights);
    for (Index i = 0; i < layout.count; ++i) {
      detail::require_nondegenerate_factor(mix.factors[static_cast<std::size_t>(i)], "integrate_mixture_flow");
    }
    const auto comps = detail::mixture_rhs_factored(mix, target, rule);
    VectorX<Scalar> out(state.size());
    for (Index i = 0; i < layout.count; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      detail::write_component_derivative(layout, i, mix.factors[ui], comps[ui], out);
    }
    return out;
  };

  MixtureTrace<Scalar> trace;
  const long n_steps = cfg.steps();
  trace.steps = n_steps;
  detail::record_mixture(trace, Scalar(0), mu0, target, cfg);
  for (long k = 1; k <= n_steps; ++k) {
    try {
      x = rk4_step(x, rhs, cfg.step_size);
    } catch (const DegeneracyError& e) {
      throw DegeneracyError(std::string(e.what()) + " at step " + std::to_string(k), k);
    }
    detail::check_factors(x, layout, k);
    if (cfg.records(k)) {
      detail::record_mixture(trace, Scalar(k * cfg.step_size), detail::to_mixture_state(detail::unpack_mixture(x, layout, weights)),
                             target, cfg);
    }
  }
  return trace;
}

}  // namespace wgfvi
