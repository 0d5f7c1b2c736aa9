#pragma once

// Wasserstein-Fisher-Rao flow for Gaussian mixtures: the particles move as in
// the mixture flow while their masses w_i = r_i^2 react to the local free
// energy F_i = E_i[log p_mu(Y) + V(Y)]:
//
//   dr_i = -(F_i - Fbar) r_i
//
// Fbar is the weighted average sum_j w_j F_j by default, which conserves
// sum_i r_i^2; the unweighted average (1/N) sum_j F_j is available too.

#include <cmath>
#include <string>
#include <vector>

#include "wgfvi/bw_geometry.hpp"
#include "wgfvi/errors.hpp"
#include "wgfvi/gaussian_flow.hpp"
#include "wgfvi/mixture.hpp"
#include "wgfvi/mixture_flow.hpp"
#include "wgfvi/quadrature.hpp"
#include "wgfvi/targets.hpp"

namespace wgfvi {

/// Components with square-root masses r_i > 0, sum r_i^2 = 1.
template <typename Scalar = double>
class WfrState {
 public:
  WfrState(std::vector<Scalar> sqrt_weights, std::vector<GaussianParam<Scalar>> params)
      : r_(std::move(sqrt_weights)), params_(std::move(params)) {
    if (r_.empty() || r_.size() != params_.size()) throw ShapeError("WfrState: need one mass per component");
    Scalar total = 0;
    for (const Scalar r : r_) {
      if (!(r > Scalar(0))) throw DomainError("WfrState: square-root masses must be positive");
      total += r * r;
    }
    if (std::abs(total - Scalar(1)) > Scalar(1e-9)) throw DomainError("WfrState: masses must sum to 1");
    for (const auto& p : params_) {
      if (p.dim() != params_.front().dim()) throw ShapeError("WfrState: components differ in dimension");
    }
  }

  explicit WfrState(const MixtureState<Scalar>& mu) : WfrState(sqrt_masses(mu), params_of(mu)) {}

  std::size_t size() const { return r_.size(); }
  Index dim() const { return params_.front().dim(); }
  const std::vector<Scalar>& sqrt_weights() const { return r_; }
  const std::vector<GaussianParam<Scalar>>& params() const { return params_; }

  MixtureState<Scalar> mixture() const {
    std::vector<MixtureComponent<Scalar>> comps;
    for (std::size_t i = 0; i < r_.size(); ++i) comps.push_back({r_[i] * r_[i], params_[i]});
    return MixtureState<Scalar>(std::move(comps));
  }

 private:
  static std::vector<Scalar> sqrt_masses(const MixtureState<Scalar>& mu) {
    std::vector<Scalar> r;
    for (const Scalar w : mu.weights()) r.push_back(std::sqrt(w));
    return r;
  }
  static std::vector<GaussianParam<Scalar>> params_of(const MixtureState<Scalar>& mu) {
    std::vector<GaussianParam<Scalar>> p;
    for (const auto& c : mu.components()) p.push_back(c.param);
    return p;
  }

  std::vector<Scalar> r_;
  std::vector<GaussianParam<Scalar>> params_;
};

enum class Centering { kWeighted, kUnweighted };

struct WfrOptions {
  Centering centering = Centering::kWeighted;
  bool freeze_weights = false;  // drop the reaction term
  double extinct_threshold = 1e-8;
};

template <typename Scalar = double>
struct WfrComponentRhs {
  VectorX<Scalar> dm;
  MatrixX<Scalar> dSigma;
  Scalar dr = 0;
};

namespace detail {

// Components with `active[i] == false` must carry weight 0; they get a zero
// derivative and are left out of the average.
template <typename Scalar>
std::vector<WfrComponentRhs<Scalar>> wfr_rhs_factored(const FactoredMixture<Scalar>& mix,
                                                      const std::vector<bool>& active, const Target<Scalar>& target,
                                                      const CubatureRule<Scalar>& rule, const WfrOptions& opt) {
  const std::size_t k = mix.weights.size();
  const Index d = mix.means.front().size();
  std::vector<Scalar> energy;
  const auto moves = mixture_rhs_factored(mix, target, rule, &energy);
  Scalar fbar = 0;
  std::size_t n_active = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (!active[i]) continue;
    ++n_active;
    fbar += opt.centering == Centering::kWeighted ? mix.weights[i] * energy[i] : energy[i];
  }
  if (opt.centering == Centering::kUnweighted) fbar /= Scalar(n_active);
  std::vector<WfrComponentRhs<Scalar>> out(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (!active[i]) {
      out[i] = {VectorX<Scalar>::Zero(d), MatrixX<Scalar>::Zero(d, d), Scalar(0)};
      continue;
    }
    const Scalar r = std::sqrt(mix.weights[i]);
    out[i] = {moves[i].dm, moves[i].dSigma, opt.freeze_weights ? Scalar(0) : -(energy[i] - fbar) * r};
  }
  return out;
}

}  // namespace detail

/// Per-component (dm_i, dSigma_i, dr_i).
template <typename Scalar>
std::vector<WfrComponentRhs<Scalar>> wfr_rhs(const WfrState<Scalar>& state, const Target<Scalar>& target,
                                             const CubatureRule<Scalar>& rule, const WfrOptions& opt = {}) {
  if (target.dim != state.dim() || rule.dimension != state.dim()) throw ShapeError("wfr_rhs: dimension mismatch");
  return detail::wfr_rhs_factored(detail::FactoredMixture<Scalar>::from(state.mixture()),
                                  std::vector<bool>(state.size(), true), target, rule, opt);
}

/// Joint RK4 over (m_i, R_i, r_i). After each step r is renormalized to unit
/// norm; a component whose r falls below the extinction threshold is frozen
/// with weight 0 for the rest of the run.
template <typename Scalar>
MixtureTrace<Scalar> integrate_wfr_flow(const WfrState<Scalar>& state0, const Target<Scalar>& target,
                                        const FlowConfig& cfg, const WfrOptions& opt = {}) {
  cfg.validate();
  const Index d = state0.dim();
  if (target.dim != d) throw ShapeError("integrate_wfr_flow: target dimension mismatch");
  if (!(opt.extinct_threshold >= 0.0)) throw DomainError("integrate_wfr_flow: extinct_threshold must be non-negative");
  const detail::ParticleLayout layout{d, static_cast<Index>(state0.size()), true};
  const CubatureRule<Scalar> rule = CubatureRule<Scalar>::degree3(d);
  std::vector<bool> active(state0.size(), true);

  VectorX<Scalar> x;
  detail::pack_mixture(state0.mixture(), layout, x);

  auto rhs = [&](const VectorX<Scalar>& s) -> VectorX<Scalar> {
    auto mix = detail::unpack_mixture<Scalar>(s, layout, {});
    for (std::size_t i = 0; i < active.size(); ++i) {
      if (!active[i]) {
        mix.weights[i] = 0;
        continue;
      }
      detail::require_nondegenerate_factor(mix.factors[i], "integrate_wfr_flow");
    }
    const auto comps = detail::wfr_rhs_factored(mix, active, target, rule, opt);
    VectorX<Scalar> out = VectorX<Scalar>::Zero(s.size());
    for (Index i = 0; i < layout.count; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      if (!active[ui]) continue;
      detail::write_component_derivative(layout, i, mix.factors[ui],
                                         ComponentRhs<Scalar>{comps[ui].dm, comps[ui].dSigma}, out);
      out(layout.mass_offset(i)) = comps[ui].dr;
    }
    return out;
  };

  auto snapshot = [&](const VectorX<Scalar>& s) {
    auto mix = detail::unpack_mixture<Scalar>(s, layout, {});
    for (std::size_t i = 0; i < active.size(); ++i) {
      if (!active[i]) mix.weights[i] = 0;
    }
    return detail::to_mixture_state(mix);
  };

  MixtureTrace<Scalar> trace;
  const long n_steps = cfg.steps();
  trace.steps = n_steps;
  detail::record_mixture(trace, Scalar(0), state0.mixture(), target, cfg);
  for (long k = 1; k <= n_steps; ++k) {
    try {
      x = rk4_step(x, rhs, cfg.step_size);
    } catch (const DegeneracyError& e) {
      throw DegeneracyError(std::string(e.what()) + " at step " + std::to_string(k), k);
    }
    detail::check_factors(x, layout, k, &active);

    for (Index i = 0; i < layout.count; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      if (active[ui] && std::abs(x(layout.mass_offset(i))) < Scalar(opt.extinct_threshold)) {
        active[ui] = false;
        trace.findings.push_back("component " + std::to_string(i) + " extinct at step " + std::to_string(k));
      }
      if (!active[ui]) x(layout.mass_offset(i)) = 0;
    }
    if (!opt.freeze_weights) {
      const Scalar norm = x.tail(layout.count).norm();
      if (!(norm > Scalar(0))) throw DegeneracyError("integrate_wfr_flow: all components extinct at step " + std::to_string(k), k);
      x.tail(layout.count) = x.tail(layout.count).cwiseAbs() / norm;
    }
    if (cfg.records(k)) detail::record_mixture(trace, Scalar(k * cfg.step_size), snapshot(x), target, cfg);
  }
  return trace;
}

}  // namespace wgfvi
