#include "wgfvi/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "wgfvi/errors.hpp"
#include "wgfvi/quadrature.hpp"

namespace wgfvi {

namespace {

double log_sum_exp(const Eigen::MatrixXd& a) {
  const double top = a.maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((a.array() - top).exp().sum());
}

void require_2d(const Target<double>& target, const char* what) {
  if (target.dim != 2) throw Unsupported(std::string(what) + ": only defined for two-dimensional targets");
}

}  // namespace

void GridBounds::validate() const {
  if (!(x_hi > x_lo) || !(y_hi > y_lo) || !std::isfinite(x_lo) || !std::isfinite(x_hi) || !std::isfinite(y_lo) ||
      !std::isfinite(y_hi)) {
    throw DomainError("GridBounds: empty or non-finite box");
  }
}

Grid2d evaluate_grid(const Target<double>& target, const GridBounds& bounds, Index resolution) {
  require_2d(target, "evaluate_grid");
  bounds.validate();
  if (resolution < 2) throw DomainError("evaluate_grid: resolution must be at least 2");
  Grid2d grid;
  grid.bounds = bounds;
  grid.resolution = resolution;
  grid.neg_potential.resize(resolution, resolution);
  Eigen::VectorXd z(2);
  for (Index i = 0; i < resolution; ++i) {
    for (Index j = 0; j < resolution; ++j) {
      z << grid.x(j), grid.y(i);
      const double v = target.potential(z);
      if (std::isnan(v)) throw DomainError("evaluate_grid: potential is NaN on the grid");
      grid.neg_potential(i, j) = -v;
    }
  }
  return grid;
}

double grid_log_normalizer(const Grid2d& grid) {
  return log_sum_exp(grid.neg_potential) + std::log(grid.cell_area());
}

double grid_boundary_fraction(const Grid2d& grid) {
  const Index n = grid.resolution;
  const Eigen::MatrixXd& a = grid.neg_potential;
  const double total = log_sum_exp(a);
  Eigen::MatrixXd ring(1, 4 * (n - 1));
  Index k = 0;
  for (Index j = 0; j < n - 1; ++j) {
    ring(0, k++) = a(0, j);
    ring(0, k++) = a(n - 1, j + 1);
    ring(0, k++) = a(j + 1, 0);
    ring(0, k++) = a(j, n - 1);
  }
  return std::exp(log_sum_exp(ring) - total);
}

double grid_normalize_2d(const Target<double>& target, const GridBounds& bounds, Index resolution) {
  return grid_log_normalizer(evaluate_grid(target, bounds, resolution));
}

AutoGridResult grid_normalize_2d_auto(const Target<double>& target, const Eigen::Vector2d& center, double half_width,
                                      Index resolution, double tolerance, int max_expansions, Index max_resolution) {
  require_2d(target, "grid_normalize_2d_auto");
  if (!(half_width > 0.0)) throw DomainError("grid_normalize_2d_auto: half_width must be positive");
  if (max_resolution < resolution) throw DomainError("grid_normalize_2d_auto: max_resolution below resolution");
  AutoGridResult out;
  double w = half_width;
  for (int e = 0;; ++e) {
    const GridBounds b{center.x() - w, center.x() + w, center.y() - w, center.y() + w};
    const auto n = std::min<Index>(max_resolution, static_cast<Index>(std::ceil(double(resolution) * w / half_width)));
    out.grid = evaluate_grid(target, b, n);
    out.boundary_fraction = grid_boundary_fraction(out.grid);
    out.expansions = e;
    if (out.boundary_fraction < tolerance) break;
    if (e == max_expansions) {
      throw ConvergenceError("grid_normalize_2d_auto: boundary mass still " + std::to_string(out.boundary_fraction) +
                             " after " + std::to_string(e) + " expansions");
    }
    w *= 1.5;
  }
  out.log_z = grid_log_normalizer(out.grid);
  return out;
}

double gaussian_expectation_grid(const GaussianParam<double>& p, const std::function<double(const Eigen::VectorXd&)>& f,
                                 Index resolution, double width) {
  if (p.dim() != 2) throw Unsupported("gaussian_expectation_grid: only defined in two dimensions");
  if (resolution < 2 || !(width > 0.0)) throw DomainError("gaussian_expectation_grid: bad grid");
  const Eigen::MatrixXd l = p.chol();
  const double h = 2.0 * width / double(resolution);
  Eigen::VectorXd u(2);
  double acc = 0.0;
  double mass = 0.0;
  for (Index i = 0; i < resolution; ++i) {
    const double u1 = -width + (double(i) + 0.5) * h;
    for (Index j = 0; j < resolution; ++j) {
      const double u2 = -width + (double(j) + 0.5) * h;
      const double w = std::exp(-0.5 * (u1 * u1 + u2 * u2));
      u << u1, u2;
      acc += w * f(p.mean() + l * u);
      mass += w;
    }
  }
  return acc / mass;
}

double normalized_kl_grid(const GaussianParam<double>& p, const Target<double>& target, double log_z,
                          Index resolution) {
  if (target.dim != p.dim()) throw ShapeError("normalized_kl_grid: dimension mismatch");
  const double ev = gaussian_expectation_grid(p, target.potential, resolution);
  return ev + gaussian_neg_entropy(p) + log_z;
}

std::vector<Segment2d> marching_squares(const Grid2d& grid, const Eigen::MatrixXd& values, double level) {
  const Index n = grid.resolution;
  if (values.rows() != n || values.cols() != n) throw ShapeError("marching_squares: values do not match the grid");
  std::vector<Segment2d> out;
  auto lerp = [&](Index i0, Index j0, Index i1, Index j1) {
    const double f0 = values(i0, j0);
    const double f1 = values(i1, j1);
    const double s = f1 == f0 ? 0.5 : (level - f0) / (f1 - f0);
    return Eigen::Vector2d(grid.x(j0) + s * (grid.x(j1) - grid.x(j0)), grid.y(i0) + s * (grid.y(i1) - grid.y(i0)));
  };
  for (Index i = 0; i + 1 < n; ++i) {
    for (Index j = 0; j + 1 < n; ++j) {
      // corners: 0 = (i, j), 1 = (i, j+1), 2 = (i+1, j+1), 3 = (i+1, j)
      const int c = (values(i, j) > level ? 1 : 0) | (values(i, j + 1) > level ? 2 : 0) |
                    (values(i + 1, j + 1) > level ? 4 : 0) | (values(i + 1, j) > level ? 8 : 0);
      if (c == 0 || c == 15) continue;
      const Eigen::Vector2d bottom = lerp(i, j, i, j + 1);
      const Eigen::Vector2d right = lerp(i, j + 1, i + 1, j + 1);
      const Eigen::Vector2d top = lerp(i + 1, j, i + 1, j + 1);
      const Eigen::Vector2d left = lerp(i, j, i + 1, j);
      const bool centre_high =
          0.25 * (values(i, j) + values(i, j + 1) + values(i + 1, j + 1) + values(i + 1, j)) > level;
      switch (c) {
        case 1: case 14: out.push_back({left, bottom}); break;
        case 2: case 13: out.push_back({bottom, right}); break;
        case 3: case 12: out.push_back({left, right}); break;
        case 4: case 11: out.push_back({right, top}); break;
        case 6: case 9: out.push_back({bottom, top}); break;
        case 7: case 8: out.push_back({left, top}); break;
        case 5:
          if (centre_high) {
            out.push_back({left, top});
            out.push_back({bottom, right});
          } else {
            out.push_back({left, bottom});
            out.push_back({right, top});
          }
          break;
        case 10:
          if (centre_high) {
            out.push_back({left, bottom});
            out.push_back({right, top});
          } else {
            out.push_back({left, top});
            out.push_back({bottom, right});
          }
          break;
        default: break;
      }
    }
  }
  return out;
}

ContourSet density_contours(const Grid2d& grid, const std::vector<double>& fractions) {
  const double log_z = grid_log_normalizer(grid);
  const Eigen::MatrixXd density = (grid.neg_potential.array() - log_z).exp().matrix();
  const double top = density.maxCoeff();
  ContourSet set;
  for (const double f : fractions) {
    if (!(f > 0.0 && f < 1.0)) throw DomainError("density_contours: fractions must lie in (0, 1)");
    set.levels.push_back(f * top);
    set.lines.push_back(marching_squares(grid, density, f * top));
  }
  return set;
}

}  // namespace wgfvi
