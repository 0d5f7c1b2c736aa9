#pragma once

// Two-dimensional grid quadrature: normalizing constants of exp(-V),
// Gaussian expectations on a whitened grid and marching-squares contours.

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "wgfvi/bw_geometry.hpp"
#include "wgfvi/targets.hpp"

namespace wgfvi {

struct GridBounds {
  double x_lo = -8.0;
  double x_hi = 8.0;
  double y_lo = -8.0;
  double y_hi = 8.0;

  void validate() const;
};

/// Cell-centred samples of -V on a resolution x resolution grid. Entry (i, j)
/// sits at (x(j), y(i)).
struct Grid2d {
  GridBounds bounds;
  Index resolution = 0;
  Eigen::MatrixXd neg_potential;

  double dx() const { return (bounds.x_hi - bounds.x_lo) / double(resolution); }
  double dy() const { return (bounds.y_hi - bounds.y_lo) / double(resolution); }
  double cell_area() const { return dx() * dy(); }
  double x(Index j) const { return bounds.x_lo + (double(j) + 0.5) * dx(); }
  double y(Index i) const { return bounds.y_lo + (double(i) + 0.5) * dy(); }
};

Grid2d evaluate_grid(const Target<double>& target, const GridBounds& bounds, Index resolution);

/// log(sum exp(-V) * cell area), computed with a log-sum-exp.
double grid_log_normalizer(const Grid2d& grid);

/// Share of exp(-V) carried by the outermost ring of cells.
double grid_boundary_fraction(const Grid2d& grid);

/// log Z of exp(-V) by the midpoint rule on the given box. Throws
/// Unsupported unless the target is two-dimensional.
double grid_normalize_2d(const Target<double>& target, const GridBounds& bounds, Index resolution);

struct AutoGridResult {
  Grid2d grid;
  double log_z = 0.0;
  double boundary_fraction = 0.0;
  int expansions = 0;
};

/// Starts from the square of half-width `half_width` around `center` with
/// `resolution` cells per side and grows it by half until the boundary ring
/// carries less than `tolerance` of the mass. The cell size is kept while
/// the cell count stays within `max_resolution`.
AutoGridResult grid_normalize_2d_auto(const Target<double>& target, const Eigen::Vector2d& center, double half_width,
                                      Index resolution, double tolerance = 1e-12, int max_expansions = 40,
                                      Index max_resolution = 4000);

/// E_p f(X) by the midpoint rule on [-width, width]^2 in whitened
/// coordinates, with the truncated weights renormalized.
double gaussian_expectation_grid(const GaussianParam<double>& p, const std::function<double(const Eigen::VectorXd&)>& f,
                                 Index resolution = 200, double width = 8.0);

/// KL(p || exp(-V) / Z) with E_p V on the whitened grid and the entropy in
/// closed form.
double normalized_kl_grid(const GaussianParam<double>& p, const Target<double>& target, double log_z,
                          Index resolution = 200);

struct Segment2d {
  Eigen::Vector2d a;
  Eigen::Vector2d b;
};

/// Iso-lines of `values` (sampled at the grid's cell centres) at `level`.
std::vector<Segment2d> marching_squares(const Grid2d& grid, const Eigen::MatrixXd& values, double level);

struct ContourSet {
  std::vector<double> levels;
  std::vector<std::vector<Segment2d>> lines;
};

/// Contours of the normalized density exp(-V - log Z) at the given fractions
/// of its grid maximum.
ContourSet density_contours(const Grid2d& grid, const std::vector<double>& fractions = {0.05, 0.2, 0.4, 0.6, 0.8});

}  // namespace wgfvi
