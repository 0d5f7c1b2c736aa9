#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wgfvi/bw_geometry.hpp"
#include "wgfvi/grid.hpp"
#include "wgfvi/mixture.hpp"

namespace wgfvi {

/// Ellipse {x : (x - c)^T cov^{-1} (x - c) = n_sigma^2}.
struct Ellipse2d {
  Eigen::Vector2d center;
  double semi_major = 0.0;
  double semi_minor = 0.0;
  double angle = 0.0;  // radians, major axis from the x axis
};

Ellipse2d sigma_ellipse(const GaussianParam<double>& p, double n_sigma = 2.0);

/// Closed polyline of n points (first point not repeated).
std::vector<Eigen::Vector2d> ellipse_polyline(const Ellipse2d& e, int n = 64);

struct SvgOptions {
  int width = 480;
  int height = 480;
  std::optional<GridBounds> view;  // defaults to the ellipses' bounding box
  std::string title;
};

/// One 2-sigma ellipse per component (weight-scaled opacity) plus optional
/// target contours, in data coordinates with y pointing up.
std::string emit_ellipse_svg(const MixtureState<double>& snapshot, const ContourSet* contours = nullptr,
                             const SvgOptions& options = {});

}  // namespace wgfvi
