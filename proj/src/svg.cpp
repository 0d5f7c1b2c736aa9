#include "wgfvi/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "wgfvi/errors.hpp"

namespace wgfvi {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v == 0.0 ? 0.0 : v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

Ellipse2d sigma_ellipse(const GaussianParam<double>& p, double n_sigma) {
  if (p.dim() != 2) throw Unsupported("sigma_ellipse: only defined in two dimensions");
  if (!(n_sigma > 0.0)) throw DomainError("sigma_ellipse: n_sigma must be positive");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(Eigen::Matrix2d(p.cov()));
  const Eigen::Vector2d major = es.eigenvectors().col(1);
  Ellipse2d e;
  e.center = p.mean();
  e.semi_major = n_sigma * std::sqrt(es.eigenvalues()(1));
  e.semi_minor = n_sigma * std::sqrt(es.eigenvalues()(0));
  e.angle = std::atan2(major.y(), major.x());
  if (e.angle < 0.0) e.angle += std::numbers::pi;
  if (e.angle >= std::numbers::pi) e.angle -= std::numbers::pi;
  return e;
}

std::vector<Eigen::Vector2d> ellipse_polyline(const Ellipse2d& e, int n) {
  if (n < 3) throw DomainError("ellipse_polyline: need at least 3 points");
  const Eigen::Vector2d u(std::cos(e.angle), std::sin(e.angle));
  const Eigen::Vector2d v(-u.y(), u.x());
  std::vector<Eigen::Vector2d> pts;
  for (int k = 0; k < n; ++k) {
    const double s = 2.0 * std::numbers::pi * double(k) / double(n);
    pts.push_back(e.center + e.semi_major * std::cos(s) * u + e.semi_minor * std::sin(s) * v);
  }
  return pts;
}

std::string emit_ellipse_svg(const MixtureState<double>& snapshot, const ContourSet* contours,
                             const SvgOptions& options) {
  if (snapshot.dim() != 2) throw Unsupported("emit_ellipse_svg: only defined in two dimensions");
  std::vector<Ellipse2d> ellipses;
  for (const auto& c : snapshot.components()) ellipses.push_back(sigma_ellipse(c.param));

  GridBounds view;
  if (options.view) {
    view = *options.view;
  } else {
    double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
    for (const auto& e : ellipses) {
      for (const auto& p : ellipse_polyline(e, 32)) {
        x_lo = std::min(x_lo, p.x());
        x_hi = std::max(x_hi, p.x());
        y_lo = std::min(y_lo, p.y());
        y_hi = std::max(y_hi, p.y());
      }
    }
    const double pad = 0.1 * std::max(x_hi - x_lo, y_hi - y_lo);
    view = {x_lo - pad, x_hi + pad, y_lo - pad, y_hi + pad};
  }
  view.validate();

  const double sx = options.width / (view.x_hi - view.x_lo);
  const double sy = options.height / (view.y_hi - view.y_lo);
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << options.width << "\" height=\"" << options.height
     << "\" viewBox=\"0 0 " << options.width << ' ' << options.height << "\">\n";
  if (!options.title.empty()) os << "  <title>" << escape(options.title) << "</title>\n";
  os << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "  <g transform=\"matrix(" << num(sx) << " 0 0 " << num(-sy) << ' ' << num(-sx * view.x_lo) << ' '
     << num(sy * view.y_hi) << ")\">\n";
  if (contours) {
    os << "    <g class=\"contours\" fill=\"none\" stroke=\"#4a7ab5\" stroke-width=\"1\" "
          "vector-effect=\"non-scaling-stroke\">\n";
    for (std::size_t l = 0; l < contours->lines.size(); ++l) {
      if (contours->lines[l].empty()) continue;
      os << "      <path vector-effect=\"non-scaling-stroke\" data-level=\"" << num(contours->levels[l]) << "\" d=\"";
      for (const auto& s : contours->lines[l]) {
        os << 'M' << num(s.a.x()) << ' ' << num(s.a.y()) << 'L' << num(s.b.x()) << ' ' << num(s.b.y());
      }
      os << "\"/>\n";
    }
    os << "    </g>\n";
  }
  os << "    <g class=\"components\" fill=\"none\" stroke=\"#c0392b\">\n";
  const auto weights = snapshot.weights();
  const double w_max = *std::max_element(weights.begin(), weights.end());
  for (std::size_t i = 0; i < ellipses.size(); ++i) {
    const auto& e = ellipses[i];
    if (weights[i] <= 0.0) continue;
    const double opacity = 0.25 + 0.75 * weights[i] / w_max;
    os << "      <ellipse cx=\"" << num(e.center.x()) << "\" cy=\"" << num(e.center.y()) << "\" rx=\""
       << num(e.semi_major) << "\" ry=\"" << num(e.semi_minor) << "\" transform=\"rotate("
       << num(e.angle * 180.0 / std::numbers::pi) << ' ' << num(e.center.x()) << ' ' << num(e.center.y())
       << ")\" stroke-opacity=\"" << num(opacity) << "\" stroke-width=\"1.5\" vector-effect=\"non-scaling-stroke\"/>\n";
  }
  os << "    </g>\n  </g>\n</svg>\n";
  return os.str();
}

}  // namespace wgfvi
