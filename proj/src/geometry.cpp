#include "sle/geometry.hpp"

#include <cmath>
#include <fmt/format.h>

namespace sle {

namespace {

// x^p via the log domain; x > 0 assumed. Keeps tiny arguments from
// underflowing before the product is formed.
double power(double x, double p) { return std::exp(p * std::log(x)); }

void require_positive(double v, char const* what) {
  if (!(v > 0.0)) {
    throw domain_error(fmt::format("{} must be positive, got {}", what, v));
  }
}

}  // namespace

SleParams exponents(double kappa) {
  if (!(kappa > 0.0 && kappa < 8.0)) {
    throw domain_error(fmt::format("kappa must lie in (0,8), got {}", kappa));
  }
  return {kappa, 1.0 + kappa / 8.0, 8.0 / kappa - 1.0};
}

double py_eval(SleParams const& params, double y, double x) {
  require_positive(x, "x");
  if (!(y >= 0.0)) {
    throw domain_error(fmt::format("y must be nonnegative, got {}", y));
  }
  auto const interior = params.interior_exponent();
  if (x >= y) {
    return power(x, params.alpha);
  }
  // 0 < x < y here, so y > 0.
  return std::exp((params.alpha - interior) * std::log(y) + interior * std::log(x));
}

double py_ratio(SleParams const& params, double y, double x_num, double x_den) {
  return std::exp(py_log_ratio(params, y, x_num, x_den));
}

double py_log_ratio(SleParams const& params, double y, double x_num, double x_den) {
  require_positive(x_num, "x_num");
  require_positive(x_den, "x_den");
  if (x_num == x_den) {
    return 0.0;
  }
  // Ratio of the two log-domain values, formed before exponentiating.
  auto const log_p = [&](double x) {
    auto const interior = params.interior_exponent();
    if (x >= y) {
      return params.alpha * std::log(x);
    }
    return (params.alpha - interior) * std::log(y) + interior * std::log(x);
  };
  if (!(y >= 0.0)) {
    throw domain_error(fmt::format("y must be nonnegative, got {}", y));
  }
  return log_p(x_num) - log_p(x_den);
}

CylinderPoint::CylinderPoint(double re, double im) : re_(std::fmod(re, kPi)), im_(im) {
  if (re_ < 0.0) {
    re_ += kPi;
  }
  if (re_ >= kPi) {
    re_ = 0.0;
  }
  if (!(im >= 0.0)) {
    throw domain_error(fmt::format("cylinder points need Im >= 0, got {}", im));
  }
}

double cylinder_dist(CylinderPoint const& a, CylinderPoint const& b) {
  // Representatives lie in [0, pi), so the offset is in (-pi, pi) and only
  // the shifts -pi, 0, +pi can be nearest.
  auto const dx = a.re() - b.re();
  auto const dy = a.im() - b.im();
  auto best = std::hypot(dx, dy);
  best = std::min(best, std::hypot(dx - kPi, dy));
  best = std::min(best, std::hypot(dx + kPi, dy));
  return best;
}

double crad_cylinder(CylinderPoint const& z) {
  require_positive(z.im(), "Im z");
  return std::sinh(2.0 * z.im());
}

namespace {

double log_ratio(Annulus const& ann) {
  require_positive(ann.r_inner, "r_inner");
  if (!(ann.r_outer >= ann.r_inner)) {
    throw domain_error(fmt::format("r_outer ({}) must be >= r_inner ({})", ann.r_outer,
                                   ann.r_inner));
  }
  return std::log(ann.r_outer / ann.r_inner);
}

}  // namespace

double annulus_modulus(Annulus const& ann) { return log_ratio(ann) / (2.0 * kPi); }

double half_annulus_modulus(Annulus const& ann) { return log_ratio(ann) / kPi; }

double teichmuller_bound(double R) {
  if (!(R >= 1.0)) {
    throw domain_error(fmt::format("teichmuller bound needs R >= 1, got {}", R));
  }
  return std::log(16.0 * (R + 1.0)) / (2.0 * kPi);
}

DistortionRadii distortion_radii(double r, double R, double M, double deriv_mag) {
  require_positive(r, "r");
  require_positive(deriv_mag, "|phi'(z0)|");
  if (!(r < R / 7.0)) {
    throw domain_error(fmt::format("distortion radii need r < R/7 (r={}, R={})", r, R));
  }
  if (!(R <= M)) {
    throw domain_error(fmt::format("distortion radii need R <= M (R={}, M={})", R, M));
  }
  auto const inner = 1.0 - r / M;
  auto const outer = 1.0 + R / M;
  return {r * deriv_mag / (inner * inner), R * deriv_mag / (outer * outer)};
}

}  // namespace sle
