#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <utility>

namespace sle {

using complex = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

/// Raised when an argument falls outside the domain of an analytic kernel.
class domain_error : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// SLE parameter together with the two exponents derived from it:
/// the trace dimension d = 1 + kappa/8 and the boundary exponent
/// alpha = 8/kappa - 1.
struct SleParams {
  double kappa;
  double d;
  double alpha;

  /// Interior one-point exponent 2 - d.
  double interior_exponent() const { return 2.0 - d; }
};

/// Rejects kappa outside (0, 8).
SleParams exponents(double kappa);

// Two-regime kernel: y^(alpha-(2-d)) x^(2-d) for x <= y, x^alpha for x >= y.
// P_0(x) is x^alpha.
double py_eval(SleParams const& params, double y, double x);

double py_ratio(SleParams const& params, double y, double x_num, double x_den);
/// ln of py_ratio; finite where the ratio itself underflows.
double py_log_ratio(SleParams const& params, double y, double x_num, double x_den);

/// A point of the cylinder H* = closure(H) / pi Z, stored by its canonical
/// representative with real part in [0, pi).
class CylinderPoint {
 public:
  CylinderPoint(double re, double im);
  static CylinderPoint from_complex(complex z) { return {z.real(), z.imag()}; }

  double re() const { return re_; }
  double im() const { return im_; }

 private:
  double re_;
  double im_;
};

double cylinder_dist(CylinderPoint const& a, CylinderPoint const& b);

/// Conformal radius of H* seen from z, sinh(2 Im z).
double crad_cylinder(CylinderPoint const& z);

struct Annulus {
  complex center;
  double r_inner;
  double r_outer;
};

/// (1/2pi) ln(r_outer/r_inner), the modulus of a round annulus.
double annulus_modulus(Annulus const& ann);

/// (1/pi) ln(r_outer/r_inner): extremal distance between the two boundary
/// arcs of a half annulus centred on a straight boundary. Reflection doubles
/// the family of curves, which is where the factor 2 comes from.
double half_annulus_modulus(Annulus const& ann);

/// Upper bound (1/2pi) ln(16(R+1)) for the Teichmueller modulus Lambda(R).
double teichmuller_bound(double R);

struct DistortionRadii {
  double r_tilde;
  double R_tilde;
};

/// Koebe-distortion radii for a conformal map on a domain containing
/// B(z0, M): phi(B(z0,r)) lies in B(phi(z0), r_tilde), and B(phi(z0),
/// R_tilde) lies in phi(B(z0,R)). Requires 0 < r < R/7 and R <= M.
DistortionRadii distortion_radii(double r, double R, double M, double deriv_mag);

}  // namespace sle
