#pragma once

// Space-form geometry: the warped-product radial coefficients s_kappa and
// c_kappa, geodesic-ball volumes, and the inverse map from a volume back to
// a ball radius.  Everything is constant-curvature model space data; the
// solvers build on these primitives.

#include <cmath>
#include <limits>
#include <string>

#include "errors.hpp"

namespace annulus_spectra {

/// Simply connected model space of dimension n and constant curvature kappa.
struct SpaceForm {
  int n = 2;
  double kappa = 0.0;
};

/// Annulus boundary-condition layouts for the two mixed eigenvalue problems.
enum class BoundaryLayout {
  InnerNeumannOuterDirichlet, // "lambda" problem
  InnerDirichletOuterNeumann, // "mu" problem
};

/// Concentric annulus B(r2) \ B(r1) in a space form, plus its layout.
struct AnnulusSpec {
  double r1 = 0.0;
  double r2 = 0.0;
  BoundaryLayout layout = BoundaryLayout::InnerNeumannOuterDirichlet;
};

namespace detail {

inline void check_radius(const SpaceForm& sf, double t, const char* where) {
  if (!(t >= 0.0))
    throw precondition_error(std::string(where) + ": radius must satisfy t >= 0, got t = " +
                             std::to_string(t));
  if (sf.kappa > 0.0) {
    const double tmax = M_PI / std::sqrt(sf.kappa);
    if (!(t <= tmax))
      throw precondition_error(std::string(where) + ": radius exceeds the model diameter bound " +
                               "pi/sqrt(kappa) = " + std::to_string(tmax) + ", got t = " +
                               std::to_string(t));
  }
}

// Near kappa * t^2 = 0 both branches lose digits to cancellation; a short
// Taylor series in kappa * t^2 is exact to machine precision there.
constexpr double taylor_threshold = 1e-8;

} // namespace detail

/// Generalized sine: sin(sqrt(k) t)/sqrt(k), t, or sinh(sqrt(-k) t)/sqrt(-k).
inline double s_kappa(const SpaceForm& sf, double t) {
  detail::check_radius(sf, t, "s_kappa");
  const double x = sf.kappa * t * t;
  if (std::fabs(x) < detail::taylor_threshold)
    return t * (1.0 - x / 6.0 * (1.0 - x / 20.0 * (1.0 - x / 42.0)));
  if (sf.kappa > 0.0) {
    const double rk = std::sqrt(sf.kappa);
    return std::sin(rk * t) / rk;
  }
  const double rk = std::sqrt(-sf.kappa);
  return std::sinh(rk * t) / rk;
}

/// Generalized cosine: d/dt of s_kappa.
inline double c_kappa(const SpaceForm& sf, double t) {
  detail::check_radius(sf, t, "c_kappa");
  const double x = sf.kappa * t * t;
  if (std::fabs(x) < detail::taylor_threshold)
    return 1.0 - x / 2.0 * (1.0 - x / 12.0 * (1.0 - x / 30.0));
  if (sf.kappa > 0.0)
    return std::cos(std::sqrt(sf.kappa) * t);
  return std::cosh(std::sqrt(-sf.kappa) * t);
}

/// Radial density of the volume element: s_kappa(r)^(n-1).
inline double volume_element(const SpaceForm& sf, double r) {
  return std::pow(s_kappa(sf, r), sf.n - 1);
}

/// Area of the unit (n-1)-sphere in R^n: 2 pi^(n/2) / Gamma(n/2).
inline double unit_sphere_area(int n) {
  if (n < 1)
    throw precondition_error("unit_sphere_area: dimension must satisfy n >= 1, got n = " +
                             std::to_string(n));
  return 2.0 * std::pow(M_PI, 0.5 * n) / std::tgamma(0.5 * n);
}

namespace detail {

// Adaptive Gauss-Kronrod 7/15 quadrature.  Nodes and weights are the
// standard published constants for the [-1, 1] reference interval.
inline constexpr double gk_nodes[8] = {
    0.991455371120813, 0.949107912342759, 0.864864423359769, 0.741531185599394,
    0.586087235467691, 0.405845151377397, 0.207784955007898, 0.000000000000000};
inline constexpr double gk_wk[8] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250, 0.140653259715525,
    0.169004726639267, 0.190350578064785, 0.204432940075298, 0.209482141084728};
inline constexpr double gk_wg[4] = {
    0.129484966168870, 0.279705391489277, 0.381830050505119, 0.417959183673469};

template <typename F>
void gk15(const F& f, double a, double b, double& kronrod, double& err) {
  const double c = 0.5 * (a + b), hw = 0.5 * (b - a);
  double resk = 0.0, resg = 0.0;
  for (int i = 0; i < 8; ++i) {
    const double dx = hw * gk_nodes[i];
    const double fv = (i == 7) ? f(c) : f(c - dx) + f(c + dx);
    resk += gk_wk[i] * fv;
    if (i % 2 == 1)
      resg += gk_wg[i / 2] * fv;
  }
  kronrod = resk * hw;
  err = std::fabs((resk - resg) * hw);
}

template <typename F>
double integrate_adaptive(const F& f, double a, double b, double rel_tol, double abs_floor,
                          int depth = 0) {
  double val, err;
  gk15(f, a, b, val, err);
  const double tol = std::max(abs_floor, rel_tol * std::fabs(val));
  if (err <= tol || depth >= 48)
    return val;
  const double mid = 0.5 * (a + b);
  return integrate_adaptive(f, a, mid, rel_tol, abs_floor, depth + 1) +
         integrate_adaptive(f, mid, b, rel_tol, abs_floor, depth + 1);
}

} // namespace detail

/// Integrate f over [a, b] adaptively (Gauss-Kronrod 7/15 panels).
template <typename F>
double integrate(const F& f, double a, double b, double rel_tol = 1e-12,
                 double abs_floor = 1e-14) {
  if (!(b >= a))
    throw precondition_error("integrate: interval must satisfy b >= a");
  if (a == b)
    return 0.0;
  return detail::integrate_adaptive(f, a, b, rel_tol, abs_floor);
}

/// Volume of the geodesic ball of radius r.
inline double ball_volume(const SpaceForm& sf, double r) {
  detail::check_radius(sf, r, "ball_volume");
  const double omega = unit_sphere_area(sf.n);
  if (sf.kappa == 0.0)
    return omega * std::pow(r, sf.n) / sf.n;
  return omega * integrate([&](double t) { return volume_element(sf, t); }, 0.0, r);
}

/// Inverse of ball_volume: radius of the ball with the given volume.
/// Bracketed bisection to 1e-10 relative accuracy in the radius.
inline double schwarz_radius(const SpaceForm& sf, double vol) {
  if (!(vol >= 0.0))
    throw precondition_error("schwarz_radius: volume must satisfy vol >= 0, got " +
                             std::to_string(vol));
  if (vol == 0.0)
    return 0.0;
  double lo = 0.0, hi;
  if (sf.kappa > 0.0) {
    hi = M_PI / std::sqrt(sf.kappa);
    const double total = ball_volume(sf, hi);
    if (vol > total * (1.0 + 1e-12))
      throw precondition_error(
          "schwarz_radius: volume exceeds the total model volume " + std::to_string(total) +
          ", got " + std::to_string(vol));
    if (vol >= total)
      return hi;
  } else {
    hi = 1.0;
    while (ball_volume(sf, hi) < vol) {
      hi *= 2.0;
      if (hi > 1e8)
        throw precondition_error("schwarz_radius: volume out of representable range");
    }
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (ball_volume(sf, mid) < vol)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-10 * std::max(hi, 1e-30))
      break;
  }
  return 0.5 * (lo + hi);
}

} // namespace annulus_spectra
