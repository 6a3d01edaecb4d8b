#pragma once

// Radial eigenvalue solver for the p-Laplacian on concentric annuli and
// geodesic balls in a space form.  The radial equation is integrated in
// flux form,
//
//     u' = phi_q(W / Jbar),        W' = -lam Jbar phi_p(u),
//
// with Jbar(r) = s_kappa(r)^(n-1), phi_p(s) = |s|^(p-2) s and q the
// conjugate exponent.  W = Jbar phi_p(u') is the radial flux; keeping it as
// a state variable absorbs the (n-1) c_kappa/s_kappa first-order term and
// stays regular at Neumann endpoints where u' = 0.
//
// Eigenvalues are located by bisection on the shot boundary value: the
// boundary residual of the first eigenvalue is the first sign change in
// lam, approached from lam = 0 where the shot is strictly positive.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"

namespace annulus_spectra {

/// Sampled radial profile: u(r_i) and flux W(r_i) on an increasing grid.
struct RadialProfile {
  std::vector<double> r;
  std::vector<double> value;
  std::vector<double> flux;
};

struct SolverOptions {
  double eig_rel_tol = 1e-8;    // bisection width target, relative
  double ode_tol = 1e-10;       // per-step relative tolerance
  int max_bracket_doublings = 60;
  double start_offset = 1e-6;   // ball start radius, as a fraction of the span
};

struct EigenResult {
  double eigenvalue = 0.0;
  RadialProfile profile;
  double boundary_residual = 0.0; // shot endpoint value over the profile max
  double ode_residual = 0.0;      // scaled flux-equation defect, see ode_residual()
  int bisection_iterations = 0;
  double normalization = 0.0;     // integral |u|^p dV after scaling (= 1)
};

/// |s|^(p-2) s with phi_p(0) = 0 (p > 1).
inline double phi_p(double s, double p) {
  if (s == 0.0)
    return 0.0;
  if (p == 2.0)
    return s;
  return std::copysign(std::pow(std::fabs(s), p - 1.0), s);
}

namespace detail {

inline double ipow(double x, int k) {
  double r = 1.0;
  for (; k > 0; k >>= 1, x *= x)
    if (k & 1)
      r *= x;
  return r;
}

inline double jbar(const SpaceForm& sf, double r) {
  return ipow(s_kappa(sf, r), sf.n - 1);
}

// One Cash-Karp 4(5) step of the flux system.  Returns the embedded error
// estimate scaled by the controller weights (<= 1 means accept).
struct FluxOde {
  const SpaceForm* sf;
  double p, q_exp, lam;

  void operator()(double r, double u, double w, double& du, double& dw) const {
    const double j = jbar(*sf, r);
    const double s = w / j;
    du = (s == 0.0) ? 0.0
         : (p == 2.0) ? s
                      : std::copysign(std::pow(std::fabs(s), q_exp), s);
    dw = -lam * j * phi_p(u, p);
  }
};

struct StepResult {
  double u, w, err;
};

inline StepResult cash_karp_step(const FluxOde& f, double r, double u, double w, double h,
                                 double du0, double dw0, double rtol) {
  static constexpr double b21 = 1.0 / 5.0;
  static constexpr double b31 = 3.0 / 40.0, b32 = 9.0 / 40.0;
  static constexpr double b41 = 3.0 / 10.0, b42 = -9.0 / 10.0, b43 = 6.0 / 5.0;
  static constexpr double b51 = -11.0 / 54.0, b52 = 5.0 / 2.0, b53 = -70.0 / 27.0,
                          b54 = 35.0 / 27.0;
  static constexpr double b61 = 1631.0 / 55296.0, b62 = 175.0 / 512.0, b63 = 575.0 / 13824.0,
                          b64 = 44275.0 / 110592.0, b65 = 253.0 / 4096.0;
  static constexpr double c1 = 37.0 / 378.0, c3 = 250.0 / 621.0, c4 = 125.0 / 594.0,
                          c6 = 512.0 / 1771.0;
  static constexpr double d1 = c1 - 2825.0 / 27648.0, d3 = c3 - 18575.0 / 48384.0,
                          d4 = c4 - 13525.0 / 55296.0, d5 = -277.0 / 14336.0,
                          d6 = c6 - 0.25;

  double du2, dw2, du3, dw3, du4, dw4, du5, dw5, du6, dw6;
  f(r + 0.2 * h, u + h * b21 * du0, w + h * b21 * dw0, du2, dw2);
  f(r + 0.3 * h, u + h * (b31 * du0 + b32 * du2), w + h * (b31 * dw0 + b32 * dw2), du3, dw3);
  f(r + 0.6 * h, u + h * (b41 * du0 + b42 * du2 + b43 * du3),
    w + h * (b41 * dw0 + b42 * dw2 + b43 * dw3), du4, dw4);
  f(r + h, u + h * (b51 * du0 + b52 * du2 + b53 * du3 + b54 * du4),
    w + h * (b51 * dw0 + b52 * dw2 + b53 * dw3 + b54 * dw4), du5, dw5);
  f(r + 0.875 * h, u + h * (b61 * du0 + b62 * du2 + b63 * du3 + b64 * du4 + b65 * du5),
    w + h * (b61 * dw0 + b62 * dw2 + b63 * dw3 + b64 * dw4 + b65 * dw5), du6, dw6);

  StepResult out;
  out.u = u + h * (c1 * du0 + c3 * du3 + c4 * du4 + c6 * du6);
  out.w = w + h * (c1 * dw0 + c3 * dw3 + c4 * dw4 + c6 * dw6);
  const double eu = h * (d1 * du0 + d3 * du3 + d4 * du4 + d5 * du5 + d6 * du6);
  const double ew = h * (d1 * dw0 + d3 * dw3 + d4 * dw4 + d5 * dw5 + d6 * dw6);
  const double su = rtol * (std::fabs(u) + std::fabs(h * du0)) + 1e-300;
  const double sw = rtol * (std::fabs(w) + std::fabs(h * dw0)) + 1e-300;
  out.err = std::max(std::fabs(eu) / su, std::fabs(ew) / sw);
  return out;
}

// Integrate the flux system from ra to rb.  Adaptive embedded RK45 with
// step growth capped at 2x and at least 512 accepted steps over the span
// (h_max = span/512); near W = 0 the right side has unbounded derivative
// for p != 2 and the cap keeps the controller from overshooting.
inline void integrate_flux(const FluxOde& ode, double ra, double rb, double u0, double w0,
                           double ode_tol, double& u_end, double& w_end,
                           RadialProfile* store) {
  const double span = rb - ra;
  const double h_max = span / 512.0;
  double r = ra, u = u0, w = w0;
  double h = std::min(h_max, (ra > 0.0 ? 0.5 * ra : h_max));
  if (store) {
    store->r.assign(1, r);
    store->value.assign(1, u);
    store->flux.assign(1, w);
  }
  int consecutive_rejects = 0;
  while (r < rb) {
    if (r + h > rb)
      h = rb - r;
    double du0, dw0;
    ode(r, u, w, du0, dw0);
    const StepResult s = cash_karp_step(ode, r, u, w, h, du0, dw0, ode_tol);
    if (s.err <= 1.0) {
      r += h;
      u = s.u;
      w = s.w;
      if (store) {
        store->r.push_back(r);
        store->value.push_back(u);
        store->flux.push_back(w);
      }
      consecutive_rejects = 0;
      const double grow = (s.err > 1e-30) ? 0.9 * std::pow(s.err, -0.2) : 2.0;
      h = std::min({h * std::clamp(grow, 0.1, 2.0), h_max, rb - r > 0 ? rb - r : h_max});
      if (h <= 0.0)
        break;
    } else {
      h *= std::clamp(0.9 * std::pow(s.err, -0.25), 0.1, 0.5);
      if (++consecutive_rejects > 200 || h < 1e-13 * span)
        throw solver_error("radial integration stalled at r = " + std::to_string(r) +
                           " (step " + std::to_string(h) + ")");
    }
  }
  u_end = u;
  w_end = w;
}

struct ShotSpec {
  SpaceForm sf;
  double p;
  double ra, rb;
  double u0;
  bool unit_flux;   // mu problem: W(ra) = Jbar(ra)
  bool ball_start;  // W(ra) = -lam Jbar(ra) ra / n (leading-order center balance)
  bool shoot_value; // boundary functional: true -> u(rb), false -> W(rb)
};

inline double shoot(const ShotSpec& sp, double lam, double ode_tol, double& u_end,
                    double& w_end, RadialProfile* store = nullptr) {
  FluxOde ode{&sp.sf, sp.p, 1.0 / (sp.p - 1.0), lam};
  double w0 = 0.0;
  if (sp.unit_flux)
    w0 = jbar(sp.sf, sp.ra);
  else if (sp.ball_start)
    w0 = -lam * jbar(sp.sf, sp.ra) * sp.ra / sp.sf.n;
  integrate_flux(ode, sp.ra, sp.rb, sp.u0, w0, ode_tol, u_end, w_end, store);
  return sp.shoot_value ? u_end : w_end;
}

struct BisectOutcome {
  double lam_lo, lam_mid;
  int iterations;
};

// Bracket the first sign change of the shot by doubling from the flat-slab
// guess, then bisect to relative width eig_rel_tol.  The shot is positive
// at lam = 0 by construction, so the first sign change is the first
// eigenvalue.
inline BisectOutcome bisect_eigenvalue(const ShotSpec& sp, const SolverOptions& opts) {
  const double guess = (sp.p - 1.0) * std::pow(M_PI / (sp.rb - sp.ra), sp.p);
  double ue, we;
  double lo = 0.0, hi = guess;
  int doublings = 0;
  while (shoot(sp, hi, opts.ode_tol, ue, we) > 0.0) {
    lo = hi;
    hi *= 2.0;
    if (++doublings > opts.max_bracket_doublings)
      throw solver_error("eigenvalue bracket not found after " +
                         std::to_string(doublings) + " doublings (lam_hi = " +
                         std::to_string(hi) + ")");
  }
  int iters = 0;
  while (hi - lo > opts.eig_rel_tol * std::max(0.5 * (hi + lo), 1e-300)) {
    const double mid = 0.5 * (lo + hi);
    if (shoot(sp, mid, opts.ode_tol, ue, we) > 0.0)
      lo = mid;
    else
      hi = mid;
    ++iters;
    if (iters > 2000)
      throw solver_error("eigenvalue bisection failed to converge: bracket [" +
                         std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return {lo, 0.5 * (lo + hi), iters};
}

inline double trapezoid_mass(const RadialProfile& prof, const SpaceForm& sf, double p) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < prof.r.size(); ++i) {
    const double fa = std::pow(std::fabs(prof.value[i]), p) * jbar(sf, prof.r[i]);
    const double fb = std::pow(std::fabs(prof.value[i + 1]), p) * jbar(sf, prof.r[i + 1]);
    acc += 0.5 * (fa + fb) * (prof.r[i + 1] - prof.r[i]);
  }
  return acc * unit_sphere_area(sf.n);
}

// Final assembly: profile shot at the positive bracket end (keeps the
// profile sign-clean), eigenvalue reported at the bracket midpoint.
inline EigenResult finish(const ShotSpec& sp, const BisectOutcome& bo,
                          const SolverOptions& opts) {
  EigenResult res;
  res.eigenvalue = bo.lam_mid;
  res.bisection_iterations = bo.iterations;
  double ue, we;
  const double endva = shoot(sp, bo.lam_lo, opts.ode_tol, ue, we, &res.profile);
  double vmax = 0.0, wmax = 0.0;
  for (double v : res.profile.value)
    vmax = std::max(vmax, std::fabs(v));
  for (double v : res.profile.flux)
    wmax = std::max(wmax, std::fabs(v));
  res.boundary_residual = std::fabs(endva) / std::max(sp.shoot_value ? vmax : wmax, 1e-300);

  const double mass = trapezoid_mass(res.profile, sp.sf, sp.p);
  const double su = std::pow(mass, -1.0 / sp.p);
  const double sw = std::pow(mass, -(sp.p - 1.0) / sp.p);
  for (double& v : res.profile.value)
    v *= su;
  for (double& v : res.profile.flux)
    v *= sw;
  res.normalization = trapezoid_mass(res.profile, sp.sf, sp.p);
  return res;
}

inline void check_annulus(const SpaceForm& sf, double p, const AnnulusSpec& ann,
                          BoundaryLayout expect, const char* where) {
  if (!(p > 1.0))
    throw precondition_error(std::string(where) + ": requires p > 1, got p = " +
                             std::to_string(p));
  if (!(ann.r1 > 0.0) || !(ann.r2 > ann.r1))
    throw precondition_error(std::string(where) + ": requires 0 < r1 < r2, got r1 = " +
                             std::to_string(ann.r1) + ", r2 = " + std::to_string(ann.r2));
  if (sf.kappa > 0.0 && !(ann.r2 < M_PI / std::sqrt(sf.kappa)))
    throw precondition_error(std::string(where) +
                             ": outer radius must stay below the model diameter bound "
                             "pi/sqrt(kappa) = " +
                             std::to_string(M_PI / std::sqrt(sf.kappa)));
  if (ann.layout != expect)
    throw precondition_error(std::string(where) + ": annulus layout does not match problem");
  if (sf.n < 1)
    throw precondition_error(std::string(where) + ": requires n >= 1");
}

} // namespace detail

/// Raw boundary shot value for the lambda problem (diagnostic): integrate
/// from u(r1) = 1, W(r1) = 0 and return u(r2) at the given trial eigenvalue.
inline double lambda_shot(const SpaceForm& sf, double p, const AnnulusSpec& ann, double lam,
                          const SolverOptions& opts = {}) {
  detail::ShotSpec sp{sf, p, ann.r1, ann.r2, 1.0, false, false, true};
  double ue, we;
  return detail::shoot(sp, lam, opts.ode_tol, ue, we);
}

/// Raw boundary shot value for the mu problem: integrate from u(r1) = 0,
/// W(r1) = Jbar(r1) and return W(r2).
inline double mu_shot(const SpaceForm& sf, double p, const AnnulusSpec& ann, double mu,
                      const SolverOptions& opts = {}) {
  detail::ShotSpec sp{sf, p, ann.r1, ann.r2, 0.0, true, false, false};
  double ue, we;
  return detail::shoot(sp, mu, opts.ode_tol, ue, we);
}

/// First eigenvalue with inner Neumann / outer Dirichlet conditions.
inline EigenResult solve_lambda_star(const SpaceForm& sf, double p, const AnnulusSpec& ann,
                                     const SolverOptions& opts = {}) {
  detail::check_annulus(sf, p, ann, BoundaryLayout::InnerNeumannOuterDirichlet,
                        "solve_lambda_star");
  detail::ShotSpec sp{sf, p, ann.r1, ann.r2, 1.0, false, false, true};
  return detail::finish(sp, detail::bisect_eigenvalue(sp, opts), opts);
}

/// First eigenvalue with inner Dirichlet / outer Neumann conditions.
inline EigenResult solve_mu_star(const SpaceForm& sf, double p, const AnnulusSpec& ann,
                                 const SolverOptions& opts = {}) {
  detail::check_annulus(sf, p, ann, BoundaryLayout::InnerDirichletOuterNeumann,
                        "solve_mu_star");
  detail::ShotSpec sp{sf, p, ann.r1, ann.r2, 0.0, true, false, false};
  return detail::finish(sp, detail::bisect_eigenvalue(sp, opts), opts);
}

/// First Dirichlet eigenvalue of the geodesic ball of radius r.  Shooting
/// starts at r0 = start_offset * r with the leading-order center balance
/// W(r0) = -lam Jbar(r0) r0 / n; r0 is halved until the eigenvalue is
/// insensitive to it.
inline EigenResult solve_dirichlet_ball(const SpaceForm& sf, double p, double r,
                                        const SolverOptions& opts = {}) {
  if (!(p > 1.0))
    throw precondition_error("solve_dirichlet_ball: requires p > 1");
  if (!(r > 0.0))
    throw precondition_error("solve_dirichlet_ball: requires r > 0");
  if (sf.kappa > 0.0 && !(r < M_PI / std::sqrt(sf.kappa)))
    throw precondition_error(
        "solve_dirichlet_ball: radius must stay below the model diameter bound");

  double r0 = opts.start_offset * r;
  detail::ShotSpec sp{sf, p, r0, r, 1.0, false, true, true};
  detail::BisectOutcome bo = detail::bisect_eigenvalue(sp, opts);
  for (int halvings = 0; halvings < 16; ++halvings) {
    detail::ShotSpec sp2 = sp;
    sp2.ra = 0.5 * sp.ra;
    const detail::BisectOutcome bo2 = detail::bisect_eigenvalue(sp2, opts);
    const bool settled =
        std::fabs(bo2.lam_mid - bo.lam_mid) <= opts.eig_rel_tol * std::fabs(bo2.lam_mid);
    sp = sp2;
    bo = bo2;
    if (settled)
      break;
  }
  return detail::finish(sp, bo, opts);
}

/// Scaled defect of the flux equation W' = -lam Jbar phi_p(u) along a
/// profile: max_i |W'_i + lam Jbar(r_i) phi_p(u_i)| / max_i |W'_i| with W'
/// from three-point differences on the (nonuniform) sample grid.
inline double ode_residual(const RadialProfile& prof, const SpaceForm& sf, double p,
                           double eigenvalue) {
  const std::size_t n = prof.r.size();
  if (n < 64)
    throw precondition_error("ode_residual: profile too sparse (need >= 64 samples, got " +
                             std::to_string(n) + ")");
  if (prof.value.size() != n || prof.flux.size() != n)
    throw precondition_error("ode_residual: profile sequences have mismatched lengths");
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(prof.r[i] > prof.r[i - 1]))
      throw precondition_error("ode_residual: radii must be strictly increasing");
    if (!(prof.value[i] > 0.0))
      throw precondition_error(
          "ode_residual: profile must be strictly positive on the open annulus");
  }
  double worst = 0.0, scale = 0.0;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h0 = prof.r[i] - prof.r[i - 1];
    const double h1 = prof.r[i + 1] - prof.r[i];
    const double dw = (prof.flux[i + 1] * h0 * h0 - prof.flux[i - 1] * h1 * h1 +
                       prof.flux[i] * (h1 * h1 - h0 * h0)) /
                      (h0 * h1 * (h0 + h1));
    const double defect = dw + eigenvalue * detail::jbar(sf, prof.r[i]) * phi_p(prof.value[i], p);
    worst = std::max(worst, std::fabs(defect));
    scale = std::max(scale, std::fabs(dw));
  }
  return worst / std::max(scale, 1e-300);
}

} // namespace annulus_spectra
