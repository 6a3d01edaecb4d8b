#pragma once

// Theorem-shaped checks: each one runs solvers on both sides of an
// inequality (or a rate estimate) and reduces the outcome to small report
// structs.  A ComparisonReport never throws on mathematical failure; it
// carries the signed margin so harnesses can aggregate and exit nonzero.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "planar.hpp"
#include "radial.hpp"
#include "rearrange.hpp"

namespace annulus_spectra {

struct ComparisonReport {
  double lhs = 0.0;
  double rhs = 0.0;
  enum class Relation { GE, LE } relation = Relation::GE;
  double slack = 0.0;     // signed relative margin in the relation direction
  double tolerance = 0.0; // relative tolerance granted to the relation
  bool pass = false;
  std::string provenance;
};

inline ComparisonReport make_report(double lhs, double rhs, ComparisonReport::Relation rel,
                                    double tolerance, std::string provenance) {
  ComparisonReport r;
  r.lhs = lhs;
  r.rhs = rhs;
  r.relation = rel;
  r.tolerance = tolerance;
  const double scale = std::max(std::fabs(rhs), 1e-300);
  r.slack = (rel == ComparisonReport::Relation::GE ? lhs - rhs : rhs - lhs) / scale;
  r.pass = r.slack >= -tolerance;
  r.provenance = std::move(provenance);
  return r;
}

/// Ordinary least squares on (log x, log y).
struct FitReport {
  std::vector<double> xs, ys;
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

inline FitReport fit_loglog(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw precondition_error("fit_loglog: need >= 2 paired samples");
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0))
      throw precondition_error("fit_loglog: samples must be strictly positive");
  FitReport fr;
  fr.xs = xs;
  fr.ys = ys;
  const std::size_t n = xs.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lx = std::log(xs[i]), ly = std::log(ys[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    syy += ly * ly;
  }
  const double den = n * sxx - sx * sx;
  fr.slope = (n * sxy - sx * sy) / den;
  fr.intercept = (sy - fr.slope * sx) / n;
  const double ss_tot = syy - sy * sy / n;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = std::log(ys[i]) - (fr.intercept + fr.slope * std::log(xs[i]));
    ss_res += e * e;
  }
  fr.r_squared = (ss_tot > 0.0) ? 1.0 - ss_res / ss_tot : 1.0;
  return fr;
}

/// Symmetrization lower bound: the planar eigenvalue of a holed domain is
/// bounded below by the radial eigenvalue of the volume-matched concentric
/// annulus in the matching space form (flat plane or unit sphere).
inline ComparisonReport check_faber_krahn(const GridDomain& domain, double p,
                                          double tolerance = 0.02,
                                          const SolverOptions& opts = {},
                                          const MinimizeOptions& mopts = {}) {
  if (!domain.has_hole)
    throw precondition_error("check_faber_krahn: domain must have a hole");

  bool hole_neumann = false, found = false;
  for (std::size_t k = 0; k < domain.cell_class.size(); ++k) {
    if (domain.component[k] == BoundaryComponent::Hole &&
        domain.cell_class[k] != CellClass::Exterior) {
      hole_neumann = domain.cell_class[k] == CellClass::NeumannBoundary;
      found = true;
      break;
    }
  }
  if (!found)
    throw precondition_error("check_faber_krahn: no hole boundary cells");

  const SpaceForm sf{2, domain.metric == Metric::Sphere ? 1.0 : 0.0};
  const double r1 = schwarz_radius(sf, domain.hole_volume);
  const double r2 = schwarz_radius(sf, domain.hole_volume + domain.domain_volume);

  const EigenResult2D planar = minimize_rayleigh(domain, p, mopts);

  AnnulusSpec ann{r1, r2,
                  hole_neumann ? BoundaryLayout::InnerNeumannOuterDirichlet
                               : BoundaryLayout::InnerDirichletOuterNeumann};
  const EigenResult radial = hole_neumann ? solve_lambda_star(sf, p, ann, opts)
                                          : solve_mu_star(sf, p, ann, opts);

  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "faber-krahn %s p=%g metric=%s vol_hole=%.6g vol_domain=%.6g r1=%.6g r2=%.6g",
                hole_neumann ? "lambda" : "mu", p,
                domain.metric == Metric::Sphere ? "sphere" : "flat", domain.hole_volume,
                domain.domain_volume, r1, r2);
  return make_report(planar.eigenvalue, radial.eigenvalue, ComparisonReport::Relation::GE,
                     tolerance, buf);
}

/// Rearrangement identities for a planar field: ladder volume matching,
/// p-mass preservation (two one-sided reports at 1%), and the energy
/// inequality (1% slack).
inline std::vector<ComparisonReport> rearrangement_checks(const GridDomain& domain,
                                                          const PlanarField& field, double p) {
  const SpaceForm sf{2, domain.metric == Metric::Sphere ? 1.0 : 0.0};
  const RadialProfile prof = schwarz_rearrange(domain, field, domain.hole_volume, sf, p);

  // Worst ladder volume mismatch, recomputed from the profile nodes.
  double worst = 0.0;
  {
    double a0 = 0.0;
    for (std::size_t k = 0; k < field.values.size(); ++k)
      if (domain.cell_class[k] != CellClass::Exterior)
        a0 = std::max(a0, field.values[k]);
    for (std::size_t i = 0; i < prof.r.size(); ++i) {
      const double t = prof.value[i];
      double vol = 0.0;
      for (int jj = 0; jj < domain.ny; ++jj)
        for (int ii = 0; ii < domain.nx; ++ii) {
          const int k = domain.idx(ii, jj);
          if (domain.cell_class[k] != CellClass::Exterior && field.values[k] > t)
            vol += detail::mass_weight(domain, ii, jj);
        }
      const double target = vol + domain.hole_volume;
      const double got = ball_volume(sf, prof.r[i]);
      worst = std::max(worst, std::fabs(got - target) / std::max(target, 1e-300));
    }
  }

  const double planar_m = planar_mass(domain, field, p);
  const double planar_e = planar_energy(domain, field, p);
  const double prof_m = profile_mass(prof, sf, p);
  const double prof_e = profile_energy(prof, sf, p);

  std::vector<ComparisonReport> out;
  out.push_back(make_report(1e-8, worst, ComparisonReport::Relation::GE, 0.0,
                            "rearrangement ladder volume matching (worst relative mismatch)"));
  out.push_back(make_report(prof_m, planar_m, ComparisonReport::Relation::GE, 0.01,
                            "rearrangement p-mass preserved (lower side)"));
  out.push_back(make_report(prof_m, planar_m, ComparisonReport::Relation::LE, 0.01,
                            "rearrangement p-mass preserved (upper side)"));
  out.push_back(make_report(prof_e, planar_e, ComparisonReport::Relation::LE, 0.01,
                            "rearrangement energy non-increasing"));
  return out;
}

/// Model-to-model curvature comparison: lambda is non-increasing and mu is
/// non-decreasing along an increasing curvature ladder.
inline std::vector<ComparisonReport> check_curvature_monotonicity(
    double p, int n, double r1, double r2, const std::vector<double>& kappas,
    const SolverOptions& opts = {}) {
  if (kappas.size() < 2)
    throw precondition_error("check_curvature_monotonicity: need >= 2 curvatures");
  for (std::size_t i = 1; i < kappas.size(); ++i)
    if (!(kappas[i] > kappas[i - 1]))
      throw precondition_error("check_curvature_monotonicity: curvatures must increase");

  const double tol = 10.0 * opts.eig_rel_tol;
  std::vector<double> lam(kappas.size()), mu(kappas.size());
  for (std::size_t i = 0; i < kappas.size(); ++i) {
    const SpaceForm sf{n, kappas[i]};
    lam[i] = solve_lambda_star(
                 sf, p, {r1, r2, BoundaryLayout::InnerNeumannOuterDirichlet}, opts)
                 .eigenvalue;
    mu[i] = solve_mu_star(sf, p, {r1, r2, BoundaryLayout::InnerDirichletOuterNeumann}, opts)
                .eigenvalue;
  }
  std::vector<ComparisonReport> out;
  char buf[160];
  for (std::size_t i = 0; i + 1 < kappas.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "lambda non-increasing in curvature: kappa %g vs %g",
                  kappas[i], kappas[i + 1]);
    out.push_back(
        make_report(lam[i], lam[i + 1], ComparisonReport::Relation::GE, tol, buf));
    std::snprintf(buf, sizeof(buf), "mu non-decreasing in curvature: kappa %g vs %g",
                  kappas[i], kappas[i + 1]);
    out.push_back(make_report(mu[i + 1], mu[i], ComparisonReport::Relation::GE, tol, buf));
  }
  return out;
}

struct VanishingHoleReport {
  double lambda0 = 0.0;
  std::vector<double> epsilons;
  std::vector<double> lambdas;
  FitReport fit;             // log-log of lambda(eps) - lambda0 vs eps
  double extrapolated = 0.0; // even-power extrapolation from the 3 smallest eps
  bool anomaly = false;      // non-monotone ladder
  std::vector<ComparisonReport> comparisons;
};

/// Small-Neumann-hole behaviour of lambda: the eigenvalue exceeds the
/// solid-ball value, approaches it at rate eps^n, and extrapolates back to
/// it.  The sandwich constants are fitted sup-style over the ladder.
inline VanishingHoleReport check_vanishing_hole(double p, int n, double R,
                                                std::vector<double> epsilons,
                                                const SolverOptions& opts = {}) {
  if (epsilons.size() < 4)
    throw precondition_error("check_vanishing_hole: need >= 4 ladder points");
  std::sort(epsilons.begin(), epsilons.end());
  if (!(epsilons.front() > 0.0) || !(epsilons.back() < R))
    throw precondition_error("check_vanishing_hole: ladder must satisfy 0 < eps < R");

  const SpaceForm sf{n, 0.0};
  VanishingHoleReport rep;
  rep.epsilons = epsilons;
  rep.lambda0 = solve_dirichlet_ball(sf, p, R, opts).eigenvalue;
  for (double e : epsilons)
    rep.lambdas.push_back(
        solve_lambda_star(sf, p, {e, R, BoundaryLayout::InnerNeumannOuterDirichlet}, opts)
            .eigenvalue);

  char buf[160];
  std::vector<double> gaps;
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "lambda(eps=%g) exceeds the ball eigenvalue",
                  epsilons[i]);
    rep.comparisons.push_back(make_report(rep.lambdas[i], rep.lambda0,
                                          ComparisonReport::Relation::GE, 0.0, buf));
    gaps.push_back(rep.lambdas[i] - rep.lambda0);
    if (i > 0 && rep.lambdas[i] < rep.lambdas[i - 1])
      rep.anomaly = true; // contradicts domain monotonicity in the hole radius
  }

  // Sup-fitted sandwich constants: C1 for the lower bound (0 when the gap
  // never dips below zero), C2 for the upper bound.
  double c1 = 0.0, c2 = 0.0;
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    c1 = std::max(c1, -gaps[i] / std::pow(epsilons[i], n - 1));
    c2 = std::max(c2, gaps[i] / std::pow(epsilons[i], n));
  }
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    std::snprintf(buf, sizeof(buf),
                  "sandwich at eps=%g: lambda0 - %.3g eps^%d <= lambda <= lambda0 + %.3g eps^%d",
                  epsilons[i], c1, n - 1, c2, n);
    const bool ok = rep.lambdas[i] >= rep.lambda0 - c1 * std::pow(epsilons[i], n - 1) - 1e-12 &&
                    rep.lambdas[i] <= rep.lambda0 + c2 * std::pow(epsilons[i], n) + 1e-12;
    ComparisonReport r = make_report(ok ? 1.0 : 0.0, 1.0, ComparisonReport::Relation::GE,
                                     0.0, buf);
    rep.comparisons.push_back(r);
  }

  bool fit_ok = true;
  for (double g : gaps)
    if (!(g > 0.0))
      fit_ok = false;
  if (fit_ok)
    rep.fit = fit_loglog(epsilons, gaps);
  else
    rep.anomaly = true;

  // Even-power extrapolation lam(eps) ~ lam0 + a eps^n + b eps^2n through
  // the three smallest ladder points (solved exactly).
  {
    const double x0 = std::pow(epsilons[0], n), x1 = std::pow(epsilons[1], n),
                 x2 = std::pow(epsilons[2], n);
    const double y0 = rep.lambdas[0], y1 = rep.lambdas[1], y2 = rep.lambdas[2];
    // Lagrange evaluation at x = 0 of the quadratic through (x_i, y_i).
    rep.extrapolated = y0 * (x1 * x2) / ((x0 - x1) * (x0 - x2)) +
                       y1 * (x0 * x2) / ((x1 - x0) * (x1 - x2)) +
                       y2 * (x0 * x1) / ((x2 - x0) * (x2 - x1));
    const double tol = 10.0 * opts.eig_rel_tol;
    rep.comparisons.push_back(make_report(rep.extrapolated, rep.lambda0,
                                          ComparisonReport::Relation::GE, tol,
                                          "eps->0 extrapolation vs ball eigenvalue (lower)"));
    rep.comparisons.push_back(make_report(rep.extrapolated, rep.lambda0,
                                          ComparisonReport::Relation::LE, tol,
                                          "eps->0 extrapolation vs ball eigenvalue (upper)"));
  }
  return rep;
}

struct MuDecayReport {
  std::vector<double> epsilons;
  std::vector<double> mus;
  FitReport fit; // log-log of mu vs eps
  std::vector<ComparisonReport> comparisons;
};

/// Capacity-type decay of mu as the inner Dirichlet hole shrinks (n >= 3):
/// mu decreases with the hole and the log-log slope stays near n - 2.
inline MuDecayReport check_mu_decay(double p, int n, double R, std::vector<double> epsilons,
                                    const SolverOptions& opts = {}) {
  if (n < 3)
    throw precondition_error("check_mu_decay: requires n >= 3 (mu does not vanish below)");
  if (epsilons.size() < 4)
    throw precondition_error("check_mu_decay: need >= 4 ladder points");
  std::sort(epsilons.begin(), epsilons.end());
  if (!(epsilons.front() > 0.0) || !(epsilons.back() < R))
    throw precondition_error("check_mu_decay: ladder must satisfy 0 < eps < R");

  const SpaceForm sf{n, 0.0};
  MuDecayReport rep;
  rep.epsilons = epsilons;
  for (double e : epsilons)
    rep.mus.push_back(
        solve_mu_star(sf, p, {e, R, BoundaryLayout::InnerDirichletOuterNeumann}, opts)
            .eigenvalue);

  char buf[160];
  for (std::size_t i = 0; i + 1 < epsilons.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "mu strictly increasing in the hole: eps %g vs %g",
                  epsilons[i], epsilons[i + 1]);
    rep.comparisons.push_back(
        make_report(rep.mus[i + 1], rep.mus[i], ComparisonReport::Relation::GE, 0.0, buf));
  }
  rep.fit = fit_loglog(epsilons, rep.mus);
  std::snprintf(buf, sizeof(buf), "mu decay rate: fitted slope %.4f >= n - 2 - 0.3",
                rep.fit.slope);
  rep.comparisons.push_back(make_report(rep.fit.slope, n - 2 - 0.3,
                                        ComparisonReport::Relation::GE, 0.0, buf));
  return rep;
}

/// Rayleigh quotient of the capped distance ramp w = min(r - eps, eta) on
/// the annulus (eps, r_outer): an upper bound for mu by the variational
/// principle.  Exact radial quadrature.
inline double mu_trial_upper_bound(const SpaceForm& sf, double p, double r_outer,
                                   double epsilon, double eta) {
  if (!(p > 1.0))
    throw precondition_error("mu_trial_upper_bound: requires p > 1");
  if (!(epsilon > 0.0) || !(eta > 0.0) || !(epsilon + eta < r_outer))
    throw precondition_error(
        "mu_trial_upper_bound: requires 0 < epsilon, 0 < eta, epsilon + eta < r_outer");
  if (sf.kappa > 0.0 && !(r_outer < M_PI / std::sqrt(sf.kappa)))
    throw precondition_error("mu_trial_upper_bound: r_outer exceeds the model diameter bound");

  const auto jb = [&](double t) { return detail::jbar(sf, t); };
  const double num = integrate(jb, epsilon, epsilon + eta);
  const double den =
      integrate([&](double t) { return std::pow(t - epsilon, p) * jb(t); }, epsilon,
                epsilon + eta) +
      std::pow(eta, p) * integrate(jb, epsilon + eta, r_outer);
  return num / den;
}

struct HadamardReport {
  double eigenvalue = 0.0;
  double inner_value = 0.0;       // normalized eigenfunction at the hole
  double formula = 0.0;           // lam * u(r1)^p * Area(inner sphere)
  double finite_difference = 0.0; // (lam(r1+d) - lam(r1-d)) / 2d
  double mismatch = 0.0;          // relative
  ComparisonReport cmp;
};

/// Derivative of lambda in the inner radius, flat space: the boundary
/// variation formula reduces on the Neumann hole (where |grad u| = 0) to
/// lam * u(r1)^p * Area(r1) with the outward-of-domain normal orientation
/// (growing the hole raises lambda), compared against a central difference.
inline HadamardReport check_hadamard(double p, int n, double r1, double r2, double delta,
                                     SolverOptions opts = {}) {
  if (!(delta > 0.0) || !(r1 - delta > 0.0) || !(r1 + delta < r2))
    throw precondition_error("check_hadamard: requires 0 < delta < r1 and r1 + delta < r2");
  // Derivative resolution needs eigenvalues far tighter than the default.
  opts.eig_rel_tol = std::min(opts.eig_rel_tol, 1e-12);
  opts.ode_tol = std::min(opts.ode_tol, 1e-11);

  const SpaceForm sf{n, 0.0};
  const auto lam_at = [&](double a) {
    return solve_lambda_star(sf, p, {a, r2, BoundaryLayout::InnerNeumannOuterDirichlet},
                             opts);
  };
  const EigenResult center = lam_at(r1);
  const double lam_m = lam_at(r1 - delta).eigenvalue;
  const double lam_p = lam_at(r1 + delta).eigenvalue;

  HadamardReport rep;
  rep.eigenvalue = center.eigenvalue;
  rep.inner_value = center.profile.value.front();
  rep.formula = center.eigenvalue * std::pow(rep.inner_value, p) * unit_sphere_area(n) *
                std::pow(r1, n - 1);
  rep.finite_difference = (lam_p - lam_m) / (2.0 * delta);
  rep.mismatch = std::fabs(rep.finite_difference - rep.formula) /
                 std::max(std::fabs(rep.formula), 1e-300);
  const double tol = std::max(1e-3, 10.0 * delta * delta);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "hadamard derivative p=%g n=%d r1=%g delta=%g (formula %.6g, fd %.6g)", p, n,
                r1, delta, rep.formula, rep.finite_difference);
  rep.cmp = make_report(tol, rep.mismatch, ComparisonReport::Relation::GE, 0.0, buf);
  return rep;
}

/// Flux sign pattern of a solved profile: for the lambda layout W < 0 past
/// the inner Neumann endpoint; for the mu layout W > 0 before the outer
/// Neumann endpoint; the Neumann endpoint flux itself vanishes.
inline std::vector<ComparisonReport> check_sign_structure(const EigenResult& result,
                                                          BoundaryLayout layout) {
  const std::size_t n = result.profile.r.size();
  if (n < 2)
    throw precondition_error("check_sign_structure: malformed profile");
  double wmax = 0.0;
  for (double w : result.profile.flux)
    wmax = std::max(wmax, std::fabs(w));
  wmax = std::max(wmax, 1e-300);

  const bool lambda_layout = layout == BoundaryLayout::InnerNeumannOuterDirichlet;
  double min_margin = 1e300;
  if (lambda_layout) {
    for (std::size_t i = 1; i < n; ++i)
      min_margin = std::min(min_margin, -result.profile.flux[i] / wmax);
  } else {
    for (std::size_t i = 0; i + 1 < n; ++i)
      min_margin = std::min(min_margin, result.profile.flux[i] / wmax);
  }
  const double neumann_flux =
      std::fabs(lambda_layout ? result.profile.flux.front() : result.profile.flux.back()) /
      wmax;
  const double neumann_tol =
      lambda_layout ? 1e-12 : std::max(1e-12, 2.0 * result.boundary_residual);

  std::vector<ComparisonReport> out;
  out.push_back(make_report(min_margin, 0.0, ComparisonReport::Relation::GE, 0.0,
                            lambda_layout ? "flux strictly negative on (r1, r2]"
                                          : "flux strictly positive on [r1, r2)"));
  out.push_back(make_report(neumann_flux, neumann_tol, ComparisonReport::Relation::LE, 0.0,
                            "flux vanishes at the Neumann endpoint"));
  return out;
}

} // namespace annulus_spectra
