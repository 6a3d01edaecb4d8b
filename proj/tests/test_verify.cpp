#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "annulus_spectra/verify.hpp"
#include "fixture_util.hpp"

namespace as = annulus_spectra;

TEST_CASE("comparison reports carry signed relative slack", "[verify]") {
  const auto ge = as::make_report(1.02, 1.0, as::ComparisonReport::Relation::GE, 0.0, "x");
  CHECK(ge.pass);
  CHECK(ge.slack == Catch::Approx(0.02));
  const auto ge_bad = as::make_report(0.97, 1.0, as::ComparisonReport::Relation::GE, 0.02, "x");
  CHECK_FALSE(ge_bad.pass);
  const auto ge_tol = as::make_report(0.99, 1.0, as::ComparisonReport::Relation::GE, 0.02, "x");
  CHECK(ge_tol.pass);
  const auto le = as::make_report(0.5, 1.0, as::ComparisonReport::Relation::LE, 0.0, "x");
  CHECK(le.pass);
  CHECK(le.slack == Catch::Approx(0.5));
}

TEST_CASE("log-log fit recovers an exact power law", "[verify]") {
  std::vector<double> xs, ys;
  for (double x : {0.01, 0.02, 0.05, 0.1, 0.4})
    xs.push_back(x), ys.push_back(3.0 * std::pow(x, 2.5));
  const as::FitReport fr = as::fit_loglog(xs, ys);
  CHECK(fr.slope == Catch::Approx(2.5).epsilon(1e-12));
  CHECK(fr.intercept == Catch::Approx(std::log(3.0)).epsilon(1e-10));
  CHECK(fr.r_squared == Catch::Approx(1.0).margin(1e-12));
  CHECK_THROWS_AS(as::fit_loglog({1.0}, {1.0}), as::precondition_error);
  CHECK_THROWS_AS(as::fit_loglog({1.0, -1.0}, {1.0, 1.0}), as::precondition_error);
}

TEST_CASE("curvature monotonicity holds on the default ladder", "[verify]") {
  const auto reports =
      as::check_curvature_monotonicity(2.0, 2, 0.5, 1.0, {-1.0, -0.5, 0.0, 0.25, 0.5});
  REQUIRE(reports.size() == 8);
  for (const auto& c : reports) {
    INFO(c.provenance << " slack=" << c.slack);
    CHECK(c.pass);
  }
  CHECK_THROWS_AS(as::check_curvature_monotonicity(2.0, 2, 0.5, 1.0, {0.5, 0.0}),
                  as::precondition_error);
}

TEST_CASE("vanishing Neumann hole: excess, rate, and extrapolation", "[verify]") {
  const auto rep = as::check_vanishing_hole(2.0, 2, 1.0, {0.005, 0.01, 0.02, 0.04, 0.08, 0.16});
  CHECK_FALSE(rep.anomaly);
  for (const auto& c : rep.comparisons) {
    INFO(c.provenance << " slack=" << c.slack);
    CHECK(c.pass);
  }
  CHECK(rep.fit.slope > 1.7);
  CHECK(rep.fit.slope < 2.3);
  // the extrapolated limit agrees with the ball eigenvalue to solver accuracy
  CHECK(rep.extrapolated == Catch::Approx(rep.lambda0).epsilon(1e-7));
}

TEST_CASE("mu decays at the capacity rate and matches its oracles", "[verify]") {
  const auto fx = load_fixture_json("oracle_values.json");
  const auto rep = as::check_mu_decay(2.0, 3, 1.0, {0.01, 0.02, 0.04, 0.08});
  for (const auto& c : rep.comparisons) {
    INFO(c.provenance << " slack=" << c.slack);
    CHECK(c.pass);
  }
  CHECK(rep.fit.slope >= 0.7);
  for (std::size_t i = 0; i < rep.epsilons.size(); ++i) {
    char key[64];
    std::snprintf(key, sizeof(key), "mu_n3_p2_r%g_1", rep.epsilons[i]);
    CHECK(rep.mus[i] == Catch::Approx(oracle(fx, key)).epsilon(1e-6));
  }
  CHECK_THROWS_AS(as::check_mu_decay(2.0, 2, 1.0, {0.01, 0.02, 0.04, 0.08}),
                  as::precondition_error);
}

TEST_CASE("ramp trial function bounds mu from above", "[verify]") {
  const auto fx = load_fixture_json("oracle_values.json");
  const as::SpaceForm sf{3, 0.0};
  // frozen quadrature oracle for the capped ramp quotient
  CHECK(as::mu_trial_upper_bound(sf, 2.0, 1.0, 0.1, 0.1) ==
        Catch::Approx(oracle(fx, "ramp_quotient_p2_n3_eps0.1_eta0.1_R1")).epsilon(1e-8));

  const double mu =
      as::solve_mu_star(sf, 2.0, {0.1, 1.0, as::BoundaryLayout::InnerDirichletOuterNeumann})
          .eigenvalue;
  double prev = 1e300;
  for (double eta : {0.05, 0.1, 0.2}) {
    const double bound = as::mu_trial_upper_bound(sf, 2.0, 1.0, 0.1, eta);
    CHECK(bound >= mu);
    CHECK(bound < prev); // decreasing on this tested ladder
    prev = bound;
  }
  CHECK_THROWS_AS(as::mu_trial_upper_bound(sf, 2.0, 1.0, 0.5, 0.6), as::precondition_error);
  CHECK_THROWS_AS(as::mu_trial_upper_bound(sf, 1.0, 1.0, 0.1, 0.1), as::precondition_error);
}

TEST_CASE("eigenvalue derivative in the hole radius matches its boundary formula", "[verify]") {
  const as::HadamardReport rep = as::check_hadamard(2.0, 2, 0.3, 1.0, 1e-3);
  INFO("formula=" << rep.formula << " fd=" << rep.finite_difference
                  << " mismatch=" << rep.mismatch);
  CHECK(rep.cmp.pass);
  CHECK(rep.mismatch < 1e-3);
  CHECK(rep.formula > 0.0); // growing the hole raises lambda

  const as::HadamardReport half = as::check_hadamard(2.0, 2, 0.3, 1.0, 0.5e-3);
  CHECK(half.mismatch <= rep.mismatch / 3.0);
  CHECK_THROWS_AS(as::check_hadamard(2.0, 2, 0.3, 1.0, 0.4), as::precondition_error);
}

TEST_CASE("flux sign structure of solved profiles", "[verify]") {
  const as::SpaceForm sf{2, 0.0};
  const as::EigenResult lam = as::solve_lambda_star(
      sf, 2.0, {0.5, 1.0, as::BoundaryLayout::InnerNeumannOuterDirichlet});
  for (const auto& c :
       as::check_sign_structure(lam, as::BoundaryLayout::InnerNeumannOuterDirichlet)) {
    INFO(c.provenance);
    CHECK(c.pass);
  }
  const as::EigenResult mu = as::solve_mu_star(
      sf, 2.0, {0.5, 1.0, as::BoundaryLayout::InnerDirichletOuterNeumann});
  for (const auto& c :
       as::check_sign_structure(mu, as::BoundaryLayout::InnerDirichletOuterNeumann)) {
    INFO(c.provenance);
    CHECK(c.pass);
  }
  // a corrupted flux sample must be flagged
  as::EigenResult bad = lam;
  bad.profile.flux[bad.profile.flux.size() / 2] = 1e-3;
  bool all = true;
  for (const auto& c :
       as::check_sign_structure(bad, as::BoundaryLayout::InnerNeumannOuterDirichlet))
    all = all && c.pass;
  CHECK_FALSE(all);
}

TEST_CASE("symmetrization comparison on concentric and offset annuli", "[verify]") {
  // Concentric hole: the planar minimizer is radial, so the comparison sits
  // within discretization error of equality and passes.
  const as::GridDomain conc = as::build_domain(
      as::shape_annulus(1.0, 0.3, 0.0, as::ShapeSpec::Layout::InnerNeumannOuterDirichlet),
      1.0 / 48);
  const as::ComparisonReport crep = as::check_faber_krahn(conc, 2.0);
  INFO(crep.provenance << " slack=" << crep.slack);
  CHECK(crep.pass);
  CHECK(crep.slack > -0.02);
  CHECK(crep.slack < 0.01);

  // Off-center hole: the planar eigenvalue drops well below the concentric
  // radial value, so the comparison fails with a decisively negative slack.
  const as::GridDomain off = as::build_domain(
      as::shape_annulus(1.0, 0.3, 0.25, as::ShapeSpec::Layout::InnerNeumannOuterDirichlet),
      1.0 / 48);
  const as::ComparisonReport orep = as::check_faber_krahn(off, 2.0);
  INFO(orep.provenance << " slack=" << orep.slack);
  CHECK_FALSE(orep.pass);
  CHECK(orep.slack < -0.05);

  // mu side (Dirichlet hole, Neumann outer): the inner Dirichlet band costs
  // about two percent at this pitch, so give the concentric case three.
  const as::GridDomain mconc = as::build_domain(
      as::shape_annulus(1.0, 0.3, 0.0, as::ShapeSpec::Layout::InnerDirichletOuterNeumann),
      1.0 / 64);
  const as::ComparisonReport mrep = as::check_faber_krahn(mconc, 2.0, 0.03);
  INFO(mrep.provenance << " slack=" << mrep.slack);
  CHECK(mrep.pass);
  CHECK(mrep.slack > -0.03);

  const as::GridDomain moff = as::build_domain(
      as::shape_annulus(1.0, 0.3, 0.25, as::ShapeSpec::Layout::InnerDirichletOuterNeumann),
      1.0 / 48);
  const as::ComparisonReport morep = as::check_faber_krahn(moff, 2.0);
  INFO(morep.provenance << " slack=" << morep.slack);
  CHECK_FALSE(morep.pass);
  CHECK(morep.slack < -0.2);

  const as::GridDomain no_hole = as::build_domain(as::shape_disk(1.0), 1.0 / 16);
  CHECK_THROWS_AS(as::check_faber_krahn(no_hole, 2.0), as::precondition_error);
}
