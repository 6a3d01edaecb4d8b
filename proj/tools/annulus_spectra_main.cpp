// Command-line front end: radial and planar solves, parameter sweeps,
// theorem checks, deterministic JSON/CSV records, content-addressed cache.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "annulus_spectra/errors.hpp"
#include "annulus_spectra/geometry.hpp"
#include "annulus_spectra/planar.hpp"
#include "annulus_spectra/radial.hpp"
#include "annulus_spectra/rearrange.hpp"
#include "annulus_spectra/records.hpp"
#include "annulus_spectra/verify.hpp"
#include "annulus_spectra/version.hpp"

namespace as = annulus_spectra;
using ojson = nlohmann::ordered_json;
using KV = std::vector<std::pair<std::string, std::string>>;

namespace {

struct CliError {
  int code;
  std::string msg;
};

[[noreturn]] void fail(int code, const std::string& msg) { throw CliError{code, msg}; }

// ---- config file merging --------------------------------------------------

struct ParamBinding {
  std::string key;
  enum Kind { Double, Int, Str, Flag } kind;
  void* target;
  CLI::Option* opt;
};

struct ParamSet {
  std::vector<ParamBinding> binds;

  void add(const std::string& key, double* t, CLI::Option* o) {
    binds.push_back({key, ParamBinding::Double, t, o});
  }
  void add(const std::string& key, int* t, CLI::Option* o) {
    binds.push_back({key, ParamBinding::Int, t, o});
  }
  void add(const std::string& key, std::string* t, CLI::Option* o) {
    binds.push_back({key, ParamBinding::Str, t, o});
  }
  void add(const std::string& key, bool* t, CLI::Option* o) {
    binds.push_back({key, ParamBinding::Flag, t, o});
  }

  // Flags override file values; unknown keys are rejected in document order.
  void apply_config(const std::string& path) const {
    std::ifstream f(path);
    if (!f)
      fail(2, "invalid config: cannot read config file " + path);
    ojson doc;
    try {
      doc = ojson::parse(f);
    } catch (const std::exception& e) {
      fail(2, std::string("invalid config: ") + e.what());
    }
    if (!doc.is_object())
      fail(2, "invalid config: config file must hold a JSON object");
    for (auto it = doc.begin(); it != doc.end(); ++it) {
      const ParamBinding* b = nullptr;
      for (const auto& cand : binds)
        if (cand.key == it.key()) {
          b = &cand;
          break;
        }
      if (!b)
        fail(2, "invalid config: unknown key '" + it.key() + "'");
      if (b->opt && b->opt->count() > 0)
        continue; // command line wins
      const ojson& v = it.value();
      switch (b->kind) {
      case ParamBinding::Double:
        if (!v.is_number())
          fail(2, "invalid config: key '" + b->key + "' must be a number");
        *static_cast<double*>(b->target) = v.get<double>();
        break;
      case ParamBinding::Int:
        if (!v.is_number_integer())
          fail(2, "invalid config: key '" + b->key + "' must be an integer");
        *static_cast<int*>(b->target) = v.get<int>();
        break;
      case ParamBinding::Str:
        if (!v.is_string())
          fail(2, "invalid config: key '" + b->key + "' must be a string");
        *static_cast<std::string*>(b->target) = v.get<std::string>();
        break;
      case ParamBinding::Flag:
        if (!v.is_boolean())
          fail(2, "invalid config: key '" + b->key + "' must be a boolean");
        *static_cast<bool*>(b->target) = v.get<bool>();
        break;
      }
    }
  }
};

// ---- output and cache ------------------------------------------------------

void write_text_output(const std::string& out_path, const std::string& text) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(out_path, std::ios::binary);
  if (!f)
    fail(2, "invalid config: cannot open output path " + out_path);
  f << text;
}

std::string resolve_cache_dir(const std::string& flag_value) {
  if (!flag_value.empty())
    return flag_value;
  if (const char* env = std::getenv("ANNULUS_SPECTRA_CACHE"))
    if (*env)
      return env;
  return {};
}

bool cache_load(const std::string& dir, const std::string& digest, std::string& payload) {
  if (dir.empty())
    return false;
  std::ifstream f(std::filesystem::path(dir) / (digest + ".json"), std::ios::binary);
  if (!f)
    return false;
  std::ostringstream ss;
  ss << f.rdbuf();
  payload = ss.str();
  return !payload.empty();
}

void cache_store(const std::string& dir, const std::string& digest,
                 const std::string& payload) {
  if (dir.empty())
    return;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    return; // cache is best-effort
  std::ofstream f(std::filesystem::path(dir) / (digest + ".json"), std::ios::binary);
  f << payload;
}

KV with_meta(const std::string& command, KV kv) {
  kv.emplace_back("command", command);
  kv.emplace_back("tool_version", as::tool_version);
  return kv;
}

std::string make_record(const std::string& command, const KV& cfg,
                        const std::string& payload_type, const std::string& payload) {
  as::ResultRecord rec;
  rec.config_digest = as::config_digest(cfg);
  rec.command = command;
  rec.payload_type = payload_type;
  rec.payload = payload;
  return as::to_json(rec);
}

// ---- shared parameter packs -------------------------------------------------

struct RadialArgs {
  std::string problem = "lambda";
  double p = 2.0;
  int n = 2;
  double kappa = 0.0;
  double r1 = 0.5;
  double r2 = 1.0;
  double eig_rel_tol = 1e-8;
  double ode_tol = 1e-10;
  bool no_profile = false;
};

void validate_common(double p, int n) {
  if (!(p > 1.0))
    fail(2, "invalid config: p must exceed 1");
  if (n < 1)
    fail(2, "invalid config: n must be a positive integer");
}

as::EigenResult solve_radial_point(const RadialArgs& a) {
  as::SolverOptions opts;
  opts.eig_rel_tol = a.eig_rel_tol;
  opts.ode_tol = a.ode_tol;
  const as::SpaceForm sf{a.n, a.kappa};
  if (a.problem == "lambda")
    return as::solve_lambda_star(
        sf, a.p, {a.r1, a.r2, as::BoundaryLayout::InnerNeumannOuterDirichlet}, opts);
  if (a.problem == "mu")
    return as::solve_mu_star(
        sf, a.p, {a.r1, a.r2, as::BoundaryLayout::InnerDirichletOuterNeumann}, opts);
  fail(2, "invalid config: problem must be 'lambda' or 'mu'");
}

std::vector<double> parse_double_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(item, &pos));
      if (pos != item.size())
        throw std::invalid_argument(item);
    } catch (const std::exception&) {
      fail(2, "invalid config: key '" + key + "' has a malformed number '" + item + "'");
    }
  }
  if (out.empty())
    fail(2, "invalid config: key '" + key + "' must list at least one number");
  return out;
}

as::ShapeSpec::Layout parse_layout(const std::string& s, bool holed) {
  if (s.empty())
    return holed ? as::ShapeSpec::Layout::InnerNeumannOuterDirichlet
                 : as::ShapeSpec::Layout::AllDirichlet;
  if (s == "all_dirichlet")
    return as::ShapeSpec::Layout::AllDirichlet;
  if (s == "inner_neumann")
    return as::ShapeSpec::Layout::InnerNeumannOuterDirichlet;
  if (s == "inner_dirichlet")
    return as::ShapeSpec::Layout::InnerDirichletOuterNeumann;
  fail(2, "invalid config: layout must be all_dirichlet, inner_neumann, or inner_dirichlet");
}

// Grammar: disk:R | rectangle:a,b | annulus:R,r | disk_minus_square:R,side |
// ellipse:a,b,r.  Holes are centered at (offset, 0).
as::ShapeSpec parse_shape(const std::string& spec, double offset,
                          const std::string& layout_str) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos)
    fail(2, "invalid config: shape needs the form name:args, got '" + spec + "'");
  const std::string name = spec.substr(0, colon);
  const std::vector<double> args = parse_double_list("shape", spec.substr(colon + 1));

  const auto arity = [&](std::size_t k) {
    if (args.size() != k)
      fail(2, "invalid config: shape '" + name + "' takes " + std::to_string(k) +
                  " numbers, got " + std::to_string(args.size()));
  };
  if (name == "disk") {
    arity(1);
    as::ShapeSpec s = as::shape_disk(args[0]);
    s.layout = parse_layout(layout_str, false);
    return s;
  }
  if (name == "rectangle") {
    arity(2);
    as::ShapeSpec s = as::shape_rectangle(args[0], args[1]);
    s.layout = parse_layout(layout_str, false);
    return s;
  }
  if (name == "annulus") {
    arity(2);
    return as::shape_annulus(args[0], args[1], offset, parse_layout(layout_str, true));
  }
  if (name == "disk_minus_square") {
    arity(2);
    return as::shape_disk_minus_square(args[0], args[1], offset,
                                       parse_layout(layout_str, true));
  }
  if (name == "ellipse") {
    arity(3);
    return as::shape_ellipse_annulus(args[0], args[1], args[2], offset,
                                     parse_layout(layout_str, true));
  }
  fail(2, "invalid config: unknown shape '" + name + "'");
}

as::Metric parse_metric(const std::string& s) {
  if (s == "flat")
    return as::Metric::Flat;
  if (s == "sphere")
    return as::Metric::Sphere;
  fail(2, "invalid config: metric must be flat or sphere");
}

void export_field_csv(const std::string& path, const as::GridDomain& dom,
                      const as::PlanarField& field) {
  std::string out = "x,y,value\n";
  for (int j = 0; j < dom.ny; ++j)
    for (int i = 0; i < dom.nx; ++i) {
      const int k = dom.idx(i, j);
      if (dom.cell_class[k] == as::CellClass::Exterior)
        continue;
      out += as::csv_row({as::format_number(dom.cx(i)), as::format_number(dom.cy(j)),
                          as::format_number(field.values[k])});
    }
  write_text_output(path, out);
}

void export_mask_pgm(const std::string& path, const as::GridDomain& dom) {
  std::string out = "P2\n" + std::to_string(dom.nx) + " " + std::to_string(dom.ny) + "\n255\n";
  for (int j = dom.ny - 1; j >= 0; --j) {
    for (int i = 0; i < dom.nx; ++i) {
      int v = 0;
      switch (dom.at(i, j)) {
      case as::CellClass::Exterior: v = 0; break;
      case as::CellClass::Interior: v = 255; break;
      case as::CellClass::DirichletBoundary: v = 64; break;
      case as::CellClass::NeumannBoundary: v = 160; break;
      }
      out += std::to_string(v);
      out.push_back(i + 1 == dom.nx ? '\n' : ' ');
    }
  }
  write_text_output(path, out);
}

// ---- subcommand runners ------------------------------------------------------

int run_radial(const RadialArgs& a, const std::string& out_path,
               const std::string& cache_flag) {
  validate_common(a.p, a.n);
  if (a.problem != "lambda" && a.problem != "mu")
    fail(2, "invalid config: problem must be 'lambda' or 'mu'");
  const KV cfg = with_meta(
      "radial", {{"problem", a.problem},
                 {"p", as::format_number(a.p)},
                 {"n", std::to_string(a.n)},
                 {"kappa", as::format_number(a.kappa)},
                 {"r1", as::format_number(a.r1)},
                 {"r2", as::format_number(a.r2)},
                 {"eig_rel_tol", as::format_number(a.eig_rel_tol)},
                 {"ode_tol", as::format_number(a.ode_tol)},
                 {"profile", a.no_profile ? "false" : "true"}});
  const std::string digest = as::config_digest(cfg);
  const std::string cache_dir = resolve_cache_dir(cache_flag);
  std::string payload;
  if (!cache_load(cache_dir, digest, payload)) {
    payload = as::payload_radial(solve_radial_point(a), !a.no_profile);
    cache_store(cache_dir, digest, payload);
  }
  write_text_output(out_path, make_record("radial", cfg, "radial", payload));
  return 0;
}

int run_ball(double p, int n, double kappa, double r, double eig_rel_tol, double ode_tol,
             bool no_profile, const std::string& out_path, const std::string& cache_flag) {
  validate_common(p, n);
  const KV cfg = with_meta("ball", {{"p", as::format_number(p)},
                                    {"n", std::to_string(n)},
                                    {"kappa", as::format_number(kappa)},
                                    {"r", as::format_number(r)},
                                    {"eig_rel_tol", as::format_number(eig_rel_tol)},
                                    {"ode_tol", as::format_number(ode_tol)},
                                    {"profile", no_profile ? "false" : "true"}});
  const std::string digest = as::config_digest(cfg);
  const std::string cache_dir = resolve_cache_dir(cache_flag);
  std::string payload;
  if (!cache_load(cache_dir, digest, payload)) {
    as::SolverOptions opts;
    opts.eig_rel_tol = eig_rel_tol;
    opts.ode_tol = ode_tol;
    payload = as::payload_radial(as::solve_dirichlet_ball({n, kappa}, p, r, opts),
                                 !no_profile);
    cache_store(cache_dir, digest, payload);
  }
  write_text_output(out_path, make_record("ball", cfg, "radial", payload));
  return 0;
}

struct GridArgs {
  std::string shape = "annulus:1,0.3";
  double offset = 0.0;
  std::string layout; // empty = default for the shape
  double h = 0.015625;
  std::string metric = "flat";
  double p = 2.0;
};

KV grid_cfg(const char* command, const GridArgs& g) {
  return with_meta(command, {{"shape", g.shape},
                             {"offset", as::format_number(g.offset)},
                             {"layout", g.layout},
                             {"h", as::format_number(g.h)},
                             {"metric", g.metric},
                             {"p", as::format_number(g.p)}});
}

int run_grid(const GridArgs& g, const std::string& field_csv, const std::string& mask_path,
             const std::string& out_path, const std::string& cache_flag) {
  validate_common(g.p, 2);
  const as::ShapeSpec spec = parse_shape(g.shape, g.offset, g.layout);
  const as::GridDomain dom = as::build_domain(spec, g.h, parse_metric(g.metric));
  if (!mask_path.empty())
    export_mask_pgm(mask_path, dom);

  const KV cfg = grid_cfg("grid", g);
  const std::string digest = as::config_digest(cfg);
  const std::string cache_dir = resolve_cache_dir(cache_flag);
  std::string payload;
  const bool need_field = !field_csv.empty();
  if (need_field || !cache_load(cache_dir, digest, payload)) {
    const as::EigenResult2D res = as::minimize_rayleigh(dom, g.p);
    if (need_field)
      export_field_csv(field_csv, dom, res.field);
    payload = as::payload_planar(res, dom);
    cache_store(cache_dir, digest, payload);
  }
  write_text_output(out_path, make_record("grid", cfg, "planar", payload));
  return 0;
}

int run_rearrange(const GridArgs& g, const std::string& out_path,
                  const std::string& cache_flag) {
  validate_common(g.p, 2);
  const as::ShapeSpec spec = parse_shape(g.shape, g.offset, g.layout);
  const as::GridDomain dom = as::build_domain(spec, g.h, parse_metric(g.metric));
  const KV cfg = grid_cfg("rearrange", g);
  const std::string digest = as::config_digest(cfg);
  const std::string cache_dir = resolve_cache_dir(cache_flag);

  std::string payload;
  bool all_pass = true;
  if (cache_load(cache_dir, digest, payload)) {
    all_pass = nlohmann::json::parse(payload)["all_pass"].get<bool>();
  } else {
    const as::EigenResult2D res = as::minimize_rayleigh(dom, g.p);
    const as::SpaceForm sf{2, dom.metric == as::Metric::Sphere ? 1.0 : 0.0};
    const as::RadialProfile prof =
        as::schwarz_rearrange(dom, res.field, dom.hole_volume, sf, g.p);
    const std::vector<as::ComparisonReport> checks =
        as::rearrangement_checks(dom, res.field, g.p);
    for (const auto& c : checks)
      all_pass = all_pass && c.pass;
    std::vector<std::string> items;
    for (const auto& c : checks)
      items.push_back(as::payload_comparison(c));
    payload = as::json_object(
        {{"all_pass", all_pass ? "true" : "false"},
         {"eigenvalue", as::format_number(res.eigenvalue)},
         {"planar_mass", as::format_number(as::planar_mass(dom, res.field, g.p))},
         {"planar_energy", as::format_number(as::planar_energy(dom, res.field, g.p))},
         {"profile_mass", as::format_number(as::profile_mass(prof, sf, g.p))},
         {"profile_energy", as::format_number(as::profile_energy(prof, sf, g.p))},
         {"profile", as::payload_profile(prof)},
         {"checks", as::json_array(items)}});
    cache_store(cache_dir, digest, payload);
  }
  write_text_output(out_path, make_record("rearrange", cfg, "rearrangement", payload));
  return all_pass ? 0 : 1;
}

// ---- verify ------------------------------------------------------------------

struct VerifyArgs {
  std::string target;
  double p = 2.0;
  int n = 2;
  double kappa = 0.0;
  double r1 = 0.3;
  double r2 = 1.0;
  double r = 1.0;
  double epsilon = 0.1;
  double delta = 1e-3;
  std::string kappas = "-1,-0.5,0,0.25,0.5";
  std::string epsilons; // target-specific default
  std::string etas = "0.05,0.1,0.2";
  GridArgs grid; // faber-krahn geometry; offset default below
  bool n_set = false;
};

struct VerifyOutcome {
  std::vector<as::ComparisonReport> checks;
  std::vector<std::pair<std::string, as::FitReport>> fits;
};

void append(VerifyOutcome& o, std::vector<as::ComparisonReport> more) {
  for (auto& c : more)
    o.checks.push_back(std::move(c));
}

VerifyOutcome verify_faber_krahn(const GridArgs& g) {
  validate_common(g.p, 2);
  const as::ShapeSpec spec = parse_shape(g.shape, g.offset, g.layout);
  const as::GridDomain dom = as::build_domain(spec, g.h, parse_metric(g.metric));
  VerifyOutcome o;
  o.checks.push_back(as::check_faber_krahn(dom, g.p));
  return o;
}

VerifyOutcome verify_curvature(const VerifyArgs& a) {
  validate_common(a.p, a.n);
  VerifyOutcome o;
  append(o, as::check_curvature_monotonicity(a.p, a.n, a.r1, a.r2,
                                             parse_double_list("kappas", a.kappas)));
  return o;
}

VerifyOutcome verify_vanishing_hole(const VerifyArgs& a) {
  validate_common(a.p, a.n);
  const std::string ladder = a.epsilons.empty() ? "0.005,0.01,0.02,0.04,0.08,0.16" : a.epsilons;
  const as::VanishingHoleReport rep =
      as::check_vanishing_hole(a.p, a.n, a.r, parse_double_list("epsilons", ladder));
  VerifyOutcome o;
  o.checks = rep.comparisons;
  o.checks.push_back(as::make_report(rep.anomaly ? 0.0 : 1.0, 1.0,
                                     as::ComparisonReport::Relation::GE, 0.0,
                                     "vanishing-hole ladder is monotone"));
  o.fits.emplace_back("lambda_gap_vs_eps", rep.fit);
  return o;
}

VerifyOutcome verify_mu_decay(const VerifyArgs& a) {
  const int n = a.n_set ? a.n : 3;
  validate_common(a.p, n);
  const std::string ladder = a.epsilons.empty() ? "0.01,0.02,0.04,0.08" : a.epsilons;
  const as::MuDecayReport rep =
      as::check_mu_decay(a.p, n, a.r, parse_double_list("epsilons", ladder));
  VerifyOutcome o;
  o.checks = rep.comparisons;
  o.fits.emplace_back("mu_vs_eps", rep.fit);
  return o;
}

VerifyOutcome verify_hadamard(const VerifyArgs& a) {
  validate_common(a.p, a.n);
  const as::HadamardReport rep = as::check_hadamard(a.p, a.n, a.r1, a.r2, a.delta);
  VerifyOutcome o;
  o.checks.push_back(rep.cmp);
  return o;
}

VerifyOutcome verify_trial_bound(const VerifyArgs& a) {
  const int n = a.n_set ? a.n : 3;
  validate_common(a.p, n);
  const as::SpaceForm sf{n, a.kappa};
  const std::vector<double> etas = parse_double_list("etas", a.etas);
  std::vector<double> bounds;
  for (double eta : etas)
    bounds.push_back(as::mu_trial_upper_bound(sf, a.p, a.r, a.epsilon, eta));
  const double mu =
      as::solve_mu_star(sf, a.p,
                        {a.epsilon, a.r, as::BoundaryLayout::InnerDirichletOuterNeumann})
          .eigenvalue;
  VerifyOutcome o;
  char buf[160];
  for (std::size_t i = 0; i < etas.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "ramp trial bound at eta=%g dominates mu", etas[i]);
    o.checks.push_back(
        as::make_report(bounds[i], mu, as::ComparisonReport::Relation::GE, 0.0, buf));
  }
  for (std::size_t i = 0; i + 1 < etas.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "trial bound decreases on the tested ladder: eta %g vs %g",
                  etas[i], etas[i + 1]);
    o.checks.push_back(as::make_report(bounds[i], bounds[i + 1],
                                       as::ComparisonReport::Relation::GE, 0.0, buf));
  }
  o.fits.emplace_back("bound_vs_eta", as::fit_loglog(etas, bounds));
  return o;
}

VerifyOutcome verify_sign_structure(const VerifyArgs& a) {
  validate_common(a.p, a.n);
  VerifyOutcome o;
  const double ps[] = {1.5, 2.0, 3.0};
  const double kappas[] = {-1.0, 0.0, 0.5};
  const std::pair<double, double> radii[] = {{0.3, 1.0}, {0.5, 2.0}};
  char buf[200];
  for (double p : ps)
    for (double kappa : kappas)
      for (auto [r1, r2] : radii) {
        const as::SpaceForm sf{a.n, kappa};
        const as::EigenResult lam = as::solve_lambda_star(
            sf, p, {r1, r2, as::BoundaryLayout::InnerNeumannOuterDirichlet});
        for (auto& c :
             as::check_sign_structure(lam, as::BoundaryLayout::InnerNeumannOuterDirichlet)) {
          std::snprintf(buf, sizeof(buf), "lambda p=%g kappa=%g (%g,%g): %s", p, kappa, r1,
                        r2, c.provenance.c_str());
          c.provenance = buf;
          o.checks.push_back(std::move(c));
        }
        const as::EigenResult mu = as::solve_mu_star(
            sf, p, {r1, r2, as::BoundaryLayout::InnerDirichletOuterNeumann});
        for (auto& c :
             as::check_sign_structure(mu, as::BoundaryLayout::InnerDirichletOuterNeumann)) {
          std::snprintf(buf, sizeof(buf), "mu p=%g kappa=%g (%g,%g): %s", p, kappa, r1, r2,
                        c.provenance.c_str());
          c.provenance = buf;
          o.checks.push_back(std::move(c));
        }
      }
  return o;
}

VerifyOutcome verify_suite() {
  VerifyOutcome o;

  {
    VerifyArgs a;
    a.n = 2;
    auto sub = verify_sign_structure(a);
    append(o, std::move(sub.checks));
  }
  for (double p : {1.5, 2.0, 3.0})
    for (int n : {2, 3})
      append(o, as::check_curvature_monotonicity(p, n, 0.5, 1.0,
                                                 {-1.0, -0.5, 0.0, 0.25, 0.5}));
  {
    VerifyArgs a;
    auto sub = verify_vanishing_hole(a);
    append(o, std::move(sub.checks));
    o.fits.push_back(std::move(sub.fits[0]));
  }
  {
    VerifyArgs a;
    auto sub = verify_mu_decay(a);
    append(o, std::move(sub.checks));
    o.fits.push_back(std::move(sub.fits[0]));
  }
  {
    VerifyArgs a;
    auto sub = verify_hadamard(a);
    append(o, std::move(sub.checks));
  }
  {
    VerifyArgs a;
    auto sub = verify_trial_bound(a);
    append(o, std::move(sub.checks));
    o.fits.push_back(std::move(sub.fits[0]));
  }

  // Planar symmetrization spot checks and the rearrangement identities.
  {
    GridArgs g; // concentric annulus, inner Neumann
    g.h = 0.0078125;
    auto sub = verify_faber_krahn(g);
    append(o, std::move(sub.checks));
  }
  {
    GridArgs g;
    g.offset = 0.4;
    g.h = 0.0078125;
    const as::ShapeSpec spec = parse_shape(g.shape, g.offset, g.layout);
    const as::GridDomain dom = as::build_domain(spec, g.h, parse_metric(g.metric));
    o.checks.push_back(as::check_faber_krahn(dom, g.p));
    const as::EigenResult2D res = as::minimize_rayleigh(dom, g.p);
    append(o, as::rearrangement_checks(dom, res.field, g.p));
  }
  return o;
}

int run_verify(const VerifyArgs& a, const std::string& out_path) {
  VerifyOutcome o;
  if (a.target == "faber-krahn")
    o = verify_faber_krahn(a.grid);
  else if (a.target == "curvature")
    o = verify_curvature(a);
  else if (a.target == "vanishing-hole")
    o = verify_vanishing_hole(a);
  else if (a.target == "mu-decay")
    o = verify_mu_decay(a);
  else if (a.target == "hadamard")
    o = verify_hadamard(a);
  else if (a.target == "trial-bound")
    o = verify_trial_bound(a);
  else if (a.target == "sign-structure")
    o = verify_sign_structure(a);
  else if (a.target == "suite")
    o = verify_suite();
  else
    fail(2, "invalid config: unknown verify target '" + a.target + "'");

  bool all_pass = true;
  for (const auto& c : o.checks)
    all_pass = all_pass && c.pass;

  KV cfg = with_meta("verify", {{"target", a.target},
                                {"p", as::format_number(a.p)},
                                {"n", std::to_string(a.n)},
                                {"kappa", as::format_number(a.kappa)},
                                {"r1", as::format_number(a.r1)},
                                {"r2", as::format_number(a.r2)},
                                {"r", as::format_number(a.r)},
                                {"epsilon", as::format_number(a.epsilon)},
                                {"delta", as::format_number(a.delta)},
                                {"kappas", a.kappas},
                                {"epsilons", a.epsilons},
                                {"etas", a.etas},
                                {"shape", a.grid.shape},
                                {"offset", as::format_number(a.grid.offset)},
                                {"layout", a.grid.layout},
                                {"h", as::format_number(a.grid.h)},
                                {"metric", a.grid.metric}});
  const std::string payload = as::payload_comparison_list(o.checks, o.fits, all_pass);
  write_text_output(out_path, make_record("verify", cfg, "comparison_list", payload));
  return all_pass ? 0 : 1;
}

// ---- sweep -------------------------------------------------------------------

int run_sweep(const RadialArgs& base, const std::vector<std::string>& vary, int jobs,
              const std::string& out_path) {
  validate_common(base.p, base.n);
  if (jobs < 1)
    fail(2, "invalid config: jobs must be >= 1");

  struct Axis {
    std::string key;
    std::vector<std::string> values;
  };
  std::vector<Axis> axes;
  for (const auto& v : vary) {
    const auto eq = v.find('=');
    if (eq == std::string::npos)
      fail(2, "invalid config: vary needs the form key=v1,v2,..., got '" + v + "'");
    Axis ax;
    ax.key = v.substr(0, eq);
    static const char* allowed[] = {"problem", "p", "n", "kappa", "r1", "r2"};
    bool ok = false;
    for (const char* k : allowed)
      ok = ok || ax.key == k;
    if (!ok)
      fail(2, "invalid config: unknown key '" + ax.key + "' in vary");
    std::stringstream ss(v.substr(eq + 1));
    std::string item;
    while (std::getline(ss, item, ','))
      ax.values.push_back(item);
    if (ax.values.empty())
      fail(2, "invalid config: vary key '" + ax.key + "' lists no values");
    axes.push_back(std::move(ax));
  }

  // Cartesian product, first axis outermost.
  std::vector<RadialArgs> points{base};
  for (const auto& ax : axes) {
    std::vector<RadialArgs> next;
    for (const auto& pt : points)
      for (const auto& val : ax.values) {
        RadialArgs q = pt;
        try {
          if (ax.key == "problem")
            q.problem = val;
          else if (ax.key == "p")
            q.p = std::stod(val);
          else if (ax.key == "n")
            q.n = std::stoi(val);
          else if (ax.key == "kappa")
            q.kappa = std::stod(val);
          else if (ax.key == "r1")
            q.r1 = std::stod(val);
          else if (ax.key == "r2")
            q.r2 = std::stod(val);
        } catch (const std::exception&) {
          fail(2, "invalid config: vary key '" + ax.key + "' has a malformed value '" +
                      val + "'");
        }
        next.push_back(q);
      }
    points = std::move(next);
  }
  for (const auto& pt : points) {
    if (!(pt.p > 1.0))
      fail(2, "invalid config: p must exceed 1");
    if (pt.problem != "lambda" && pt.problem != "mu")
      fail(2, "invalid config: problem must be 'lambda' or 'mu'");
  }

  struct Row {
    as::EigenResult res;
    double wall_ms = 0.0;
    std::exception_ptr error;
  };
  std::vector<Row> rows(points.size());
  std::atomic<std::size_t> cursor{0};
  const auto worker = [&]() {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= points.size())
        return;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        rows[i].res = solve_radial_point(points[i]);
      } catch (...) {
        rows[i].error = std::current_exception();
      }
      rows[i].wall_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
              .count();
    }
  };
  if (jobs == 1 || points.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    const std::size_t k = std::min(static_cast<std::size_t>(jobs), points.size());
    for (std::size_t t = 0; t < k; ++t)
      pool.emplace_back(worker);
    for (auto& t : pool)
      t.join();
  }
  for (const auto& row : rows)
    if (row.error)
      std::rethrow_exception(row.error);

  std::string out =
      "problem,p,n,kappa,r1,r2,eigenvalue,residual,wall_ms\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& pt = points[i];
    out += as::csv_row({pt.problem, as::format_number(pt.p), std::to_string(pt.n),
                        as::format_number(pt.kappa), as::format_number(pt.r1),
                        as::format_number(pt.r2), as::format_number(rows[i].res.eigenvalue),
                        as::format_number(rows[i].res.ode_residual),
                        as::format_number(rows[i].wall_ms)});
  }
  write_text_output(out_path, out);
  return 0;
}

// ---- plot --------------------------------------------------------------------

int run_plot(const std::vector<std::string>& files, const std::string& fit_name,
             const std::string& out_path) {
  std::string kind;
  std::string out;
  const auto emit_fit = [&](const nlohmann::json& pl) {
    const double slope = pl.at("slope").get<double>();
    const double intercept = pl.at("intercept").get<double>();
    const auto& xs = pl.at("xs");
    const auto& ys = pl.at("ys");
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double x = xs[i].get<double>();
      out += as::csv_row({as::format_number(x), as::format_number(ys[i].get<double>()),
                          as::format_number(std::exp(intercept) * std::pow(x, slope))});
    }
  };
  for (const auto& path : files) {
    std::ifstream f(path);
    if (!f)
      fail(2, "invalid config: cannot read record file " + path);
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(f);
    } catch (const std::exception& e) {
      fail(2, std::string("invalid config: ") + path + ": " + e.what());
    }
    const std::string t = rec.value("payload_type", "");
    if (kind.empty()) {
      kind = t;
      if (kind == "fit" || kind == "comparison_list")
        out = "x,y,fit_y\n";
      else if (kind == "radial")
        out = "r,u,flux\n";
      else
        fail(2, "invalid config: plot supports payload types 'fit', 'comparison_list', "
                "and 'radial', got '" + t + "'");
    } else if (kind != t) {
      fail(2, "invalid config: mixed payload types '" + kind + "' and '" + t + "'");
    }
    try {
      const auto& pl = rec.at("payload");
      if (kind == "fit") {
        emit_fit(pl);
      } else if (kind == "comparison_list") {
        const auto& fits = pl.at("fits");
        if (fits.empty())
          fail(2, "invalid config: record " + path + " carries no fits");
        bool done = false;
        for (const auto& item : fits)
          if (fit_name.empty() || item.at("name").get<std::string>() == fit_name) {
            emit_fit(item.at("fit"));
            done = true;
            break;
          }
        if (!done)
          fail(2, "invalid config: no fit named '" + fit_name + "' in " + path);
      } else {
        if (!pl.contains("profile"))
          fail(2, "invalid config: record " + path +
                      " has no profile arrays (solved with --no-profile?)");
        const auto& prof = pl.at("profile");
        const auto& r = prof.at("r");
        const auto& u = prof.at("u");
        const auto& w = prof.at("flux");
        for (std::size_t i = 0; i < r.size(); ++i)
          out += as::csv_row({as::format_number(r[i].get<double>()),
                              as::format_number(u[i].get<double>()),
                              as::format_number(w[i].get<double>())});
      }
    } catch (const nlohmann::json::exception& e) {
      fail(2, "invalid config: malformed record " + path + ": " + e.what());
    }
  }
  if (files.empty())
    out = "x,y,fit_y\n";
  write_text_output(out_path, out);
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"first p-Laplacian eigenvalues of annular domains in space forms"};
  app.require_subcommand(1);
  app.set_version_flag("--version", as::tool_version);
  // Long-only help everywhere: the short -h would shadow the --h spacing flag.
  app.set_help_flag("--help", "print help and exit");
  const auto new_sub = [&app](const char* name, const char* desc) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->set_help_flag("--help", "print help and exit");
    return sub;
  };

  int exit_code = 0;

  // Shared plumbing flags are registered per subcommand so --help stays local.
  struct Common {
    std::string config_path, out_path, cache_dir;
  };
  const auto add_common = [](CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config_path, "JSON config file; flags override its values");
    sub->add_option("--out", c.out_path, "write the result to this path instead of stdout");
    sub->add_option("--cache-dir", c.cache_dir,
                    "result cache directory (env ANNULUS_SPECTRA_CACHE)");
  };

  // radial
  RadialArgs ra;
  Common rc;
  ParamSet rset;
  {
    CLI::App* sub = new_sub("radial", "solve a mixed-boundary annulus eigenvalue");
    rset.add("problem", &ra.problem,
             sub->add_option("--problem", ra.problem, "lambda (inner Neumann) or mu")
                 ->check(CLI::IsMember({"lambda", "mu"})));
    rset.add("p", &ra.p, sub->add_option("--p", ra.p, "exponent p > 1"));
    rset.add("n", &ra.n, sub->add_option("--n", ra.n, "dimension"));
    rset.add("kappa", &ra.kappa, sub->add_option("--kappa", ra.kappa, "curvature"));
    rset.add("r1", &ra.r1, sub->add_option("--r1", ra.r1, "inner radius"));
    rset.add("r2", &ra.r2, sub->add_option("--r2", ra.r2, "outer radius"));
    rset.add("eig_rel_tol", &ra.eig_rel_tol,
             sub->add_option("--eig-rel-tol", ra.eig_rel_tol, "eigenvalue bisection tolerance"));
    rset.add("ode_tol", &ra.ode_tol,
             sub->add_option("--ode-tol", ra.ode_tol, "integrator step tolerance"));
    rset.add("no_profile", &ra.no_profile,
             sub->add_flag("--no-profile", ra.no_profile, "omit the profile arrays"));
    add_common(sub, rc);
    sub->callback([&] {
      if (!rc.config_path.empty())
        rset.apply_config(rc.config_path);
      exit_code = run_radial(ra, rc.out_path, rc.cache_dir);
    });
  }

  // ball
  struct {
    double p = 2.0, kappa = 0.0, r = 1.0, eig_rel_tol = 1e-8, ode_tol = 1e-10;
    int n = 2;
    bool no_profile = false;
  } ba;
  Common bc;
  ParamSet bset;
  {
    CLI::App* sub = new_sub("ball", "solve the Dirichlet eigenvalue of a ball");
    bset.add("p", &ba.p, sub->add_option("--p", ba.p, "exponent p > 1"));
    bset.add("n", &ba.n, sub->add_option("--n", ba.n, "dimension"));
    bset.add("kappa", &ba.kappa, sub->add_option("--kappa", ba.kappa, "curvature"));
    bset.add("r", &ba.r, sub->add_option("--r", ba.r, "ball radius"));
    bset.add("eig_rel_tol", &ba.eig_rel_tol,
             sub->add_option("--eig-rel-tol", ba.eig_rel_tol, "eigenvalue bisection tolerance"));
    bset.add("ode_tol", &ba.ode_tol,
             sub->add_option("--ode-tol", ba.ode_tol, "integrator step tolerance"));
    bset.add("no_profile", &ba.no_profile,
             sub->add_flag("--no-profile", ba.no_profile, "omit the profile arrays"));
    add_common(sub, bc);
    sub->callback([&] {
      if (!bc.config_path.empty())
        bset.apply_config(bc.config_path);
      exit_code = run_ball(ba.p, ba.n, ba.kappa, ba.r, ba.eig_rel_tol, ba.ode_tol,
                           ba.no_profile, bc.out_path, bc.cache_dir);
    });
  }

  // grid / rearrange share geometry flags; verify brings its own --p
  const auto add_grid_flags = [](CLI::App* sub, GridArgs& g, ParamSet& set,
                                 bool with_p = true) {
    set.add("shape", &g.shape,
            sub->add_option("--shape", g.shape,
                            "disk:R | rectangle:a,b | annulus:R,r | "
                            "disk_minus_square:R,side | ellipse:a,b,r"));
    set.add("offset", &g.offset,
            sub->add_option("--offset", g.offset, "hole center x-offset"));
    set.add("layout", &g.layout,
            sub->add_option("--layout", g.layout,
                            "all_dirichlet | inner_neumann | inner_dirichlet"));
    set.add("h", &g.h, sub->add_option("--h", g.h, "grid spacing"));
    set.add("metric", &g.metric,
            sub->add_option("--metric", g.metric, "flat | sphere (stereographic weights)"));
    if (with_p)
      set.add("p", &g.p, sub->add_option("--p", g.p, "exponent p > 1"));
  };

  GridArgs ga;
  Common gc;
  ParamSet gset;
  std::string field_csv, mask_path;
  {
    CLI::App* sub =
        new_sub("grid", "minimize the Rayleigh quotient on a planar domain");
    add_grid_flags(sub, ga, gset);
    gset.add("field_csv", &field_csv,
             sub->add_option("--field-csv", field_csv, "write x,y,value samples here"));
    gset.add("mask", &mask_path,
             sub->add_option("--mask", mask_path, "write the cell classification as PGM"));
    add_common(sub, gc);
    sub->callback([&] {
      if (!gc.config_path.empty())
        gset.apply_config(gc.config_path);
      exit_code = run_grid(ga, field_csv, mask_path, gc.out_path, gc.cache_dir);
    });
  }

  GridArgs rga;
  Common rgc;
  ParamSet rgset;
  {
    CLI::App* sub = new_sub(
        "rearrange", "solve on a planar domain and symmetrize the eigenfunction");
    add_grid_flags(sub, rga, rgset);
    add_common(sub, rgc);
    sub->callback([&] {
      if (!rgc.config_path.empty())
        rgset.apply_config(rgc.config_path);
      exit_code = run_rearrange(rga, rgc.out_path, rgc.cache_dir);
    });
  }

  // verify
  VerifyArgs va;
  va.grid.h = 0.0078125; // theorem-scale default
  Common vc;
  ParamSet vset;
  CLI::Option* verify_n_opt = nullptr;
  {
    CLI::App* sub = new_sub("verify", "run a theorem check and report pass/fail");
    sub->add_option("target", va.target,
                    "faber-krahn | curvature | vanishing-hole | mu-decay | hadamard | "
                    "trial-bound | sign-structure | suite")
        ->required();
    vset.add("p", &va.p, sub->add_option("--p", va.p, "exponent p > 1"));
    verify_n_opt = sub->add_option("--n", va.n, "dimension");
    vset.add("n", &va.n, verify_n_opt);
    vset.add("kappa", &va.kappa, sub->add_option("--kappa", va.kappa, "curvature"));
    vset.add("r1", &va.r1, sub->add_option("--r1", va.r1, "inner radius"));
    vset.add("r2", &va.r2, sub->add_option("--r2", va.r2, "outer radius"));
    vset.add("r", &va.r, sub->add_option("--r", va.r, "outer radius for ladders"));
    vset.add("epsilon", &va.epsilon, sub->add_option("--epsilon", va.epsilon, "hole radius"));
    vset.add("delta", &va.delta,
             sub->add_option("--delta", va.delta, "finite-difference step"));
    vset.add("kappas", &va.kappas,
             sub->add_option("--kappas", va.kappas, "comma-separated curvature ladder"));
    vset.add("epsilons", &va.epsilons,
             sub->add_option("--epsilons", va.epsilons, "comma-separated hole ladder"));
    vset.add("etas", &va.etas,
             sub->add_option("--etas", va.etas, "comma-separated ramp cap ladder"));
    add_grid_flags(sub, va.grid, vset, false);
    add_common(sub, vc);
    sub->callback([&] {
      if (!vc.config_path.empty())
        vset.apply_config(vc.config_path);
      va.n_set = verify_n_opt->count() > 0;
      va.grid.p = va.p; // the grid checks follow the one exposed exponent
      exit_code = run_verify(va, vc.out_path);
    });
  }

  // sweep
  RadialArgs sa;
  Common sc;
  ParamSet sset;
  std::vector<std::string> vary;
  int jobs = 1;
  {
    CLI::App* sub = new_sub("sweep", "cartesian parameter sweep to CSV");
    sset.add("problem", &sa.problem,
             sub->add_option("--problem", sa.problem, "lambda or mu")
                 ->check(CLI::IsMember({"lambda", "mu"})));
    sset.add("p", &sa.p, sub->add_option("--p", sa.p, "exponent p > 1"));
    sset.add("n", &sa.n, sub->add_option("--n", sa.n, "dimension"));
    sset.add("kappa", &sa.kappa, sub->add_option("--kappa", sa.kappa, "curvature"));
    sset.add("r1", &sa.r1, sub->add_option("--r1", sa.r1, "inner radius"));
    sset.add("r2", &sa.r2, sub->add_option("--r2", sa.r2, "outer radius"));
    sset.add("eig_rel_tol", &sa.eig_rel_tol,
             sub->add_option("--eig-rel-tol", sa.eig_rel_tol, "eigenvalue bisection tolerance"));
    sset.add("ode_tol", &sa.ode_tol,
             sub->add_option("--ode-tol", sa.ode_tol, "integrator step tolerance"));
    sub->add_option("--vary", vary, "axis as key=v1,v2,...; first flag is the outermost loop")
        ->take_all();
    sset.add("jobs", &jobs, sub->add_option("--jobs", jobs, "worker threads (rows stay in input order)"));
    add_common(sub, sc);
    sub->callback([&] {
      if (!sc.config_path.empty())
        sset.apply_config(sc.config_path);
      exit_code = run_sweep(sa, vary, jobs, sc.out_path);
    });
  }

  // plot
  std::vector<std::string> plot_files;
  std::string plot_fit_name;
  Common pc;
  {
    CLI::App* sub = new_sub(
        "plot", "flatten records to tidy CSV (fit: x,y,fit_y; radial: r,u,flux)");
    sub->add_option("records", plot_files, "record JSON files of one payload type");
    sub->add_option("--fit", plot_fit_name,
                    "fit name to extract from comparison_list records");
    add_common(sub, pc);
    sub->callback([&] { exit_code = run_plot(plot_files, plot_fit_name, pc.out_path); });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0)
      return app.exit(e); // --help / --version
    std::cerr << "invalid config: " << e.what() << "\n";
    return 2;
  } catch (const CliError& e) {
    std::cerr << e.msg << "\n";
    return e.code;
  } catch (const as::precondition_error& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return 2;
  } catch (const as::geometry_error& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return 2;
  } catch (const as::resolution_error& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return 2;
  } catch (const as::solver_error& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 3;
  }
  return exit_code;
}
