#pragma once

// Two-dimensional finite-difference eigenvalue solver on rasterized
// domains.  Cells are squares of side h centered on lattice points; each
// cell is classified by the signed distance of its center to the domain
// boundary curves.  Cells whose center lies within h/2 of a curve form the
// boundary band for that curve, so the pinned Dirichlet layer straddles
// the true boundary (unbiased zero locus) and interior cells can never
// touch exterior cells (the signed distance is 1-Lipschitz).
//
// The first eigenvalue is the minimum of the discrete Rayleigh quotient
//
//     sum_c w_E(c) |D+ u(c)|^p   /   sum_c w_M(c) |u(c)|^p
//
// with forward differences D+, one-sided at Neumann cells (missing
// neighbors contribute zero slope) and zero-extended at Dirichlet cells.
// On the sphere metric the weights carry the conformal factor
// rho = 2/(1+|x|^2):  w_E = h^2 rho^(2-p),  w_M = h^2 rho^2.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"

namespace annulus_spectra {

enum class CellClass : std::uint8_t { Exterior, Interior, DirichletBoundary, NeumannBoundary };
enum class BoundaryComponent : std::uint8_t { None, Outer, Hole };
enum class Metric { Flat, Sphere };

/// Rasterized domain: classification grid plus metric weights metadata.
struct GridDomain {
  int nx = 0, ny = 0;
  double h = 0.0;
  double x0 = 0.0, y0 = 0.0; // center of cell (0, 0)
  Metric metric = Metric::Flat;
  std::vector<CellClass> cell_class;       // row-major, j * nx + i
  std::vector<BoundaryComponent> component; // for boundary cells
  bool has_hole = false;
  double domain_volume = 0.0; // interior + half the boundary bands
  double hole_volume = 0.0;   // hole cells + half the inner band

  int idx(int i, int j) const { return j * nx + i; }
  CellClass at(int i, int j) const { return cell_class[idx(i, j)]; }
  double cx(int i) const { return x0 + i * h; }
  double cy(int j) const { return y0 + j * h; }
};

/// Values on the grid of a GridDomain (zero on Dirichlet and Exterior cells).
struct PlanarField {
  std::vector<double> values;
};

struct EigenResult2D {
  double eigenvalue = 0.0;
  PlanarField field;
  long iterations = 0;
  double final_step = 0.0;
  std::vector<double> energy_history;
};

/// Shape grammar: an outer curve, an optional hole, and the boundary layout.
struct ShapeSpec {
  enum class Outer { Disk, Ellipse, Rectangle };
  enum class Hole { None, Disk, Square };
  enum class Layout { AllDirichlet, InnerNeumannOuterDirichlet, InnerDirichletOuterNeumann };

  Outer outer = Outer::Disk;
  double a = 1.0, b = 1.0;   // disk: a = radius; ellipse: semi-axes; rectangle: side lengths
  Hole hole = Hole::None;
  double hole_size = 0.0;    // disk hole: radius; square hole: side length
  double hole_cx = 0.0, hole_cy = 0.0;
  Layout layout = Layout::AllDirichlet;
};

inline ShapeSpec shape_disk(double R) { return {ShapeSpec::Outer::Disk, R, R}; }

inline ShapeSpec shape_rectangle(double a, double b) {
  return {ShapeSpec::Outer::Rectangle, a, b};
}

inline ShapeSpec shape_annulus(double R_out, double R_in, double offset,
                               ShapeSpec::Layout layout) {
  ShapeSpec s{ShapeSpec::Outer::Disk, R_out, R_out};
  s.hole = ShapeSpec::Hole::Disk;
  s.hole_size = R_in;
  s.hole_cx = offset;
  s.layout = layout;
  return s;
}

inline ShapeSpec shape_disk_minus_square(double R, double side, double offset,
                                         ShapeSpec::Layout layout) {
  ShapeSpec s{ShapeSpec::Outer::Disk, R, R};
  s.hole = ShapeSpec::Hole::Square;
  s.hole_size = side;
  s.hole_cx = offset;
  s.layout = layout;
  return s;
}

inline ShapeSpec shape_ellipse_annulus(double a, double b, double R_in, double offset,
                                       ShapeSpec::Layout layout) {
  ShapeSpec s{ShapeSpec::Outer::Ellipse, a, b};
  s.hole = ShapeSpec::Hole::Disk;
  s.hole_size = R_in;
  s.hole_cx = offset;
  s.layout = layout;
  return s;
}

namespace detail {

inline double sdf_disk(double x, double y, double R) { return std::hypot(x, y) - R; }

inline double sdf_box(double x, double y, double hx, double hy) {
  const double qx = std::fabs(x) - hx, qy = std::fabs(y) - hy;
  if (qx > 0.0 || qy > 0.0)
    return std::hypot(std::max(qx, 0.0), std::max(qy, 0.0));
  return std::max(qx, qy);
}

// First-order signed distance to the ellipse boundary; exact enough inside
// the classification band (error O(sdf^2 * curvature)).
inline double sdf_ellipse(double x, double y, double a, double b) {
  const double f = (x / a) * (x / a) + (y / b) * (y / b) - 1.0;
  const double gx = 2.0 * x / (a * a), gy = 2.0 * y / (b * b);
  const double g = std::hypot(gx, gy);
  return (g > 1e-14) ? f / g : f;
}

inline double outer_sdf(const ShapeSpec& s, double x, double y) {
  switch (s.outer) {
  case ShapeSpec::Outer::Disk: return sdf_disk(x, y, s.a);
  case ShapeSpec::Outer::Ellipse: return sdf_ellipse(x, y, s.a, s.b);
  case ShapeSpec::Outer::Rectangle: return sdf_box(x, y, 0.5 * s.a, 0.5 * s.b);
  }
  return 0.0;
}

inline double hole_sdf(const ShapeSpec& s, double x, double y) {
  const double dx = x - s.hole_cx, dy = y - s.hole_cy;
  switch (s.hole) {
  case ShapeSpec::Hole::None: return std::numeric_limits<double>::infinity();
  case ShapeSpec::Hole::Disk: return sdf_disk(dx, dy, s.hole_size);
  case ShapeSpec::Hole::Square: return sdf_box(dx, dy, 0.5 * s.hole_size, 0.5 * s.hole_size);
  }
  return std::numeric_limits<double>::infinity();
}

inline double mass_weight(const GridDomain& d, int i, int j) {
  if (d.metric == Metric::Flat)
    return d.h * d.h;
  const double x = d.cx(i), y = d.cy(j);
  const double rho = 2.0 / (1.0 + x * x + y * y);
  return d.h * d.h * rho * rho;
}

inline double energy_weight(const GridDomain& d, int i, int j, double p) {
  if (d.metric == Metric::Flat)
    return d.h * d.h;
  const double x = d.cx(i), y = d.cy(j);
  const double rho = 2.0 / (1.0 + x * x + y * y);
  return d.h * d.h * std::pow(rho, 2.0 - p);
}

// Exponent kernels with fast paths for the p values the suite sweeps.
struct PowKit {
  enum class Mode { P15, P2, P3, Gen } mode;
  double p;

  explicit PowKit(double p_) : p(p_) {
    mode = (p_ == 2.0)   ? Mode::P2
           : (p_ == 1.5) ? Mode::P15
           : (p_ == 3.0) ? Mode::P3
                         : Mode::Gen;
  }
  // |g|^p from g2 = |g|^2
  double energy(double g2) const {
    switch (mode) {
    case Mode::P2: return g2;
    case Mode::P15: return std::sqrt(g2 * std::sqrt(g2));
    case Mode::P3: return g2 * std::sqrt(g2);
    default: return std::pow(g2, 0.5 * p);
    }
  }
  // |g|^(p-2) from g2
  double denergy(double g2) const {
    switch (mode) {
    case Mode::P2: return 1.0;
    case Mode::P15: return 1.0 / std::sqrt(std::sqrt(g2));
    case Mode::P3: return std::sqrt(g2);
    default: return std::pow(g2, 0.5 * p - 1.0);
    }
  }
  // u^p, u >= 0
  double mass(double u) const {
    switch (mode) {
    case Mode::P2: return u * u;
    case Mode::P15: return u * std::sqrt(u);
    case Mode::P3: return u * u * u;
    default: return std::pow(u, p);
    }
  }
  // u^(p-1), u >= 0
  double dmass(double u) const {
    switch (mode) {
    case Mode::P2: return u;
    case Mode::P15: return std::sqrt(u);
    case Mode::P3: return u * u;
    default: return std::pow(u, p - 1.0);
    }
  }
};

} // namespace detail

/// Rasterize a shape at spacing h.  Throws geometry_error for holes that
/// touch the outer boundary or disconnect the interior, resolution_error
/// for under-resolved holes.
inline GridDomain build_domain(const ShapeSpec& shape, double h, Metric metric = Metric::Flat) {
  if (!(h > 0.0))
    throw precondition_error("build_domain: requires h > 0");
  if (!(shape.a > 0.0) || !(shape.b > 0.0))
    throw precondition_error("build_domain: outer shape dimensions must be positive");
  const bool wants_hole = shape.hole != ShapeSpec::Hole::None;
  if (wants_hole && !(shape.hole_size > 0.0))
    throw precondition_error("build_domain: hole size must be positive");
  if (!wants_hole && shape.layout != ShapeSpec::Layout::AllDirichlet)
    throw precondition_error("build_domain: mixed layouts require a hole");
  if (wants_hole && shape.layout == ShapeSpec::Layout::AllDirichlet)
    throw precondition_error("build_domain: a domain with a hole needs a mixed layout");
  if (wants_hole) {
    const double across =
        (shape.hole == ShapeSpec::Hole::Disk ? 2.0 * shape.hole_size : shape.hole_size) / h;
    if (across < 4.0)
      throw resolution_error("build_domain: hole under-resolved (" + std::to_string(across) +
                             " cells across, need >= 4)");
  }

  double ex = shape.a, ey = (shape.outer == ShapeSpec::Outer::Disk) ? shape.a : shape.b;
  if (shape.outer == ShapeSpec::Outer::Rectangle) {
    ex = 0.5 * shape.a;
    ey = 0.5 * shape.b;
  }
  const int pad = 3;
  const int i_lo = static_cast<int>(std::floor(-ex / h)) - pad;
  const int i_hi = static_cast<int>(std::ceil(ex / h)) + pad;
  const int j_lo = static_cast<int>(std::floor(-ey / h)) - pad;
  const int j_hi = static_cast<int>(std::ceil(ey / h)) + pad;

  GridDomain d;
  d.nx = i_hi - i_lo + 1;
  d.ny = j_hi - j_lo + 1;
  d.h = h;
  d.x0 = i_lo * h;
  d.y0 = j_lo * h;
  d.metric = metric;
  d.has_hole = wants_hole;
  d.cell_class.assign(static_cast<std::size_t>(d.nx) * d.ny, CellClass::Exterior);
  d.component.assign(d.cell_class.size(), BoundaryComponent::None);

  const double band = 0.5 * h;
  const bool lambda_layout = shape.layout == ShapeSpec::Layout::InnerNeumannOuterDirichlet;
  int dirichlet_count = 0;

  for (int j = 0; j < d.ny; ++j) {
    for (int i = 0; i < d.nx; ++i) {
      const double x = d.cx(i), y = d.cy(j);
      const double so = detail::outer_sdf(shape, x, y);
      const double sh = wants_hole ? detail::hole_sdf(shape, x, y) : 1e300;
      const int k = d.idx(i, j);
      if (so > band || sh < -band)
        continue; // Exterior (outside, or inside the hole)
      const bool outer_band = std::fabs(so) <= band;
      const bool inner_band = std::fabs(sh) <= band;
      if (outer_band && inner_band)
        throw geometry_error("build_domain: hole touches the outer boundary");
      if (outer_band) {
        d.cell_class[k] = (wants_hole && !lambda_layout) ? CellClass::NeumannBoundary
                                                         : CellClass::DirichletBoundary;
        d.component[k] = BoundaryComponent::Outer;
      } else if (inner_band) {
        if (so > -2.5 * h)
          throw geometry_error("build_domain: hole too close to the outer boundary "
                               "(need >= 2 cells of separation)");
        d.cell_class[k] = lambda_layout ? CellClass::NeumannBoundary
                                        : CellClass::DirichletBoundary;
        d.component[k] = BoundaryComponent::Hole;
      } else {
        d.cell_class[k] = CellClass::Interior;
      }
      if (d.cell_class[k] == CellClass::DirichletBoundary)
        ++dirichlet_count;
    }
  }

  if (dirichlet_count == 0)
    throw geometry_error("build_domain: no Dirichlet cells (empty or degenerate raster)");

  // Interior cells must never touch Exterior directly.
  long interior_count = 0;
  int first_interior = -1;
  for (int j = 0; j < d.ny; ++j) {
    for (int i = 0; i < d.nx; ++i) {
      if (d.at(i, j) != CellClass::Interior)
        continue;
      ++interior_count;
      if (first_interior < 0)
        first_interior = d.idx(i, j);
      const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
      for (int t = 0; t < 4; ++t) {
        const int ii = i + di[t], jj = j + dj[t];
        if (ii < 0 || jj < 0 || ii >= d.nx || jj >= d.ny ||
            d.at(ii, jj) == CellClass::Exterior)
          throw resolution_error("build_domain: interior cell touches exterior; boundary "
                                 "band under-resolved at h = " + std::to_string(h));
      }
    }
  }
  if (interior_count == 0)
    throw resolution_error("build_domain: no interior cells at h = " + std::to_string(h));

  // Interior connectivity (flood fill, 4-adjacency).
  {
    std::vector<std::uint8_t> seen(d.cell_class.size(), 0);
    std::vector<int> stack{first_interior};
    seen[first_interior] = 1;
    long reached = 0;
    while (!stack.empty()) {
      const int k = stack.back();
      stack.pop_back();
      ++reached;
      const int i = k % d.nx, j = k / d.nx;
      const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
      for (int t = 0; t < 4; ++t) {
        const int ii = i + di[t], jj = j + dj[t];
        if (ii < 0 || jj < 0 || ii >= d.nx || jj >= d.ny)
          continue;
        const int kk = d.idx(ii, jj);
        if (!seen[kk] && d.cell_class[kk] == CellClass::Interior) {
          seen[kk] = 1;
          stack.push_back(kk);
        }
      }
    }
    if (reached != interior_count)
      throw geometry_error("build_domain: interior is not 4-connected (" +
                           std::to_string(reached) + " of " + std::to_string(interior_count) +
                           " cells reachable)");
  }

  // Volumes: boundary bands straddle the curves, so half of each band
  // belongs to the region on either side.
  double vol_in = 0.0, vol_band = 0.0, vol_hole = 0.0, vol_hole_band = 0.0;
  for (int j = 0; j < d.ny; ++j) {
    for (int i = 0; i < d.nx; ++i) {
      const int k = d.idx(i, j);
      const double w = detail::mass_weight(d, i, j);
      switch (d.cell_class[k]) {
      case CellClass::Interior: vol_in += w; break;
      case CellClass::DirichletBoundary:
      case CellClass::NeumannBoundary:
        vol_band += w;
        if (d.component[k] == BoundaryComponent::Hole)
          vol_hole_band += w;
        break;
      case CellClass::Exterior:
        if (wants_hole && detail::hole_sdf(shape, d.cx(i), d.cy(j)) < -band)
          vol_hole += w;
        break;
      }
    }
  }
  d.domain_volume = vol_in + 0.5 * vol_band;
  d.hole_volume = vol_hole + 0.5 * vol_hole_band;
  return d;
}

/// Metric-weighted p-mass of a field: sum w_M |u|^p over domain cells.
inline double planar_mass(const GridDomain& d, const PlanarField& f, double p) {
  if (f.values.size() != d.cell_class.size())
    throw precondition_error("planar_mass: field size does not match the grid");
  const detail::PowKit kit(p);
  double acc = 0.0;
  for (int j = 0; j < d.ny; ++j)
    for (int i = 0; i < d.nx; ++i) {
      const int k = d.idx(i, j);
      if (d.cell_class[k] == CellClass::Exterior)
        continue;
      acc += detail::mass_weight(d, i, j) * kit.mass(std::fabs(f.values[k]));
    }
  return acc;
}

/// Metric-weighted p-energy: sum w_E |D+ u|^p with forward differences.
inline double planar_energy(const GridDomain& d, const PlanarField& f, double p) {
  if (f.values.size() != d.cell_class.size())
    throw precondition_error("planar_energy: field size does not match the grid");
  const detail::PowKit kit(p);
  const double inv_h = 1.0 / d.h;
  double acc = 0.0;
  for (int j = 0; j < d.ny; ++j)
    for (int i = 0; i < d.nx; ++i) {
      const int k = d.idx(i, j);
      if (d.cell_class[k] == CellClass::Exterior)
        continue;
      const double uc = f.values[k];
      double gx = 0.0, gy = 0.0;
      if (i + 1 < d.nx && d.at(i + 1, j) != CellClass::Exterior)
        gx = (f.values[d.idx(i + 1, j)] - uc) * inv_h;
      if (j + 1 < d.ny && d.at(i, j + 1) != CellClass::Exterior)
        gy = (f.values[d.idx(i, j + 1)] - uc) * inv_h;
      const double g2 = gx * gx + gy * gy;
      if (g2 > 0.0)
        acc += detail::energy_weight(d, i, j, p) * kit.energy(g2);
    }
  return acc;
}

/// Discrete Rayleigh quotient of a nonzero field.
inline double rayleigh_quotient(const GridDomain& d, const PlanarField& f, double p) {
  const double m = planar_mass(d, f, p);
  if (!(m > 0.0))
    throw precondition_error("rayleigh_quotient: field vanishes on the domain");
  return planar_energy(d, f, p) / m;
}

struct MinimizeOptions {
  double stall_rel_tol = 1e-8; // eigenvalue change considered "no progress"
  int stall_window = 10;       // consecutive stalled iterations before stopping
  long max_iterations = 200000;
};

/// Minimize the Rayleigh quotient by preconditioned projected descent with
/// backtracking (halve the step until the quotient decreases), nonnegativity
/// clipping, and unit p-mass renormalization.  The initial iterate is the
/// grid distance to the Dirichlet cells.  Directions come from an approximate
/// inverse Laplacian applied to the constraint-projected gradient, with a
/// Barzilai-Borwein trial step; every accepted step still strictly decreases
/// the quotient, so the preconditioning only affects speed, not limits.
inline EigenResult2D minimize_rayleigh(const GridDomain& d, double p,
                                       const MinimizeOptions& mopts = {}) {
  if (!(p > 1.0))
    throw precondition_error("minimize_rayleigh: requires p > 1");
  const std::size_t ncell = d.cell_class.size();
  if (ncell == 0)
    throw precondition_error("minimize_rayleigh: empty grid");

  // Cell tables.
  std::vector<int> domain_cells, free_cells;
  std::vector<std::uint8_t> is_free(ncell, 0);
  for (int j = 0; j < d.ny; ++j)
    for (int i = 0; i < d.nx; ++i) {
      const int k = d.idx(i, j);
      if (d.cell_class[k] == CellClass::Exterior)
        continue;
      domain_cells.push_back(k);
      if (d.cell_class[k] != CellClass::DirichletBoundary) {
        free_cells.push_back(k);
        is_free[k] = 1;
      }
    }
  if (free_cells.empty())
    throw precondition_error("minimize_rayleigh: no free cells");

  std::vector<int> xp(ncell, -1), yp(ncell, -1);
  std::vector<double> wE(ncell, 0.0), wM(ncell, 0.0);
  for (int k : domain_cells) {
    const int i = k % d.nx, j = k / d.nx;
    if (i + 1 < d.nx && d.at(i + 1, j) != CellClass::Exterior)
      xp[k] = d.idx(i + 1, j);
    if (j + 1 < d.ny && d.at(i, j + 1) != CellClass::Exterior)
      yp[k] = d.idx(i, j + 1);
    wE[k] = detail::energy_weight(d, i, j, p);
    wM[k] = detail::mass_weight(d, i, j);
  }

  const detail::PowKit kit(p);
  const double inv_h = 1.0 / d.h;

  auto quotient = [&](const std::vector<double>& v, double& energy, double& mass) {
    energy = 0.0;
    mass = 0.0;
    for (int k : domain_cells) {
      const double uc = v[k];
      const double gx = (xp[k] >= 0) ? (v[xp[k]] - uc) * inv_h : 0.0;
      const double gy = (yp[k] >= 0) ? (v[yp[k]] - uc) * inv_h : 0.0;
      const double g2 = gx * gx + gy * gy;
      if (g2 > 0.0)
        energy += wE[k] * kit.energy(g2);
      if (uc > 0.0)
        mass += wM[k] * kit.mass(uc);
    }
  };

  // Multi-source BFS distance to the Dirichlet cells as the start profile.
  std::vector<double> u(ncell, 0.0);
  {
    std::vector<int> frontier, next;
    std::vector<int> dist(ncell, -1);
    for (int k : domain_cells)
      if (d.cell_class[k] == CellClass::DirichletBoundary) {
        dist[k] = 0;
        frontier.push_back(k);
      }
    int level = 0;
    while (!frontier.empty()) {
      ++level;
      next.clear();
      for (int k : frontier) {
        const int i = k % d.nx, j = k / d.nx;
        const int nbr[4] = {i + 1 < d.nx ? d.idx(i + 1, j) : -1,
                            i - 1 >= 0 ? d.idx(i - 1, j) : -1,
                            j + 1 < d.ny ? d.idx(i, j + 1) : -1,
                            j - 1 >= 0 ? d.idx(i, j - 1) : -1};
        for (int kk : nbr)
          if (kk >= 0 && dist[kk] < 0 && d.cell_class[kk] != CellClass::Exterior &&
              is_free[kk]) {
            dist[kk] = level;
            next.push_back(kk);
          }
      }
      frontier.swap(next);
    }
    for (int k : free_cells)
      u[k] = (dist[k] > 0 ? dist[k] : 1) * d.h;
  }

  double energy, mass;
  quotient(u, energy, mass);
  if (!(mass > 0.0))
    throw solver_error("minimize_rayleigh: start profile has zero mass");
  {
    const double s = std::pow(mass, -1.0 / p);
    for (int k : free_cells)
      u[k] *= s;
    quotient(u, energy, mass);
  }
  double R = energy / mass;

  EigenResult2D out;
  out.energy_history.reserve(256);
  out.energy_history.push_back(R);

  std::vector<double> gE(ncell, 0.0), gM(ncell, 0.0), g(ncell, 0.0);
  std::vector<double> u_prev, z_prev, trial(ncell, 0.0);
  std::vector<double> z(ncell, 0.0), cg_r(ncell, 0.0), cg_p(ncell, 0.0), cg_Ap(ncell, 0.0);
  double step = 0.0, last_step = 0.0;
  int stall = 0;
  long it = 0;

  auto assemble_gradient = [&]() {
    for (int k : domain_cells) {
      gE[k] = 0.0;
      gM[k] = 0.0;
    }
    for (int k : domain_cells) {
      const double uc = u[k];
      const double gx = (xp[k] >= 0) ? (u[xp[k]] - uc) * inv_h : 0.0;
      const double gy = (yp[k] >= 0) ? (u[yp[k]] - uc) * inv_h : 0.0;
      const double g2 = gx * gx + gy * gy;
      if (g2 > 0.0) {
        const double f = wE[k] * p * kit.denergy(g2);
        if (xp[k] >= 0)
          gE[xp[k]] += f * gx * inv_h;
        if (yp[k] >= 0)
          gE[yp[k]] += f * gy * inv_h;
        gE[k] -= f * (gx + gy) * inv_h;
      }
      if (uc > 0.0)
        gM[k] = wM[k] * p * kit.dmass(uc);
    }
    double ee = 0.0, mm = 0.0;
    for (int k : free_cells) {
      ee += gE[k] * gM[k];
      mm += gM[k] * gM[k];
    }
    const double c = (mm > 0.0) ? ee / mm : 0.0;
    for (int k : free_cells)
      g[k] = gE[k] - c * gM[k];
  };

  // Approximately solve (-Laplacian) z = g on the free cells (zero elsewhere)
  // by plain CG.  Raw gradient steps need O(1/h^2) iterations because the
  // energy Hessian is grid-scale stiff; steering the line search with this
  // direction removes that factor.  The solve only shapes the direction, so a
  // loose residual target suffices, and warm starting from the previous
  // direction keeps the tail solves cheap.  Acceptance below is unchanged:
  // every step still strictly decreases the quotient.
  auto precondition = [&]() {
    const double inv_h2 = inv_h * inv_h;
    auto apply = [&](const std::vector<double>& v, std::vector<double>& out) {
      for (int k : free_cells)
        out[k] = 1e-12 * v[k];
      for (int k : domain_cells) {
        const double vc = is_free[k] ? v[k] : 0.0;
        if (xp[k] >= 0) {
          const double f = ((is_free[xp[k]] ? v[xp[k]] : 0.0) - vc) * inv_h2;
          if (is_free[k])
            out[k] -= f;
          if (is_free[xp[k]])
            out[xp[k]] += f;
        }
        if (yp[k] >= 0) {
          const double f = ((is_free[yp[k]] ? v[yp[k]] : 0.0) - vc) * inv_h2;
          if (is_free[k])
            out[k] -= f;
          if (is_free[yp[k]])
            out[yp[k]] += f;
        }
      }
    };
    apply(z, cg_Ap);
    double rr = 0.0, gg = 0.0;
    for (int k : free_cells) {
      cg_r[k] = g[k] - cg_Ap[k];
      cg_p[k] = cg_r[k];
      rr += cg_r[k] * cg_r[k];
      gg += g[k] * g[k];
    }
    for (int cg = 0; cg < 200 && rr > 1e-4 * gg; ++cg) {
      apply(cg_p, cg_Ap);
      double pAp = 0.0;
      for (int k : free_cells)
        pAp += cg_p[k] * cg_Ap[k];
      if (!(pAp > 0.0))
        break;
      const double alpha = rr / pAp;
      double rr_new = 0.0;
      for (int k : free_cells) {
        z[k] += alpha * cg_p[k];
        cg_r[k] -= alpha * cg_Ap[k];
        rr_new += cg_r[k] * cg_r[k];
      }
      const double beta = rr_new / rr;
      rr = rr_new;
      for (int k : free_cells)
        cg_p[k] = cg_r[k] + beta * cg_p[k];
    }
    // Keep the direction tangent to the mass constraint.
    double zm = 0.0, mm = 0.0;
    for (int k : free_cells) {
      zm += z[k] * gM[k];
      mm += gM[k] * gM[k];
    }
    if (mm > 0.0) {
      const double cz = zm / mm;
      for (int k : free_cells)
        z[k] -= cz * gM[k];
    }
  };

  for (it = 1; it <= mopts.max_iterations; ++it) {
    assemble_gradient();
    precondition();

    // Barzilai-Borwein trial step in the preconditioned metric, from the
    // previous accepted move.
    double s_try = 0.0;
    if (!u_prev.empty()) {
      double sy = 0.0, ss = 0.0;
      for (int k : free_cells) {
        const double du = u[k] - u_prev[k];
        const double dz = z[k] - z_prev[k];
        ss += du * du;
        sy += du * dz;
      }
      if (sy > 0.0 && std::isfinite(sy))
        s_try = ss / sy;
    }
    if (!(s_try > 0.0) || !std::isfinite(s_try)) {
      double znorm2 = 0.0;
      for (int k : free_cells)
        znorm2 += z[k] * z[k];
      s_try = (last_step > 0.0) ? 2.0 * last_step
                                : 0.1 / std::max(std::sqrt(znorm2), 1e-30);
    }

    u_prev = u;
    z_prev = z;

    bool accepted = false;
    double R_new = R;
    for (int bt = 0; bt < 60; ++bt) {
      for (int k : free_cells)
        trial[k] = std::max(0.0, u[k] - s_try * z[k]);
      double e_t, m_t;
      quotient(trial, e_t, m_t);
      if (m_t > 0.0) {
        const double q = e_t / m_t;
        if (q < R) {
          const double sc = std::pow(m_t, -1.0 / p);
          for (int k : free_cells)
            u[k] = trial[k] * sc;
          R_new = q;
          accepted = true;
          last_step = s_try;
          break;
        }
      }
      s_try *= 0.5;
      if (s_try < 1e-300)
        break;
    }

    const double rel_change = (R - R_new) / std::max(R, 1e-300);
    R = R_new;
    out.energy_history.push_back(R);
    if (accepted)
      step = last_step;
    stall = (rel_change < mopts.stall_rel_tol) ? stall + 1 : 0;
    if (stall >= mopts.stall_window)
      break;
  }

  if (it > mopts.max_iterations)
    throw solver_error("minimize_rayleigh: iteration cap " +
                       std::to_string(mopts.max_iterations) +
                       " reached without stalling (last quotient " + std::to_string(R) + ")");

  out.eigenvalue = R;
  out.iterations = it;
  out.final_step = step;
  out.field.values = std::move(u);
  return out;
}

} // namespace annulus_spectra
