#!/usr/bin/env python3
"""Precompute reference eigenvalues for the test suite.

Everything here is derived from classical closed forms, independently of the
C++ solvers: 1-D p-Laplacian eigenvalues, Bessel / spherical-Bessel
cross-product roots for the p = 2 annulus problems, and a high-precision
quadrature value for the radial ramp quotient.  Run from the repo root:

    python3 scripts/compute_oracle_fixtures.py

writes tests/fixtures/oracle_values.json.  The file is committed; the suite
never regenerates it.
"""

import json
import mpmath as mp

mp.mp.dps = 50


def bisect(f, lo, hi, iters=200):
    flo = f(lo)
    fhi = f(hi)
    assert mp.sign(flo) * mp.sign(fhi) < 0, "no sign change in bracket"
    for _ in range(iters):
        mid = (lo + hi) / 2
        fm = f(mid)
        if mp.sign(fm) == mp.sign(flo):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    return (lo + hi) / 2


def first_root(f, k0, k1, samples=4000):
    """First sign change of f on (k0, k1), scanned left to right."""
    prev_k = k0
    prev_f = f(k0)
    for i in range(1, samples + 1):
        k = k0 + (k1 - k0) * mp.mpf(i) / samples
        fk = f(k)
        if mp.sign(fk) != mp.sign(prev_f) and mp.sign(prev_f) != 0:
            return bisect(f, prev_k, k)
        prev_k, prev_f = k, fk
    raise RuntimeError("no root found in scan range")


def pi_p(p):
    p = mp.mpf(p)
    return 2 * mp.pi / (p * mp.sin(mp.pi / p))


def lambda_1d_mixed(p, L):
    """First eigenvalue, -(|u'|^{p-2}u')' = lam |u|^{p-2}u on (0,L),
    u'(0) = 0, u(L) = 0 (quarter p-sine wave)."""
    p = mp.mpf(p)
    return (p - 1) * (pi_p(p) / (2 * L)) ** p


# n = 2, p = 2: solutions A J0(kr) + B Y0(kr); derivative -k (A J1 + B Y1).
def lambda_annulus_n2(r1, r2):
    """u'(r1) = 0, u(r2) = 0."""
    f = lambda k: (mp.besselj(1, k * r1) * mp.bessely(0, k * r2)
                   - mp.bessely(1, k * r1) * mp.besselj(0, k * r2))
    k = first_root(f, mp.mpf("0.05"), mp.mpf(40))
    return k * k


def mu_annulus_n2(r1, r2):
    """u(r1) = 0, u'(r2) = 0."""
    f = lambda k: (mp.besselj(0, k * r1) * mp.bessely(1, k * r2)
                   - mp.bessely(0, k * r1) * mp.besselj(1, k * r2))
    k = first_root(f, mp.mpf("0.05"), mp.mpf(40))
    return k * k


# n = 3, p = 2: solutions (A cos kr + B sin kr)/r.
def lambda_annulus_n3(r1, r2):
    """u = sin(k(r2 - r))/r up to scale; u'(r1) = 0 gives
    k r1 cos(k(r2-r1)) + sin(k(r2-r1)) = 0."""
    f = lambda k: k * r1 * mp.cos(k * (r2 - r1)) + mp.sin(k * (r2 - r1))
    k = first_root(f, mp.mpf("0.05"), mp.mpf(60))
    return k * k


def mu_annulus_n3(r1, r2):
    """u = sin(k(r - r1))/r; u'(r2) = 0 gives
    k r2 cos(k(r2-r1)) - sin(k(r2-r1)) = 0."""
    f = lambda k: k * r2 * mp.cos(k * (r2 - r1)) - mp.sin(k * (r2 - r1))
    k = first_root(f, mp.mpf("0.05"), mp.mpf(60))
    return k * k


def ramp_quotient(p, n, eps, eta, R):
    """Rayleigh quotient of w(r) = min(r - eps, eta) on the n-ball annulus
    (eps, R), Dirichlet at eps, Neumann at R, weight r^{n-1}."""
    p, eps, eta, R = map(mp.mpf, (p, eps, eta, R))
    jbar = lambda r: r ** (n - 1)
    num = mp.quad(jbar, [eps, eps + eta])
    den = (mp.quad(lambda r: (r - eps) ** p * jbar(r), [eps, eps + eta])
           + eta ** p * mp.quad(jbar, [eps + eta, R]))
    return num / den


def fmt(x):
    return mp.nstr(mp.mpf(x), 22)


out = {"_generator": "scripts/compute_oracle_fixtures.py", "_digits": 22}

# 1-D closed forms (L = 1 and L = 0.5 ladders used by the radial tests).
for p in ("1.5", "2", "3"):
    for L in ("0.5", "1"):
        key = f"lambda_1d_p{p}_L{L}"
        out[key] = fmt(lambda_1d_mixed(mp.mpf(p), mp.mpf(L)))
out["pi_p_1.5"] = fmt(pi_p("1.5"))
out["pi_p_3"] = fmt(pi_p("3"))

# Dirichlet disk / ball, p = 2.
j01 = mp.besseljzero(0, 1)
out["j01"] = fmt(j01)
out["dirichlet_disk_p2_R1"] = fmt(j01 * j01)          # n = 2
out["dirichlet_ball_n3_p2_R1"] = fmt(mp.pi ** 2)       # n = 3

# Annulus cross-product roots, p = 2.
out["lambda_n2_p2_r0.5_1"] = fmt(lambda_annulus_n2(mp.mpf("0.5"), mp.mpf(1)))
out["lambda_n2_p2_r0.3_1"] = fmt(lambda_annulus_n2(mp.mpf("0.3"), mp.mpf(1)))
out["mu_n2_p2_r0.5_1"] = fmt(mu_annulus_n2(mp.mpf("0.5"), mp.mpf(1)))
out["lambda_n3_p2_r0.5_1"] = fmt(lambda_annulus_n3(mp.mpf("0.5"), mp.mpf(1)))
out["mu_n3_p2_r0.5_1"] = fmt(mu_annulus_n3(mp.mpf("0.5"), mp.mpf(1)))

# Vanishing-hole ladder, n = 2, p = 2, outer radius 1.
for eps in ("0.02", "0.04", "0.08", "0.16"):
    out[f"lambda_n2_p2_r{eps}_1"] = fmt(lambda_annulus_n2(mp.mpf(eps), mp.mpf(1)))

# mu decay ladder, n = 3, p = 2, outer radius 1.
for eps in ("0.01", "0.02", "0.04", "0.08"):
    out[f"mu_n3_p2_r{eps}_1"] = fmt(mu_annulus_n3(mp.mpf(eps), mp.mpf(1)))

# Ramp trial-bound quotient.
out["ramp_quotient_p2_n3_eps0.1_eta0.1_R1"] = fmt(ramp_quotient(2, 3, "0.1", "0.1", 1))

# Diagnostics printed for the record (not part of the fixture contract):
# slope of the vanishing-hole ladder and quality of even-power extrapolation.
lam0 = j01 * j01
eps_list = [mp.mpf(e) for e in ("0.02", "0.04", "0.08")]
lams = [mp.mpf(out[f"lambda_n2_p2_r{mp.nstr(e, 4)}_1"]) for e in eps_list]
# 3-point even-power fit lam = lam0 + a e^2 + b e^4 solved exactly.
e2 = [e * e for e in eps_list]
A = mp.matrix([[1, e2[i], e2[i] ** 2] for i in range(3)])
rhs = mp.matrix(lams)
sol = mp.lu_solve(A, rhs)
print("extrapolated lambda0 rel err:", mp.nstr(abs(sol[0] - lam0) / lam0, 6))

xs = [mp.log(e) for e in eps_list]
ys = [mp.log(l - lam0) for l in lams]
nn = len(xs)
sx = sum(xs); sy = sum(ys)
sxx = sum(x * x for x in xs); sxy = sum(x * y for x, y in zip(xs, ys))
slope = (nn * sxy - sx * sy) / (nn * sxx - sx * sx)
print("vanishing-hole log-log slope (n=2, p=2):", mp.nstr(slope, 8))

mu_eps = [mp.mpf(e) for e in ("0.01", "0.02", "0.04", "0.08")]
mu_vals = [mu_annulus_n3(e, mp.mpf(1)) for e in mu_eps]
xs = [mp.log(e) for e in mu_eps]
ys = [mp.log(m) for m in mu_vals]
nn = len(xs)
sx = sum(xs); sy = sum(ys)
sxx = sum(x * x for x in xs); sxy = sum(x * y for x, y in zip(xs, ys))
slope = (nn * sxy - sx * sy) / (nn * sxx - sx * sx)
print("mu-decay log-log slope (n=3, p=2):", mp.nstr(slope, 8))

with open("tests/fixtures/oracle_values.json", "w") as fh:
    json.dump(out, fh, indent=2, sort_keys=True)
    fh.write("\n")
print("wrote tests/fixtures/oracle_values.json")
