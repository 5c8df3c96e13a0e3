"""Distances, conformal curvature of coordinate spheres, and verification.

The metric under study is g_u = u^{4/(n-2)} * (Euclidean metric) for a
positive radial conformal factor u.  Everything here is specialized to
centered spheres in balls and annuli:

* sphere_area_g: the g_u-area of the sphere of radius r,
  omega_{n-1} r^{n-1} u^{2(n-1)/(n-2)}.
* mean_curvature_conformal: the conformal mean-curvature law
  H_u = u^{-2/(n-2)} ( -(2(n-1)/(n-2)) dnu_lnu + H0 ).
* minimal_sphere: the radial obstacle problem, minimizing sphere area over
  the grid with a golden-section polish.
* obstruction_residual: H_u^2 u^{4/(n-2)} - H0^2, which is nonnegative on
  any sphere where the solution is C^1 and the conformal Hessian spectrum
  stays in the closed Gamma_2 cone.  Radially this is (n-1)^2 w'(w' + 2/r),
  so the check is exactly admissibility of the profile slope.
* barrier_check: sign verification for the expansion barriers
  W +- beta (d^n - d^theta) on a ball.

The conformal mean curvature is reported with respect to the outward
normal: for a radial profile it satisfies the first-variation identity
d(ln area_g)/dr = H_u u^{2/(n-2)} = (n-1)(1/r + w'), and the exact ball
solution gives H_u -> n-1 toward the boundary, matching geodesic spheres
of hyperbolic space.  The dnu_lnu argument of the curvature law is the
inner-normal derivative of ln u, so radial call sites pass -d(ln u)/dr
together with H0 = +(n-1)/r.
"""

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize_scalar

from .expansion import evaluate_expansion
from .symfun import n_k


@dataclass(frozen=True)
class Ball:
    """Centered ball of radius R; the boundary sphere blows the solution up."""

    R: float

    def __post_init__(self):
        if self.R <= 0:
            raise ValueError("ball radius must be positive")

    def contains(self, r):
        return 0 <= r < self.R


@dataclass(frozen=True)
class Annulus:
    """Centered annulus a < |x| < b; both boundary spheres blow up."""

    a: float
    b: float

    def __post_init__(self):
        if not 0 < self.a < self.b:
            raise ValueError("annulus needs 0 < a < b")

    def contains(self, r):
        return self.a < r < self.b

    @property
    def corner_radius(self):
        """The interface sqrt(ab) where the two boundary layers meet."""
        return math.sqrt(self.a * self.b)


def dist(domain, r):
    """Distance to the boundary and the nearest component.

    Returns (d, which) with which in {"boundary", "inner", "outer", "tie"}.
    Balls report "boundary"; annuli report the closest sphere, or "tie" at
    the equidistant radius (a+b)/2.
    """
    if isinstance(domain, Ball):
        if not 0 <= r < domain.R:
            raise ValueError(f"r={r} outside the ball")
        return domain.R - r, "boundary"
    if isinstance(domain, Annulus):
        if not domain.a < r < domain.b:
            raise ValueError(f"r={r} outside the annulus")
        din, dout = r - domain.a, domain.b - r
        if din == dout:
            return din, "tie"
        return (din, "inner") if din < dout else (dout, "outer")
    raise TypeError(f"unsupported domain {type(domain).__name__}")


def unit_sphere_area(n):
    """Surface area omega_{n-1} of the unit sphere in R^n."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def mean_curvature_conformal(u, dnu_lnu, H0, n):
    """Mean curvature of a hypersurface in the metric g_u.

    u is the conformal factor on the surface, dnu_lnu the inner-normal
    derivative of ln u, H0 the Euclidean mean curvature signed by the same
    normal choice.  See the module docstring for the radial orientation
    bookkeeping.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise ValueError("conformal factor must be positive")
    return u ** (-2.0 / (n - 2)) * (-(2.0 * (n - 1) / (n - 2)) * dnu_lnu + H0)


def sphere_area_g(r, u_r, n):
    """g_u-area of the centered sphere of radius r, u_r = u(r)."""
    r = np.asarray(r, dtype=float)
    u_r = np.asarray(u_r, dtype=float)
    if np.any(r <= 0) or np.any(u_r <= 0):
        raise ValueError("sphere_area_g needs r > 0 and u > 0")
    return unit_sphere_area(n) * r ** (n - 1) * u_r ** (2.0 * (n - 1) / (n - 2))


# -- minimal spheres ---------------------------------------------------------

@dataclass
class MinimalSphereResult:
    r_min: float
    area: float
    status: str          # "interior" or "detachment"
    unimodal: bool
    tie: bool = False


def minimal_sphere(sol):
    """Grid argmin of the sphere area, polished by golden-section search.

    sol needs arrays .r and .u and a dimension .n (RadialSolution works).
    A minimum at the first or last node means the competitor spheres slide
    into the boundary, reported as status "detachment" (the radial analogue
    of the obstacle-problem minimizer touching the domain boundary).  Ties
    break toward smaller radius and are flagged.
    """
    r = np.asarray(sol.r, dtype=float)
    u = np.asarray(sol.u, dtype=float)
    n = sol.n
    area = sphere_area_g(r, u, n)
    j = int(np.argmin(area))
    tie = bool(np.sum(area == area[j]) > 1)
    if j == 0 or j == len(r) - 1:
        return MinimalSphereResult(float(r[j]), float(area[j]),
                                   "detachment", True, tie)
    # golden-section on the monotone interpolant of u over the three-cell
    # neighborhood; area_g of the interpolant is evaluated directly
    lo = max(0, j - 2)
    hi = min(len(r), j + 3)
    interp = PchipInterpolator(r[lo:hi], u[lo:hi])

    def area_of(x):
        return sphere_area_g(float(x), float(interp(x)), n)

    try:
        res = minimize_scalar(area_of, bracket=(r[j - 1], r[j], r[j + 1]),
                              method="golden", options={"xtol": 1e-12})
    except ValueError:
        # flat triple, no strict bracket; the grid argmin is the answer
        return MinimalSphereResult(float(r[j]), float(area[j]),
                                   "interior", False, tie)
    r_hat, a_hat = float(res.x), float(res.fun)
    unimodal = a_hat <= area[j - 1] and a_hat <= area[j + 1] \
        and r[j - 1] <= r_hat <= r[j + 1]
    if not unimodal or a_hat > area[j]:
        # interpolation was not unimodal here; fall back to the grid argmin
        return MinimalSphereResult(float(r[j]), float(area[j]),
                                   "interior", False, tie)
    return MinimalSphereResult(r_hat, a_hat, "interior", True, tie)


# -- the obstruction inequality ----------------------------------------------

def obstruction_residual(sol, r):
    """H_u^2 u^{4/(n-2)} - ((n-1)/r)^2 at the sphere of radius r.

    Nonnegative wherever the solution is C^1 with conformal Hessian
    spectrum in the closed Gamma_2 cone; radially it equals
    (n-1)^2 w'(w' + 2/r).  The sphere must stay at least two cells away
    from a detected corner, where the one-sided derivatives disagree and
    the mean curvature is undefined.
    """
    rr = np.asarray(sol.r, dtype=float)
    j = int(np.argmin(np.abs(rr - r)))
    corner = getattr(sol, "corner", None)
    if corner and corner.get("found"):
        jc = int(np.argmin(np.abs(rr - corner["r_star"])))
        if abs(j - jc) < 2:
            raise ValueError(
                "sphere lies in the corner exclusion zone (2 cells)")
    n = sol.n
    u = np.asarray(sol.u, dtype=float)
    if j == 0 or j == len(rr) - 1:
        raise ValueError("sphere must be interior to the grid")
    dlnu = (u[j + 1] - u[j - 1]) / ((rr[j + 1] - rr[j - 1]) * u[j])
    H0 = (n - 1) / rr[j]
    Hu = mean_curvature_conformal(u[j], -dlnu, H0, n)
    return float(Hu ** 2 * u[j] ** (4.0 / (n - 2)) - H0 ** 2)


def sphere_report(sol, exclude_corner_cells=2):
    """Per-node sphere data: r, H0, Hu, area_g, obstruction.

    Skips the first/last node (no centered derivative) and the corner
    exclusion zone.  Returns a dict of equal-length arrays.
    """
    r = np.asarray(sol.r, dtype=float)
    u = np.asarray(sol.u, dtype=float)
    n = sol.n
    j = np.arange(1, len(r) - 1)
    corner = getattr(sol, "corner", None)
    if corner and corner.get("found"):
        jc = int(np.argmin(np.abs(r - corner["r_star"])))
        j = j[np.abs(j - jc) >= exclude_corner_cells]
    dlnu = (u[j + 1] - u[j - 1]) / ((r[j + 1] - r[j - 1]) * u[j])
    H0 = (n - 1) / r[j]
    Hu = mean_curvature_conformal(u[j], -dlnu, H0, n)
    area = sphere_area_g(r[j], u[j], n)
    obstruction = Hu ** 2 * u[j] ** (4.0 / (n - 2)) - H0 ** 2
    return {"r": r[j], "H0": H0, "Hu": Hu, "area_g": area,
            "obstruction": obstruction}


# -- expansion barriers -------------------------------------------------------

@dataclass(frozen=True)
class BarrierSpec:
    """Parameters of the barrier pair W +- beta (d^n - d^theta).

    Requires beta >= 1, n < theta < n+1 and beta * delta^n <= 1.  Sign
    sampling uses n_samples radii geometrically spaced in
    [delta * window, delta]; the lower cut keeps d^theta above float
    resolution of sigma_k (which is O(1)), so pushing window far below
    ~1e-2 eventually measures rounding noise, not the barrier.
    """

    beta: float = 1.0
    theta: float = None
    delta: float = 0.05
    n_samples: int = 256
    window: float = 1e-2

    def resolve_theta(self, n):
        return self.theta if self.theta is not None else n + 0.5


def radial_G_pointwise(table, d, n, k, barrier=0.0, theta=None, beta=1.0,
                       max_p=None):
    """G = sigma_k(lambda(-d^2 S(w))) - N_k d^{2k} e^{2kw} on the ball.

    w = W(d) + barrier * beta * (d^n - d^theta) with exact derivatives,
    where W is the table truncated at order max_p (default n, the mu = 0
    truncation whose own G is O(d^{n+3/4})).  The level spheres of d have
    curvature exactly 1/r, so the pointwise eigenvalues come straight from
    the radial reduction.
    """
    from .radial import lambda_radial
    kap = table.kappa[0]
    R = 1.0 / kap
    d = np.asarray(d, dtype=float)
    if max_p is None:
        max_p = n
    W, W1, W2 = evaluate_expansion(table, d, mu=0.0, max_p=max_p)
    if barrier != 0.0:
        sgn = barrier
        W = W + sgn * beta * (d ** n - d ** theta)
        W1 = W1 + sgn * beta * (n * d ** (n - 1) - theta * d ** (theta - 1))
        W2 = W2 + sgn * beta * (n * (n - 1) * d ** (n - 2)
                                - theta * (theta - 1) * d ** (theta - 2))
    r = R - d
    lamT, lamR = lambda_radial(W, -W1, W2, r)
    sT = d * d * lamT
    sR = d * d * lamR
    sig = math.comb(n - 1, k) * sT ** k \
        + math.comb(n - 1, k - 1) * sT ** (k - 1) * sR
    return sig - n_k(n, k) * d ** (2 * k) * np.exp(2 * k * W)


def barrier_check(bd, table, spec):
    """Sign test for both barriers, plus an empirical largest workable delta.

    The table must be umbilic with kappa > 0 (a ball) and computed with
    mu = 0; the mu slot is forced to zero during evaluation regardless.
    Returns a report dict; "passed" means the + barrier stayed negative and
    the - barrier positive at every sample radius.
    """
    if table.order < bd.n:
        raise ValueError("table order must reach the obstruction order n")
    kap = set(table.kappa)
    if len(kap) != 1 or table.kappa[0] <= 0:
        raise ValueError("barrier evaluation needs umbilic ball data")
    n, k = bd.n, bd.k
    theta = spec.resolve_theta(n)
    if not n < theta < n + 1:
        raise ValueError("theta must lie in (n, n+1)")
    if spec.beta < 1:
        raise ValueError("beta must be >= 1")
    if spec.beta * spec.delta ** n > 1 + 1e-12:
        raise ValueError("barrier spec violates beta * delta^n <= 1")

    def signs_hold(delta):
        d = np.geomspace(delta * spec.window, delta, spec.n_samples)
        g_plus = radial_G_pointwise(table, d, n, k, barrier=+1.0,
                                    theta=theta, beta=spec.beta)
        g_minus = radial_G_pointwise(table, d, n, k, barrier=-1.0,
                                     theta=theta, beta=spec.beta)
        return float(np.max(g_plus)), float(np.min(g_minus))

    max_plus, min_minus = signs_hold(spec.delta)

    # scan upward for the largest delta at which both signs still hold
    R = 1.0 / table.kappa[0]
    cap = min(0.9 * R, spec.beta ** (-1.0 / n))
    empirical = 0.0
    for delta in np.geomspace(spec.delta / 4, cap, 40):
        mp, mm = signs_hold(float(delta))
        if mp < 0 < mm:
            empirical = float(delta)
        else:
            break
    return {
        "theta": theta,
        "beta": spec.beta,
        "delta": spec.delta,
        "n_samples": spec.n_samples,
        "max_G_plus": max_plus,
        "min_G_minus": min_minus,
        "empirical_delta1": empirical,
        "passed": bool(max_plus < 0 < min_minus),
    }


def sphere_report_to_csv(report, path):
    """Write a sphere report as RFC-4180 CSV with round-trip floats."""
    cols = ["r", "H0", "Hu", "area_g", "obstruction"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for i in range(len(report["r"])):
            writer.writerow([f"{report[c][i]:.17g}" for c in cols])


def barrier_report_to_json(report):
    return json.dumps(report, indent=2, sort_keys=True) + "\n"
