"""Radial solver for sigma_k(lambda(-S(w))) = N_k e^{2kw} with blow-up data.

For radial w the conformal Hessian -S(w) diagonalizes with eigenvalues

    lamT = w'/r + w'^2 / 2   (tangential, multiplicity n-1)
    lamR = w'' - w'^2 / 2    (radial),

so the equation reduces to an ODE in r.  Three ways in:

* exact_ball tabulates the closed form w = ln(2R / (R^2 - r^2)) whose
  eigenvalue vector is identically (1/2, ..., 1/2).
* shoot integrates the ODE from expansion-generated Cauchy data at offset
  epsilon from a blow-up boundary; exiting the ellipticity cone or
  overflowing are reported outcomes, not faults.
* solve_annulus computes the viscosity solution on a < r < b, where the
  two boundary layers collide along r* = sqrt(ab) and the profile is
  C^{1,1/k} but not C^1-matched for k >= 2.

The annulus scheme works on a grid uniform in t = ln r, chosen so that the
Kelvin reflection t -> ln(ab) - t maps nodes to nodes exactly (the outer
offset is slaved to the inner one by (a+eps)(b - eps_b) = ab).  With an
even number of cells the collision radius sqrt(ab) is itself a node.  At
each interior node the centered stencil yields (lamT, lamR); for k >= 2
lamT is floored at a mesh-scaled cutoff before sigma_k is assembled, which
keeps the per-node relation monotone decreasing in w_j without poisoning
the kink node, where the centered difference is genuinely outside the
cone on every mesh.  The outer loop is a damped Newton iteration on the
tridiagonal system, with nonlinear Gauss-Seidel sweeps as a fallback and
as a directly-monotone reference method ("gauss-seidel").

Corner diagnostics locate r* as the argmax of the relative one-sided
derivative mismatch of u and fit one-sided power laws
u'(r* -+ s) = L +- C s^alpha two cells away from the kink; alpha estimates
the Holder exponent of u' (expected 1/k) without the O(h^{1/k}) bias a
fixed-limit log-log slope picks up from the corner node itself.
"""

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solve_banded
from scipy.optimize import curve_fit

from .errors import DegeneracyError, DiagnosticError, NumericalFailure
from .expansion import BoundaryData, evaluate_expansion, expand
from .geometry import Annulus, Ball
from .symfun import n_k

LAMBDA_FLOOR = 1e-10


@dataclass(frozen=True)
class RadialProblem:
    """Discretized radial problem on a ball or annulus.

    epsilon is the offset of the first/last node from each blow-up
    boundary (default 1e-3 times the domain width); seed_order the
    expansion order used to manufacture Dirichlet data there (default
    n+1, one past the free coefficient); mu the free order-n expansion
    coefficient fed to the seeds.
    """

    domain: object
    n: int
    k: int
    J: int = 2000
    epsilon: float = None
    seed_order: int = None
    mu: float = 0.0

    def __post_init__(self):
        if self.n < 3 or not 1 <= self.k <= self.n:
            raise ValueError("need n >= 3 and 1 <= k <= n")
        if self.J < 16:
            raise ValueError("grid too coarse")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    @property
    def width(self):
        if isinstance(self.domain, Ball):
            return self.domain.R
        return self.domain.b - self.domain.a

    @property
    def eps(self):
        return self.epsilon if self.epsilon is not None \
            else 1e-3 * self.width

    @property
    def seeds_order(self):
        return self.seed_order if self.seed_order is not None \
            else self.n + 1

    def grid(self):
        """Node radii.  Ball: uniform in r on [eps, R - eps].  Annulus:
        uniform in t = ln r, symmetric about ln sqrt(ab); requires even J."""
        if isinstance(self.domain, Ball):
            R = self.domain.R
            return np.linspace(self.eps, R - self.eps, self.J + 1)
        a, b = self.domain.a, self.domain.b
        if self.J % 2:
            raise ValueError("annulus grid needs even J so sqrt(ab) is a node")
        t0 = math.log(a + self.eps)
        tm = 0.5 * math.log(a * b)
        h = 2.0 * (tm - t0) / self.J
        t = tm + (np.arange(self.J + 1) - self.J // 2) * h
        return np.exp(t)


@dataclass
class RadialSolution:
    """Converged (or tabulated) radial profile with derived fields.

    u1_left/u1_right are one-sided difference derivatives of u (nan where
    the stencil leaves the grid); lamT/lamR the centered-difference
    eigenvalues of -S(w); residual the relative equation defect
    |sigma_k(lambda) e^{-2kw} / N_k - 1| at interior nodes.  flagged lists
    nodes whose lamT sat below the scheme floor at convergence; for k >= 2
    on an annulus that is the kink node, where the pointwise equation does
    not hold and the residual legitimately spikes.
    """

    problem: RadialProblem
    r: np.ndarray
    w: np.ndarray
    u: np.ndarray
    u1_left: np.ndarray
    u1_right: np.ndarray
    lamT: np.ndarray
    lamR: np.ndarray
    residual: np.ndarray
    w1: np.ndarray = None
    corner: dict = None
    flagged: tuple = ()
    method: str = ""
    iterations: int = 0
    outcome: str = "completed"

    @property
    def n(self):
        return self.problem.n

    @property
    def k(self):
        return self.problem.k

    def residual_max(self, exclude_corner_cells=2):
        """Max relative residual over interior nodes, skipping the corner
        exclusion zone where the viscosity solution has no pointwise
        equation to satisfy."""
        res = self.residual[1:-1]
        idx = np.arange(1, len(self.r) - 1)
        mask = np.isfinite(res)
        for j in self.flagged:
            mask &= np.abs(idx - j) > exclude_corner_cells
        if self.corner and self.corner.get("found"):
            jc = int(np.argmin(np.abs(self.r - self.corner["r_star"])))
            mask &= np.abs(idx - jc) > exclude_corner_cells
        if not np.any(mask):
            return math.nan
        return float(np.max(np.abs(res[mask])))


def lambda_radial(w, w1, w2, r):
    """Eigenvalues (lamT, lamR) of -S(w) for a radial profile.

    The value w is accepted alongside its derivatives for call-site
    symmetry but the eigenvalues depend on (w1, w2, r) only.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("lambda_radial needs r > 0")
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    lamT = w1 / r + 0.5 * w1 * w1
    lamR = w2 - 0.5 * w1 * w1
    if lamT.ndim == 0:
        return float(lamT), float(lamR)
    return lamT, lamR


def sigma_k_radial(lamT, lamR, n, k):
    """sigma_k of the radial spectrum (lamT x (n-1), lamR)."""
    c2 = math.comb(n - 1, k)
    c1 = math.comb(n - 1, k - 1)
    lamT = np.asarray(lamT, dtype=float)
    return c2 * lamT ** k + c1 * lamT ** (k - 1) * np.asarray(lamR)


def ode_rhs(w, w1, r, prob):
    """w'' from the equation, solving sigma_k = N_k e^{2kw} for lamR.

    Requires lamT > 0 (radial ellipticity); on the cone boundary the
    inversion degenerates and a DegeneracyError is raised, which shooting
    treats as a reported outcome.
    """
    n, k = prob.n, prob.k
    lamT = w1 / r + 0.5 * w1 * w1
    if lamT <= LAMBDA_FLOOR:
        raise DegeneracyError(f"lamT = {lamT:.3e} at r = {r:.6g}")
    c2 = math.comb(n - 1, k)
    c1 = math.comb(n - 1, k - 1)
    lamR = (n_k(n, k) * math.exp(2 * k * w) - c2 * lamT ** k) \
        / (c1 * lamT ** (k - 1))
    return lamR + 0.5 * w1 * w1


def _postprocess(prob, r, w, w1=None):
    """Derived fields from a nodal profile: u, one-sided u', discrete
    eigenvalues, relative residual.  Annulus grids difference in t = ln r
    (uniform there), ball grids in r."""
    n, k = prob.n, prob.k
    u = np.exp(0.5 * (n - 2) * w)
    J = len(r) - 1
    u1_left = np.full(J + 1, np.nan)
    u1_right = np.full(J + 1, np.nan)
    u1_left[1:] = (u[1:] - u[:-1]) / (r[1:] - r[:-1])
    u1_right[:-1] = u1_left[1:]
    lamT = np.full(J + 1, np.nan)
    lamR = np.full(J + 1, np.nan)
    if isinstance(prob.domain, Annulus):
        t = np.log(r)
        h = (t[-1] - t[0]) / J
        wt = (w[2:] - w[:-2]) / (2 * h)
        wtt = (w[2:] - 2 * w[1:-1] + w[:-2]) / h ** 2
        rr = r[1:-1]
        lamT[1:-1] = (wt + 0.5 * wt * wt) / rr ** 2
        lamR[1:-1] = (wtt - wt - 0.5 * wt * wt) / rr ** 2
    else:
        h = (r[-1] - r[0]) / J
        wr = (w[2:] - w[:-2]) / (2 * h)
        wrr = (w[2:] - 2 * w[1:-1] + w[:-2]) / h ** 2
        lamT[1:-1], lamR[1:-1] = lambda_radial(None, wr, wrr, r[1:-1])
    residual = np.full(J + 1, np.nan)
    sig = sigma_k_radial(lamT[1:-1], lamR[1:-1], n, k)
    residual[1:-1] = np.abs(sig * np.exp(-2 * k * w[1:-1]) / n_k(n, k) - 1.0)
    return u, u1_left, u1_right, lamT, lamR, residual


def exact_ball(R, n, k=1, J=2000, epsilon=None):
    """Closed-form solution on the ball, tabulated with analytic
    eigenvalues, so the residual field certifies the formula rather than
    a difference stencil."""
    prob = RadialProblem(Ball(R), n, k, J=J, epsilon=epsilon)
    r = prob.grid()
    w = np.log(2 * R / (R ** 2 - r ** 2))
    w1 = 2 * r / (R ** 2 - r ** 2)
    u, u1_left, u1_right, _, _, _ = _postprocess(prob, r, w)
    lamT = 2 * R ** 2 / (R ** 2 - r ** 2) ** 2
    lamR = lamT.copy()
    sig = sigma_k_radial(lamT, lamR, n, k)
    residual = np.abs(sig * np.exp(-2 * k * w) / n_k(n, k) - 1.0)
    return RadialSolution(prob, r, w, u, u1_left, u1_right, lamT, lamR,
                          residual, w1=w1, method="exact")


def _seed_table(prob, which):
    """Expansion table for one boundary component.  Curvatures of the
    level sets of d, with the convention hess d = diag(-kap_i/(1-kap_i d)):
    ball and annulus-outer boundaries have kap = +1/R, annulus-inner has
    kap = -1/a (the collar curves away from the domain)."""
    n = prob.n
    if isinstance(prob.domain, Ball):
        kap = 1.0 / prob.domain.R
    elif which == "inner":
        kap = -1.0 / prob.domain.a
    else:
        kap = 1.0 / prob.domain.b
    bd = BoundaryData(n=n, k=prob.k, kappa=(kap,) * (n - 1))
    return expand(bd, order=prob.seeds_order, mu=prob.mu)


def shoot(prob, from_boundary="outer", mu=None, r_end=None):
    """Integrate the ODE from expansion Cauchy data at one boundary.

    from_boundary: "outer" (ball R or annulus b, integrating inward) or
    "inner" (annulus a, integrating outward).  Returns a RadialSolution
    restricted to the grid nodes actually reached, with outcome one of
    "completed", "degeneracy", "overflow".

    The integration runs in tau = ln d with d the distance to the seeded
    boundary: the boundary layer carries a strongly expanding mode (a
    seed perturbation of 1e-9 is O(0.1) by mid-domain), so resolving the
    layer logarithmically is what keeps the amplified truncation error
    below the seed bracketing error.
    """
    if mu is not None and mu != prob.mu:
        prob = RadialProblem(prob.domain, prob.n, prob.k, J=prob.J,
                             epsilon=prob.epsilon,
                             seed_order=prob.seed_order, mu=mu)
    if isinstance(prob.domain, Ball) and from_boundary != "outer":
        raise ValueError("a ball only blows up at its outer boundary")
    table = _seed_table(prob, from_boundary)
    eps = prob.eps
    grid = prob.grid()
    if from_boundary == "outer":
        r_bdry = (prob.domain.R if isinstance(prob.domain, Ball)
                  else prob.domain.b)
        sgn = -1.0   # r = r_bdry - d
        r_stop = grid[0] if r_end is None else r_end
    else:
        r_bdry = prob.domain.a
        sgn = 1.0    # r = r_bdry + d
        r_stop = grid[-1] if r_end is None else r_end
    d_stop = abs(r_stop - r_bdry)
    if not eps < d_stop:
        raise ValueError("r_end must lie strictly past the seed offset")
    W, W1, _ = evaluate_expansion(table, eps)
    w0 = float(W)
    v0 = float(eps * W1)   # v = dw/dtau = d * dw/dd
    n, k = prob.n, prob.k
    c2 = math.comb(n - 1, k)
    c1 = math.comb(n - 1, k - 1)
    N = n_k(n, k)

    def rhs(tau, y):
        d = math.exp(tau)
        r = r_bdry + sgn * d
        w, v = y
        lamT = sgn * v / (d * r) + 0.5 * (v / d) ** 2
        if lamT < 1e-14:
            lamT = 1e-14
        lamR = (N * math.exp(2 * k * min(w, 80.0)) - c2 * lamT ** k) \
            / (c1 * lamT ** (k - 1))
        return [v, d * d * lamR + v + 0.5 * v * v]

    def hit_cone(tau, y):
        # a trajectory leaving the cone stiffens without bound as
        # lamT -> 0 (the rhs divides by lamT^{k-1}) and stalls the
        # integrator near 1e-8, so the exit is declared at 1e-6; any
        # healthy trajectory keeps lamT well above that
        d = math.exp(tau)
        return sgn * y[1] / (d * (r_bdry + sgn * d)) \
            + 0.5 * (y[1] / d) ** 2 - 1e-6

    hit_cone.terminal = True

    def blow_up(tau, y):
        # solutions stay O(|ln d|); a shot past 20 is in the divergent
        # basin and would stall the integrator if allowed to run
        return abs(y[0]) - 20.0

    blow_up.terminal = True

    def blow_up_slope(tau, y):
        # v escapes through v^2/2 in finite tau, often before w moves far
        return abs(y[1]) - 100.0

    blow_up_slope.terminal = True

    d_grid = sgn * (grid - r_bdry)
    inside = (d_grid > eps * (1 + 1e-12)) & (d_grid < d_stop * (1 - 1e-12))
    t_eval = np.log(d_grid[inside])
    ivp = solve_ivp(rhs, (math.log(eps), math.log(d_stop)), [w0, v0],
                    method="DOP853", rtol=1e-13, atol=1e-15,
                    t_eval=np.sort(t_eval),
                    events=[hit_cone, blow_up, blow_up_slope])
    if ivp.status == 1:
        outcome = "degeneracy" if len(ivp.t_events[0]) else "overflow"
    elif ivp.status == 0:
        outcome = "completed"
    else:
        raise NumericalFailure(f"integrator failed: {ivp.message}")
    d_nodes = np.exp(ivp.t)
    r_nodes = r_bdry + sgn * d_nodes
    w_nodes = ivp.y[0]
    w1_nodes = sgn * ivp.y[1] / d_nodes   # back to dw/dr
    order = np.argsort(r_nodes)
    r_nodes, w_nodes, w1_nodes = (r_nodes[order], w_nodes[order],
                                  w1_nodes[order])
    if len(r_nodes) < 5:
        raise NumericalFailure(
            f"shot from {from_boundary} left the cone immediately "
            f"({outcome})")
    u, u1_left, u1_right, lamT, lamR, residual = \
        _postprocess_nonuniform(prob, r_nodes, w_nodes, w1_nodes)
    return RadialSolution(prob, r_nodes, w_nodes, u, u1_left, u1_right,
                          lamT, lamR, residual, w1=w1_nodes,
                          method="shoot", outcome=outcome)


def _postprocess_nonuniform(prob, r, w, w1):
    """Shot trajectories carry w' from the integrator; eigenvalues use it
    directly with a differenced w''."""
    n, k = prob.n, prob.k
    u = np.exp(0.5 * (n - 2) * w)
    J = len(r) - 1
    u1_left = np.full(J + 1, np.nan)
    u1_right = np.full(J + 1, np.nan)
    u1_left[1:] = (u[1:] - u[:-1]) / (r[1:] - r[:-1])
    u1_right[:-1] = u1_left[1:]
    w2 = np.gradient(w1, r)
    lamT, lamR = lambda_radial(None, w1, w2, r)
    sig = sigma_k_radial(lamT, lamR, n, k)
    residual = np.abs(sig * np.exp(-2 * k * w) / n_k(n, k) - 1.0)
    return u, u1_left, u1_right, lamT, lamR, residual


# -- the annulus scheme -------------------------------------------------------

def _scheme_parts(prob, r, h):
    """Constants of the t-uniform interior stencil."""
    n, k = prob.n, prob.k
    return {
        "c2": math.comb(n - 1, k),
        "c1": math.comb(n - 1, k - 1),
        "N": n_k(n, k),
        "rr2": r[1:-1] ** 2,
        "h": h,
    }


def _floor_profile(prob, parts, w_int):
    """Per-node eigenvalue floor for k >= 2.

    The clamp replaces sigma_k by its value at lamT = floor wherever the
    centered lamT falls below it.  At the kink node the centered stencil
    is genuinely outside the cone on every mesh, so the clamped equation
    is the one actually imposed there; choosing the floor from

        C1 floor^{k-1} lamR = N e^{2kw}  with  lamR = 2/(h r^2)

    makes that equation consistent with a Mobius-symmetric corner (whose
    one-sided slopes jump by exactly 2 in t = ln r), which is the kink
    curvature the grid can represent at a single node.  Larger floors
    splay the converged one-sided slopes outward by 1 - lamR* h r^2 / 2,
    an O(1) selection error, not a discretization error.  The second
    term caps the floor at a fraction of the lamT scale one cell from a
    kink, so the clamp can never engage on the steep boundary layers
    where the spectrum is healthy.
    """
    k = prob.k
    e2kw = np.exp(2 * k * w_int)
    adapt = (parts["N"] * e2kw * parts["rr2"] * parts["h"]
             / (2 * parts["c1"])) ** (1.0 / (k - 1))
    cap = 0.3 * (k * parts["N"] * e2kw * parts["h"]
                 / parts["c1"]) ** (1.0 / k)
    return np.maximum(LAMBDA_FLOOR, np.minimum(adapt, cap))


def _eval_F(prob, parts, w):
    """Residual F_j and the clamped eigenvalues at interior nodes."""
    k = prob.k
    h = parts["h"]
    Dc = (w[2:] - w[:-2]) / (2 * h)
    D2 = (w[2:] - 2 * w[1:-1] + w[:-2]) / h ** 2
    rr2 = parts["rr2"]
    lamT = (Dc + 0.5 * Dc * Dc) / rr2
    lamR = (D2 - Dc - 0.5 * Dc * Dc) / rr2
    if k == 1:
        lamTc = lamT
        clamped = np.zeros(len(lamT), dtype=bool)
    else:
        floor = _floor_profile(prob, parts, w[1:-1])
        lamTc = np.maximum(lamT, floor)
        clamped = lamT < floor
    sig = parts["c2"] * lamTc ** k + parts["c1"] * lamTc ** (k - 1) * lamR
    F = sig - parts["N"] * np.exp(2 * k * w[1:-1])
    return F, Dc, lamT, lamTc, lamR, clamped


def _newton_annulus(prob, r, w, h, tol, max_iters):
    """Damped Newton on the tridiagonal system; returns (w, iters, ok).

    The Jacobian drops the floor's own w-dependence at clamped nodes: the
    kept diagonal term is O(e^{2kw}/h), the omitted one O(e^{2kw}), so
    the step direction is asymptotically exact.
    """
    k = prob.k
    parts = _scheme_parts(prob, r, h)
    rr2 = parts["rr2"]
    scale = np.exp(-2 * k * w[1:-1])  # row scaling frozen at the first state
    for it in range(1, max_iters + 1):
        F, Dc, lamT, lamTc, lamR, clamped = _eval_F(prob, parts, w)
        dsig_dT = (k * parts["c2"] * lamTc ** (k - 1)
                   + (k - 1) * parts["c1"]
                   * lamTc ** max(k - 2, 0) * lamR) * (~clamped)
        dsig_dR = parts["c1"] * lamTc ** (k - 1)
        dT = (1.0 + Dc) / rr2
        diag = dsig_dR * (-2.0 / (h ** 2 * rr2)) \
            - 2 * k * parts["N"] * np.exp(2 * k * w[1:-1])
        upper = dsig_dT * dT / (2 * h) \
            + dsig_dR * (1.0 / (h ** 2 * rr2) - dT / (2 * h))
        lower = -dsig_dT * dT / (2 * h) \
            + dsig_dR * (1.0 / (h ** 2 * rr2) + dT / (2 * h))
        m = len(F)
        ab = np.zeros((3, m))
        ab[0, 1:] = upper[:-1] * scale[:-1]
        ab[1, :] = diag * scale
        ab[2, :-1] = lower[1:] * scale[1:]
        try:
            delta = solve_banded((1, 1), ab, -F * scale)
        except np.linalg.LinAlgError:
            return w, it, False
        alpha = 1.0
        base = np.max(np.abs(F * scale))
        for _ in range(14):
            w_try = w.copy()
            w_try[1:-1] = w[1:-1] + alpha * delta
            F_try, *_ = _eval_F(prob, parts, w_try)
            if np.max(np.abs(F_try * scale)) < base * (1 - 1e-4 * alpha) \
                    or np.max(np.abs(alpha * delta)) < 1e-15:
                break
            alpha *= 0.5
        else:
            return w, it, False
        w = w_try
        step = np.max(np.abs(alpha * delta))
        if step < tol:
            return w, it, True
    return w, max_iters, False


def _gs_sweeps(prob, r, w, h, tol, max_sweeps, node_tol=1e-12):
    """Nonlinear Gauss-Seidel: at each node solve the scalar relation for
    w_j given its neighbors.  The map is strictly decreasing in w_j, so a
    safeguarded Newton with expanding bisection bracket always lands.
    Slow but unconditionally monotone; used as fallback and as the
    reference method for comparison tests."""
    k = prob.k
    parts = _scheme_parts(prob, r, h)
    rr2 = parts["rr2"]
    c1, c2, N = parts["c1"], parts["c2"], parts["N"]

    def node_F(j, x):
        wm, wp = w[j - 1], w[j + 1]
        Dc = (wp - wm) / (2 * h)
        D2 = (wp - 2 * x + wm) / h ** 2
        lamT = (Dc + 0.5 * Dc * Dc) / rr2[j - 1]
        lamR = (D2 - Dc - 0.5 * Dc * Dc) / rr2[j - 1]
        if k == 1:
            lamTc = lamT
        else:
            e2kw = math.exp(2 * k * x)
            adapt = (N * e2kw * rr2[j - 1] * h / (2 * c1)) ** (1.0 / (k - 1))
            cap = 0.3 * (k * N * e2kw * h / c1) ** (1.0 / k)
            lamTc = max(lamT, max(LAMBDA_FLOOR, min(adapt, cap)))
        sig = c2 * lamTc ** k + c1 * lamTc ** (k - 1) * lamR
        dF = c1 * lamTc ** (k - 1) * (-2.0 / h ** 2) / rr2[j - 1] \
            - 2 * k * N * math.exp(2 * k * x)
        return sig - N * math.exp(2 * k * x), dF

    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        biggest = 0.0
        for j in range(1, len(w) - 1):
            x = w[j]
            fx, dfx = node_F(j, x)
            lo, hi = None, None
            for _ in range(60):
                if abs(fx) <= 1e-13 * (1.0 + N * math.exp(2 * k * x)):
                    break
                if fx > 0:
                    lo = x
                else:
                    hi = x
                step = -fx / dfx if dfx < 0 else math.copysign(0.1, fx)
                x_new = x + step
                if (lo is not None and x_new <= lo) \
                        or (hi is not None and x_new >= hi):
                    if lo is None:
                        x_new = x - 0.5
                    elif hi is None:
                        x_new = x + 0.5
                    else:
                        x_new = 0.5 * (lo + hi)
                if abs(x_new - x) < node_tol:
                    x = x_new
                    break
                x = x_new
                fx, dfx = node_F(j, x)
            biggest = max(biggest, abs(x - w[j]))
            w[j] = x
        if biggest < tol:
            return w, sweeps, True
    return w, sweeps, False


def solve_annulus(prob, method="newton", tol=1e-11, max_iters=80,
                  max_sweeps=20000, max_flagged=3):
    """Viscosity solution on the annulus with expansion Dirichlet seeds.

    method "newton" (default) solves the tridiagonal linearization with
    damping and mesh continuation, falling back to Gauss-Seidel sweeps if
    a step stalls; "gauss-seidel" runs the monotone sweep solver alone
    (much slower, kept for cross-checks on coarse grids).  Convergence is
    max nodal update < tol.  For k >= 2 the kink node converges with its
    smallest eigenvalue held at the mesh floor (see _floor_profile) and
    is flagged; flags must form a small cluster around a single cell,
    anything else is reported as a numerical failure.
    """
    if not isinstance(prob.domain, Annulus):
        raise ValueError("solve_annulus needs an annulus domain")
    a, b = prob.domain.a, prob.domain.b
    r = prob.grid()
    t = np.log(r)
    h = (t[-1] - t[0]) / prob.J
    table_in = _seed_table(prob, "inner")
    table_out = _seed_table(prob, "outer")
    d_in = float(r[0] - a)
    d_out = float(b - r[-1])
    W_in, _, _ = evaluate_expansion(table_in, d_in)
    W_out, _, _ = evaluate_expansion(table_out, d_out)

    # V-shaped initial state: the two one-boundary models cross exactly at
    # sqrt(ab) and already carry the right collar asymptotics
    with np.errstate(divide="ignore"):
        w_a = np.log(2 * a / (r ** 2 - a ** 2))
        w_b = np.log(2 * b / (b ** 2 - r ** 2))
    w = np.maximum(w_a, w_b)
    w[0], w[-1] = float(W_in), float(W_out)

    iters = 0
    if method == "gauss-seidel":
        w, sweeps, ok = _gs_sweeps(prob, r, w, h, tol, max_sweeps)
        iters = sweeps
        if not ok:
            raise NumericalFailure(
                f"Gauss-Seidel did not reach tol={tol} in {sweeps} sweeps")
    elif method == "newton":
        # mesh continuation: solve coarse, interpolate in t, polish
        levels = [prob.J]
        while levels[0] > 256 and levels[0] % 2 == 0:
            levels.insert(0, levels[0] // 2)
        w_level = None
        for J_c in levels:
            sub = RadialProblem(prob.domain, prob.n, prob.k, J=J_c,
                                epsilon=prob.epsilon,
                                seed_order=prob.seed_order, mu=prob.mu)
            r_c = sub.grid()
            t_c = np.log(r_c)
            h_c = (t_c[-1] - t_c[0]) / J_c
            if w_level is None:
                w_c = np.maximum(np.log(2 * a / (r_c ** 2 - a ** 2)),
                                 np.log(2 * b / (b ** 2 - r_c ** 2)))
            else:
                w_c = np.interp(t_c, w_level[0], w_level[1])
            W0, _, _ = evaluate_expansion(table_in, float(r_c[0] - a))
            W1_, _, _ = evaluate_expansion(table_out, float(b - r_c[-1]))
            w_c[0], w_c[-1] = float(W0), float(W1_)
            w_c, its, ok = _newton_annulus(sub, r_c, w_c, h_c, tol,
                                           max_iters)
            iters += its
            if not ok:
                w_c, sweeps, ok = _gs_sweeps(sub, r_c, w_c, h_c,
                                             max(tol, 1e-10), 2000)
                iters += sweeps
                if not ok:
                    w_c, its, ok = _newton_annulus(sub, r_c, w_c, h_c,
                                                   tol, max_iters)
                    iters += its
            if not ok:
                raise NumericalFailure(
                    f"annulus solve stalled at J={J_c} after {iters} "
                    "combined iterations")
            w_level = (t_c, w_c)
        w = w_level[1]
    else:
        raise ValueError(f"unknown method {method!r}")

    parts = _scheme_parts(prob, r, h)
    _, _, lamT_s, _, _, clamped = _eval_F(prob, parts, w)
    flagged = tuple(int(j) for j in np.nonzero(clamped)[0] + 1)
    if prob.k >= 2 and len(flagged) > max_flagged:
        raise NumericalFailure(
            f"{len(flagged)} nodes below the eigenvalue floor "
            f"(expected a cluster of <= {max_flagged} at the kink): "
            f"{flagged[:8]}...")
    if prob.k >= 2 and flagged:
        spread = max(flagged) - min(flagged)
        if spread > max_flagged:
            raise NumericalFailure(
                f"clamped nodes not clustered: indices {flagged}")

    u, u1_left, u1_right, lamT, lamR, residual = _postprocess(prob, r, w)
    sol = RadialSolution(prob, r, w, u, u1_left, u1_right, lamT, lamR,
                         residual, corner=None, flagged=flagged,
                         method=method, iterations=iters)
    try:
        sol.corner = corner_metrics(sol)
    except DiagnosticError:
        sol.corner = {"found": False, "reason": "fit window underresolved"}
    return sol


def kelvin_reflect(sol, a=None, b=None):
    """Pullback of the solution under the inversion x -> ab x / |x|^2.

    The annulus grid is symmetric in t = ln r about ln sqrt(ab), so the
    reflection is an exact index reversal: w*(r_j) = w(r_{J-j}) +
    ln(ab) - 2 t_j, and u* = (ab/r^2)^{(n-2)/2} u(ab/r).
    """
    dom = sol.problem.domain
    if not isinstance(dom, Annulus):
        raise ValueError("Kelvin reflection preserves only the annulus")
    if a is None:
        a = dom.a
    if b is None:
        b = dom.b
    if not (math.isclose(a, dom.a) and math.isclose(b, dom.b)):
        raise ValueError("reflection radii must match the solution domain")
    t = np.log(sol.r)
    w_ref = sol.w[::-1] + math.log(a * b) - 2.0 * t
    u, u1_left, u1_right, lamT, lamR, residual = \
        _postprocess(sol.problem, sol.r, w_ref)
    return RadialSolution(sol.problem, sol.r.copy(), w_ref, u, u1_left,
                          u1_right, lamT, lamR, residual,
                          flagged=tuple(len(sol.r) - 1 - j
                                        for j in sol.flagged),
                          method=sol.method + "+kelvin",
                          iterations=sol.iterations)


# -- corner diagnostics -------------------------------------------------------

def _power_law_fit(s, y, attract=0.5):
    """Fit y = L + C s^alpha; returns (L, C, alpha)."""
    L0 = y[0] - (y[1] - y[0])
    C0 = (y[-1] - y[0]) / max(s[-1] ** attract, 1e-30)
    p0 = (L0, C0 if C0 != 0 else 1e-3, attract)
    popt, _ = curve_fit(lambda x, L, C, al: L + C * x ** al, s, y, p0=p0,
                        bounds=([-np.inf, -np.inf, 0.05],
                                [np.inf, np.inf, 1.2]),
                        maxfev=20000)
    return tuple(float(v) for v in popt)


def _plain_loglog_slope(s, y, limit):
    """The fixed-limit estimator: LS slope of log|y - limit| vs log s.
    Biased by O(h^{1/k}) through the limit value; reported for reference."""
    z = np.abs(y - limit)
    good = z > 0
    if np.sum(good) < 3:
        return math.nan
    A = np.vstack([np.log(s[good]), np.ones(np.sum(good))]).T
    slope, _ = np.linalg.lstsq(A, np.log(z[good]), rcond=None)[0]
    return float(slope)


def corner_metrics(sol, rel_threshold=0.05, edge_margin=50,
                   window_cells=(2, 20), min_points=8):
    """Locate the gradient kink and estimate the Holder exponent of u'.

    The kink is located by the argmax over interior nodes (an edge margin
    excludes the boundary layers, where one-sided differences disagree
    for mesh reasons) of |u'_right - u'_left| / (|u'_left| + |u'_right|),
    snapped to the largest absolute mismatch within two cells: the vertex
    node converges a hair below the wedge of the two branches, which
    makes the relative ratio peak at a neighbor while the absolute jump
    still peaks at the vertex itself.  found requires the relative ratio
    to clear rel_threshold AND the absolute mismatch to clear the natural
    slope scale u/r times rel_threshold; the second gate rejects smooth
    interior extrema, where the relative ratio tends to 1 because the
    one-sided slopes straddle zero but the mismatch itself is O(h).  On
    each side, centered u' at distances s in [2h, 20h] from the kink (one
    decade, starting two cells away so no stencil touches the vertex
    node) is fit to L + C s^alpha; alpha is the exponent and the
    one-sided limits L give a vertex-free jump estimate.
    """
    r = np.asarray(sol.r)
    u = np.asarray(sol.u)
    J = len(r) - 1
    margin = min(edge_margin, max(2, J // 8))
    j_lo, j_hi = margin, J - margin
    if j_hi - j_lo < 5:
        raise DiagnosticError("grid too small for a corner search window")
    mism = sol.u1_right[j_lo:j_hi] - sol.u1_left[j_lo:j_hi]
    denom = (np.abs(sol.u1_left[j_lo:j_hi])
             + np.abs(sol.u1_right[j_lo:j_hi]) + 1e-300)
    rel = np.abs(mism) / denom
    strong = (np.abs(mism) * r[j_lo:j_hi]
              >= rel_threshold * np.abs(u[j_lo:j_hi]))
    score = np.where(strong, rel, 0.0)
    if score.max() > 0.0:
        jc = int(np.argmax(score)) + j_lo
    else:
        jc = int(np.argmax(rel)) + j_lo
    near = slice(max(jc - 2, j_lo), min(jc + 3, j_hi))
    jc = int(np.argmax(np.abs(mism[near.start - j_lo:near.stop - j_lo]))
             ) + near.start
    record = {
        "found": bool(rel[jc - j_lo] >= rel_threshold
                      and strong[jc - j_lo]),
        "max_rel_mismatch": float(rel[jc - j_lo]),
        "rel_threshold": rel_threshold,
    }
    if not record["found"]:
        return record
    r_star = float(r[jc])
    h_loc = 0.5 * float(r[jc + 1] - r[jc - 1])
    record.update({
        "r_star": r_star,
        "node": jc,
        "jump_raw": float(sol.u1_right[jc] - sol.u1_left[jc]),
        "cell": h_loc,
    })

    uc = (u[2:] - u[:-2]) / (r[2:] - r[:-2])  # centered u' at node i+1
    fits = {}
    for side, sign in (("left", -1), ("right", +1)):
        s_all, y_all = [], []
        i = jc + sign * int(window_cells[0])
        while 0 < i < J:
            s = sign * (r[i] - r_star)
            if s > window_cells[1] * h_loc:
                break
            s_all.append(s)
            y_all.append(uc[i - 1])
            i += sign
        if len(s_all) < min_points:
            raise DiagnosticError(
                f"only {len(s_all)} points in the {side} fit window; "
                "refine the grid")
        s_arr = np.array(s_all)
        y_arr = np.array(y_all)
        order = np.argsort(s_arr)
        s_arr, y_arr = s_arr[order], y_arr[order]
        try:
            L, C, alpha = _power_law_fit(s_arr, y_arr)
        except RuntimeError as exc:
            raise DiagnosticError(f"{side} power-law fit failed: {exc}")
        onesided = sol.u1_left[jc] if side == "left" else sol.u1_right[jc]
        fits[side] = {
            "limit": L,
            "amplitude": C,
            "exponent": alpha,
            "n_points": len(s_arr),
            "plain_slope": _plain_loglog_slope(s_arr, y_arr, onesided),
        }
    record.update({
        "left": fits["left"],
        "right": fits["right"],
        "holder_exponent": 0.5 * (fits["left"]["exponent"]
                                  + fits["right"]["exponent"]),
        "jump": float(fits["right"]["limit"] - fits["left"]["limit"]),
        "window_cells": list(window_cells),
    })
    return record


def xi_ode_residual(sol, table, max_p=None, window=None, min_points=8):
    """Collar remainder diagnostic sup |(d^{n+2} xi')'| / d^{n+1/2}.

    xi = d^{-n} (w - W) with W evaluated from the table with its free
    order-n slot removed (pass max_p to truncate harder).  Small output
    certifies the collar remainder rate; a wrong low-order coefficient in
    the table makes it diverge like d^{1/2-n}.  Ball solutions only.

    The default window stops at 0.15 R: past that, the genuine next-order
    tail of a healthy table grows like d^{5/2} relative to the rate being
    certified and would dominate the sup, while every coefficient defect
    the diagnostic exists to catch blows up at the small-d end.
    """
    prob = sol.problem
    if not isinstance(prob.domain, Ball):
        raise ValueError("the collar diagnostic is set up for balls")
    R = prob.domain.R
    d = R - np.asarray(sol.r)
    eps = prob.eps
    if window is None:
        window = (max(10 * eps, 3 * (d.max() - d.min()) / len(d)), 0.15 * R)
    lo, hi = window
    if lo < 5 * eps:
        raise DiagnosticError(
            f"window start {lo:.3g} too close to the offset {eps:.3g}; "
            "seed error contaminates xi there")
    order = np.argsort(d)
    d_s = d[order]
    w_s = np.asarray(sol.w)[order]
    keep = (d_s >= lo) & (d_s <= hi)
    # widen by one node each side so centered stencils cover the window
    idx = np.nonzero(keep)[0]
    if len(idx) < min_points:
        raise DiagnosticError("too few nodes in the collar window")
    i0, i1 = max(idx[0] - 2, 0), min(idx[-1] + 3, len(d_s))
    d_w = d_s[i0:i1]
    W, _, _ = evaluate_expansion(table, d_w, max_p=max_p, drop_mu_slot=True)
    n = prob.n
    xi = (w_s[i0:i1] - W) / d_w ** n
    dxi = (xi[2:] - xi[:-2]) / (d_w[2:] - d_w[:-2])
    flux = d_w[1:-1] ** (n + 2) * dxi
    dflux = (flux[2:] - flux[:-2]) / (d_w[3:-1] - d_w[1:-3])
    dd = d_w[2:-2]
    inside = (dd >= lo) & (dd <= hi)
    measure = np.abs(dflux[inside]) / dd[inside] ** (n + 0.5)
    return float(np.max(measure))


# -- serialization ------------------------------------------------------------

CSV_COLUMNS = ("r", "w", "u", "u1_left", "u1_right", "lamT", "lamR",
               "residual")


def solution_to_csv(sol, path):
    """Profile as RFC-4180 CSV with round-trip float formatting."""
    cols = {
        "r": sol.r, "w": sol.w, "u": sol.u, "u1_left": sol.u1_left,
        "u1_right": sol.u1_right, "lamT": sol.lamT, "lamR": sol.lamR,
        "residual": sol.residual,
    }
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for i in range(len(sol.r)):
            writer.writerow([f"{float(cols[c][i]):.17g}"
                             for c in CSV_COLUMNS])


def corner_report_json(sol):
    """Corner record plus run metadata, deterministically serialized."""
    prob = sol.problem
    dom = prob.domain
    payload = {
        "n": prob.n,
        "k": prob.k,
        "J": prob.J,
        "epsilon": prob.eps,
        "domain": ({"type": "ball", "R": dom.R}
                   if isinstance(dom, Ball)
                   else {"type": "annulus", "a": dom.a, "b": dom.b}),
        "method": sol.method,
        "iterations": sol.iterations,
        "flagged_nodes": list(sol.flagged),
        "residual_max_smooth": sol.residual_max(),
        "corner": sol.corner if sol.corner is not None
        else {"found": False},
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"
