"""Order-by-order boundary expansion of the blow-up profile.

Setting.  Near the boundary of a domain with distance function d, write the
solution of sigma_k(lambda(-S(w))) = N_k e^{2kw} as w = -ln d + V(d), where
V = sum c[p][q] d^p (ln d)^q is the regular part and

    S(w) = -hess(w) + grad(w) x grad(w) - |grad(w)|^2/2 * I.

For boundary data whose principal curvatures kappa_1..kappa_{n-1} are
covariantly constant, every tangential-derivative term drops and -d^2 S(w)
is diagonal in the boundary frame with scalar series entries.  With
P = d V' and Q = d^2 V'' these entries are, exactly,

    tangential i:  1/2 + g_i - P - P*g_i + P^2/2,   g_i = kappa_i d/(1 - kappa_i d)
    normal:        1/2 + P + Q - P^2/2

(the 1/2's are the half-space baseline; g_i carries the curvature of the
level sets of d through hess(d) = diag(-kappa_i/(1 - kappa_i d), ..., 0)).

The operator residual is

    G(V) = sigma_k(diagonal entries) - N_k exp(2k V),

where the d^{2k} e^{2kw} right-hand side collapses to exp(2kV) because
d^{2k} e^{-2k ln d} = 1.  Solving G = 0 order by order gives the linear
recursion (with s = 2^{-(k-1)} binom(n-1, k-1))

    s * [ (m+1)(m-n) c[m][q] + (2m-n+1)(q+1) c[m][q+1]
          + (q+1)(q+2) c[m][q+2] ]  =  -a[m][q],

a[m][q] being the residual coefficient of the previous partial sum.  The
pivot (m+1)(m-n) dies exactly at m = n: there the d^n ln d coefficient is
forced,

    c[n][1] = -a[n][0] / (s (n+1)),

and the d^n coefficient mu = c[n][0] is a free parameter.  c[n][1] is the
obstruction: the expansion is log-free through any order iff it vanishes,
which happens for instance for umbilic data (all kappa_i equal), where the
whole profile is the closed form V = -ln(1 - kappa d / 2).
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneracyError
from .series import (GradedSeries, add, exp_series, geometric_expand, mul,
                     scaled_derivative, scaled_second_derivative)
from .symfun import in_gamma, n_k

#: discovery threshold for the log degree N_m: residual coefficients at or
#: below this magnitude are treated as zero when deciding how many log slots
#: an order carries.
LOG_THRESHOLD = 1e-11


@dataclass(frozen=True)
class BoundaryData:
    """Dimension, operator index, and principal curvatures of the boundary.

    kappa follows the sign convention of hess(d) = diag(-kappa_i/(1-kappa_i d)):
    the unit sphere enclosing the domain (a ball of radius R) has kappa = 1/R,
    an inner spherical boundary component of radius a (domain outside) has
    kappa = -1/a.
    """

    n: int
    k: int
    kappa: tuple

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("dimension n must be >= 3")
        if not 1 <= self.k <= self.n:
            raise ValueError(f"k={self.k} out of range 1..{self.n}")
        kap = tuple(float(x) for x in self.kappa)
        if len(kap) != self.n - 1:
            raise ValueError(f"expected {self.n - 1} principal curvatures, "
                             f"got {len(kap)}")
        if not all(math.isfinite(x) for x in kap):
            raise ValueError("principal curvatures must be finite")
        object.__setattr__(self, "kappa", kap)

    @property
    def umbilic(self):
        return all(x == self.kappa[0] for x in self.kappa)


@dataclass
class ExpansionTable:
    """Computed coefficients of ln(d * u^{2/(n-2)}) = V(d).

    coeffs maps (p, q) -> c[p][q] for 1 <= p <= order.  log_degree records
    the discovered highest log power N_p at each order (0 when log-free).
    c_n1 is the obstruction coefficient, mu the free d^n slot.  formal marks
    tables built from curvature data not known to bound an actual
    hypersurface (any non-umbilic input here); the recursion itself is
    indifferent to this.
    """

    n: int
    k: int
    kappa: tuple
    mu: float
    order: int
    coeffs: dict
    c_n1: float
    residual_order: int
    residual_max: float
    log_degree: dict = field(default_factory=dict)
    formal: bool = False

    def coeff(self, p, q):
        if p > self.order:
            raise ValueError(f"order {p} beyond table truncation {self.order}")
        return self.coeffs.get((p, q), 0.0)


def _check_leading_admissible(bd):
    # Leading diagonal of -d^2 S at d -> 0 is (1/2, ..., 1/2); a Gamma_k
    # failure here cannot happen for real curvature data but the error path
    # is kept explicit for defensive callers.
    lead = np.full(bd.n, 0.5)
    if not in_gamma(bd.k, lead, 0.0):
        raise DegeneracyError("leading diagonal left Gamma_k")


def neg_d2_S(v, bd):
    """Diagonal entries of -d^2 S(-ln d + V) as graded series.

    v is the regular part V.  Entries 0..n-2 are tangential, entry n-1 is
    the normal one.  Off-diagonal entries vanish identically in the
    covariantly constant curvature class, so only the diagonal is built.
    """
    order = v.order
    half = GradedSeries.constant(0.5, order)
    P = scaled_derivative(v)
    Q = scaled_second_derivative(v)
    P2h = mul(P, P) * 0.5
    normal = add(add(half, P), add(Q, -P2h))
    entries = []
    for kap in bd.kappa:
        g = geometric_expand(kap, order)
        tang = add(add(half, g), add(-P, add(-mul(P, g), P2h)))
        entries.append(tang)
    entries.append(normal)
    return entries


def G_series(v, bd):
    """Operator residual G(V) = sigma_k(diag) - N_k exp(2k V) as a series."""
    entries = neg_d2_S(v, bd)
    order = v.order
    # elementary symmetric recurrence lifted to series arithmetic
    e = [GradedSeries.one(order)] + [GradedSeries.zero(order)] * bd.k
    for s in entries:
        top = bd.k
        for j in range(top, 0, -1):
            e[j] = add(e[j], mul(s, e[j - 1]))
    rhs = mul(exp_series(v * (2.0 * bd.k)), n_k(bd.n, bd.k))
    return e[bd.k] - rhs


def _linear_scale(bd):
    # s = sigma_{k-1} at (1/2,...,1/2) with one entry deleted: the common
    # gradient of sigma_k at the half-space state.
    return math.comb(bd.n - 1, bd.k - 1) / 2.0 ** (bd.k - 1)


def solve_order(m, residual, bd):
    """Solve one regular order of the recursion (m != n).

    residual maps q -> a[m][q], the coefficients of d^m ln^q in G of the
    partial sum through order m-1.  Returns q -> c[m][q], solved downward
    from the top log degree with slots above it zero.  The order-n pivot is
    degenerate and must go through the branch in expand().
    """
    if m == bd.n:
        raise ValueError("order m = n is degenerate; expand() handles it")
    s = _linear_scale(bd)
    pivot = (m + 1) * (m - bd.n)
    qmax = max((q for q, a in residual.items() if a != 0.0), default=-1)
    c = {}
    for q in range(qmax, -1, -1):
        a = residual.get(q, 0.0)
        rhs = -a / s
        rhs -= (2 * m - bd.n + 1) * (q + 1) * c.get(q + 1, 0.0)
        rhs -= (q + 1) * (q + 2) * c.get(q + 2, 0.0)
        c[q] = rhs / pivot
    return {q: val for q, val in c.items() if val != 0.0}


def _solve_order_n(residual, bd, mu):
    """Degenerate order: the pivot (n+1)(m-n) vanishes, so the d^n ln^{q+1}
    slot is forced by the d^n ln^q residual and the d^n slot is free (mu)."""
    s = _linear_scale(bd)
    n = bd.n
    qmax = max((q for q, a in residual.items() if a != 0.0), default=-1)
    c = {}
    for q in range(qmax, -1, -1):
        a = residual.get(q, 0.0)
        rhs = -a / s - (q + 1) * (q + 2) * c.get(q + 2, 0.0)
        c[q + 1] = rhs / ((n + 1) * (q + 1))
    c[0] = mu
    return {q: val for q, val in c.items() if val != 0.0 or q == 0}


def expand(bd, order=None, mu=0.0, log_threshold=LOG_THRESHOLD):
    """Run the recursion up to the truncation order and return the table.

    order defaults to 2n + 2 so the obstruction and several post-log orders
    are resolved.  mu is the free d^n coefficient.  At each order, the log
    degree N_m is discovered from the residual: the highest q whose
    coefficient exceeds log_threshold in magnitude.
    """
    if order is None:
        order = 2 * bd.n + 2
    if order < 1:
        raise ValueError("order must be >= 1")
    if not math.isfinite(mu):
        raise ValueError("mu must be finite")
    _check_leading_admissible(bd)

    v = GradedSeries.zero(order)
    coeffs = {}
    log_degree = {}
    c_n1 = 0.0
    for m in range(1, order + 1):
        g = G_series(v, bd)
        residual = {q: g.coeff(m, q) for (p, q) in g.coeffs if p == m}
        residual = {q: a for q, a in residual.items()
                    if abs(a) > log_threshold}
        if m == bd.n:
            new = _solve_order_n(residual, bd, mu)
            c_n1 = new.get(1, 0.0)
        else:
            new = solve_order(m, residual, bd)
        log_degree[m] = max((q for q, c in new.items() if c != 0.0), default=0)
        for q, c in new.items():
            if c != 0.0:
                coeffs[(m, q)] = c
                v = add(v, GradedSeries.monomial(order, m, q, c))

    g = G_series(v, bd)
    residual_max = max((abs(c) for c in g.coeffs.values()), default=0.0)
    return ExpansionTable(
        n=bd.n, k=bd.k, kappa=bd.kappa, mu=mu, order=order, coeffs=coeffs,
        c_n1=c_n1, residual_order=order, residual_max=residual_max,
        log_degree=log_degree, formal=not bd.umbilic)


def ball_oracle(R, n, order, k=1):
    """Closed-form expansion table for the ball of radius R.

    The radial blow-up profile of the ball satisfies d * u^{2/(n-2)} =
    1/(1 - d/(2R)) exactly, so ln(d u^{2/(n-2)}) = sum_p (d/(2R))^p / p:
    c[p][0] = 1/(p (2R)^p), no log terms, zero obstruction.  Valid for every
    operator index; k only labels the table.  Used as an independent oracle
    against the recursion engine.
    """
    if R <= 0:
        raise ValueError("R must be positive")
    coeffs = {}
    for p in range(1, order + 1):
        coeffs[(p, 0)] = 1.0 / (p * (2.0 * R) ** p)
    mu = coeffs.get((n, 0), 0.0)
    return ExpansionTable(
        n=n, k=k, kappa=(1.0 / R,) * (n - 1), mu=mu, order=order,
        coeffs=coeffs, c_n1=0.0, residual_order=order, residual_max=0.0,
        log_degree={p: 0 for p in range(1, order + 1)}, formal=False)


def evaluate_expansion(table, d, mu=None, max_p=None, drop_mu_slot=False):
    """Evaluate W(d) = -ln d + V(d) and its first two d-derivatives.

    d may be a scalar or an array of positive values.  mu overrides the
    (n, 0) coefficient; drop_mu_slot removes it entirely (used by the decay
    diagnostics); max_p truncates the table harder than stored.  Returns
    (W, W', W'') with the -ln d singularity included analytically.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("evaluation requires d > 0")
    cutoff = table.order if max_p is None else min(max_p, table.order)
    ln = np.log(d)
    W = -ln
    W1 = -1.0 / d
    W2 = 1.0 / d ** 2
    for (p, q), c in table.coeffs.items():
        if p > cutoff:
            continue
        if p == table.n and q == 0:
            if drop_mu_slot:
                continue
            if mu is not None:
                c = mu
        lnq = ln ** q
        lnq1 = ln ** (q - 1) if q >= 1 else 0.0
        lnq2 = ln ** (q - 2) if q >= 2 else 0.0
        W = W + c * d ** p * lnq
        W1 = W1 + c * d ** (p - 1) * (p * lnq + q * lnq1)
        W2 = W2 + c * d ** (p - 2) * (p * (p - 1) * lnq
                                      + q * (2 * p - 1) * lnq1
                                      + q * (q - 1) * lnq2)
    if mu is not None and (table.n, 0) not in table.coeffs and not drop_mu_slot \
            and table.n <= cutoff:
        p = table.n
        W = W + mu * d ** p
        W1 = W1 + mu * p * d ** (p - 1)
        W2 = W2 + mu * p * (p - 1) * d ** (p - 2)
    return W, W1, W2


# -- serialization ----------------------------------------------------------

def table_to_json(table):
    """Serialize a table to the stable JSON schema (sorted, deterministic)."""
    obj = {
        "n": table.n,
        "k": table.k,
        "kappa": list(table.kappa),
        "mu": table.mu,
        "order": table.order,
        "coefficients": [
            {"p": p, "q": q, "value": c}
            for (p, q), c in sorted(table.coeffs.items())
        ],
        "c_n1": table.c_n1,
        "residual_order": table.residual_order,
        "residual_max": table.residual_max,
        "log_degree": {str(p): q for p, q in sorted(table.log_degree.items())},
        "formal": table.formal,
    }
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def table_from_json(text):
    obj = json.loads(text)
    coeffs = {(int(e["p"]), int(e["q"])): float(e["value"])
              for e in obj["coefficients"]}
    return ExpansionTable(
        n=int(obj["n"]), k=int(obj["k"]), kappa=tuple(obj["kappa"]),
        mu=float(obj["mu"]), order=int(obj["order"]), coeffs=coeffs,
        c_n1=float(obj["c_n1"]), residual_order=int(obj["residual_order"]),
        residual_max=float(obj.get("residual_max", 0.0)),
        log_degree={int(p): int(q)
                    for p, q in obj.get("log_degree", {}).items()},
        formal=bool(obj.get("formal", False)))
