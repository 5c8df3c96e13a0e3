"""Truncated graded series in a distance variable d with ln d factors.

A GradedSeries represents

    sum over 0 <= p <= order, q >= 0  of  c[p][q] * d^p * (ln d)^q

with double-precision coefficients, truncated in the power p at `order` and
structurally unbounded in the log degree q (in practice the expansion engine
discovers a finite log degree at each power and the dictionaries stay tiny).
This is the arithmetic substrate for the boundary expansions: the regular
part of the blow-up profile, its scaled distance derivatives, the diagonal
entries of the conformal Hessian, and the operator residual all live here.

Arithmetic follows the usual truncated-ring rules: addition is slotwise, the
product is the Cauchy product in d and polynomial product in ln d, truncated
to the smaller operand order.  Coefficients that come out exactly 0.0 are not
stored; optional pruning of tiny coefficients is available but never applied
implicitly, so no retained coefficient is ever altered.

A quick tour::

    >>> d = GradedSeries.monomial(6, 1, 0)        # the series "d"
    >>> dln = GradedSeries.monomial(6, 1, 1)      # the series "d ln d"
    >>> (d + dln).coeff(1, 0)
    1.0
    >>> mul(dln, dln).coeff(2, 2)
    1.0
    >>> exp_series(d).coeff(3, 0)                 # 1/3!
    0.16666666666666666
    >>> geometric_expand(2.0, 4).coeff(3, 0)      # (2d)^3 term of 2d/(1-2d)
    8.0
"""

import math


class GradedSeries:
    """Truncated element of R[[d]][ln d]; immutable by convention."""

    __slots__ = ("order", "coeffs")

    def __init__(self, order, coeffs=None):
        if order < 0:
            raise ValueError("order must be nonnegative")
        self.order = int(order)
        table = {}
        if coeffs:
            for (p, q), c in coeffs.items():
                if q < 0:
                    raise ValueError("log degree must be nonnegative")
                if p > order:
                    raise ValueError(
                        f"coefficient at d^{p} exceeds truncation order {order}")
                c = float(c)
                if c != 0.0:
                    table[(int(p), int(q))] = c
        self.coeffs = table

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, order):
        return cls(order)

    @classmethod
    def one(cls, order):
        return cls(order, {(0, 0): 1.0})

    @classmethod
    def constant(cls, value, order):
        return cls(order, {(0, 0): value})

    @classmethod
    def monomial(cls, order, p, q, c=1.0):
        """The single term c * d^p (ln d)^q."""
        return cls(order, {(p, q): c})

    # -- queries -----------------------------------------------------------

    def coeff(self, p, q):
        """Coefficient c[p][q]; 0.0 if absent, error beyond the truncation."""
        if p > self.order:
            raise ValueError(
                f"coefficient at d^{p} is unknown at truncation order {self.order}")
        return self.coeffs.get((p, q), 0.0)

    def log_degree(self, p):
        """Highest q with a stored coefficient at power p (-1 if none)."""
        return max((q for (pp, q) in self.coeffs if pp == p), default=-1)

    def low_order(self):
        """Smallest p with a stored coefficient (order + 1 for the zero series)."""
        return min((p for (p, _) in self.coeffs), default=self.order + 1)

    def truncated(self, order):
        """Copy truncated to a (smaller or equal) order."""
        if order > self.order:
            raise ValueError("cannot extend a truncated series")
        return GradedSeries(
            order, {pq: c for pq, c in self.coeffs.items() if pq[0] <= order})

    def pruned(self, tol=1e-14):
        """Copy with coefficients of magnitude <= tol dropped."""
        return GradedSeries(
            self.order, {pq: c for pq, c in self.coeffs.items() if abs(c) > tol})

    def __eq__(self, other):
        return (isinstance(other, GradedSeries)
                and self.order == other.order and self.coeffs == other.coeffs)

    def __hash__(self):
        return hash((self.order, frozenset(self.coeffs.items())))

    def __repr__(self):
        if not self.coeffs:
            return f"GradedSeries(order={self.order}, 0)"
        parts = [f"{c:.6g}*d^{p}ln^{q}"
                 for (p, q), c in sorted(self.coeffs.items())]
        return f"GradedSeries(order={self.order}, " + " + ".join(parts) + ")"

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __neg__(self):
        return GradedSeries(self.order, {pq: -c for pq, c in self.coeffs.items()})

    def __sub__(self, other):
        return add(self, -_coerce(other, self.order))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def evaluate(self, d):
        """Numeric value at a point 0 < d (log factors included)."""
        if d <= 0:
            raise ValueError("series are evaluated at d > 0")
        ln = math.log(d)
        return sum(c * d ** p * ln ** q for (p, q), c in self.coeffs.items())


def _coerce(x, order):
    if isinstance(x, GradedSeries):
        return x
    return GradedSeries.constant(float(x), order)


def add(a, b):
    """Slotwise sum, truncated to the smaller operand order."""
    if not isinstance(a, GradedSeries):
        a, b = b, a
    b = _coerce(b, a.order)
    order = min(a.order, b.order)
    out = {}
    for pq, c in a.coeffs.items():
        if pq[0] <= order:
            out[pq] = c
    for pq, c in b.coeffs.items():
        if pq[0] <= order:
            out[pq] = out.get(pq, 0.0) + c
    return GradedSeries(order, out)


def mul(a, b):
    """Cauchy product in d, polynomial product in ln d, truncated."""
    if not isinstance(a, GradedSeries):
        a, b = b, a
    if not isinstance(b, GradedSeries):
        # scalar multiple
        s = float(b)
        return GradedSeries(a.order, {pq: s * c for pq, c in a.coeffs.items()})
    order = min(a.order, b.order)
    out = {}
    for (pa, qa), ca in a.coeffs.items():
        if pa > order:
            continue
        for (pb, qb), cb in b.coeffs.items():
            p = pa + pb
            if p > order:
                continue
            key = (p, qa + qb)
            out[key] = out.get(key, 0.0) + ca * cb
    return GradedSeries(order, out)


def extract_coeff(a, p, q):
    """Coefficient c[p][q] of a; 0 if absent, error for p beyond the order."""
    return a.coeff(p, q)


def exp_series(v):
    """Exponential of a series with zero constant term.

    Computed as the finite sum of v^j / j! (terms beyond j = order vanish
    because v starts at power 1), so it is the exact exponential of the
    truncated argument through the truncation order.  A nonzero constant
    slot is refused; callers factor constants out themselves.
    """
    for (p, _), c in v.coeffs.items():
        if p == 0 and c != 0.0:
            raise ValueError("exp_series requires a zero constant term")
    out = GradedSeries.one(v.order)
    term = GradedSeries.one(v.order)
    for j in range(1, v.order + 1):
        term = mul(term, v) * (1.0 / j)
        if not term.coeffs:
            break
        out = add(out, term)
    return out


def geometric_expand(kappa, order):
    """The series of kappa*d / (1 - kappa*d): sum_{p>=1} kappa^p d^p."""
    out = {}
    acc = 1.0
    for p in range(1, order + 1):
        acc *= kappa
        if acc == 0.0:
            break
        out[(p, 0)] = acc
    return GradedSeries(order, out)


def scaled_derivative(v):
    """The series d * dv/dd.

    Term calculus: d * d/dd [d^p ln^q d] = p d^p ln^q d + q d^p ln^{q-1} d,
    so the (p, q) slot of the result collects p*c[p][q] + (q+1)*c[p][q+1].
    """
    out = {}
    for (p, q), c in v.coeffs.items():
        if p != 0:
            key = (p, q)
            out[key] = out.get(key, 0.0) + p * c
        if q >= 1:
            key = (p, q - 1)
            out[key] = out.get(key, 0.0) + q * c
    return GradedSeries(v.order, out)


def scaled_second_derivative(v):
    """The series d^2 * d^2v/dd^2.

    The (p, q) slot collects p(p-1)c[p][q] + (q+1)(2p-1)c[p][q+1]
    + (q+1)(q+2)c[p][q+2].
    """
    out = {}
    for (p, q), c in v.coeffs.items():
        if p * (p - 1) != 0:
            key = (p, q)
            out[key] = out.get(key, 0.0) + p * (p - 1) * c
        if q >= 1:
            key = (p, q - 1)
            out[key] = out.get(key, 0.0) + q * (2 * p - 1) * c
        if q >= 2:
            key = (p, q - 2)
            out[key] = out.get(key, 0.0) + q * (q - 1) * c
    return GradedSeries(v.order, out)
