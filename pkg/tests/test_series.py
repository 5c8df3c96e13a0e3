"""Graded series ring: bookkeeping oracles, ring laws, calculus maps."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sklern.series import (GradedSeries, add, exp_series, extract_coeff,
                           geometric_expand, mul, scaled_derivative,
                           scaled_second_derivative)


def series_strategy(max_order=6, max_log=2, coeff=st.floats(-3, 3)):
    def build(entries, order):
        return GradedSeries(order, {pq: c for pq, c in entries})
    pq = st.tuples(st.integers(0, max_order), st.integers(0, max_log))
    return st.builds(
        build,
        st.lists(st.tuples(pq, coeff), max_size=10),
        st.just(max_order))


def test_additive_identity():
    a = GradedSeries(5, {(2, 1): 3.0, (0, 0): -1.0})
    assert add(a, GradedSeries.zero(5)) == a


def test_add_disjoint_slots():
    d = GradedSeries.monomial(4, 1, 0)
    dln = GradedSeries.monomial(4, 1, 1)
    s = add(d, dln)
    assert s.coeff(1, 0) == 1.0
    assert s.coeff(1, 1) == 1.0


@given(series_strategy(), series_strategy())
@settings(max_examples=100, deadline=None)
def test_add_coefficientwise(a, b):
    s = add(a, b)
    for p in range(s.order + 1):
        for q in range(4):
            assert s.coeff(p, q) == pytest.approx(
                a.coeff(p, q) + b.coeff(p, q), abs=1e-15)


def test_multiplicative_identity():
    a = GradedSeries(5, {(3, 2): -0.25, (1, 0): 7.0})
    assert mul(a, GradedSeries.one(5)) == a


def test_log_monomial_square():
    dln = GradedSeries.monomial(6, 1, 1)
    assert mul(dln, dln).coeff(2, 2) == 1.0


def test_geometric_series_is_inverse():
    for kappa in (1.0, 0.5, -2.0):
        M = 9
        g = geometric_expand(kappa, M)
        one_minus = GradedSeries(M, {(0, 0): 1.0, (1, 0): -kappa})
        prod = mul(one_minus, add(GradedSeries.one(M), g))
        assert prod.coeff(0, 0) == pytest.approx(1.0)
        for p in range(1, M + 1):
            assert prod.coeff(p, 0) == pytest.approx(0.0, abs=1e-13)


def test_geometric_zero_and_units():
    assert geometric_expand(0.0, 5) == GradedSeries.zero(5)
    g = geometric_expand(1.0, 3)
    assert [g.coeff(p, 0) for p in (1, 2, 3)] == [1.0, 1.0, 1.0]
    assert extract_coeff(geometric_expand(2.0, 4), 3, 0) == 8.0


def test_extract_coeff_rules():
    z = GradedSeries.zero(4)
    assert extract_coeff(z, 3, 1) == 0.0
    with pytest.raises(ValueError):
        extract_coeff(z, 5, 0)
    a = GradedSeries(4, {(2, 1): 0.125})
    assert extract_coeff(a, 2, 1) == 0.125


def test_exp_of_zero():
    assert exp_series(GradedSeries.zero(6)) == GradedSeries.one(6)


def test_exp_scalar_taylor():
    c = -0.7
    M = 10
    e = exp_series(GradedSeries.monomial(M, 1, 0, c))
    for p in range(M + 1):
        assert e.coeff(p, 0) == pytest.approx(c ** p / math.factorial(p),
                                              rel=1e-13)


def test_exp_of_log_monomial():
    e = exp_series(GradedSeries.monomial(6, 1, 1))
    assert e.coeff(2, 2) == pytest.approx(0.5)
    assert e.coeff(3, 3) == pytest.approx(1 / 6)


def test_exp_requires_zero_constant():
    with pytest.raises(ValueError):
        exp_series(GradedSeries.constant(1.0, 4))


def zero_constant(s):
    return GradedSeries(s.order,
                        {pq: c for pq, c in s.coeffs.items() if pq[0] > 0})


@given(series_strategy(max_order=5, coeff=st.floats(-1.5, 1.5)),
       series_strategy(max_order=5, coeff=st.floats(-1.5, 1.5)))
@settings(max_examples=80, deadline=None)
def test_exp_is_a_homomorphism(a, b):
    a = zero_constant(a)
    b = zero_constant(b)
    lhs = exp_series(add(a, b))
    rhs = mul(exp_series(a), exp_series(b))
    diff = lhs - rhs
    worst = max((abs(c) for c in diff.coeffs.values()), default=0.0)
    scale = 1.0 + max((abs(c) for c in lhs.coeffs.values()), default=0.0)
    assert worst < 1e-12 * scale


@given(series_strategy(), series_strategy(), series_strategy())
@settings(max_examples=80, deadline=None)
def test_ring_laws(a, b, c):
    def close(x, y, tol=1e-13):
        diff = x - y
        scale = 1.0 + max((abs(v) for v in x.coeffs.values()), default=0.0) \
            + max((abs(v) for v in y.coeffs.values()), default=0.0)
        return all(abs(v) <= tol * scale for v in diff.coeffs.values())

    assert close(add(a, b), add(b, a))
    assert close(mul(a, b), mul(b, a))
    assert close(add(add(a, b), c), add(a, add(b, c)))
    assert close(mul(mul(a, b), c), mul(a, mul(b, c)))
    assert close(mul(a, add(b, c)), add(mul(a, b), mul(a, c)))


@given(series_strategy(max_order=8))
@settings(max_examples=60, deadline=None)
def test_truncation_consistency(a):
    # computing at high order then truncating equals computing low
    b = mul(a, a)
    lo = a.truncated(4)
    assert mul(lo, lo) == b.truncated(4)


def _numeric_eval(s, d):
    ln = math.log(d)
    return sum(c * d ** p * ln ** q for (p, q), c in s.coeffs.items())


def test_scaled_derivative_matches_finite_differences():
    # d * dV/dd and d^2 * d2V/dd2 against central differences of the
    # numeric evaluation, on a series with genuine log content
    v = GradedSeries(8, {(1, 0): 0.4, (2, 1): -0.3, (3, 2): 0.9, (5, 1): 1.1})
    P = scaled_derivative(v)
    Q = scaled_second_derivative(v)
    h = 1e-6
    for d in (0.07, 0.19, 0.55):
        f0 = _numeric_eval(v, d)
        fp = _numeric_eval(v, d + h)
        fm = _numeric_eval(v, d - h)
        d1 = (fp - fm) / (2 * h)
        d2 = (fp - 2 * f0 + fm) / h ** 2
        assert _numeric_eval(P, d) == pytest.approx(d * d1, rel=1e-7)
        assert _numeric_eval(Q, d) == pytest.approx(d * d * d2, rel=1e-4)


def test_scaled_derivative_slot_formula():
    # the (p, q) slot of d*V' is p c[p][q] + (q+1) c[p][q+1]
    v = GradedSeries(6, {(3, 0): 2.0, (3, 1): 5.0, (3, 2): -1.0})
    P = scaled_derivative(v)
    assert P.coeff(3, 0) == pytest.approx(3 * 2.0 + 1 * 5.0)
    assert P.coeff(3, 1) == pytest.approx(3 * 5.0 + 2 * (-1.0))
    assert P.coeff(3, 2) == pytest.approx(3 * (-1.0))
    Q = scaled_second_derivative(v)
    assert Q.coeff(3, 0) == pytest.approx(6 * 2.0 + 1 * 5 * 5.0 + 2 * (-1.0))
    assert Q.coeff(3, 1) == pytest.approx(6 * 5.0 + 2 * 5 * (-1.0))


def test_pruning_never_changes_retained():
    a = GradedSeries(4, {(1, 0): 1.0, (2, 0): 1e-16})
    p = a.pruned()
    assert p.coeff(2, 0) == 0.0
    assert p.coeff(1, 0) == 1.0


def test_evaluate_scalar():
    a = GradedSeries(4, {(1, 1): 2.0})
    d = 0.3
    assert a.evaluate(d) == pytest.approx(2.0 * d * math.log(d))
    with pytest.raises(ValueError):
        a.evaluate(-1.0)
