import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from minlpkit import estimators as est
from minlpkit import expr as E
from minlpkit.interval import Interval

from helpers import ex


def _check(e, box, le, sense, n=200, seed=0, integral=False):
    rng = random.Random(seed)
    for _ in range(n):
        p = [float(rng.randint(math.ceil(b.lo), math.floor(b.hi))) if integral else rng.uniform(b.lo, b.hi)
             for b in box]
        try:
            f = E.evaluate(e, p)
        except (E.DomainError, E.KinkError, ZeroDivisionError, OverflowError):
            continue
        v = le.value(p)
        tol = 1e-9 * max(1.0, abs(f))
        assert (v <= f + tol) if sense == est.UNDER else (v >= f - tol), (p, v, f)


def test_linear_nodes_are_exact():
    le = est.estimate(E.sum_([E.var(0), E.var(1)], [2.0, -3.0], 1.0), [Interval(0, 1)] * 2, [0.5, 0.5], est.UNDER)
    assert le.coefs == (2.0, -3.0) and le.const == 1.0 and not le.local


def test_secant_over_convex_square():
    le = est.estimate(ex("x^2"), [Interval(-1, 3)], [0.0], est.OVER)
    assert le.coefs[0] == pytest.approx(2.0) and le.const == pytest.approx(3.0)
    assert le.local and not le.tangent


def test_secant_unbounded_box_gives_none():
    assert est.estimate(ex("x^2"), [Interval(-1, 1e20)], [0.0], est.OVER) is None


def test_log_concave_tangent_global():
    le = est.estimate(ex("log(x)"), [Interval(0.5, 4)], [1.0], est.OVER)
    assert le.coefs[0] == pytest.approx(1.0) and le.const == pytest.approx(-1.0)
    assert le.tangent and not le.local


def test_odd_power_under_mixed_curvature():
    e = ex("x^3")
    box = [Interval(-2, 1)]
    for r in (-1.5, -0.2, 0.7):
        le = est.estimate(e, box, [r], est.UNDER)
        assert le is not None
        _check(e, box, le, est.UNDER)
        le = est.estimate(e, box, [r], est.OVER)
        _check(e, box, le, est.OVER)


def test_sin_constant_bounds():
    e = ex("sin(x)")
    box = [Interval(0, 3)]
    lo = est.estimate(e, box, [1.0], est.UNDER)
    hi = est.estimate(e, box, [1.0], est.OVER)
    assert lo.coefs == (0.0,) and hi.const == pytest.approx(1.0, abs=1e-9)
    _check(e, box, lo, est.UNDER)


def test_mccormick_direct():
    a1, a2, c = est.mccormick(0, 1, 0, 1, 1, 1, est.OVER)
    for x in (0, 1):
        for y in (0, 1):
            assert a1 * x + a2 * y + c >= x * y - 1e-12


def test_trilinear_product_valid():
    e = ex("x*y*z")
    box = [Interval(-1, 2), Interval(0.5, 1), Interval(-3, -1)]
    for sense in (est.UNDER, est.OVER):
        le = est.estimate(e, box, [0.3, 0.7, -2.0], sense)
        _check(e, box, le, sense)


def test_initial_points_handle_infinite_sides():
    pts = est.initial_points([Interval(-1e20, 3), Interval(2, 5)])
    assert pts[0] == [0.0, 2.0] and pts[1] == [3.0, 5.0]


UNARY = ["exp(x)", "log(x)", "x^2", "x^3", "x^0.5", "x^-1", "abs(x)", "signpower(x, 2.5)",
         "entropy(x)", "x^4", "x^1.5", "cos(x)"]


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(UNARY), st.floats(-3, 3), st.floats(0.1, 4), st.floats(0, 1),
       st.sampled_from([est.UNDER, est.OVER]))
def test_property_unary_estimators_valid(text, lo, width, t, sense):
    e = ex(text)
    if text in ("log(x)", "x^0.5", "entropy(x)", "x^1.5"):
        lo = abs(lo) + 0.01
    if text == "x^-1" and lo <= 0 <= lo + width:
        lo = 0.05
    box = [Interval(lo, lo + width)]
    ref = lo + t * width
    le = est.estimate(e, box, [ref], sense)
    if le is None:
        return
    _check(e, box, le, sense, n=60, seed=int(t * 1000))
    if le.tangent:
        assert le.value([ref]) == pytest.approx(E.evaluate(e, [ref]), rel=1e-9, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(-4, 2), st.integers(1, 6), st.floats(0, 1))
def test_property_integer_secant_valid(lo, width, t):
    e = ex("x^2")
    box = [Interval(lo, lo + width)]
    ref = lo + t * width
    le = est.estimate(e, box, [ref], est.UNDER, integral=[True])
    for k in range(lo, lo + width + 1):
        assert le.value([k]) <= k * k + 1e-9


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(0.1, 3)), min_size=2, max_size=2),
       st.floats(0, 1), st.floats(0, 1), st.sampled_from([est.UNDER, est.OVER]))
def test_property_mccormick_valid(bx, s, t, sense):
    box = [Interval(a, a + w) for a, w in bx]
    ref = [box[0].lo + s * box[0].width, box[1].lo + t * box[1].width]
    le = est.estimate(ex("x*y"), box, ref, sense)
    _check(ex("x*y"), box, le, sense, n=50)
