import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minlpkit.interval import Interval
from minlpkit.nls import (SocForm, SocTerm, closed_form_z, detect_soc_norm, detect_soc_quadratic,
                          disagg_feasible, disaggregate, gradient_cut, jacobi_eigen, quad_poly,
                          rotated_cut, soc_separate, sum_row)
from minlpkit.simplify import simplify

from helpers import ex


def S(text):
    return simplify(ex(text))


def test_norm_completion_of_squares():
    s = detect_soc_norm(S("sqrt(4*x^2 + 4*x + 2)"), 3, lambda j: Interval(-5, 5))
    assert s.k == 1 and s.terms[0].coefs == {0: 2.0} and s.terms[0].offset == 1.0
    assert s.fixed == pytest.approx(1.0)
    rng = random.Random(0)
    for _ in range(100):
        x = rng.uniform(-5, 5)
        assert s.lhs_value([x, 0, 0, 0]) == pytest.approx(math.sqrt(4 * x * x + 4 * x + 2), rel=1e-12)


def test_simple_quadratic_cone():
    b = [Interval(-5, 5), Interval(-5, 5), Interval(0, 5)]
    s = detect_soc_quadratic(quad_poly(S("x^2 + y^2 - z^2")), lambda j: b[j])
    assert s.case == "simple" and s.k == 2 and s.rhs.coefs == {2: 1.0}


def test_rotated_cone():
    b = [Interval(-5, 5), Interval(0, 5), Interval(0, 5)]
    s = detect_soc_quadratic(quad_poly(S("x^2 - y*z")), lambda j: b[j])
    assert s.case == "rotated"
    rng = random.Random(1)
    for _ in range(100):
        p = [rng.uniform(-5, 5), rng.uniform(0, 5), rng.uniform(0, 5)]
        assert (s.violation(p) <= 1e-12) == (p[0] ** 2 - p[1] * p[2] <= 1e-12)


def test_general_cone_via_eigen():
    b = [Interval(-5, 5), Interval(-5, 5), Interval(1, 5)]
    poly = quad_poly(S("2*x^2 + 2*x*y + 2*y^2 - z^2"))
    s = detect_soc_quadratic(poly, lambda j: b[j])
    assert s is not None and s.case == "general"
    rng = random.Random(2)
    for _ in range(200):
        p = [rng.uniform(bb.lo, bb.hi) for bb in b]
        q = 2 * p[0] ** 2 + 2 * p[0] * p[1] + 2 * p[1] ** 2 - p[2] ** 2
        assert (s.violation(p) <= 0) == (q <= 0) or abs(q) < 1e-9


def test_indefinite_not_a_cone_when_rhs_changes_sign():
    b = [Interval(-5, 5), Interval(-5, 5), Interval(-1, 5)]
    assert detect_soc_quadratic(quad_poly(S("x^2 + y^2 - z^2")), lambda j: b[j]) is None


def test_eigen_residual():
    rng = np.random.default_rng(0)
    for n in range(1, 7):
        A = rng.normal(size=(n, n))
        A = A + A.T
        lam, V = jacobi_eigen(A)
        assert np.max(np.abs(A - V @ np.diag(lam) @ V.T)) <= 1e-9


def test_gradient_cut_abs():
    s = detect_soc_norm(ex("sqrt(x^2)"), 1, lambda j: Interval(-5, 5))
    r = gradient_cut(s, [1.0, 0.0])
    assert r.coefs == {0: 1.0, 1: -1.0} and r.side == 0.0


def test_disaggregation_counts():
    two = SocForm([SocTerm({0: 1.0}), SocTerm({1: 1.0})], SocTerm({2: 1.0}))
    assert disaggregate(two) == []
    three = SocForm([SocTerm({0: 1.0}), SocTerm({1: 1.0}), SocTerm({2: 1.0})], SocTerm({3: 1.0}))
    assert len(disaggregate(three)) == 4


def _random_soc(rng, k, n):
    terms = [SocTerm({j: rng.uniform(-2, 2) for j in range(n) if rng.random() < 0.7}, rng.uniform(-1, 1))
             for _ in range(k)]
    rhs = SocTerm({n: 1.0}, 0.0)
    return SocForm(terms, rhs)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 5), st.integers(0, 10 ** 6))
def test_property_disaggregation_equivalence(k, seed):
    rng = random.Random(seed)
    n = 3
    s = _random_soc(rng, k, n)
    x = [rng.uniform(-2, 2) for _ in range(n)] + [rng.uniform(0, 6)]
    feas = s.violation(x) <= 0
    z = closed_form_z(s, x)
    comp = z is not None and disagg_feasible(s, x, z, tol=1e-12)
    if abs(s.violation(x)) > 1e-9:
        assert feas == comp


def test_separation_on_disaggregated_rows():
    s = SocForm([SocTerm({0: 1.0}), SocTerm({1: 1.0}), SocTerm({2: 1.0})], SocTerm({3: 1.0}),
                zcols=[4, 5, 6])
    # sum of z exceeds the rhs: that row itself is returned
    x = [0.0, 0.0, 0.0, 1.0, 0.5, 0.5, 0.5]
    cuts = soc_separate(s, x)
    assert any(c.coefs == sum_row(s).coefs for c in cuts)
    # a violated rotated row yields a valid cut
    x = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]
    r = rotated_cut(s, 0, x)
    assert r.violation(x) > 0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_property_gradient_cuts_valid_k4(seed):
    rng = random.Random(seed)
    s = _random_soc(rng, 4, 3)
    x = [rng.uniform(-2, 2) for _ in range(3)] + [0.0]
    x[3] = 0.5 * s.lhs_value(x)
    cuts = soc_separate(s, x, strong=False)
    feas = 0
    while feas < 1000:
        p = [rng.uniform(-2, 2) for _ in range(3)] + [0.0]
        p[3] = s.lhs_value(p) + rng.uniform(0, 2)
        feas += 1
        for c in cuts:
            assert c.violation(p) <= 1e-9 * max(1.0, abs(c.side))
