import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from minlpkit import expr as E
from minlpkit.extform import ExtForm
from minlpkit.interval import INF, Interval
from minlpkit.prop import Propagator, fbbt, initsolve_propagate, relax_bound, relax_input_bounds
from minlpkit.solver import presolve

from helpers import model, random_expr, safe_eval


def test_relax_bound_examples():
    assert relax_bound(5.0, 10.0, True) == pytest.approx(5.0 - 5e-9, abs=1e-15)
    assert relax_bound(5.0, 10.0, False) == pytest.approx(5.0 + 5e-9, abs=1e-15)
    # spacing of doubles near 1e6 is about 1.2e-10
    assert 1e6 - relax_bound(1e6, 1e-2, True) == pytest.approx(1e-5, rel=1e-4)
    assert relax_input_bounds([Interval(3, 5)], [True]) == [Interval(3, 5)]
    assert relax_bound(INF, 1.0, False) == INF


def test_relax_never_crosses_next_integer():
    b = relax_bound(2.9999999999, 1e20, False)
    assert 2.9999999999 < b <= 3.0


def test_linear_equality_backward():
    ef = ExtForm(model("var x continuous [0, 10]\nvar y continuous [0, 2]\ncon c: x + y == 5\n")).build()
    r = fbbt(ef)
    assert not r.infeasible
    assert r.bounds[0].lo == pytest.approx(3, abs=1e-6) and r.bounds[0].hi == pytest.approx(5, abs=1e-6)


def test_exp_upper_bound_not_infeasible():
    ef = ExtForm(model("var x continuous [-10, 10]\ncon c: exp(x) <= 0.5\n")).build()
    r = fbbt(ef)
    assert not r.infeasible
    assert r.bounds[0].lo == -10.0
    assert math.log(0.5) <= r.bounds[0].hi <= math.log(0.5) + 1e-8


def test_square_below_zero_infeasible():
    ef = ExtForm(model("var x continuous [-10, 10]\ncon c: x^2 <= -1\n")).build()
    assert fbbt(ef).infeasible


def test_integer_bounds_rounded_inward():
    ef = ExtForm(model("var k integer [0, 10]\ncon c: 2*k <= 7\n")).build()
    assert fbbt(ef).bounds[0].hi == 3.0


def test_init_solve_log_of_product():
    prob = presolve(model("var x continuous [-1, 1]\nvar y continuous [-1, 1]\ncon c: log(x*y) <= 1\n")).problem
    ef = ExtForm(prob).build()
    r = initsolve_propagate(ef)
    prod = [n for n in ef.aux_nodes if n.kind == "prod"][0]
    assert r.bounds[prod.aux].lo > 0.0
    # plain node propagation cannot express this on x or y
    assert r.bounds[0] == Interval(-1, 1) and r.bounds[1] == Interval(-1, 1)


def test_init_solve_sqrt_argument_nonnegative():
    prob = presolve(model("var x continuous [-5, 5]\nvar y continuous [-5, 5]\nvar w continuous\n"
                          "con c: sqrt(x*y) <= w\n")).problem
    ef = ExtForm(prob).build()
    r = initsolve_propagate(ef)
    prod = [n for n in ef.aux_nodes if n.kind == "prod"][0]
    assert r.bounds[prod.aux].lo >= 0.0


def test_init_solve_keeps_bounded_aux():
    prob = presolve(model("var x continuous [1, 2]\nvar w continuous\ncon c: exp(x) <= w\n")).problem
    ef = ExtForm(prob).build()
    r = initsolve_propagate(ef)
    for node in ef.aux_nodes:
        a = E.interval_eval(node, {0: Interval(1, 2)})
        assert r.bounds[node.aux].lo >= a.lo - 1e-9 and r.bounds[node.aux].hi <= a.hi + 1e-9


def test_redundancy_mode_reports_redundant():
    ef = ExtForm(model("var x continuous [0, 1]\ncon c: exp(x) <= 5\n")).build()
    r = Propagator(ef).fbbt(ef.initial_bounds(), mode="redundancy")
    assert not r.infeasible and 0 in r.redundant


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_property_fbbt_keeps_feasible_points(seed):
    rng = random.Random(seed)
    e = random_expr(rng, 2, 3)
    pts = [[rng.uniform(-2, 2), rng.uniform(-2, 2)] for _ in range(40)]
    vals = [safe_eval(e, p) for p in pts]
    fin = sorted(v for v in vals if math.isfinite(v) and abs(v) < 1e15)
    if len(fin) < 4:
        return
    rhs = fin[len(fin) // 2]
    text = "var x0 continuous [-2, 2]\nvar x1 continuous [-2, 2]\ncon c: %s <= %r\n" % (
        E.to_string(e, {0: "x0", 1: "x1"}), rhs)
    ef = ExtForm(model(text)).build()
    r = fbbt(ef)
    for p, v in zip(pts, vals):
        if math.isfinite(v) and v <= rhs:
            assert not r.infeasible
            for j in range(2):
                b = r.bounds[j]
                assert b.lo - 1e-9 <= p[j] <= b.hi + 1e-9
