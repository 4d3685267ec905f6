import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from minlpkit import expr as E
from minlpkit.extform import ExtForm, LockCount, Locks, propagate_locks, sense_for_aux
from minlpkit.interval import Interval
from minlpkit.solver import presolve

from helpers import LOCKS, ex, model, random_expr


def _ef(text):
    return ExtForm(presolve(model(text)).problem).build()


# -- locks --------------------------------------------------------------------

def test_locks_log_quadratic():
    ef = ExtForm(model(LOCKS)).build()
    for j in (0, 1):
        lc = ef.locks.var(j)
        assert (lc.down, lc.up) == (2, 0)


def test_locks_linear_sum():
    ef = ExtForm(model("var x continuous\nvar y continuous\ncon c: x + y <= 1\n")).build()
    assert all((ef.locks.var(j).down, ef.locks.var(j).up) == (0, 1) for j in (0, 1))


def test_locks_decreasing_child():
    locks = propagate_locks(ex("-x"), False, True, {0: Interval(-5, 5)})
    assert (locks.var(0).down, locks.var(0).up) == (1, 0)


def test_sense_table():
    assert sense_for_aux(LockCount(0, 2)) == "<="
    assert sense_for_aux(LockCount(1, 1)) == "="
    assert sense_for_aux(LockCount(2, 0)) == ">="


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10 ** 6), st.booleans(), st.booleans())
def test_property_lock_unlock_round_trip(seed, lf, rf):
    rng = random.Random(seed)
    e = random_expr(rng, 3, 4)
    E.interval_eval(e, {j: Interval(-1, 2) for j in range(3)})
    locks = Locks()
    other = random_expr(rng, 3, 3)
    E.interval_eval(other, {j: Interval(-1, 2) for j in range(3)})
    locks.lock(other, True, False)
    before = {j: (lc.down, lc.up) for j, lc in locks.vars.items()}
    locks.lock(e, lf, rf)
    # bounds change between lock and unlock; the stored monotonicity is reused
    E.interval_eval(e, {j: Interval(-3, 0.5) for j in range(3)})
    locks.unlock(e, lf, rf)
    after = {j: (lc.down, lc.up) for j, lc in locks.vars.items() if (lc.down, lc.up) != (0, 0)}
    assert after == {j: v for j, v in before.items() if v != (0, 0)}
    assert all(n.locks_down >= 0 and n.locks_up >= 0 for n in E.topo_order([e]))


# -- detection ----------------------------------------------------------------

def test_detect_log_quadratic_convex_over_log_aux():
    ef = _ef(LOCKS)
    root = ef.cons[0]
    assert root.claim_for("under").handler.name == "convexity"
    assert len(ef.aux_nodes) == 1 and ef.aux_nodes[0].kind == "log"
    assert ef.cons[1].aux == ef.aux_nodes[0].aux and ef.cons[1].sense == ">="


def test_detect_quadratic_propagation_split():
    ef = _ef("var x continuous\nvar y continuous\nvar z continuous\ncon c: x*y + z^2 + z <= 1\n")
    root = ef.cons[0]
    cl = root.claim_for("prop")
    assert cl.handler.name == "quadratic"
    q = cl.data
    args = {E.to_string(t.arg, {0: "x", 1: "y", 2: "z"}): t for t in q.terms}
    assert set(args) == {"z", "x*y"}
    assert args["z"].sqr == 1.0 and args["z"].lin == 1.0
    assert args["x*y"].lin == 1.0 and args["x*y"].sqr == 0.0


def test_detect_exp_convex_without_aux():
    ef = _ef("var x continuous [-1, 1]\nvar w continuous\ncon c: exp(x) - w <= 0\n")
    ecs = [ec for ec in ef.cons if ec.root.kind == "exp"]
    assert ecs and ecs[0].claim_for("under").handler.name == "convexity"
    assert all(n.kind == "exp" for n in ef.aux_nodes)


def test_every_required_role_is_claimed_and_aux_order():
    ef = _ef("""
var x continuous [0.5, 3]
var y continuous [-2, 2]
var z continuous [0, 4]
con a: x*y + sin(z) + log(x)^2 <= 3
con b: 1 <= exp(x*y) + z/x
con c: sqrt(x^2 + y^2) <= z
""")
    for ec in ef.cons:
        for role in ec.required_roles():
            assert ec.claim_for(role) is not None
        if ec.aux is not None:
            assert all(j > ec.aux for j in ef.view_leaf_cols(ec) if j >= ef.n)
    assert "original" in ef.dump() and "auxiliary" in ef.dump()


def _lift(ef, x):
    full = list(x) + [0.0] * ef.naux
    for node in reversed(ef.aux_nodes):
        full[node.aux] = E.evaluate(node, full)
    return full


MODELS = [
    "var x continuous [-2, 2]\nvar y continuous [-2, 2]\ncon c: x*y + exp(x) <= 1.5\ncon d: x^2 + y^2 >= 0.5\n",
    "var x continuous [0.1, 3]\nvar y continuous [-1, 2]\ncon c: log(x)^2 + 2*log(x)*y + y^2 <= 1\n",
    "var x continuous [-2, 2]\nvar y continuous [0.5, 3]\ncon c: -1 <= x/y + sin(x) <= 0.7\n",
    "var x continuous [-2, 2]\nvar y continuous [-2, 2]\nvar z continuous [0, 3]\ncon c: sqrt(x^2 + y^2) <= z\ncon d: z*x <= 1\n",
]


@pytest.mark.parametrize("text", MODELS)
def test_projection_equivalence_on_grid(text):
    prob = presolve(model(text)).problem
    ef = ExtForm(prob).build()
    axes = [[v.bounds.lo + (v.bounds.hi - v.bounds.lo) * k / 6 for k in range(7)] for v in prob.vars]
    for x in itertools.product(*axes):
        orig = max(c.violation(x) for c in prob.constraints) <= 1e-9
        full = _lift(ef, x)
        ext = True
        for ec in ef.cons:
            h = ef.eval_view(ec, full)
            if ec.aux is not None:
                ext &= abs(h - full[ec.aux]) <= 1e-9 * max(1.0, abs(h))
            else:
                ext &= ec.lhs - 1e-9 <= h <= ec.rhs + 1e-9
        for r in ef.linear:
            act = sum(a * full[j] for j, a in r.coefs.items())
            ext &= r.lhs - 1e-9 <= act <= r.rhs + 1e-9
        assert orig == ext, x
