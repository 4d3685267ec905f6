import math

import pytest

from minlpkit import expr as E
from minlpkit.interval import INF
from minlpkit.model import Constraint, Problem, VarType

from helpers import MOTIVATING, ex, model


def test_add_var_binary_clamps_bounds():
    p = Problem()
    b = p.add_var("b", VarType.BINARY, -5, 5)
    assert b.bounds.lo == 0.0 and b.bounds.hi == 1.0 and b.is_integral


def test_constraint_violation_two_sided():
    c = Constraint("c", ex("x + y"), 1.0, 3.0)
    assert c.violation([1.0, 1.0]) == 0.0
    assert c.violation([0.0, 0.5]) == pytest.approx(0.5)
    assert c.violation([2.0, 2.5]) == pytest.approx(1.5)


def test_constraint_undefined_is_infinite():
    c = Constraint("c", ex("log(x)"), -INF, 0.0)
    assert math.isinf(c.violation([-1.0]))


def test_objective_and_feasibility_on_motivating_instance():
    p = model(MOTIVATING)
    x = [-1.0, 1.0, 1000.0]
    assert p.objective_value(x) == 1000.0
    assert p.max_violation(x) <= 1e-9 and p.is_feasible(x)
    # the point accepted by a reformulating check is infeasible in the original
    bad = [-1.0, 1.0, 999.99965]
    assert p.max_violation(bad) > 1e-6


def test_integrality_and_bounds_in_max_violation():
    p = model("var k integer [0, 3]\nvar x continuous [0, 1]\ncon c: k + x <= 10\n")
    assert p.max_violation([1.5, 0.5]) == pytest.approx(0.5)
    assert p.max_violation([1.5, 0.5], check_integrality=False) == 0.0
    assert p.max_violation([1.0, 2.0]) == pytest.approx(1.0)
    assert p.max_violation([1.0, 2.0], check_bounds=False) == 0.0


def test_vbound_violation():
    p = model("var y continuous [0, 10]\nvar b binary\nvlb y >= 4 * b + 1\nvub y <= 2 * b + 8\n")
    assert p.max_violation([1.0, 1.0]) == pytest.approx(4.0)
    assert p.max_violation([9.0, 0.0]) == pytest.approx(1.0)
    assert p.is_feasible([5.0, 1.0])


def test_index_and_names():
    p = model(MOTIVATING)
    assert p.index_of("z") == 2 and p.names() == {0: "x", 1: "y", 2: "z"}
    assert p.vars[1].vartype is VarType.CONTINUOUS
    with pytest.raises(KeyError):
        p.index_of("nope")
    assert E.variables(p.constraints[0].expr) == [0, 1, 2]
