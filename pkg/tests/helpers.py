"""Shared generators and small oracles for the test suite."""

from __future__ import annotations

import itertools
import math
import random
from typing import List, Sequence

from minlpkit import expr as E
from minlpkit.interval import INF, Interval
from minlpkit.parse import parse_expression, parse_model

UNARY_KINDS = ("exp", "log", "pow2", "pow3", "sqrt", "abs", "sin", "cos", "entropy", "signpower")


def random_expr(rng: random.Random, nvars: int, depth: int) -> E.Expr:
    """Random expression over x0..x{nvars-1}; domains are not guaranteed."""
    if depth <= 0 or rng.random() < 0.25:
        if rng.random() < 0.8:
            return E.var(rng.randrange(nvars), f"x{rng.randrange(nvars)}")
        return E.val(round(rng.uniform(-3, 3), 2))
    r = rng.random()
    if r < 0.35:
        k = rng.randint(2, 3)
        ch = [random_expr(rng, nvars, depth - 1) for _ in range(k)]
        return E.sum_(ch, [round(rng.uniform(-2, 2), 2) or 1.0 for _ in ch], round(rng.uniform(-1, 1), 2))
    if r < 0.55:
        ch = [random_expr(rng, nvars, depth - 1) for _ in range(2)]
        return E.prod(ch, rng.choice([1.0, -1.0, 2.0, 0.5]))
    c = random_expr(rng, nvars, depth - 1)
    k = rng.choice(UNARY_KINDS)
    if k == "pow2":
        return E.power(c, 2)
    if k == "pow3":
        return E.power(c, 3)
    if k == "sqrt":
        return E.power(E.sum_([E.power(c, 2)], [1.0], 0.5), 0.5)
    if k == "log":
        return E.log(E.sum_([E.power(c, 2)], [1.0], 0.1))
    if k == "entropy":
        return E.entropy(E.sum_([E.power(c, 2)], [1.0], 0.1))
    if k == "exp":
        return E.exp(E.prod([c], 0.3))
    if k == "signpower":
        return E.signpower(c, 1.5)
    return {"abs": E.abs_, "sin": E.sin, "cos": E.cos}[k](c)


def random_box(rng: random.Random, nvars: int) -> List[Interval]:
    out = []
    for _ in range(nvars):
        a = rng.uniform(-3, 3)
        out.append(Interval(round(a, 3), round(a + rng.uniform(0.1, 3), 3)))
    return out


def sample(rng: random.Random, box: Sequence[Interval]) -> List[float]:
    return [rng.uniform(b.lo, b.hi) for b in box]


def safe_eval(e: E.Expr, x) -> float:
    try:
        v = E.evaluate(e, x)
    except (E.DomainError, E.KinkError, ZeroDivisionError, OverflowError, ValueError):
        return math.nan
    return v


def contains(a: Interval, v: float, rel: float = 1e-9) -> bool:
    """v in a up to a relative tolerance; endpoints beyond 1e20 are infinite."""
    tol = rel * max(1.0, abs(v))
    lo_ok = a.lo <= -INF or a.lo - tol <= v
    hi_ok = a.hi >= INF or v <= a.hi + tol
    return lo_ok and hi_ok


def ex(text: str, names: Sequence[str] = ("x", "y", "z")) -> E.Expr:
    return parse_expression(text, {n: i for i, n in enumerate(names)})


def model(text: str):
    return parse_model(text)


def vertices(lo: Sequence[float], hi: Sequence[float]):
    return itertools.product(*[(a, b) for a, b in zip(lo, hi)])


MOTIVATING = """
minimize
var x continuous
var y continuous
var z continuous obj 1
con e1: exp(log(1000) + 1 + x*y) <= z
con e2: x^2 + y^2 <= 2
"""

LOCKS = """
minimize
var x continuous [0, 1]
var y continuous [-inf, 0]
con c: log(x)^2 + 2*log(x)*y + y^2 <= 4
"""


EPS = 2.0 ** -52


def sensitivity(e: E.Expr, x: Sequence[float], rel: float = 1e-9, tries: int = 4,
                seed: int = 0) -> float:
    """Change of e per unit relative input perturbation, estimated by differences.

    Rounding inside e acts like a relative perturbation of its inputs of a
    few ulps, so EPS * sensitivity bounds the round-off a rewriting of e
    can legitimately produce.
    """
    rng = random.Random(seed)
    base = safe_eval(e, x)
    worst = 0.0
    for _ in range(tries):
        y = [v * (1.0 + rel * rng.choice((-1.0, 1.0))) for v in x]
        v = safe_eval(e, y)
        if math.isfinite(v) and math.isfinite(base):
            worst = max(worst, abs(v - base) / rel)
    return worst


def close_values(a: float, b: float, e: E.Expr, x: Sequence[float], rel: float = 1e-9) -> bool:
    """a == b within rel, widened by the round-off budget of ill-conditioned samples."""
    tol = rel * max(abs(a), 1e-3) + 32 * EPS * sensitivity(e, x)
    return abs(a - b) <= tol


def mixing_oracle(a: Sequence[float], xs: Sequence[float]) -> float:
    """Best mixing right-hand side at xs over all subsets with distinct coefficients."""
    n = len(a)
    best = 0.0
    for mask in range(1, 1 << n):
        idx = sorted((i for i in range(n) if mask >> i & 1), key=lambda i: a[i])
        if any(a[idx[k]] == a[idx[k + 1]] for k in range(len(idx) - 1)):
            continue
        val, last = 0.0, 0.0
        for i in idx:
            val += (a[i] - last) * xs[i]
            last = a[i]
        best = max(best, val)
    return best


# one line per acceptance criterion, echoed in the pytest terminal summary
ACCEPTANCE: List[str] = []
