"""Quadratic handler: detection of q(y) and its interval propagation.

q(y) = sum_i (a_i y_i^2 + c_i y_i + sum_{j in P_i} b_ij y_i y_j) + const

Each bilinear term is attached to the argument that occurs more often (ties
go to the argument that comes first in compare order).  The handler only
takes over propagation when some argument occurs at least twice, because
only then does termwise interval evaluation suffer from dependency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from . import expr as E
from . import interval as iv
from .expr import Expr
from .extform import PROP, Claim, Handler
from .interval import EMPTY, INF, Interval, solve_univariate_quadratic


@dataclass
class QuadTerm:
    arg: Expr
    sqr: float = 0.0
    lin: float = 0.0
    bil: List[Tuple[int, float]] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return self.sqr == 0.0 and self.lin == 0.0 and not self.bil


@dataclass
class QuadForm:
    terms: List[QuadTerm]
    const: float = 0.0
    propagable: bool = False

    def index_of(self, arg: Expr) -> int:
        for i, t in enumerate(self.terms):
            if t.arg is arg:
                return i
        return -1


def _collect(e: Expr):
    """Split a sum into square, bilinear and linear pieces keyed by node id."""
    if e.kind != "sum":
        return None
    sq, bil, lin = [], [], []
    for a, c in zip(e.coefs, e.children):
        if c.kind == "pow" and c.const == 2.0:
            sq.append((c.children[0], a, c))
        elif c.kind == "prod" and len(c.children) == 2:
            bil.append((c.children[0], c.children[1], a * c.const, c))
        elif c.kind == "val":
            continue
        else:
            lin.append((c, a))
    const = e.const + sum(a * c.const for a, c in zip(e.coefs, e.children) if c.kind == "val")
    return sq, bil, lin, const


def _k(n: Expr):
    return n.key()


def detect_quadratic(e: Expr, split: bool = True) -> Optional[QuadForm]:
    """QuadForm of a canonical sum, or None if e is not a genuine quadratic.

    With ``split`` square-only and single-bilinear-only arguments are turned
    into linear terms over the pow/prod node, as done for propagation.
    """
    got = _collect(e)
    if got is None:
        return None
    sq, bil, lin, const = got
    if not sq and not bil:
        return None
    if len(sq) + len(bil) + len(lin) < 2:
        return None
    count: Dict[int, int] = {}
    nodes: Dict[int, Expr] = {}

    def bump(n: Expr):
        count[_k(n)] = count.get(_k(n), 0) + 1
        nodes[_k(n)] = n

    for y, a, _ in sq:
        bump(y)
    for y1, y2, b, _ in bil:
        bump(y1)
        bump(y2)
    for y, a in lin:
        bump(y)
    propagable = any(v >= 2 for v in count.values())
    lin_args = {_k(y) for y, _ in lin}
    sq_args = {_k(y) for y, _, _ in sq}
    bil_count: Dict[int, int] = {}
    for y1, y2, _, _ in bil:
        bil_count[_k(y1)] = bil_count.get(_k(y1), 0) + 1
        bil_count[_k(y2)] = bil_count.get(_k(y2), 0) + 1

    extra_lin: List[Tuple[Expr, float]] = []
    if split:
        keep_sq = []
        for y, a, node in sq:
            if _k(y) not in lin_args and bil_count.get(_k(y), 0) == 0:
                extra_lin.append((node, a))
            else:
                keep_sq.append((y, a, node))
        sq = keep_sq
        keep_bil = []
        for y1, y2, b, node in bil:
            only = all(_k(y) not in lin_args and _k(y) not in sq_args and bil_count[_k(y)] == 1
                       for y in (y1, y2))
            if only:
                extra_lin.append((node, b / node.const if node.const else b))
            else:
                keep_bil.append((y1, y2, b, node))
        bil = keep_bil
    terms: List[QuadTerm] = []
    index: Dict[int, int] = {}

    def term(y: Expr) -> int:
        k = index.get(_k(y))
        if k is None:
            k = len(terms)
            index[_k(y)] = k
            terms.append(QuadTerm(y))
        return k

    # argument order: compare order of the argument nodes
    args = sorted({_k(n): n for n in
                   [y for y, _, _ in sq] + [y for p in bil for y in p[:2]] +
                   [y for y, _ in lin] + [y for y, _ in extra_lin]}.values(), key=lambda n: n.key())
    for y in args:
        term(y)
    for y, a, _ in sq:
        terms[term(y)].sqr += a
    for y, a in lin + extra_lin:
        terms[term(y)].lin += a
    for y1, y2, b, _ in bil:
        c1, c2 = count[_k(y1)], count[_k(y2)]
        i1, i2 = term(y1), term(y2)
        if c1 > c2 or (c1 == c2 and i1 < i2):
            owner, partner = i1, i2
        else:
            owner, partner = i2, i1
        terms[owner].bil.append((partner, b))
    # an argument that was split off entirely must not make the form propagable
    if split:
        cnt2: Dict[int, int] = {}
        for i, t in enumerate(terms):
            cnt2[i] = cnt2.get(i, 0) + (t.sqr != 0.0) + (t.lin != 0.0)
            for j, _ in t.bil:
                cnt2[i] = cnt2.get(i, 0) + 1
                cnt2[j] = cnt2.get(j, 0) + 1
        propagable = any(v >= 2 for v in cnt2.values())
    return QuadForm(terms, const, propagable)


# ---------------------------------------------------------------------------
# interval routines
# ---------------------------------------------------------------------------

def _uni_range(a: float, b: float, y: Interval) -> Interval:
    """Exact range of a*t^2 + b*t over t in y (outward inflated)."""
    if y.is_empty:
        return EMPTY
    vals = []
    for t in (y.lo, y.hi):
        if abs(t) >= INF:
            if a != 0.0:
                vals.append(math.copysign(INF, a))
            elif b != 0.0:
                vals.append(math.copysign(INF, b * t))
            else:
                vals.append(0.0)
        else:
            vals.append(a * t * t + b * t)
    if a != 0.0:
        t = -b / (2.0 * a)
        if y.lo <= t <= y.hi:
            vals.append(a * t * t + b * t)
    r = Interval.make(max(min(vals), -INF), min(max(vals), INF))
    return r.inflate()


def term_range(a: float, b: Interval, y: Interval) -> Interval:
    """Range of a*t^2 + beta*t over t in y and beta in b."""
    if b.is_empty or y.is_empty:
        return EMPTY
    if b.lo <= -INF or b.hi >= INF:
        return iv.add(iv.scale(iv.square(y), a), iv.mul(b, y))
    return _uni_range(a, b.lo, y).hull(_uni_range(a, b.hi, y))


def _beta(q: QuadForm, i: int, bounds: Callable[[int], Interval]) -> Interval:
    t = q.terms[i]
    r = Interval.point(t.lin)
    for j, b in t.bil:
        r = iv.add(r, iv.scale(bounds(j), b))
    return r


def quad_inteval(q: QuadForm, bounds: Callable[[int], Interval]) -> Interval:
    """Enclosure of q over the box; ``bounds(i)`` gives the i-th argument's box."""
    r = Interval.point(q.const)
    for i, t in enumerate(q.terms):
        if t.empty:
            continue
        r = iv.add(r, term_range(t.sqr, _beta(q, i, bounds), bounds(i)))
    return r


def _residual_range(a: float, rest: Interval, y: Interval) -> Interval:
    """Range of r/t - a*t for r in rest, t in y (0 not in y)."""
    if not y.is_bounded or rest.lo <= -INF or rest.hi >= INF:
        return iv.sub(iv.div(rest, y), iv.scale(y, a))
    vals = []
    for r in (rest.lo, rest.hi):
        cands = [y.lo, y.hi]
        if a != 0.0 and -r / a > 0:
            s = math.sqrt(-r / a)
            cands += [t for t in (s, -s) if y.lo <= t <= y.hi]
        vals += [r / t - a * t for t in cands]
    return Interval.make(min(vals), max(vals)).inflate(1e-9, 1e-12)


def quad_reverseprop(q: QuadForm, target: Interval, bounds: Callable[[int], Interval]
                     ) -> Optional[Dict[int, Interval]]:
    """Enclosures for arguments implied by q(y) in target; None if infeasible."""
    n = len(q.terms)
    ranges = []
    for i, t in enumerate(q.terms):
        ranges.append(EMPTY if t.empty else term_range(t.sqr, _beta(q, i, bounds), bounds(i)))
    out: Dict[int, Interval] = {}

    def tighten(i: int, r: Interval):
        cur = out.get(i, bounds(i))
        out[i] = cur.intersect(r)

    base = iv.sub(target, Interval.point(q.const))
    for i, t in enumerate(q.terms):
        if t.empty:
            continue
        rest = base
        for k in range(n):
            if k != i and not q.terms[k].empty:
                rest = iv.sub(rest, ranges[k])
        if rest.is_empty:
            return None
        y = bounds(i)
        sol = solve_univariate_quadratic(t.sqr, _beta(q, i, bounds), rest, y)
        if sol.is_empty:
            return None
        tighten(i, sol)
        # residual: c_i + sum_j b_ij y_j in rest / y_i - a_i y_i
        if t.bil and not y.contains_zero() and not y.is_empty:
            res = _residual_range(t.sqr, rest, y)
            if res.is_empty:
                return None
            coefs = [b for _, b in t.bil]
            acts = [bounds(j) for j, _ in t.bil]
            encl = E._inv_sum(t.lin, coefs, acts, res)
            for (j, _), r in zip(t.bil, encl):
                if r.is_empty:
                    return None
                tighten(j, r)
    for i, r in out.items():
        if r.is_empty:
            return None
    return out


# ---------------------------------------------------------------------------
# handler
# ---------------------------------------------------------------------------

class QuadraticHandler(Handler):
    name = "quadratic"

    def detect(self, ec, ef, roles):
        if PROP not in roles:
            return None
        # propagation runs on the original graph, so detect on the root itself:
        # aux columns requested for estimation must not hide repeated arguments
        q = detect_quadratic(ec.root, split=True)
        if q is None or not q.propagable:
            return None
        req = [t.arg for t in q.terms if t.arg.kind not in ("var", "val")]
        return Claim(self, {PROP}, req, q)

    def _arg_nodes(self, ec, q: QuadForm) -> List[Expr]:
        return [t.arg for t in q.terms]

    def inteval(self, ec, claim, cur):
        q: QuadForm = claim.data
        nodes = self._arg_nodes(ec, q)
        return quad_inteval(q, lambda i: cur(nodes[i]))

    def reverseprop(self, ec, claim, target, cur):
        q: QuadForm = claim.data
        nodes = self._arg_nodes(ec, q)
        res = quad_reverseprop(q, target, lambda i: cur(nodes[i]))
        if res is None:
            return None
        return [(nodes[i], r) for i, r in res.items()]
