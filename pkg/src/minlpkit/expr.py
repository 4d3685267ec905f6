"""Expression graphs for factorable nonlinear functions.

Each node carries an operator kind, its children and the operator's constant
data.  The per-operator callbacks live in this module as dispatch tables:

* evaluation and backward (reverse-mode) differentiation,
* interval evaluation and reverse propagation of a target interval,
* curvature, monotonicity and integrality queries,
* a total order (``compare``) with a consistent hash,
* infix printing that the model parser reads back.

Simplification and common-subexpression elimination are in ``simplify``;
linear estimators are in ``estimators``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from . import interval as iv
from .interval import EMPTY, ENTIRE, INF, Interval

KINDS = ("val", "var", "sum", "prod", "pow", "signpower", "exp", "log",
         "entropy", "sin", "cos", "abs")
KIND_RANK = {k: i for i, k in enumerate(KINDS)}
UNARY = frozenset(("pow", "signpower", "exp", "log", "entropy", "sin", "cos", "abs"))

KINK_TOL = 1e-9
LOG_CLIP = 1e-300
EXP_UNDERFLOW = 5e-324


class DomainError(ValueError):
    """An argument lies outside the operator domain by more than feastol."""


class KinkError(ValueError):
    """Derivative requested at a nondifferentiable point."""


class Curvature(Enum):
    LINEAR = "linear"
    CONVEX = "convex"
    CONCAVE = "concave"
    UNKNOWN = "unknown"

    def negate(self) -> "Curvature":
        if self is Curvature.CONVEX:
            return Curvature.CONCAVE
        if self is Curvature.CONCAVE:
            return Curvature.CONVEX
        return self

    def has(self, other: "Curvature") -> bool:
        """True if self implies other (linear implies both)."""
        if other is Curvature.UNKNOWN:
            return True
        if self is Curvature.LINEAR:
            return True
        return self is other


def combine_curv(a: Curvature, b: Curvature) -> Curvature:
    """Curvature of a sum of two functions."""
    if a is Curvature.LINEAR:
        return b
    if b is Curvature.LINEAR:
        return a
    if a is b:
        return a
    return Curvature.UNKNOWN


class Mono(Enum):
    INC = "inc"
    DEC = "dec"
    CONST = "const"
    UNKNOWN = "unknown"

    def negate(self) -> "Mono":
        if self is Mono.INC:
            return Mono.DEC
        if self is Mono.DEC:
            return Mono.INC
        return self


class VarType(Enum):
    CONTINUOUS = "continuous"
    INTEGER = "integer"
    BINARY = "binary"
    IMPLINT = "implint"


@dataclass
class VarRef:
    """A problem variable."""

    index: int
    name: str
    vartype: VarType = VarType.CONTINUOUS
    bounds: Interval = ENTIRE
    objective: float = 0.0
    aux: bool = False

    @property
    def is_integral(self) -> bool:
        return self.vartype is not VarType.CONTINUOUS


# ---------------------------------------------------------------------------
# nodes
# ---------------------------------------------------------------------------

class Expr:
    """Immutable expression node (caches aside).

    ``const`` holds the sum offset a0, the product factor c, the exponent of
    pow/signpower or the value of a val node.  ``coefs`` holds sum
    coefficients.  ``index`` identifies the variable of a var node.
    """

    __slots__ = ("kind", "children", "const", "coefs", "index", "name",
                 "_key", "_hash", "activity", "value", "locks_down",
                 "locks_up", "aux", "__weakref__")

    def __init__(self, kind: str, children: Sequence["Expr"] = (),
                 const: float = 0.0, coefs: Sequence[float] = (),
                 index: int = -1, name: str = ""):
        if kind not in KIND_RANK:
            raise ValueError(f"unknown expression kind {kind!r}")
        self.kind = kind
        self.children: Tuple[Expr, ...] = tuple(children)
        self.const = float(const)
        self.coefs: Tuple[float, ...] = tuple(float(c) for c in coefs)
        self.index = index
        self.name = name
        self._key = None
        self._hash = None
        self.activity: Interval = ENTIRE
        self.value: float = math.nan
        self.locks_down = 0
        self.locks_up = 0
        self.aux: Optional[int] = None
        if kind == "sum" and len(self.coefs) != len(self.children):
            raise ValueError("sum needs one coefficient per child")
        if kind in UNARY and len(self.children) != 1:
            raise ValueError(f"{kind} takes exactly one child")
        if kind == "signpower" and not self.const > 1:
            raise ValueError("signpower exponent must exceed 1")

    # -- identity -----------------------------------------------------------
    def key(self) -> tuple:
        """Structural key; ordering of keys is the compare order."""
        if self._key is None:
            if self.kind == "var":
                data: tuple = (float(self.index),)
            elif self.kind == "sum":
                data = (self.const,) + self.coefs
            else:
                data = (self.const,)
            self._key = (KIND_RANK[self.kind], len(self.children),
                         tuple(c.key() for c in self.children), data)
        return self._key

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(self.key())
        return self._hash

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, Expr):
            return NotImplemented
        return self.key() == other.key()

    def __lt__(self, other: "Expr") -> bool:
        return compare(self, other) < 0

    # -- sugar ----------------------------------------------------------------
    def __add__(self, other):
        other = as_expr(other)
        return Expr("sum", (self, other), 0.0, (1.0, 1.0))

    def __radd__(self, other):
        return as_expr(other) + self

    def __sub__(self, other):
        other = as_expr(other)
        return Expr("sum", (self, other), 0.0, (1.0, -1.0))

    def __rsub__(self, other):
        return as_expr(other) - self

    def __neg__(self):
        return Expr("sum", (self,), 0.0, (-1.0,))

    def __mul__(self, other):
        other = as_expr(other)
        return Expr("prod", (self, other), 1.0)

    def __rmul__(self, other):
        return as_expr(other) * self

    def __truediv__(self, other):
        other = as_expr(other)
        return Expr("prod", (self, Expr("pow", (other,), -1.0)), 1.0)

    def __rtruediv__(self, other):
        return as_expr(other) / self

    def __pow__(self, p):
        return Expr("pow", (self,), float(p))

    def __repr__(self) -> str:
        return f"Expr({to_string(self)})"

    def __str__(self) -> str:
        return to_string(self)

    @property
    def is_var(self) -> bool:
        return self.kind == "var"

    @property
    def is_val(self) -> bool:
        return self.kind == "val"


def as_expr(v) -> Expr:
    if isinstance(v, Expr):
        return v
    return val(float(v))


# -- builders -----------------------------------------------------------------

def val(v: float) -> Expr:
    return Expr("val", (), const=v)


def var(index: int, name: str = "") -> Expr:
    return Expr("var", (), index=index, name=name or f"x{index}")


def sum_(children: Sequence[Expr], coefs: Optional[Sequence[float]] = None,
         const: float = 0.0) -> Expr:
    children = [as_expr(c) for c in children]
    if coefs is None:
        coefs = [1.0] * len(children)
    return Expr("sum", children, const, coefs)


def prod(children: Sequence[Expr], coef: float = 1.0) -> Expr:
    return Expr("prod", [as_expr(c) for c in children], coef)


def power(child: Expr, p: float) -> Expr:
    return Expr("pow", (as_expr(child),), p)


def signpower(child: Expr, p: float) -> Expr:
    return Expr("signpower", (as_expr(child),), p)


def exp(child: Expr) -> Expr:
    return Expr("exp", (as_expr(child),))


def log(child: Expr) -> Expr:
    return Expr("log", (as_expr(child),))


def entropy(child: Expr) -> Expr:
    return Expr("entropy", (as_expr(child),))


def sin(child: Expr) -> Expr:
    return Expr("sin", (as_expr(child),))


def cos(child: Expr) -> Expr:
    return Expr("cos", (as_expr(child),))


def abs_(child: Expr) -> Expr:
    return Expr("abs", (as_expr(child),))


def sqrt(child: Expr) -> Expr:
    return power(child, 0.5)


# ---------------------------------------------------------------------------
# traversal
# ---------------------------------------------------------------------------

def topo_order(roots: Iterable[Expr]) -> List[Expr]:
    """Nodes in children-before-parents order, each node once."""
    seen = set()
    order: List[Expr] = []
    stack: List[Tuple[Expr, bool]] = [(r, False) for r in reversed(list(roots))]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for c in reversed(node.children):
            if id(c) not in seen:
                stack.append((c, False))
    return order


def variables(e: Expr) -> List[int]:
    """Sorted distinct variable indices in e."""
    return sorted({n.index for n in topo_order([e]) if n.kind == "var"})


def var_nodes(e: Expr) -> List[Expr]:
    out = {}
    for n in topo_order([e]):
        if n.kind == "var":
            out.setdefault(n.index, n)
    return [out[k] for k in sorted(out)]


def depth(e: Expr) -> int:
    d: Dict[int, int] = {}
    for n in topo_order([e]):
        d[id(n)] = 1 + max((d[id(c)] for c in n.children), default=0)
    return d[id(e)]


def compare(a: Expr, b: Expr) -> int:
    """Total order: kind rank, arity, children, then constant data."""
    ka, kb = a.key(), b.key()
    return (ka > kb) - (ka < kb)


# ---------------------------------------------------------------------------
# pointwise operator semantics
# ---------------------------------------------------------------------------

def _spow(y: float, p: float) -> float:
    return math.copysign(abs(y) ** p, y)


def _fval(kind: str, p: float, y: float, feastol: float) -> float:
    """Value of a unary operator; clips arguments within feastol of the domain."""
    if kind == "exp":
        try:
            return math.exp(y)
        except OverflowError:
            return math.inf
    if kind == "log":
        if y <= 0:
            if y < -feastol:
                raise DomainError(f"log of {y}")
            y = LOG_CLIP
        return math.log(y)
    if kind == "pow":
        if float(p).is_integer():
            n = int(p)
            if n < 0 and y == 0:
                raise DomainError("negative power of zero")
            try:
                return y ** n
            except OverflowError:
                return math.inf
        if y < 0:
            if y < -feastol:
                raise DomainError(f"fractional power of {y}")
            y = 0.0
        if y == 0 and p < 0:
            raise DomainError("negative power of zero")
        try:
            return y ** p
        except OverflowError:
            return math.inf
    if kind == "signpower":
        try:
            return _spow(y, p)
        except OverflowError:
            return math.copysign(math.inf, y)
    if kind == "entropy":
        if y < 0:
            if y < -feastol:
                raise DomainError(f"entropy of {y}")
            y = 0.0
        return 0.0 if y == 0 else -y * math.log(y)
    if kind == "sin":
        return math.sin(y)
    if kind == "cos":
        return math.cos(y)
    if kind == "abs":
        return abs(y)
    raise ValueError(kind)


def _fderiv(kind: str, p: float, y: float, feastol: float) -> float:
    """Derivative of a unary operator."""
    if kind == "exp":
        return math.exp(min(y, 700.0))
    if kind == "log":
        if y <= 0:
            if y < -feastol:
                raise DomainError(f"log of {y}")
            y = LOG_CLIP
        return 1.0 / y
    if kind == "pow":
        if p == 0:
            return 0.0
        if float(p).is_integer():
            n = int(p)
            if n < 0 and y == 0:
                raise DomainError("negative power of zero")
            return n * y ** (n - 1)
        if y < 0:
            if y < -feastol:
                raise DomainError(f"fractional power of {y}")
            y = 0.0
        if y == 0:
            if p > 1:
                return 0.0
            raise DomainError("derivative of fractional power at zero")
        return p * y ** (p - 1)
    if kind == "signpower":
        return p * abs(y) ** (p - 1)
    if kind == "entropy":
        if y <= 0:
            if y < -feastol:
                raise DomainError(f"entropy of {y}")
            raise DomainError("entropy derivative at zero")
        return -math.log(y) - 1.0
    if kind == "sin":
        return math.cos(y)
    if kind == "cos":
        return -math.sin(y)
    if kind == "abs":
        if abs(y) < KINK_TOL:
            raise KinkError("abs at its kink")
        return 1.0 if y > 0 else -1.0
    raise ValueError(kind)


def node_value(e: Expr, cvals: Sequence[float], feastol: float = 1e-6) -> float:
    """Value of a node given its children's values (var/val excluded)."""
    k = e.kind
    if k == "val":
        return e.const
    if k == "sum":
        s = e.const
        for a, v in zip(e.coefs, cvals):
            s += a * v
        return s
    if k == "prod":
        s = e.const
        for v in cvals:
            s *= v
        return s
    return _fval(k, e.const, cvals[0], feastol)


def node_partials(e: Expr, cvals: Sequence[float], feastol: float = 1e-6) -> List[float]:
    """Partial derivatives of a node with respect to each child."""
    k = e.kind
    if k == "sum":
        return list(e.coefs)
    if k == "prod":
        n = len(cvals)
        out = []
        for i in range(n):
            s = e.const
            for j in range(n):
                if j != i:
                    s *= cvals[j]
            out.append(s)
        return out
    if k in UNARY:
        return [_fderiv(k, e.const, cvals[0], feastol)]
    return []


def evaluate(e: Expr, point, feastol: float = 1e-6,
             cache: Optional[Dict[int, float]] = None, order: Optional[List[Expr]] = None) -> float:
    """Evaluate e at point (a mapping or sequence indexed by variable index).

    ``order`` may pass a precomputed topo_order([e]).
    """
    vals = {} if cache is None else cache
    for n in (order if order is not None else topo_order([e])):
        if id(n) in vals:
            continue
        if n.kind == "var":
            v = float(point[n.index])
        else:
            v = node_value(n, [vals[id(c)] for c in n.children], feastol)
        vals[id(n)] = v
        n.value = v
    return vals[id(e)]


def backward_diff(e: Expr, point, feastol: float = 1e-6) -> Dict[int, float]:
    """Gradient of e at point by one reverse sweep over the DAG."""
    vals: Dict[int, float] = {}
    order = topo_order([e])
    evaluate(e, point, feastol, vals)
    adj: Dict[int, float] = {id(e): 1.0}
    grad: Dict[int, float] = {}
    for n in reversed(order):
        a = adj.get(id(n), 0.0)
        if n.kind == "var":
            grad[n.index] = grad.get(n.index, 0.0) + a
            continue
        if not n.children or a == 0.0:
            if n.children and n.kind == "abs":
                # still flag kinks so the caller knows the gradient is ill-defined
                _fderiv("abs", 0.0, vals[id(n.children[0])], feastol)
            continue
        parts = node_partials(n, [vals[id(c)] for c in n.children], feastol)
        for c, d in zip(n.children, parts):
            adj[id(c)] = adj.get(id(c), 0.0) + a * d
    for idx in variables(e):
        grad.setdefault(idx, 0.0)
    return grad


# ---------------------------------------------------------------------------
# interval evaluation
# ---------------------------------------------------------------------------

def unary_interval(kind: str, p: float, a: Interval) -> Interval:
    if kind == "exp":
        return iv.exp(a)
    if kind == "log":
        return iv.log(a)
    if kind == "pow":
        return iv.pow_(a, p)
    if kind == "signpower":
        return iv.signpower(a, p)
    if kind == "entropy":
        return iv.entropy(a)
    if kind == "sin":
        return iv.sin(a)
    if kind == "cos":
        return iv.cos(a)
    if kind == "abs":
        return iv.abs_(a)
    raise ValueError(kind)


def sum_interval(const: float, coefs: Sequence[float], acts: Sequence[Interval]) -> Interval:
    r = Interval.point(const)
    for a, c in zip(coefs, acts):
        r = iv.add(r, iv.scale(c, a))
    return r


def node_interval(e: Expr, acts: Sequence[Interval]) -> Interval:
    """Interval image of a node given its children's activities."""
    k = e.kind
    if k == "val":
        return Interval.point(e.const)
    if any(a.is_empty for a in acts):
        return EMPTY
    if k == "sum":
        return sum_interval(e.const, e.coefs, acts)
    if k == "prod":
        r = Interval.point(e.const)
        for a in acts:
            r = iv.mul(r, a)
        return r
    return unary_interval(k, e.const, acts[0])


def interval_eval(e: Expr, bounds, cache: Optional[Dict[int, Interval]] = None,
                  aux_bounds: Optional[Callable[[Expr], Optional[Interval]]] = None) -> Interval:
    """Forward interval pass; caches the activity on every node.

    ``bounds`` maps variable index to Interval.  ``aux_bounds`` may return an
    extra enclosure for a node (e.g. its auxiliary variable's bounds) that is
    intersected into the activity.
    """
    acts = {} if cache is None else cache
    for n in topo_order([e]):
        if id(n) in acts:
            continue
        if n.kind == "var":
            a = bounds[n.index]
        else:
            a = node_interval(n, [acts[id(c)] for c in n.children])
        if aux_bounds is not None:
            extra = aux_bounds(n)
            if extra is not None:
                a = a.intersect(extra)
        acts[id(n)] = a
        n.activity = a
    return acts[id(e)]


# ---------------------------------------------------------------------------
# reverse propagation
# ---------------------------------------------------------------------------

def _inv_sum(const: float, coefs: Sequence[float], acts: Sequence[Interval],
             target: Interval) -> List[Interval]:
    """Child enclosures for const + sum a_i y_i in target."""
    n = len(acts)
    # finite parts and infinity counts of the activity of each term
    los, his = [], []
    for a, c in zip(coefs, acts):
        t = iv.scale(c, a)
        los.append(t.lo)
        his.append(t.hi)
    ninf_lo = sum(1 for v in los if v <= -INF)
    ninf_hi = sum(1 for v in his if v >= INF)
    flo = math.fsum(v for v in los if v > -INF)
    fhi = math.fsum(v for v in his if v < INF)
    mag = math.fsum(abs(v) for v in los if v > -INF) + math.fsum(abs(v) for v in his if v < INF)
    slack = 1e-12 * (mag + abs(const)) + 1e-300
    out = []
    for i in range(n):
        # rest = sum of the other terms
        if ninf_lo == 0:
            rlo = flo - los[i] - slack
        elif ninf_lo == 1 and los[i] <= -INF:
            rlo = flo - slack
        else:
            rlo = -INF
        if ninf_hi == 0:
            rhi = fhi - his[i] + slack
        elif ninf_hi == 1 and his[i] >= INF:
            rhi = fhi + slack
        else:
            rhi = INF
        rest = Interval.make(max(rlo, -INF), min(rhi, INF))
        term = iv.sub(iv.sub(target, Interval.point(const)), rest)
        a = coefs[i]
        if a == 0.0:
            out.append(ENTIRE)
            continue
        out.append(iv.scale(term, 1.0 / a).inflate())
    return out


def _inv_prod(c: float, acts: Sequence[Interval], target: Interval) -> List[Interval]:
    out = []
    for i in range(len(acts)):
        rest = Interval.point(c)
        for j, a in enumerate(acts):
            if j != i:
                rest = iv.mul(rest, a)
        if rest.contains_zero():
            # target must contain 0 when rest can vanish... no info on y_i
            out.append(ENTIRE)
        else:
            out.append(iv.div(target, rest))
    return out


def _root_interval(t: Interval, n: float) -> Interval:
    """Nonnegative y with y**n in t (n > 0 real), t clipped to t >= 0."""
    lo = max(t.lo, 0.0)
    if lo > t.hi:
        return EMPTY
    r = iv.pow_(Interval.make(lo, t.hi), 1.0 / n).inflate(1e-12, 1e-300)
    # roots are nonnegative by definition; inflation must not cross zero
    return Interval.make(max(r.lo, 0.0), r.hi)


def _inv_pow(p: float, child: Interval, t: Interval) -> Interval:
    if p == 0:
        return ENTIRE if t.contains(1.0) else EMPTY
    if float(p).is_integer():
        n = int(p)
        if n < 0:
            # y^n = 1/y^|n| in t  <=>  y^|n| in 1/t  (y^n != 0)
            tt = t
            if tt.contains_zero():
                if tt.lo == 0 and tt.hi == 0:
                    return EMPTY
                # split at zero
                pos = Interval.make(max(tt.lo, 0.0), tt.hi)
                negp = Interval.make(tt.lo, min(tt.hi, 0.0))
                r = EMPTY
                if not pos.is_empty and pos.hi > 0:
                    r = r.hull(_inv_pow(-n, child, iv.reciprocal(pos)))
                if not negp.is_empty and negp.lo < 0:
                    r = r.hull(_inv_pow(-n, child, iv.reciprocal(negp)))
                return r
            return _inv_pow(-n, child, iv.reciprocal(tt).inflate())
        if n % 2 == 1:
            r_pos = _root_interval(t, n)
            neg_t = Interval.make(max(-t.hi, 0.0), -t.lo) if t.lo < 0 else EMPTY
            r_neg = iv.neg(_root_interval(neg_t, n)) if not neg_t.is_empty else EMPTY
            return r_pos.hull(r_neg)
        r = _root_interval(t, n)
        if r.is_empty:
            return EMPTY
        return r.intersect(child).hull(iv.neg(r).intersect(child))
    r = _root_interval(t, p) if p > 0 else _root_interval(iv.reciprocal(
        Interval.make(max(t.lo, 0.0), t.hi)), -p)
    return r


def _monotone_inverse(f: Callable[[float], float], lo: float, hi: float,
                      target: float, increasing: bool) -> float:
    """Point in [lo, hi] where monotone f crosses target, by bisection."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        v = f(mid)
        if (v < target) == increasing:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _inv_entropy(child: Interval, t: Interval) -> Interval:
    f = lambda y: 0.0 if y <= 0 else -y * math.log(y)
    peak = 1.0 / math.e
    dom = Interval.make(max(child.lo, 0.0), child.hi)
    if dom.is_empty:
        return EMPTY
    result = EMPTY
    tol = 1e-10
    # increasing branch [0, 1/e]
    b1 = dom.intersect(Interval(0.0, peak))
    if not b1.is_empty:
        lo, hi = b1.lo, b1.hi
        if f(hi) < t.lo - tol or f(lo) > t.hi + tol:
            pass
        else:
            nlo = lo if f(lo) >= t.lo else _monotone_inverse(f, lo, hi, t.lo, True)
            nhi = hi if f(hi) <= t.hi else _monotone_inverse(f, lo, hi, t.hi, True)
            result = result.hull(Interval.make(nlo - tol, nhi + tol))
    b2 = dom.intersect(Interval(peak, INF))
    if not b2.is_empty:
        lo, hi = b2.lo, b2.hi
        fhi = -INF if b2.hi_inf else f(hi)
        if f(lo) < t.lo - tol or fhi > t.hi + tol:
            pass
        else:
            nlo = lo if f(lo) <= t.hi else _monotone_inverse(f, lo, min(hi, 1e15), t.hi, False)
            if fhi >= t.lo:
                nhi = hi
            else:
                top = hi
                if b2.hi_inf:
                    top = max(lo * 2.0, 10.0)
                    while f(top) > t.lo and top < 1e18:
                        top *= 2.0
                nhi = INF if f(top) > t.lo else _monotone_inverse(f, lo, top, t.lo, False)
            result = result.hull(Interval.make(nlo - tol * max(1, abs(nlo)),
                                               nhi + tol * max(1, abs(nhi))))
    return result.intersect(dom)


def _inv_trig(child: Interval, t: Interval, shift: float) -> Interval:
    """Tighten y with cos(y - shift) in t."""
    tl, th = max(t.lo, -1.0), min(t.hi, 1.0)
    if tl > th:
        return EMPTY
    if child.lo_inf or child.hi_inf:
        return child
    if tl <= -1.0 and th >= 1.0:
        return child
    a1, a2 = math.acos(th), math.acos(tl)  # 0 <= a1 <= a2 <= pi
    two_pi = 2.0 * math.pi
    base = [(a1, a2), (two_pi - a2, two_pi - a1)]
    tol = 1e-9
    lo, hi = child.lo - shift, child.hi - shift
    segs = []
    k0 = math.floor(lo / two_pi) - 1
    k1 = math.floor(hi / two_pi) + 1
    if k1 - k0 > 6:
        return child
    for k in range(k0, k1 + 1):
        for s, e in base:
            s2, e2 = s + k * two_pi - tol, e + k * two_pi + tol
            if e2 >= lo and s2 <= hi:
                segs.append((max(s2, lo), min(e2, hi)))
    if not segs:
        return EMPTY
    return Interval.make(min(s for s, _ in segs) + shift, max(e for _, e in segs) + shift)


def _inv_abs(child: Interval, t: Interval) -> Interval:
    lo, hi = max(t.lo, 0.0), t.hi
    if lo > hi:
        return EMPTY
    pos = Interval.make(lo, hi)
    return pos.intersect(child).hull(iv.neg(pos).intersect(child))


def node_reverse(e: Expr, target: Interval, acts: Sequence[Interval]) -> List[Interval]:
    """Enclosures for the children of e given e in target.

    Each returned interval is to be intersected with the child's current
    activity.  An EMPTY entry signals infeasibility.
    """
    k = e.kind
    if target.is_empty:
        return [EMPTY] * len(acts)
    if k == "sum":
        return _inv_sum(e.const, e.coefs, acts, target)
    if k == "prod":
        return _inv_prod(e.const, acts, target)
    a = acts[0]
    if k == "exp":
        if target.hi < 0:
            return [EMPTY]
        # exp underflows to 0 below about -745, so a zero target is attainable
        return [iv.log(Interval.make(target.lo, max(target.hi, EXP_UNDERFLOW)))]
    if k == "log":
        # the argument of log is strictly positive
        r = iv.exp(target)
        return [Interval.make(max(r.lo, LOG_CLIP), max(r.hi, LOG_CLIP))]
    if k == "pow":
        return [_inv_pow(e.const, a, target)]
    if k == "signpower":
        r = target
        pos = Interval.make(max(r.lo, 0.0), r.hi)
        negp = Interval.make(r.lo, min(r.hi, 0.0))
        out = EMPTY
        if not pos.is_empty:
            out = out.hull(_root_interval(pos, e.const))
        if not negp.is_empty:
            out = out.hull(iv.neg(_root_interval(iv.neg(negp), e.const)))
        return [out]
    if k == "entropy":
        return [_inv_entropy(a, target)]
    if k == "cos":
        return [_inv_trig(a, target, 0.0)]
    if k == "sin":
        return [_inv_trig(a, target, math.pi / 2.0)]
    if k == "abs":
        return [_inv_abs(a, target)]
    return [ENTIRE] * len(acts)


def reverse_prop(e: Expr, target: Interval, bounds: Mapping[int, Interval]
                 ) -> Optional[Dict[int, Interval]]:
    """Tightened variable bounds implied by e(x) in target, or None if infeasible.

    Runs one forward pass and one backward pass over the tree.
    """
    acts: Dict[int, Interval] = {}
    interval_eval(e, bounds, acts)
    order = topo_order([e])
    tgt: Dict[int, Interval] = {id(n): acts[id(n)] for n in order}
    tgt[id(e)] = tgt[id(e)].intersect(target)
    if tgt[id(e)].is_empty:
        return None
    out: Dict[int, Interval] = {}
    for n in reversed(order):
        t = tgt[id(n)]
        if t.is_empty:
            return None
        if n.kind == "var":
            out[n.index] = t
            continue
        if n.kind == "val":
            if not t.contains(n.const, 1e-9):
                return None
            continue
        new = node_reverse(n, t, [tgt[id(c)] for c in n.children])
        for c, r in zip(n.children, new):
            if c.kind == "val":
                if not r.contains(c.const, 1e-9 * max(1.0, abs(c.const))):
                    return None
                continue
            nt = tgt[id(c)].intersect(r.inflate())
            if nt.is_empty:
                return None
            tgt[id(c)] = nt
    return out


# ---------------------------------------------------------------------------
# curvature, monotonicity, integrality
# ---------------------------------------------------------------------------

def _unary_shape(kind: str, p: float, a: Interval) -> Tuple[Curvature, Mono]:
    """Curvature and monotonicity of a unary operator over activity a."""
    C, M = Curvature, Mono
    if a.is_empty:
        return C.UNKNOWN, M.UNKNOWN
    if kind == "exp":
        return C.CONVEX, M.INC
    if kind == "log":
        return C.CONCAVE, M.INC
    if kind == "abs":
        if a.lo >= 0:
            return C.LINEAR, M.INC
        if a.hi <= 0:
            return C.LINEAR, M.DEC
        return C.CONVEX, M.UNKNOWN
    if kind == "signpower":
        if a.lo >= 0:
            return C.CONVEX, M.INC
        if a.hi <= 0:
            return C.CONCAVE, M.INC
        return C.UNKNOWN, M.INC
    if kind == "entropy":
        peak = 1.0 / math.e
        if a.hi <= peak:
            return C.CONCAVE, M.INC
        if a.lo >= peak:
            return C.CONCAVE, M.DEC
        return C.CONCAVE, M.UNKNOWN
    if kind in ("sin", "cos"):
        return _trig_shape(kind, a)
    if kind == "pow":
        if p == 0:
            return C.LINEAR, M.CONST
        if p == 1:
            return C.LINEAR, M.INC
        if float(p).is_integer():
            n = int(p)
            if n > 0:
                if n % 2 == 0:
                    mono = M.INC if a.lo >= 0 else (M.DEC if a.hi <= 0 else M.UNKNOWN)
                    return C.CONVEX, mono
                if a.lo >= 0:
                    return C.CONVEX, M.INC
                if a.hi <= 0:
                    return C.CONCAVE, M.INC
                return C.UNKNOWN, M.INC
            # negative integer power
            if a.lo > 0:
                return C.CONVEX, M.DEC
            if a.hi < 0:
                if n % 2 == 0:
                    return C.CONVEX, M.INC
                return C.CONCAVE, M.DEC
            return C.UNKNOWN, M.UNKNOWN
        # fractional power, domain y >= 0
        if p > 1:
            return C.CONVEX, M.INC
        if p > 0:
            return C.CONCAVE, M.INC
        return C.CONVEX, M.DEC
    return C.UNKNOWN, M.UNKNOWN


def _trig_shape(kind: str, a: Interval) -> Tuple[Curvature, Mono]:
    if not a.is_bounded or a.width >= math.pi:
        return Curvature.UNKNOWN, Mono.UNKNOWN
    # work with cos(y - shift)
    shift = 0.0 if kind == "cos" else math.pi / 2.0
    lo, hi = a.lo - shift, a.hi - shift
    two_pi = 2.0 * math.pi
    k = math.floor(lo / two_pi)
    lo, hi = lo - k * two_pi, hi - k * two_pi
    curv = Curvature.UNKNOWN
    # cos is concave on [-pi/2, pi/2] and convex on [pi/2, 3pi/2] (mod 2pi)
    for off in (-two_pi, 0.0, two_pi):
        if lo >= -math.pi / 2 + off and hi <= math.pi / 2 + off:
            curv = Curvature.CONCAVE
        if lo >= math.pi / 2 + off and hi <= 3 * math.pi / 2 + off:
            curv = Curvature.CONVEX
    mono = Mono.UNKNOWN
    for off in (-two_pi, 0.0, two_pi):
        if lo >= off and hi <= math.pi + off:
            mono = Mono.DEC
        if lo >= math.pi + off and hi <= two_pi + off:
            mono = Mono.INC
    return curv, mono


def monotonicity(e: Expr, child_index: int, acts: Optional[Sequence[Interval]] = None) -> Mono:
    """Monotonicity of node e in its child_index-th child.

    ``acts`` are the children's activities; defaults to the cached ones.
    """
    if acts is None:
        acts = [c.activity for c in e.children]
    k = e.kind
    if k == "sum":
        a = e.coefs[child_index]
        return Mono.INC if a > 0 else (Mono.DEC if a < 0 else Mono.CONST)
    if k == "prod":
        rest = Interval.point(e.const)
        for j, a in enumerate(acts):
            if j != child_index:
                rest = iv.mul(rest, a)
        if rest.is_empty:
            return Mono.UNKNOWN
        if rest.lo >= 0:
            return Mono.INC if rest.hi > 0 else Mono.CONST
        if rest.hi <= 0:
            return Mono.DEC
        return Mono.UNKNOWN
    if k in UNARY:
        return _unary_shape(k, e.const, acts[0])[1]
    return Mono.CONST


def node_curvature(e: Expr, child_curv: Sequence[Curvature],
                   acts: Sequence[Interval]) -> Curvature:
    """Curvature of node e given the curvature and activity of its children."""
    k = e.kind
    if k in ("val", "var"):
        return Curvature.LINEAR
    if k == "sum":
        r = Curvature.LINEAR
        for a, c in zip(e.coefs, child_curv):
            if a == 0:
                continue
            r = combine_curv(r, c if a > 0 else c.negate())
        return r
    if k == "prod":
        nonconst = [i for i, a in enumerate(acts)
                    if not (a.lo == a.hi)]
        if len(e.children) == 1 or len(nonconst) <= 1:
            i = nonconst[0] if nonconst else 0
            factor = e.const
            for j, a in enumerate(acts):
                if j != i:
                    factor *= a.lo
            c = child_curv[i]
            return c if factor >= 0 else c.negate()
        return Curvature.UNKNOWN
    f_curv, f_mono = _unary_shape(k, e.const, acts[0])
    g = child_curv[0]
    if g is Curvature.LINEAR:
        return f_curv
    if f_curv is Curvature.LINEAR:
        if f_mono is Mono.INC:
            return g
        if f_mono is Mono.DEC:
            return g.negate()
        return Curvature.UNKNOWN
    if f_curv is Curvature.CONVEX:
        if (f_mono is Mono.INC and g is Curvature.CONVEX) or \
                (f_mono is Mono.DEC and g is Curvature.CONCAVE):
            return Curvature.CONVEX
    if f_curv is Curvature.CONCAVE:
        if (f_mono is Mono.INC and g is Curvature.CONCAVE) or \
                (f_mono is Mono.DEC and g is Curvature.CONVEX):
            return Curvature.CONCAVE
    return Curvature.UNKNOWN


def curvature(e: Expr, bounds) -> Curvature:
    """Curvature of e over the box given by bounds (var index -> Interval)."""
    acts: Dict[int, Interval] = {}
    interval_eval(e, bounds, acts)
    curv: Dict[int, Curvature] = {}
    for n in topo_order([e]):
        curv[id(n)] = node_curvature(n, [curv[id(c)] for c in n.children],
                                     [acts[id(c)] for c in n.children])
    return curv[id(e)]


def _is_int(v: float) -> bool:
    return float(v).is_integer()


def node_integrality(e: Expr, child_int: Sequence[bool]) -> bool:
    k = e.kind
    if k == "val":
        return _is_int(e.const)
    if k == "sum":
        return _is_int(e.const) and all(_is_int(a) for a in e.coefs) and all(child_int)
    if k == "prod":
        return _is_int(e.const) and all(child_int)
    if k == "pow":
        return e.const >= 0 and _is_int(e.const) and child_int[0]
    if k == "signpower":
        return _is_int(e.const) and child_int[0]
    if k == "abs":
        return child_int[0]
    return False


def integrality(e: Expr, is_integer_var: Callable[[int], bool]) -> bool:
    """True if e takes integral values whenever its integer variables do."""
    res: Dict[int, bool] = {}
    for n in topo_order([e]):
        if n.kind == "var":
            res[id(n)] = bool(is_integer_var(n.index))
        else:
            res[id(n)] = node_integrality(n, [res[id(c)] for c in n.children])
    return res[id(e)]


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------

def _num(v: float) -> str:
    if v >= INF:
        return "inf"
    if v <= -INF:
        return "-inf"
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


_FUNC_NAMES = {"exp": "exp", "log": "log", "entropy": "entropy", "sin": "sin",
               "cos": "cos", "abs": "abs"}


def to_string(e: Expr, names: Optional[Mapping[int, str]] = None) -> str:
    """Infix text in the model grammar."""
    def name_of(n: Expr) -> str:
        if names is not None and n.index in names:
            return names[n.index]
        return n.name or f"x{n.index}"

    def atom(n: Expr) -> str:
        s = rec(n)
        if n.kind in ("var",) or n.kind in _FUNC_NAMES or n.kind == "signpower":
            return s
        if n.kind == "val" and n.const >= 0:
            return s
        return f"({s})"

    def rec(n: Expr) -> str:
        k = n.kind
        if k == "val":
            return _num(n.const)
        if k == "var":
            return name_of(n)
        if k == "sum":
            parts = []
            for a, c in zip(n.coefs, n.children):
                body = atom(c)
                if a == 1.0:
                    parts.append(("+", body))
                elif a == -1.0:
                    parts.append(("-", body))
                elif a < 0:
                    parts.append(("-", f"{_num(-a)}*{body}"))
                else:
                    parts.append(("+", f"{_num(a)}*{body}"))
            s = ""
            if n.const != 0.0 or not parts:
                s = _num(n.const)
            for sign, body in parts:
                if not s:
                    s = body if sign == "+" else f"-{body}"
                else:
                    s += f" {sign} {body}"
            return s
        if k == "prod":
            body = "*".join(atom(c) for c in n.children) or "1"
            if n.const == 1.0:
                return body
            if n.const == -1.0:
                return f"-{body}"
            return f"{_num(n.const)}*{body}"
        if k == "pow":
            return f"{atom(n.children[0])}^{_pow_exp(n.const)}"
        if k == "signpower":
            return f"signpower({rec(n.children[0])}, {_num(n.const)})"
        return f"{_FUNC_NAMES[k]}({rec(n.children[0])})"

    return rec(e)


def _pow_exp(p: float) -> str:
    s = _num(p)
    return f"({s})" if p < 0 else s
