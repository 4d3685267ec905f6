"""Linear under- and overestimators of single operators.

``estimate`` looks at one node whose children are treated as variables (an
auxiliary variable or an original one) and returns an affine function of
the children that is valid over the children's box.  Convex sides get
tangents at the reference point; nonconvex sides get secants; products get
McCormick inequalities.  ``None`` means no finite estimator exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from .expr import Expr, _fderiv, _fval, _unary_shape, Curvature
from .interval import INF, Interval

UNDER = "under"
OVER = "over"


@dataclass
class LinearEstimator:
    """const + sum coefs[i] * child_i."""

    coefs: Tuple[float, ...]
    const: float
    local: bool = True
    tangent: bool = False

    def value(self, point: Sequence[float]) -> float:
        return self.const + sum(a * x for a, x in zip(self.coefs, point))

    def negated(self) -> "LinearEstimator":
        return LinearEstimator(tuple(-a for a in self.coefs), -self.const,
                               self.local, self.tangent)


def _finite(v: float) -> bool:
    return abs(v) < INF and math.isfinite(v)


def _f(kind: str, p: float, y: float) -> float:
    return _fval(kind, p, y, 0.0)


def _df(kind: str, p: float, y: float) -> float:
    return _fderiv(kind, p, y, 0.0)


def _tangent(kind: str, p: float, y0: float) -> Optional[Tuple[float, float]]:
    try:
        fv, d = _f(kind, p, y0), _df(kind, p, y0)
    except (ValueError, OverflowError, ZeroDivisionError):
        return None
    if not (_finite(fv) and _finite(d)):
        return None
    return d, fv - d * y0


def _secant(kind: str, p: float, l: float, u: float) -> Optional[Tuple[float, float]]:
    if not (_finite(l) and _finite(u)):
        return None
    try:
        fl, fu = _f(kind, p, l), _f(kind, p, u)
    except (ValueError, OverflowError, ZeroDivisionError):
        return None
    if not (_finite(fl) and _finite(fu)):
        return None
    if u - l <= 1e-12 * max(1.0, abs(l)):
        return 0.0, fl
    s = (fu - fl) / (u - l)
    return s, fl - s * l


def _global_shape(kind: str, p: float) -> bool:
    """True if the curvature of the operator does not depend on the domain,
    so that its tangents are valid everywhere."""
    if kind in ("exp", "log", "entropy", "abs"):
        return True
    if kind == "pow":
        if not float(p).is_integer():
            return True
        return p > 0 and int(p) % 2 == 0
    return False


def _clip(v: float, l: float, u: float) -> float:
    return min(max(v, l), u)


def _point_secant(kind: str, p: float, y1: float, y2: float):
    f1, f2 = _f(kind, p, y1), _f(kind, p, y2)
    s = (f2 - f1) / (y2 - y1)
    return s, f1 - s * y1


def _integer_secant(kind, p, l, u, ref):
    """Secant through consecutive integers around ref (valid on integers)."""
    if not (_finite(l) and _finite(u)):
        lo_i = math.floor(ref)
    else:
        lo_i = math.floor(ref)
        lo_i = int(min(max(lo_i, math.ceil(l - 1e-9)), math.floor(u + 1e-9) - 1))
    hi_i = lo_i + 1
    if _finite(u) and hi_i > u + 1e-9:
        return None
    if _finite(l) and lo_i < l - 1e-9:
        return None
    try:
        return _point_secant(kind, p, float(lo_i), float(hi_i))
    except (ValueError, OverflowError, ZeroDivisionError):
        return None


def _tangent_point(kind: str, p: float, ref: float, l: float, u: float) -> float:
    """Reference point moved into the differentiable part of the domain."""
    y = _clip(ref, l, u)
    if kind in ("log", "entropy") or (kind == "pow" and not float(p).is_integer()):
        if y <= 0:
            y = min(u, 1e-4) if _finite(u) and u > 0 else 1e-4
            if y <= 0:
                y = 1e-4
    if kind == "pow" and p < 0 and y == 0:
        y = 1e-4 if u > 0 else -1e-4
    return y


def _mixed_tangent_point(kind: str, p: float, l: float, u: float) -> float:
    """For odd-like f (concave on y<0, convex on y>0) and l < 0: the point
    t > 0 where the tangent passes through (l, f(l))."""
    fl = _f(kind, p, l)

    def g(t):
        return _f(kind, p, t) + _df(kind, p, t) * (l - t) - fl

    # g(0) = -f(l) > 0 and g decreases to -inf
    lo, hi = 0.0, -l
    while g(hi) > 0 and hi < 1e15:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    return hi


def _odd_under(kind: str, p: float, l: float, u: float, ref: float):
    """Underestimator of an odd, concave-then-convex function on [l, u], l<0<u."""
    if not _finite(l):
        return None
    t = _mixed_tangent_point(kind, p, l, u)
    if _finite(u) and t >= u:
        return _secant(kind, p, l, u), False
    if ref >= t:
        y0 = ref if not _finite(u) else min(ref, u)
        return _tangent(kind, p, y0), True
    # line through (l, f(l)) and (t, f(t)) is the tangent at t
    return _tangent(kind, p, t), False


def estimate_unary(kind: str, p: float, dom: Interval, ref: float, sense: str,
                   integral: bool = False) -> Optional[LinearEstimator]:
    """Estimator of f(y) for y in dom."""
    l, u = dom.lo, dom.hi
    if dom.is_empty:
        return None
    if kind in ("sin", "cos"):
        from .interval import cos as icos, sin as isin
        img = isin(dom) if kind == "sin" else icos(dom)
        return LinearEstimator((0.0,), img.lo if sense == UNDER else img.hi, True, False)
    curv, _ = _unary_shape(kind, p, dom)
    # domain restrictions
    if kind in ("log", "entropy") or (kind == "pow" and not float(p).is_integer()):
        l = max(l, 0.0)
        if l > u:
            return None
    if kind == "pow" and p < 0 and l <= 0 <= u:
        return None
    want = Curvature.CONVEX if sense == UNDER else Curvature.CONCAVE
    if curv in (want, Curvature.LINEAR):
        if integral and _finite(ref) and abs(ref - round(ref)) > 1e-9:
            res = _integer_secant(kind, p, l, u, ref)
            if res is not None:
                return LinearEstimator((res[0],), res[1], True, False)
        y0 = _tangent_point(kind, p, ref, l, u)
        res = _tangent(kind, p, y0)
        if res is None:
            return None
        local = curv is not Curvature.LINEAR and not _global_shape(kind, p)
        return LinearEstimator((res[0],), res[1], local, y0 == ref)
    if curv is want.negate():
        res = _secant(kind, p, l, u)
        if res is None:
            return None
        return LinearEstimator((res[0],), res[1], True, False)
    # mixed curvature: odd power or signpower with l < 0 < u
    odd = kind == "signpower" or (kind == "pow" and float(p).is_integer() and int(p) % 2 == 1 and p > 0)
    if odd:
        if sense == UNDER:
            out = _odd_under(kind, p, l, u, ref)
            if out is None or out[0] is None:
                return None
            (s, c), tight = out
            return LinearEstimator((s,), c, True, tight)
        # f(-y) = -f(y): over f at y is minus under f at -y
        out = _odd_under(kind, p, -u, -l, -ref)
        if out is None or out[0] is None:
            return None
        (s, c), tight = out
        return LinearEstimator((s,), -c, True, tight)
    return None


# ---------------------------------------------------------------------------
# products
# ---------------------------------------------------------------------------

def mccormick(l1, u1, l2, u2, r1, r2, sense) -> Optional[Tuple[float, float, float]]:
    """McCormick estimator of y1*y2: returns (a1, a2, c) of a1*y1 + a2*y2 + c."""
    if sense == UNDER:
        cands = [(l2, l1, -l1 * l2, (l1, l2)), (u2, u1, -u1 * u2, (u1, u2))]
    else:
        cands = [(u2, l1, -l1 * u2, (l1, u2)), (l2, u1, -u1 * l2, (u1, l2))]
    best = None
    for a1, a2, c, need in cands:
        if not all(_finite(v) for v in need):
            continue
        v = a1 * r1 + a2 * r2 + c
        if best is None or (sense == UNDER and v > best[0]) or (sense == OVER and v < best[0]):
            best = (v, (a1, a2, c))
    return None if best is None else best[1]


def _prod_est(bounds: List[Interval], ref: List[float], idx: List[int],
              sense: str) -> Optional[Tuple[dict, float]]:
    """Estimator of prod_{i in idx} y_i by left-folded McCormick."""
    if len(idx) == 1:
        return {idx[0]: 1.0}, 0.0
    head, last = idx[:-1], idx[-1]
    # bounds and reference of the prefix product
    zb = Interval(1.0, 1.0)
    zr = 1.0
    from .interval import mul
    for i in head:
        zb = mul(zb, bounds[i])
        zr *= ref[i]
    zr = _clip(zr, zb.lo, zb.hi)
    lb = bounds[last]
    mc = mccormick(zb.lo, zb.hi, lb.lo, lb.hi, zr, ref[last], sense)
    if mc is None:
        return None
    az, al, c = mc
    out = {last: al}
    if az != 0.0:
        sub_sense = sense if az > 0 else (OVER if sense == UNDER else UNDER)
        sub = _prod_est(bounds, ref, head, sub_sense)
        if sub is None:
            return None
        coefs, c0 = sub
        for k, v in coefs.items():
            out[k] = out.get(k, 0.0) + az * v
        c += az * c0
    return out, c


def estimate_prod(coef: float, bounds: Sequence[Interval], ref: Sequence[float],
                  sense: str) -> Optional[LinearEstimator]:
    n = len(bounds)
    if coef == 0.0:
        return LinearEstimator((0.0,) * n, 0.0, False, True)
    inner = sense if coef > 0 else (OVER if sense == UNDER else UNDER)
    refc = [_clip(r, b.lo, b.hi) for r, b in zip(ref, bounds)]
    res = _prod_est(list(bounds), refc, list(range(n)), inner)
    if res is None:
        return None
    coefs, c = res
    return LinearEstimator(tuple(coef * coefs.get(i, 0.0) for i in range(n)),
                           coef * c, True, False)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def estimate(e: Expr, bounds: Sequence[Interval], ref: Sequence[float], sense: str,
             integral: Optional[Sequence[bool]] = None) -> Optional[LinearEstimator]:
    """Affine under/overestimator of node e in terms of its children.

    ``bounds`` and ``ref`` give the box and reference values of the
    children; ``integral`` flags integer-valued children.
    """
    k = e.kind
    if k == "val":
        return LinearEstimator((), e.const, False, True)
    if k == "var":
        return LinearEstimator((1.0,), 0.0, False, True)
    if k == "sum":
        return LinearEstimator(tuple(e.coefs), e.const, False, True)
    if k == "prod":
        if len(e.children) == 1:
            return LinearEstimator((e.const,), 0.0, False, True)
        return estimate_prod(e.const, bounds, ref, sense)
    is_int = bool(integral[0]) if integral else False
    return estimate_unary(k, e.const, bounds[0], ref[0], sense, is_int)


def initial_points(bounds: Sequence[Interval]) -> List[List[float]]:
    """Reference points for initial estimates: both corners and the midpoint."""
    lo = [b.lo if _finite(b.lo) else (min(0.0, b.hi) if _finite(b.hi) else 0.0) for b in bounds]
    hi = [b.hi if _finite(b.hi) else (max(0.0, b.lo) if _finite(b.lo) else 0.0) for b in bounds]
    mid = [b.mid for b in bounds]
    return [lo, hi, mid]
