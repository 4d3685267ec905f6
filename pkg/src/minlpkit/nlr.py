"""Quotient handler for f(y) = (a*y1 + b)/(c*y2 + d) + e.

Only the shapes a*y1*y2^-1 and a*y1*y2^-1 + b*y2^-1 + e (with affine y1,
y2) are recognized.  When y1 and y2 coincide the function is univariate:
it is monotone and either convex or concave on any box that excludes the
singularity, so tangents, secants and exact endpoint propagation apply.
In the bivariate case u = a*y1 + b and v = c*y2 + d are estimated with the
Zamora-Grossmann underestimator, the best valid plane through three box
corners, or McCormick envelopes of u = v*w when 0 lies inside the u range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

from . import interval as iv
from .expr import Expr
from .extform import OVER, PROP, UNDER, Claim, Estimate, Handler
from .interval import ENTIRE, INF, Interval


@dataclass
class QuotientForm:
    y1: Expr
    y2: Expr
    a: float
    b: float
    c: float
    d: float
    e: float = 0.0

    @property
    def univariate(self) -> bool:
        return self.y1 is self.y2 or self.y1.key() == self.y2.key()

    def value(self, v1: float, v2: float) -> float:
        return (self.a * v1 + self.b) / (self.c * v2 + self.d) + self.e


@dataclass
class QuotEst:
    """Affine c1*y1 + c2*y2 + const (c2 = 0 in the univariate case)."""

    c1: float
    c2: float
    const: float
    tangent: bool = False

    def value(self, v1: float, v2: float = 0.0) -> float:
        return self.c1 * v1 + self.c2 * v2 + self.const


# ---------------------------------------------------------------------------
# detection
# ---------------------------------------------------------------------------

def _affine(u: Expr) -> Tuple[Expr, float, float]:
    if u.kind == "sum" and len(u.children) == 1:
        return u.children[0], u.coefs[0], u.const
    return u, 1.0, 0.0


def _inv_base(t: Expr) -> Optional[Expr]:
    if t.kind == "pow" and t.const == -1.0:
        return t.children[0]
    return None


def _split_prod(t: Expr) -> Optional[Tuple[Expr, Expr, float]]:
    """(numerator, denominator base, coef) of k*u*v^-1."""
    if t.kind != "prod" or len(t.children) != 2:
        return None
    for i in (0, 1):
        den = _inv_base(t.children[1 - i])
        num = t.children[i]
        if den is not None and _inv_base(num) is None:
            return num, den, t.const
    return None


def detect_quotient(e: Expr) -> Optional[QuotientForm]:
    if e.kind == "prod":
        got = _split_prod(e)
        if got is None:
            return None
        num, den, k = got
        y1, a1, b1 = _affine(num)
        y2, c, d = _affine(den)
        return QuotientForm(y1, y2, k * a1, k * b1, c, d, 0.0)
    if e.kind != "sum":
        return None
    econst = e.const
    main = None
    inv = None
    for coef, t in zip(e.coefs, e.children):
        if t.kind == "val":
            econst += coef * t.const
            continue
        got = _split_prod(t)
        if got is not None and main is None:
            main = (got[0], got[1], coef * got[2])
            continue
        base = _inv_base(t)
        if base is not None and inv is None:
            inv = (base, coef)
            continue
        return None
    if main is None:
        return None
    num, den, k = main
    y1, a1, b1 = _affine(num)
    y2, c, d = _affine(den)
    b = k * b1
    if inv is not None:
        if inv[0].key() != den.key():
            return None
        b += inv[1]
    return QuotientForm(y1, y2, k * a1, b, c, d, econst)


# ---------------------------------------------------------------------------
# univariate
# ---------------------------------------------------------------------------

def _pole(q: QuotientForm) -> float:
    return -q.d / q.c


def _singular(q: QuotientForm, dom: Interval) -> bool:
    p = _pole(q)
    return dom.lo <= p <= dom.hi


def _uni_f(q: QuotientForm, y: float) -> float:
    if abs(y) >= INF:
        return q.a / q.c + q.e
    return (q.a * y + q.b) / (q.c * y + q.d) + q.e


def _uni_df(q: QuotientForm, y: float) -> float:
    return (q.a * q.d - q.b * q.c) / (q.c * y + q.d) ** 2


def _uni_convex(q: QuotientForm, dom: Interval) -> Optional[bool]:
    """True if convex, False if concave on dom (dom excludes the pole)."""
    det = q.a * q.d - q.b * q.c
    if det == 0.0:
        return None
    side = 1.0 if dom.lo > _pole(q) else -1.0
    # f'' = -2 c det / (c y + d)^3 and sign(c y + d) = sign(c) * side
    return -q.c * det * math.copysign(1.0, q.c) * side > 0


def quotient_inteval(q: QuotientForm, b1: Interval, b2: Optional[Interval] = None) -> Interval:
    if b2 is None or q.univariate:
        if b1.is_empty:
            return b1
        if _singular(q, b1):
            return ENTIRE
        v = [_uni_f(q, b1.lo), _uni_f(q, b1.hi)]
        return Interval.make(min(v), max(v)).inflate()
    u = iv.add(iv.scale(b1, q.a), Interval.point(q.b))
    w = iv.add(iv.scale(b2, q.c), Interval.point(q.d))
    return iv.add(iv.div(u, w), Interval.point(q.e))


def quotient_reverseprop(q: QuotientForm, target: Interval, cur: Interval) -> Optional[Interval]:
    """Tightened domain of y in the univariate case; None if infeasible."""
    if target.is_empty or cur.is_empty:
        return None
    det = q.a * q.d - q.b * q.c
    g = iv.sub(target, Interval.point(q.e))
    if det == 0.0:
        k = q.a / q.c
        return cur if g.lo <= k <= g.hi else None
    gp = q.a / q.c
    if g.lo <= gp <= g.hi:
        return cur

    def inv(gv: float) -> float:
        if abs(gv) >= INF:
            return _pole(q)
        return (q.b - q.d * gv) / (q.c * gv - q.a)

    ys = [inv(g.lo), inv(g.hi)]
    r = Interval.make(min(ys), max(ys)).inflate(1e-9, 1e-12)
    return cur.intersect(r)


def _uni_estimate(q: QuotientForm, dom: Interval, ref: float, sense: str) -> Optional[QuotEst]:
    if dom.is_empty or _singular(q, dom):
        return None
    conv = _uni_convex(q, dom)
    if conv is None:
        return QuotEst(0.0, 0.0, q.a / q.c + q.e, True)
    ref = min(max(ref, dom.lo), dom.hi)
    if conv == (sense == UNDER):
        s = _uni_df(q, ref)
        return QuotEst(s, 0.0, _uni_f(q, ref) - s * ref, True)
    if not dom.is_bounded:
        return None
    if dom.width <= 0:
        return QuotEst(0.0, 0.0, _uni_f(q, dom.lo), True)
    fl, fu = _uni_f(q, dom.lo), _uni_f(q, dom.hi)
    s = (fu - fl) / (dom.hi - dom.lo)
    return QuotEst(s, 0.0, fl - s * dom.lo, False)


# ---------------------------------------------------------------------------
# bivariate, on u/v with v > 0
# ---------------------------------------------------------------------------

def zamora_grossmann(lu: float, uu: float, ru: float, rv: float) -> Tuple[float, float, float]:
    """Tangent (au, av, beta) at (ru, rv) of the convex underestimator of u/v, u >= 0."""
    s = math.sqrt(lu) + math.sqrt(uu)
    p = ru + math.sqrt(lu * uu)
    g = p * p / (s * s * rv)
    gu = 2.0 * p / (s * s * rv)
    gv = -p * p / (s * s * rv * rv)
    return gu, gv, g - gu * ru - gv * rv


def zg_value(lu: float, uu: float, u: float, v: float) -> float:
    s = math.sqrt(lu) + math.sqrt(uu)
    return ((u + math.sqrt(lu * uu)) / s) ** 2 / v


def _plane3(p):
    """(au, av, beta) of the plane through three (u, v, f) points, or None."""
    (u1, v1, f1), (u2, v2, f2), (u3, v3, f3) = p
    det = (u2 - u1) * (v3 - v1) - (u3 - u1) * (v2 - v1)
    if det == 0.0:
        return None
    au = ((f2 - f1) * (v3 - v1) - (f3 - f1) * (v2 - v1)) / det
    av = ((u2 - u1) * (f3 - f1) - (u3 - u1) * (f2 - f1)) / det
    return au, av, f1 - au * u1 - av * v1


def three_point_over(lu, uu, lv, uv, ru, rv) -> Optional[Tuple[float, float, float]]:
    """Tightest valid plane through three corners of the graph of u/v, u >= 0, v > 0."""
    corners = [(u, v, u / v) for u in (lu, uu) for v in (lv, uv)]
    best = None
    for skip in range(4):
        pts = [corners[i] for i in range(4) if i != skip]
        pl = _plane3(pts)
        if pl is None:
            continue
        u4, v4, f4 = corners[skip]
        val4 = pl[0] * u4 + pl[1] * v4 + pl[2]
        if val4 < f4 - 1e-9 * max(1.0, abs(f4)):
            continue
        val = pl[0] * ru + pl[1] * rv + pl[2]
        if best is None or val < best[0]:
            best = (val, pl)
    return None if best is None else best[1]


def mccormick_quotient(lu, uu, lv, uv, ru, rv, sense) -> Optional[Tuple[float, float, float]]:
    """Envelopes of u = v*w rearranged for w = u/v (v > 0, bounded)."""
    w = iv.div(Interval(lu, uu), Interval(lv, uv))
    lw, uw = w.lo, w.hi
    cands = []
    if sense == OVER:
        # u >= lv*w + lw*v - lv*lw and u >= uv*w + uw*v - uv*uw
        cands.append((1.0 / lv, -lw / lv, lw))
        cands.append((1.0 / uv, -uw / uv, uw))
        pick = min
    else:
        # u <= uv*w + lw*v - uv*lw and u <= lv*w + uw*v - lv*uw
        cands.append((1.0 / uv, -lw / uv, lw))
        cands.append((1.0 / lv, -uw / lv, uw))
        pick = max
    return pick(cands, key=lambda c: c[0] * ru + c[1] * rv + c[2])


def _uv_estimate(lu, uu, lv, uv, ru, rv, sense) -> Optional[Tuple[float, float, float, bool]]:
    """Estimator of u/v for v > 0 as (au, av, beta, tangent)."""
    if lu >= 0.0:
        if sense == UNDER:
            if uu >= INF or lv <= 0.0 or uv >= INF:
                return None
            return zamora_grossmann(lu, uu, ru, rv) + (True,)
        if not (abs(lu) < INF and uu < INF and lv > 0 and uv < INF):
            return None
        pl = three_point_over(lu, uu, lv, uv, ru, rv)
        return None if pl is None else pl + (False,)
    if uu <= 0.0:
        # u/v = -((-u)/v)
        got = _uv_estimate(-uu, -lu, lv, uv, -ru, rv, OVER if sense == UNDER else UNDER)
        if got is None:
            return None
        au, av, beta, t = got
        return au, -av, -beta, t
    if lu <= -INF or uu >= INF or uv >= INF:
        return None
    return mccormick_quotient(lu, uu, lv, uv, ru, rv, sense) + (False,)


def quotient_estimate(q: QuotientForm, bounds: Sequence[Interval], point: Sequence[float],
                      sense: str) -> Optional[QuotEst]:
    """Valid under- or overestimator of f on the box, or None."""
    if q.univariate:
        return _uni_estimate(q, bounds[0], point[0], sense)
    b1, b2 = bounds
    u = iv.add(iv.scale(b1, q.a), Interval.point(q.b))
    v = iv.add(iv.scale(b2, q.c), Interval.point(q.d))
    if u.is_empty or v.is_empty or v.contains_zero():
        return None
    r1 = min(max(point[0], b1.lo), b1.hi)
    r2 = min(max(point[1], b2.lo), b2.hi)
    ru, rv = q.a * r1 + q.b, q.c * r2 + q.d
    sgn = 1.0
    if v.hi < 0:
        # u/v = (-u)/(-v)
        u, v, ru, rv, sgn = iv.neg(u), iv.neg(v), -ru, -rv, -1.0
    try:
        got = _uv_estimate(u.lo, u.hi, v.lo, v.hi, ru, rv, sense)
    except (ZeroDivisionError, OverflowError):
        # the box touches the pole so closely that the coefficients do not exist in floats
        return None
    if got is None or not all(math.isfinite(c) for c in got[:3]):
        return None
    au, av, beta, tangent = got
    au, av = sgn * au, sgn * av
    # back to y: u = sgn*(a y1 + b), v = sgn*(c y2 + d)
    return QuotEst(au * q.a, av * q.c, beta + au * q.b + av * q.d + q.e, tangent)


# ---------------------------------------------------------------------------
# handler
# ---------------------------------------------------------------------------

class QuotientHandler(Handler):
    name = "quotient"

    def detect(self, ec, ef, roles):
        q = detect_quotient(ef.view(ec))
        if q is None:
            return None
        if q.c == 0.0:
            return None
        got = set(roles) & {UNDER, OVER}
        if q.univariate and PROP in roles:
            got.add(PROP)
        if not got:
            return None
        req = []
        if got & {UNDER, OVER}:
            for y in ({id(q.y1): q.y1, id(q.y2): q.y2}).values():
                if y.kind != "var":
                    req.append(ef.original_of(ec, y))
        return Claim(self, got, req, q)

    def finalize(self, ec, claim, ef):
        q = detect_quotient(ef.view(ec))
        if q is not None:
            claim.data = q

    def _orig(self, ec, y: Expr) -> Expr:
        return ec.view_map[id(y)]

    def inteval(self, ec, claim, cur):
        q: QuotientForm = claim.data
        if q.univariate:
            return quotient_inteval(q, cur(self._orig(ec, q.y1)))
        return quotient_inteval(q, cur(self._orig(ec, q.y1)), cur(self._orig(ec, q.y2)))

    def reverseprop(self, ec, claim, target, cur):
        q: QuotientForm = claim.data
        if not q.univariate:
            return []
        node = self._orig(ec, q.y1)
        r = quotient_reverseprop(q, target, cur(node))
        if r is None or r.is_empty:
            return None
        return [(node, r)]

    def estimate(self, ec, claim, ef, x, bounds, sense):
        q: QuotientForm = claim.data
        if q.y1.kind != "var" or q.y2.kind != "var":
            return []
        j1, j2 = q.y1.index, q.y2.index
        cols = [j1] if q.univariate else [j1, j2]
        free = [j for j in cols if bounds[j].width > 0]
        got = quotient_estimate(q, [bounds[j] for j in cols], [float(x[j]) for j in cols], sense)
        if got is None:
            return [Estimate({}, math.nan, True, False, free)]
        coefs = {j1: got.c1}
        if not q.univariate:
            coefs[j2] = got.c2
        coefs = {j: a for j, a in coefs.items() if a != 0.0}
        return [Estimate(coefs, got.const, True, got.tangent, [] if got.tangent else free)]
