"""Convexity handler: maximal convex or concave subexpressions and their estimators.

Detection walks the expression from the root and attaches a curvature
requirement to every node.  A node either meets its requirement under
conditions on its children (checked by product composition, signomial,
quadratic and operator rules, in that order) or it is marked for
replacement by an auxiliary variable.

The "tangent" side covers convex h for underestimation and concave h for
overestimation.  The "vertex" side covers the opposite pairings through the
vertex-polyhedral envelope: secant (k=1), triangles (k=2) or a cut
generating LP over the unit cube (k>=3).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import expr as E
from . import lp
from .expr import Curvature, Expr, Mono, UNARY
from .extform import OVER, UNDER, Claim, Estimate, Handler, linear_form
from .interval import INF, Interval
from .nlq import detect_quadratic

C = Curvature
TANGENT, VERTEX = "tangent", "vertex"
MAX_VERTEX_VARS = 14
INTERIOR_SHIFT = 0.01
TANGENT_SHIFT = 1e-4


@dataclass
class CurvatureClaim:
    root: Expr
    want: Curvature
    side: str = TANGENT
    aux: List[Expr] = field(default_factory=list)
    trace: Dict[int, str] = field(default_factory=dict)


def _sign_mono(m: Mono) -> Optional[int]:
    return {Mono.INC: 1, Mono.DEC: -1, Mono.CONST: 0}.get(m)


def _sign_curv(c: Curvature) -> Optional[int]:
    return {C.CONVEX: 1, C.CONCAVE: -1, C.LINEAR: 0}.get(c)


def _sign_interval(a: Interval) -> Optional[int]:
    if a.is_empty:
        return None
    if a.lo >= 0:
        return 1 if a.hi > 0 else 0
    if a.hi <= 0:
        return -1
    return None


def _flip(want: Curvature, s: float) -> Curvature:
    return want if s >= 0 else want.negate()


class _Detector:
    def __init__(self, acts: Dict[int, Interval], extended: bool, quadratic: bool,
                 vertex: bool):
        self.acts = acts
        self.extended = extended
        self.quadratic = quadratic
        self.vertex = vertex
        self.marked: Dict[int, Expr] = {}
        self.trace: Dict[int, str] = {}

    def act(self, n: Expr) -> Interval:
        return self.acts[id(n)]

    # -- driver ---------------------------------------------------------------
    def require(self, node: Expr, want: Curvature) -> bool:
        if node.kind in ("var", "val") or id(node) in self.marked:
            return True
        if want is C.LINEAR:
            if node.kind != "sum":
                return False
            self.trace[id(node)] = "linear"
            for c in node.children:
                self.child(c, C.LINEAR, node)
            return True
        for name, rule in (("prodcomp", self.prodcomp), ("signomial", self.signomial),
                           ("quadratic", self.quad), ("operator", self.operator)):
            reqs = rule(node, want)
            if reqs is None:
                continue
            self.trace[id(node)] = name
            for c, cw, parent in reqs:
                self.child(c, cw, parent)
            return True
        return False

    def child(self, c: Expr, want: Curvature, parent: Expr):
        if c.kind in ("var", "val") or id(c) in self.marked:
            return
        if parent.kind != "sum":
            if self.vertex:
                lf = linear_form(c)
                if lf is not None and len([a for a in lf[0].values() if a != 0.0]) >= 2:
                    self.marked[id(c)] = c
                    return
            elif self.extended and want is not C.LINEAR:
                want = C.LINEAR
        if not self.require(c, want):
            self.marked[id(c)] = c

    # -- rules ----------------------------------------------------------------
    def prodcomp(self, node: Expr, want: Curvature):
        """a * f(b*g + c) * g with a sign condition on the second derivative in g."""
        if node.kind != "prod" or len(node.children) != 2:
            return None
        for g, fn in (node.children, node.children[::-1]):
            if fn.kind not in UNARY or g.kind == "val":
                continue
            inner = fn.children[0]
            if inner is g:
                b = 1.0
            elif inner.kind == "sum" and len(inner.children) == 1 and inner.children[0] is g:
                b = inner.coefs[0]
            else:
                continue
            fc, fm = E._unary_shape(fn.kind, fn.const, self.act(inner))
            s1, s2, st = _sign_mono(fm), _sign_curv(fc), _sign_interval(self.act(g))
            if s1 is None or s2 is None or st is None:
                continue
            t1 = (1 if b > 0 else -1) * s1
            t2 = st * s2
            if t1 >= 0 and t2 >= 0:
                curv = C.CONVEX
            elif t1 <= 0 and t2 <= 0:
                curv = C.CONCAVE
            else:
                continue
            if node.const < 0:
                curv = curv.negate()
            if curv is want:
                return [(g, C.LINEAR, node)]
        return None

    def signomial(self, node: Expr, want: Curvature):
        """c * prod f_j^p_j with f_j of fixed sign."""
        if node.kind != "prod" or len(node.children) < 2:
            return None
        coef = node.const
        facs = []
        for c in node.children:
            if c.kind == "pow":
                f, p, par = c.children[0], c.const, c
            else:
                f, p, par = c, 1.0, node
            a = self.act(f)
            if a.is_empty:
                return None
            if a.lo >= 0:
                s = 1
            elif a.hi < 0 and float(p).is_integer():
                s = -1
                if int(p) % 2:
                    coef = -coef
            else:
                return None
            facs.append((f, p, par, s))
        if coef == 0:
            return None
        eff = _flip(want, coef)
        ps = [p for _, p, _, _ in facs]
        total = sum(ps)
        reqs = None
        if eff is C.CONCAVE:
            if all(p > 0 for p in ps) and total <= 1.0:
                reqs = [C.CONCAVE] * len(ps)
        elif eff is C.CONVEX:
            if all(p < 0 for p in ps):
                reqs = [C.CONCAVE] * len(ps)
            else:
                pos = [j for j, p in enumerate(ps) if p > 0]
                if total >= 1.0 and len(pos) == 1 and all(p < 0 for j, p in enumerate(ps) if j != pos[0]):
                    reqs = [C.CONVEX if j == pos[0] else C.CONCAVE for j in range(len(ps))]
        if reqs is None:
            return None
        return [(f, r if s > 0 else r.negate(), par) for (f, _, par, s), r in zip(facs, reqs)]

    def quad(self, node: Expr, want: Curvature):
        if not self.quadratic or node.kind != "sum":
            return None
        q = detect_quadratic(node, split=False)
        if q is None:
            return None
        A = quad_matrix(q)
        ev = np.linalg.eigvalsh(A)
        tol = 1e-9 * max(1.0, float(np.max(np.abs(A))))
        if want is C.CONVEX and ev.min() >= -tol:
            pass
        elif want is C.CONCAVE and ev.max() <= tol:
            pass
        else:
            return None
        reqs = []
        for i, t in enumerate(q.terms):
            in_quad = t.sqr != 0.0 or t.bil or any(j == i for u in q.terms for j, _ in u.bil)
            if in_quad:
                reqs.append((t.arg, C.LINEAR, node))
            elif t.lin != 0.0:
                reqs.append((t.arg, _flip(want, t.lin), node))
        return reqs

    def operator(self, node: Expr, want: Curvature):
        k = node.kind
        if k == "sum":
            return [(c, _flip(want, a), node) for a, c in zip(node.coefs, node.children) if a != 0.0]
        if k == "prod":
            acts = [self.act(c) for c in node.children]
            free = [i for i, a in enumerate(acts) if a.lo != a.hi]
            if len(free) > 1:
                return None
            if not free:
                return []
            i = free[0]
            factor = node.const
            for j, a in enumerate(acts):
                if j != i:
                    factor *= a.lo
            return [(node.children[i], _flip(want, factor), node)]
        if k in UNARY:
            g = node.children[0]
            fc, fm = E._unary_shape(k, node.const, self.act(g))
            if fc is C.LINEAR:
                if fm is Mono.INC:
                    return [(g, want, node)]
                if fm is Mono.DEC:
                    return [(g, want.negate(), node)]
                if fm is Mono.CONST:
                    return []
                return None
            if fc is want:
                if fm is Mono.INC:
                    return [(g, want, node)]
                if fm is Mono.DEC:
                    return [(g, want.negate(), node)]
                return [(g, C.LINEAR, node)]
        return None


def quad_matrix(q) -> np.ndarray:
    n = len(q.terms)
    A = np.zeros((n, n))
    for i, t in enumerate(q.terms):
        A[i, i] += t.sqr
        for j, b in t.bil:
            A[i, j] += b / 2.0
            A[j, i] += b / 2.0
    return A


def _nonconst_terms(e: Expr) -> int:
    return sum(1 for a, c in zip(e.coefs, e.children) if a != 0.0 and c.kind != "val")


def detect_curvature(e: Expr, want: Curvature, bounds: Mapping[int, Interval],
                     side: str = TANGENT, extended: Optional[bool] = None,
                     handle_trivial: bool = False, detect_sum: bool = False,
                     max_vars: int = MAX_VERTEX_VARS) -> Optional[CurvatureClaim]:
    """Claim that e has curvature ``want`` after replacing the listed subexpressions.

    ``side`` selects the tangent rules (extended form and the quadratic check
    on) or the vertex rules (aux variables for multivariate linear children,
    at most ``max_vars`` leaves).  ``bounds`` maps variable index to Interval.
    """
    vertex = side == VERTEX
    if extended is None:
        extended = not vertex
    if e.kind in ("var", "val"):
        return None
    if e.kind == "sum" and _nonconst_terms(e) > 1 and not detect_sum:
        q = None if vertex else detect_quadratic(e, split=False)
        if q is None or not any(t.bil for t in q.terms):
            return None
    acts: Dict[int, Interval] = {}
    E.interval_eval(e, bounds, acts)
    det = _Detector(acts, extended, quadratic=not vertex, vertex=vertex)
    if not det.require(e, want):
        return None
    marked = list(det.marked.values())
    if not handle_trivial and all(c.kind in ("var", "val") or id(c) in det.marked for c in e.children):
        return None
    if vertex:
        leaves = set()

        def walk(n: Expr, seen=set()):
            if id(n) in seen:
                return
            seen.add(id(n))
            if id(n) in det.marked:
                leaves.add(("m", id(n)))
            elif n.kind == "var":
                leaves.add(("v", n.index))
            else:
                for c in n.children:
                    walk(c, seen)

        walk(e, set())
        if len(leaves) > max_vars:
            return None
    return CurvatureClaim(e, want, side, marked, det.trace)


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

def tangent(f: Callable[[Sequence[float]], float], grad: Callable[[Sequence[float]], Dict[int, float]],
            cols: Sequence[int], point: Sequence[float]) -> Optional[Tuple[Dict[int, float], float]]:
    """Tangent f(p) + grad f(p) (z - p); None if not finite at p."""
    try:
        v = f(point)
        g = grad(point)
    except (E.DomainError, E.KinkError, ZeroDivisionError, OverflowError, ValueError):
        return None
    if not math.isfinite(v) or any(not math.isfinite(d) for d in g.values()):
        return None
    coefs = {j: g.get(j, 0.0) for j in cols}
    const = v - sum(coefs[j] * float(point[j]) for j in cols)
    return coefs, const


def integer_secant(f1: Callable[[float], float], ref: float, lo: float, hi: float
                   ) -> Optional[Tuple[float, float]]:
    """Secant of a univariate convex f through floor(ref) and floor(ref)+1.

    Valid at every integer point of [lo, hi]; returns (slope, intercept).
    """
    a = math.floor(ref)
    if a + 1 > hi:
        a = math.floor(hi) - 1
    if a < lo:
        a = math.ceil(lo)
    if a + 1 > hi:
        return None
    try:
        fa, fb = f1(a), f1(a + 1)
    except (E.DomainError, ZeroDivisionError, OverflowError, ValueError):
        return None
    if not (math.isfinite(fa) and math.isfinite(fb)):
        return None
    slope = fb - fa
    return slope, fa - slope * a


def _plane(pts: Sequence[Sequence[float]], vals: Sequence[float]) -> Optional[np.ndarray]:
    M = np.array([list(p) + [1.0] for p in pts])
    try:
        return np.linalg.solve(M, np.array(vals, dtype=float))
    except np.linalg.LinAlgError:
        return None


def vertex_underestimate(f: Callable[[Sequence[float]], float], lo: Sequence[float],
                         hi: Sequence[float], ref: Sequence[float]
                         ) -> Optional[Tuple[np.ndarray, float]]:
    """Facet of the vertex-polyhedral envelope of f over [lo, hi] near ref.

    Works in the unit cube: y = lo + (hi - lo) * t.  Returns (alpha, beta) in
    y-space, or None when a bound is infinite or f is undefined at a vertex.
    All bounds must have positive width.
    """
    k = len(lo)
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    if k == 0:
        return None
    if np.any(np.abs(lo) >= INF) or np.any(np.abs(hi) >= INF) or np.any(hi <= lo):
        return None
    w = hi - lo
    t_ref = np.clip((np.asarray(ref, float) - lo) / w, 0.0, 1.0)
    # move the reference point into the interior
    t_ref = t_ref + INTERIOR_SHIFT * (0.5 - t_ref) * 2.0

    def fv(t) -> float:
        v = f(lo + w * np.asarray(t, float))
        if not math.isfinite(v):
            raise ValueError("nonfinite vertex value")
        return float(v)

    try:
        if k == 1:
            f0, f1 = fv([0.0]), fv([1.0])
            at = np.array([f1 - f0])
            bt = f0
        elif k == 2:
            F = {v: fv(v) for v in itertools.product((0.0, 1.0), repeat=2)}
            s, t = t_ref
            if F[(0, 0)] + F[(1, 1)] <= F[(1, 0)] + F[(0, 1)]:
                tri = [(0, 0), (1, 0), (1, 1)] if s >= t else [(0, 0), (0, 1), (1, 1)]
            else:
                tri = [(0, 0), (1, 0), (0, 1)] if s + t <= 1.0 else [(1, 0), (0, 1), (1, 1)]
            sol = _plane(tri, [F[v] for v in tri])
            if sol is None:
                return None
            at, bt = sol[:2], sol[2]
        else:
            verts = list(itertools.product((0.0, 1.0), repeat=k))
            fvals = [fv(v) for v in verts]
            V = np.array(verts).T
            A = np.vstack([V, np.ones((1, len(verts)))])
            rhs = np.concatenate([t_ref, [1.0]])
            res = lp.solve(lp.LpProblem.build(np.array(fvals), A, rhs, rhs,
                                              np.zeros(len(verts)), np.full(len(verts), INF)))
            if res.status != lp.OPTIMAL or res.duals is None:
                return None
            at, bt = np.array(res.duals[:k]), float(res.duals[k])
            # restore exact validity at all vertices
            bt = min(fv_ - float(at @ np.array(v)) for v, fv_ in zip(verts, fvals))
    except (ValueError, E.DomainError, ZeroDivisionError, OverflowError):
        return None
    alpha = at / w
    beta = float(bt - alpha @ lo)
    return alpha, beta


# ---------------------------------------------------------------------------
# handler
# ---------------------------------------------------------------------------

class ConvexityHandler(Handler):
    name = "convexity"

    def __init__(self, extended: bool = True, handle_trivial: bool = True,
                 detect_sum: bool = False, max_vars: int = MAX_VERTEX_VARS):
        self.extended = extended
        self.handle_trivial = handle_trivial
        self.detect_sum = detect_sum
        self.max_vars = max_vars

    def detect(self, ec, ef, roles):
        roles = roles & {UNDER, OVER}
        if not roles:
            return None
        view = ef.view(ec)
        bounds = {j: ef.col_bounds_now(j) for j in ef.view_leaf_cols(ec)}
        data: Dict[str, CurvatureClaim] = {}
        req: List[Expr] = []
        for role in sorted(roles):
            want = C.CONVEX if role == UNDER else C.CONCAVE
            cc = detect_curvature(view, want, bounds, TANGENT, self.extended,
                                  self.handle_trivial, self.detect_sum, self.max_vars)
            if cc is None:
                cc = detect_curvature(view, want.negate(), bounds, VERTEX, False,
                                      self.handle_trivial, self.detect_sum, self.max_vars)
            if cc is None:
                continue
            data[role] = cc
            for m in cc.aux:
                n = ef.original_of(ec, m)
                if all(n is not r for r in req):
                    req.append(n)
        if not data:
            return None
        return Claim(self, set(data), req, data)

    def estimate(self, ec, claim, ef, x, bounds, sense):
        cc: CurvatureClaim = claim.data.get(sense)
        if cc is None:
            return []
        view = ef.view(ec)
        cols = E.variables(view)
        if cc.side == TANGENT:
            return self._tangent(view, cols, ef, x, bounds)
        return self._vertex(view, cols, ef, x, bounds, sense)

    def _tangent(self, view, cols, ef, x, bounds) -> List[Estimate]:
        p = list(x)
        for j in cols:
            b = bounds[j]
            p[j] = min(max(float(x[j]), b.lo), b.hi)
        if len(cols) == 1 and ef.col_integral(cols[0]):
            j = cols[0]
            b = bounds[j]

            def f1(v: float) -> float:
                q = list(p)
                q[j] = v
                return E.evaluate(view, q)

            sec = integer_secant(f1, p[j], b.lo, b.hi)
            if sec is not None:
                return [Estimate({j: sec[0]}, sec[1], True, True, [])]
        f = lambda z: E.evaluate(view, z)
        g = lambda z: E.backward_diff(view, z)
        for shift in (0.0, TANGENT_SHIFT, 1e-2):
            q = list(p)
            if shift:
                for j in cols:
                    b = bounds[j]
                    c = b.mid if b.is_bounded else (b.lo + 1.0 if b.lo > -INF else (b.hi - 1.0 if b.hi < INF else 0.0))
                    q[j] = q[j] + shift * (c - q[j])
            t = tangent(f, g, cols, q)
            if t is not None:
                return [Estimate(t[0], t[1], True, shift == 0.0, [])]
        return []

    def _vertex(self, view, cols, ef, x, bounds, sense) -> List[Estimate]:
        sgn = 1.0 if sense == UNDER else -1.0
        base = [b.mid if b.is_bounded else 0.0 for b in bounds]
        free = []
        for j in cols:
            b = bounds[j]
            if b.lo == b.hi:
                base[j] = b.lo
            else:
                free.append(j)
        if any(not bounds[j].is_bounded for j in free):
            return [Estimate({}, math.nan, True, False, list(free))]

        def f(y) -> float:
            z = list(base)
            for j, v in zip(free, y):
                z[j] = float(v)
            return sgn * E.evaluate(view, z)

        if not free:
            try:
                return [Estimate({}, E.evaluate(view, base), True, True, [])]
            except (E.DomainError, ZeroDivisionError, OverflowError, ValueError):
                return []
        got = vertex_underestimate(f, [bounds[j].lo for j in free], [bounds[j].hi for j in free],
                                   [float(x[j]) for j in free])
        if got is None:
            return [Estimate({}, math.nan, True, False, list(free))]
        alpha, beta = got
        coefs = {j: sgn * float(a) for j, a in zip(free, alpha)}
        return [Estimate(coefs, sgn * beta, True, False, list(free))]
