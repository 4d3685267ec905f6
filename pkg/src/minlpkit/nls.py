"""Second-order cone handler: detection, disaggregation and gradient cuts.

A detected constraint is stored as

    sqrt(sum_j (v_j.y + b_j)^2 + f^2) <= v.y + b

with an optional fixed term f >= 0.  Four shapes are recognized: the norm
sqrt(q(y)) <= w of an auxiliary constraint, sums of squares with one
negative square (simple), sums of squares with one negative bilinear term
(rotated) and general quadratics with exactly one negative eigenvalue.
With three or more terms under the root the cone is disaggregated into
t_j^2 <= z_j * r and sum_j z_j <= r over extra nonnegative columns z_j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .expr import Expr
from .extform import OVER, UNDER, Claim, Handler
from .interval import INF, Interval
from .sepa import RowPrep

MIN_EFFICACY = 1e-5
EIG_TOL = 1e-12
EIG_SWEEPS = 100

Poly = Dict[Tuple[int, ...], float]


# ---------------------------------------------------------------------------
# affine pieces
# ---------------------------------------------------------------------------

@dataclass
class SocTerm:
    coefs: Dict[int, float]
    offset: float = 0.0

    def value(self, x: Sequence[float]) -> float:
        return self.offset + math.fsum(a * float(x[j]) for j, a in self.coefs.items())

    def interval(self, bounds: Callable[[int], Interval]) -> Interval:
        lo = hi = self.offset
        for j, a in self.coefs.items():
            b = bounds(j)
            if a > 0:
                lo, hi = lo + a * b.lo, hi + a * b.hi
            else:
                lo, hi = lo + a * b.hi, hi + a * b.lo
        return Interval.make(max(lo, -INF), min(hi, INF))


@dataclass
class SocForm:
    terms: List[SocTerm]
    rhs: SocTerm
    fixed: float = 0.0
    case: str = ""
    zcols: List[int] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.terms)

    def all_terms(self) -> List[SocTerm]:
        return self.terms + ([SocTerm({}, self.fixed)] if self.fixed > 0 else [])

    @property
    def disaggregated(self) -> bool:
        return len(self.all_terms()) >= 3

    def lhs_value(self, x) -> float:
        return math.sqrt(math.fsum(t.value(x) ** 2 for t in self.terms) + self.fixed ** 2)

    def rhs_value(self, x) -> float:
        return self.rhs.value(x)

    def violation(self, x) -> float:
        return self.lhs_value(x) - self.rhs_value(x)


# ---------------------------------------------------------------------------
# quadratic polynomial extraction
# ---------------------------------------------------------------------------

def _pmul(a: Poly, b: Poly) -> Optional[Poly]:
    out: Poly = {}
    for ka, va in a.items():
        for kb, vb in b.items():
            k = tuple(sorted(ka + kb))
            if len(k) > 2:
                return None
            out[k] = out.get(k, 0.0) + va * vb
    return out


def quad_poly(e: Expr) -> Optional[Poly]:
    """Polynomial of degree <= 2 over var indices, or None."""
    k = e.kind
    if k == "var":
        return {(e.index,): 1.0}
    if k == "val":
        return {(): e.const}
    if k == "sum":
        out: Poly = {(): e.const}
        for a, c in zip(e.coefs, e.children):
            p = quad_poly(c)
            if p is None:
                return None
            for kk, v in p.items():
                out[kk] = out.get(kk, 0.0) + a * v
        return out
    if k == "prod":
        out = {(): e.const}
        for c in e.children:
            p = quad_poly(c)
            if p is None:
                return None
            out = _pmul(out, p)
            if out is None:
                return None
        return out
    if k == "pow" and e.const in (0.0, 1.0, 2.0):
        p = quad_poly(e.children[0])
        if p is None:
            return None
        if e.const == 0.0:
            return {(): 1.0}
        if e.const == 1.0:
            return p
        return _pmul(p, p)
    return None


def jacobi_eigen(A: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and eigenvectors (columns) of a small symmetric matrix."""
    w, V = np.linalg.eigh(np.asarray(A, float))
    return w, V


# ---------------------------------------------------------------------------
# detection
# ---------------------------------------------------------------------------

def _split_poly(poly: Poly, binary: Callable[[int], bool]):
    cols = sorted({j for kk in poly for j in kk})
    idx = {j: i for i, j in enumerate(cols)}
    n = len(cols)
    Q = np.zeros((n, n))
    L = np.zeros(n)
    c = 0.0
    for kk, v in poly.items():
        if v == 0.0:
            continue
        if len(kk) == 0:
            c += v
        elif len(kk) == 1:
            i = idx[kk[0]]
            if binary(kk[0]):
                # binary variables satisfy x = x^2
                Q[i, i] += v
            else:
                L[i] += v
        else:
            i, j = idx[kk[0]], idx[kk[1]]
            if i == j:
                Q[i, i] += v
            else:
                Q[i, j] += v / 2.0
                Q[j, i] += v / 2.0
    return cols, Q, L, c


def _vec(cols: Sequence[int], v: np.ndarray, scale: float = 1.0) -> Dict[int, float]:
    return {j: float(scale * a) for j, a in zip(cols, v) if a != 0.0}


def _complete(cols, lam: np.ndarray, V: np.ndarray, L: np.ndarray, const: float,
              bounds: Callable[[int], Interval], sign_rule: str, case: str,
              tol: float = 1e-9) -> Optional[SocForm]:
    """Build the cone from sum_i lam_i (V_i.y)^2 + L.y + const <= 0."""
    scale = max(1.0, float(np.max(np.abs(lam))) if len(lam) else 1.0)
    neg = [i for i, l in enumerate(lam) if l < -tol * scale]
    pos = [i for i, l in enumerate(lam) if l > tol * scale]
    if len(neg) != 1 or not pos:
        return None
    mu = V.T @ L
    K = const
    for i, l in enumerate(lam):
        if i in neg or i in pos:
            K -= mu[i] ** 2 / (4.0 * l)
        elif abs(mu[i]) > tol * max(1.0, float(np.max(np.abs(mu)))):
            return None
    if K < -tol * max(1.0, abs(const)):
        return None
    terms = []
    for i in pos:
        s = math.sqrt(lam[i])
        terms.append(SocTerm(_vec(cols, V[:, i], s), float(s * mu[i] / (2.0 * lam[i]))))
    t = neg[0]
    s = math.sqrt(-lam[t])
    rhs = SocTerm(_vec(cols, V[:, t], s), float(s * mu[t] / (2.0 * lam[t])) + 0.0)
    ri = rhs.interval(bounds)
    if sign_rule == "nonneg":
        if ri.lo < 0:
            return None
    else:
        if ri.lo <= 0 <= ri.hi:
            return None
        if ri.hi < 0:
            rhs = SocTerm({j: -a for j, a in rhs.coefs.items()}, -rhs.offset)
    return SocForm(terms, rhs, math.sqrt(max(K, 0.0)), case)


def detect_soc_quadratic(poly: Poly, bounds: Callable[[int], Interval],
                         binary: Callable[[int], bool] = lambda j: False) -> Optional[SocForm]:
    """Cone for poly(y) <= 0 (simple, rotated or general shape), or None."""
    cols, Q, L, c = _split_poly(poly, binary)
    n = len(cols)
    if n < 2:
        return None
    off = [(i, j) for i in range(n) for j in range(i + 1, n) if Q[i, j] != 0.0]
    if not off:
        lam = np.diag(Q).copy()
        return _complete(cols, lam, np.eye(n), L, c, bounds, "nonneg", "simple")
    if len(off) == 1:
        s, t = off[0]
        if Q[s, s] == 0 and Q[t, t] == 0 and L[s] == 0 and L[t] == 0 and Q[s, t] < 0 \
                and bounds(cols[s]).lo >= 0 and bounds(cols[t]).lo >= 0:
            # y_s*y_t = ((y_s+y_t)^2 - (y_s-y_t)^2)/4
            V = np.eye(n)
            r2 = 1.0 / math.sqrt(2.0)
            V[:, s] = 0.0
            V[:, t] = 0.0
            V[s, s], V[t, s] = r2, r2
            V[s, t], V[t, t] = r2, -r2
            b = -2.0 * Q[s, t]
            lam = np.diag(Q).copy()
            lam[s] = -b / 2.0
            lam[t] = b / 2.0
            return _complete(cols, lam, V, L, c, bounds, "nonneg", "rotated")
    lam, V = jacobi_eigen(Q)
    return _complete(cols, lam, V, L, c, bounds, "nonzero", "general")


def detect_soc_norm(e: Expr, w_col: int, bounds: Callable[[int], Interval],
                    binary: Callable[[int], bool] = lambda j: False) -> Optional[SocForm]:
    """sqrt(sum_j a_j y_j^2 + b_j y_j + c) <= w with a_j > 0."""
    if e.kind != "pow" or e.const != 0.5:
        return None
    poly = quad_poly(e.children[0])
    if poly is None:
        return None
    cols, Q, L, c = _split_poly(poly, binary)
    if not cols or np.any(Q - np.diag(np.diag(Q)) != 0.0) or np.any(np.diag(Q) <= 0):
        return None
    a = np.diag(Q)
    K = c - float(np.sum(L ** 2 / (4.0 * a)))
    if K < -1e-9 * max(1.0, abs(c)):
        return None
    terms = [SocTerm({j: math.sqrt(a[i])}, float(math.sqrt(a[i]) * L[i] / (2.0 * a[i])))
             for i, j in enumerate(cols)]
    return SocForm(terms, SocTerm({w_col: 1.0}, 0.0), math.sqrt(max(K, 0.0)), "norm")


# ---------------------------------------------------------------------------
# disaggregation and cuts
# ---------------------------------------------------------------------------

def disaggregate(s: SocForm) -> List[Tuple[str, int]]:
    """Rows of the disaggregated cone: ("rotated", j) for t_j^2 <= z_j r, ("sum", -1)."""
    if not s.disaggregated:
        return []
    return [("rotated", j) for j in range(len(s.all_terms()))] + [("sum", -1)]


def closed_form_z(s: SocForm, x: Sequence[float]) -> Optional[List[float]]:
    """Smallest z completing (x, z) for the disaggregated system, or None."""
    r = s.rhs_value(x)
    ts = [t.value(x) for t in s.all_terms()]
    if r < 0:
        return None
    if r == 0:
        return [0.0] * len(ts) if all(t == 0 for t in ts) else None
    return [t * t / r for t in ts]


def disagg_feasible(s: SocForm, x: Sequence[float], z: Sequence[float], tol: float = 1e-9) -> bool:
    r = s.rhs_value(x)
    ts = [t.value(x) for t in s.all_terms()]
    if any(zj < -tol for zj in z):
        return False
    if any(t * t > zj * r + tol * max(1.0, t * t) for t, zj in zip(ts, z)):
        return False
    return math.fsum(z) <= r + tol * max(1.0, abs(r))


def _add(acc: Dict[int, float], term: SocTerm, f: float) -> float:
    for j, a in term.coefs.items():
        acc[j] = acc.get(j, 0.0) + f * a
    return f * term.offset


def _row(acc: Dict[int, float], const: float) -> RowPrep:
    """Row sum acc.x + const <= 0."""
    return RowPrep({j: a for j, a in acc.items() if a != 0.0}, -const, "<=", local=False)


def gradient_cut(s: SocForm, x: Sequence[float]) -> Optional[RowPrep]:
    """Linearization of the aggregated cone at x; None at the apex."""
    ts = [t.value(x) for t in s.terms]
    nrm = math.sqrt(math.fsum(t * t for t in ts) + s.fixed ** 2)
    if nrm <= 0.0:
        return None
    acc: Dict[int, float] = {}
    const = s.fixed ** 2 / nrm
    for t, tv in zip(s.terms, ts):
        const += _add(acc, t, tv / nrm)
    const += _add(acc, s.rhs, -1.0)
    return _row(acc, const)


def rotated_cut(s: SocForm, j: int, x: Sequence[float]) -> Optional[RowPrep]:
    """Cut for t_j^2 <= z_j r in the form sqrt(4t^2 + (r-z)^2) <= r + z."""
    term = s.all_terms()[j]
    zc = s.zcols[j]
    t, r, z = term.value(x), s.rhs_value(x), float(x[zc])
    nrm = math.sqrt(4.0 * t * t + (r - z) ** 2)
    if nrm <= 0.0:
        return None
    acc: Dict[int, float] = {}
    const = _add(acc, term, 4.0 * t / nrm)
    g = (r - z) / nrm
    const += _add(acc, s.rhs, g - 1.0)
    acc[zc] = acc.get(zc, 0.0) - g - 1.0
    return _row(acc, const)


def sum_row(s: SocForm) -> RowPrep:
    acc = {zc: 1.0 for zc in s.zcols}
    const = _add(acc, s.rhs, -1.0)
    return _row(acc, const)


def soc_separate(s: SocForm, x: Sequence[float], strong: bool = True, tol: float = 0.0,
                 force: bool = False) -> List[RowPrep]:
    """Violated gradient cuts at x (all linearizations when ``force``)."""
    out: List[RowPrep] = []

    def keep(r: Optional[RowPrep]):
        if r is None:
            return
        if not force:
            if r.violation(x) <= tol:
                return
            if strong and r.efficacy(x) < MIN_EFFICACY:
                return
        out.append(r)

    if s.disaggregated and s.zcols:
        sr = sum_row(s)
        keep(sr)
        for j in range(len(s.all_terms())):
            keep(rotated_cut(s, j, x))
    else:
        if force or s.violation(x) > tol:
            keep(gradient_cut(s, x))
    return out


# ---------------------------------------------------------------------------
# handler
# ---------------------------------------------------------------------------

class SocHandler(Handler):
    name = "soc"

    def detect(self, ec, ef, roles):
        view = ef.view(ec)
        bnd = ef.col_bounds_now

        def binary(j: int) -> bool:
            b = bnd(j)
            return ef.col_integral(j) and b.lo >= 0 and b.hi <= 1

        s = None
        role = None
        if ec.aux is not None:
            if UNDER in roles:
                s = detect_soc_norm(view, ec.aux, bnd, binary)
                role = UNDER
        else:
            poly = quad_poly(view)
            if poly is None:
                return None
            if UNDER in roles and ec.rhs < INF:
                p = dict(poly)
                p[()] = p.get((), 0.0) - ec.rhs
                s, role = detect_soc_quadratic(p, bnd, binary), UNDER
            if s is None and OVER in roles and ec.lhs > -INF:
                p = {k: -v for k, v in poly.items()}
                p[()] = p.get((), 0.0) + ec.lhs
                s, role = detect_soc_quadratic(p, bnd, binary), OVER
        if s is None:
            return None
        return Claim(self, {role}, [], s)

    def finalize(self, ec, claim, ef):
        s: SocForm = claim.data
        s.zcols = []
        if s.disaggregated:
            ub = s.rhs.interval(ef.col_bounds_now).hi
            for j in range(len(s.all_terms())):
                s.zcols.append(ef.add_extra(f"z{ec.id}_{j + 1}", Interval(0.0, max(ub, 0.0))))

    def separate(self, ec, claim, ef, x, bounds, sense, strong=True):
        rows = soc_separate(claim.data, x, strong)
        for r in rows:
            r.cons_id, r.handler = ec.id, self.name
        return rows

    def initial_rows(self, ec, claim, ef, bounds, sense) -> List[RowPrep]:
        from .estimators import initial_points
        s: SocForm = claim.data
        leaves = ef.view_leaf_cols(ec)
        rows = []
        for p in initial_points([bounds[j] for j in leaves]):
            x = ef.point_from(leaves, p, bounds)
            if s.zcols:
                z = closed_form_z(s, x)
                if z is None:
                    continue
                for zc, v in zip(s.zcols, z):
                    x[zc] = v
            for r in soc_separate(s, x, force=True):
                r.cons_id, r.handler = ec.id, self.name
                rows.append(r)
        return rows
