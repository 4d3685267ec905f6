"""Mixing and conflict cuts from variable bound relations.

Lower relations y >= a*x + b and upper relations y <= a*x + b on binary x
are normalized to y >= a_i*x_i + l and y <= u - a_j*x_j with
0 < a <= u - l, complementing x where needed.  The >=-mixing cut

    y - l >= sum_t (a_{i_t} - a_{i_{t-1}}) x_{i_t}

is separated greedily: sort by x* descending and keep the indices whose
coefficient strictly increases.  The <=-mixing cut is the mirror image and
conflict cuts x_i + x_j <= 1 come from pairs with a_i + l > u - a_j.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .interval import INF
from .sepa import RowPrep

GEQ, LEQ = "geq", "leq"


@dataclass
class Rel:
    """Literal a * x (x replaced by 1 - x when ``comp``)."""

    x: int
    a: float
    comp: bool = False

    def lit(self, point: Sequence[float]) -> float:
        v = float(point[self.x])
        return 1.0 - v if self.comp else v


@dataclass
class VboundSet:
    y: int
    lo: float
    hi: float
    lower: List[Rel] = field(default_factory=list)
    upper: List[Rel] = field(default_factory=list)
    fixings: List[Tuple[int, float]] = field(default_factory=list)

    @property
    def infeasible(self) -> bool:
        return self.lo > self.hi


def _normalize_lower(raw: Iterable[Tuple[int, float, float]], lo: float, hi: float
                     ) -> Tuple[List[Rel], float, List[Tuple[int, float]]]:
    """Normalize y >= a*x + b relations; returns (relations, new lower bound, fixings)."""
    # (i) complement negative coefficients, a*x + b = -a*(1-x) + (a+b)
    rels = []
    for x, a, b in raw:
        if a < 0:
            rels.append((x, -a, a + b, True))
        else:
            rels.append((x, a, b, False))
    # (i) a = 0 and (iii) b > l both lift the lower bound
    new_lo = max([lo] + [b for _, _, b, _ in rels])
    out: List[Rel] = []
    fix: List[Tuple[int, float]] = []
    for x, a, b, comp in rels:
        if a == 0.0:
            continue
        # (ii) dominated by y >= l
        if a + b <= new_lo:
            continue
        # (iii) rewrite b < l as (a + b - l) x + l
        a = a + b - new_lo
        # (iv) the literal must be zero
        if a > hi - new_lo:
            fix.append((x, 1.0 if comp else 0.0))
            continue
        out.append(Rel(x, a, comp))
    return out, new_lo, fix


def normalize(lower_raw: Sequence[Tuple[int, float, float]], upper_raw: Sequence[Tuple[int, float, float]],
              lo: float, hi: float, y: int = -1) -> VboundSet:
    """Normalize raw relations (x, a, b) meaning y >= a*x + b (lower) and y <= a*x + b (upper)."""
    lower, new_lo, fix = _normalize_lower(lower_raw, lo, hi)
    # upper relations on -y: -y >= -a*x - b with domain [-hi, -lo]
    upper, neg_hi, fix2 = _normalize_lower([(x, -a, -b) for x, a, b in upper_raw], -hi, -new_lo)
    new_hi = -neg_hi
    s = VboundSet(y, new_lo, new_hi, lower, upper, fix + fix2)
    return s


def _expand(terms: Sequence[Tuple[Rel, float]]) -> Tuple[Dict[int, float], float]:
    """sum c*lit as (coefs over x, constant)."""
    coefs: Dict[int, float] = {}
    const = 0.0
    for r, c in terms:
        if r.comp:
            const += c
            coefs[r.x] = coefs.get(r.x, 0.0) - c
        else:
            coefs[r.x] = coefs.get(r.x, 0.0) + c
    return coefs, const


def greedy_subset(rels: Sequence[Rel], point: Sequence[float]) -> List[Tuple[Rel, float]]:
    """Subset with strictly increasing coefficients maximizing the cut value at point."""
    order = sorted(rels, key=lambda r: (-r.lit(point), r.x))
    chosen: List[Tuple[Rel, float]] = []
    last = 0.0
    for r in order:
        if r.a > last:
            chosen.append((r, r.a - last))
            last = r.a
    return chosen


def mixing_value(terms: Sequence[Tuple[Rel, float]], point: Sequence[float]) -> float:
    return sum(c * r.lit(point) for r, c in terms)


def separate_mixing(s: VboundSet, point: Sequence[float], kind: str = GEQ, tol: float = 1e-6
                    ) -> Optional[RowPrep]:
    """Violated mixing cut at point, or None."""
    rels = s.lower if kind == GEQ else s.upper
    if not rels:
        return None
    terms = greedy_subset(rels, point)
    val = mixing_value(terms, point)
    y = float(point[s.y])
    coefs, const = _expand(terms)
    if kind == GEQ:
        # y - l >= sum c*lit   <=>   sum c*lit - y <= -l
        if val <= y - s.lo + tol:
            return None
        coefs[s.y] = coefs.get(s.y, 0.0) - 1.0
        return RowPrep(coefs, -s.lo - const, "<=", local=False, handler="mixing")
    # y <= u - sum c*lit   <=>   y + sum c*lit <= u
    if val <= s.hi - y + tol:
        return None
    coefs[s.y] = coefs.get(s.y, 0.0) + 1.0
    return RowPrep(coefs, s.hi - const, "<=", local=False, handler="mixing")


def conflict_pairs(s: VboundSet) -> List[Tuple[Rel, Rel]]:
    return [(ri, rj) for ri in s.lower for rj in s.upper if ri.a + s.lo > s.hi - rj.a]


def separate_conflicts(s: VboundSet, point: Sequence[float], tol: float = 1e-6) -> List[RowPrep]:
    out = []
    for ri, rj in conflict_pairs(s):
        if ri.lit(point) + rj.lit(point) <= 1.0 + tol:
            continue
        coefs, const = _expand([(ri, 1.0), (rj, 1.0)])
        out.append(RowPrep(coefs, 1.0 - const, "<=", local=False, handler="mixing"))
    return out


def collect(problem, bounds=None) -> List[VboundSet]:
    """Normalized sets per non-binary target variable from the problem's vbound lines."""
    vb = bounds if bounds is not None else [v.bounds for v in problem.vars]

    def is_binary(j: int) -> bool:
        v = problem.vars[j]
        return v.is_integral and vb[j].lo >= 0 and vb[j].hi <= 1

    groups: Dict[int, Tuple[list, list]] = {}
    for r in problem.vbounds:
        if not is_binary(r.x) or is_binary(r.y):
            continue
        g = groups.setdefault(r.y, ([], []))
        (g[0] if r.kind == "vlb" else g[1]).append((r.x, r.coef, r.const))
    out = []
    for y in sorted(groups):
        lo, hi = vb[y].lo, vb[y].hi
        if lo <= -INF or hi >= INF:
            continue
        out.append(normalize(groups[y][0], groups[y][1], lo, hi, y))
    return out


def separate_all(sets: Sequence[VboundSet], point: Sequence[float], tol: float = 1e-6) -> List[RowPrep]:
    out = []
    for s in sets:
        for kind in (GEQ, LEQ):
            r = separate_mixing(s, point, kind, tol)
            if r is not None:
                out.append(r)
        out.extend(separate_conflicts(s, point, tol))
    return out
