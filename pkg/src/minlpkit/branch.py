"""Spatial branching: violation scores, candidate scoring and branching points.

Violation scores |h - w| / max(1, |w|) are spread over the variables of a
violated constraint (unbounded variables first, otherwise by midness) after
auxiliary columns have been replaced by the original variables they depend
on.  Each candidate then carries violation, pseudo-cost, domain,
integrality and dual scores; these are normalized by the category maximum
and combined with weights.  A candidate is drawn uniformly at random among
those whose final score is at least 0.9 times the best one.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .interval import INF, Interval

MIDNESS_FLOOR = 0.05
HIGH_SCORE_FACTOR = 0.9
PSCOST_RELIABLE = 2
POINT_WEIGHT = 0.6
POINT_MIN_REL = 0.1
DOMAIN_EPS = 1e-9

MIDNESS, UNIFORM, WIDTH, LOGWIDTH = "midness", "uniform", "width", "logwidth"
AGG_SUM, AGG_AVG, AGG_MAX = "sum", "avg", "max"


@dataclass
class Weights:
    violation: float = 1.0
    pscost: float = 1.0
    domain: float = 0.0
    integrality: float = 0.5
    dual: float = 0.0


@dataclass
class Candidate:
    var: int
    count: int = 0
    vsum: float = 0.0
    vmax: float = 0.0
    sv: float = 0.0
    sp: Optional[float] = None
    sb: float = 0.0
    si: float = 0.0
    sd: float = 0.0
    sf: float = 0.0
    point: float = 0.0

    def add(self, s: float):
        self.count += 1
        self.vsum += s
        self.vmax = max(self.vmax, s)

    def violation(self, agg: str = AGG_SUM) -> float:
        if agg == AGG_AVG:
            return self.vsum / self.count if self.count else 0.0
        if agg == AGG_MAX:
            return self.vmax
        return self.vsum


def violation_score(h: float, w: float) -> float:
    return abs(h - w) / max(1.0, abs(w))


def _weight(b: Interval, x: float, mode: str) -> float:
    w = b.hi - b.lo
    if w <= 0:
        return 0.0
    if mode == UNIFORM:
        return 1.0
    if mode == WIDTH:
        return w
    if mode == LOGWIDTH:
        if w >= 10:
            return 10.0 * math.log10(w)
        if w <= 0.1:
            return 1.0 / (-10.0 * math.log10(w))
        return w
    return max(MIDNESS_FLOOR, min(x - b.lo, b.hi - x) / w)


def distribute_violation(cols: Sequence[int], s_v: float, bounds: Sequence[Interval],
                         point: Sequence[float], mode: str = MIDNESS) -> Dict[int, float]:
    """Shares of s_v per variable; the shares add up to s_v."""
    cols = list(dict.fromkeys(cols))
    unb = [j for j in cols if bounds[j].lo <= -INF or bounds[j].hi >= INF]
    if unb:
        w = {j: (1.0 if j in unb else 0.0) for j in cols}
    else:
        w = {j: _weight(bounds[j], min(max(float(point[j]), bounds[j].lo), bounds[j].hi), mode)
             for j in cols}
    tot = math.fsum(w.values())
    if tot <= 0:
        return {j: 0.0 for j in cols}
    shares = {j: s_v * v / tot for j, v in w.items()}
    # put the rounding remainder on the largest share
    big = max(shares, key=lambda j: (shares[j], -j))
    shares[big] = s_v - math.fsum(v for j, v in shares.items() if j != big)
    return shares


def branching_point(b: Interval, xhat: float) -> float:
    """Point between xhat and the midpoint, kept 10% of the width off each bound."""
    lo, hi = b.lo, b.hi
    if lo > -INF and hi < INF:
        x = min(max(xhat, lo), hi)
        p = POINT_WEIGHT * x + (1.0 - POINT_WEIGHT) * 0.5 * (lo + hi)
        gap = POINT_MIN_REL * (hi - lo)
        return min(max(p, lo + gap), hi - gap)
    if lo <= -INF and hi >= INF:
        return xhat if math.isfinite(xhat) else 0.0
    if lo > -INF:
        return max(xhat, lo + max(1.0, 0.1 * abs(lo)))
    return min(xhat, hi - max(1.0, 0.1 * abs(hi)))


def domain_score(b: Interval) -> float:
    lo, hi = max(b.lo, -INF), min(b.hi, INF)
    w = hi - lo
    if w >= 1:
        return math.log10(2.0 * INF / w)
    return math.log10(2.0 * INF * max(DOMAIN_EPS, w))


def integrality_score(integral: bool, b: Interval, implied: bool = False) -> float:
    if integral:
        return 1.0 if (b.lo == 0.0 and b.hi == 1.0) else 0.1
    return 0.01 if implied else 0.0


class Pseudocosts:
    """Average objective gain per unit of domain reduction, per direction."""

    def __init__(self):
        self.data: Dict[int, List[float]] = {}

    def _get(self, j: int) -> List[float]:
        return self.data.setdefault(j, [0.0, 0, 0.0, 0])

    def update(self, j: int, down_child: bool, gain: float, width_change: float):
        """``down_child``: the node x <= point (updates psi+)."""
        if width_change <= 0 or not math.isfinite(gain):
            return
        d = self._get(j)
        if down_child:
            d[0] += gain / width_change
            d[1] += 1
        else:
            d[2] += gain / width_change
            d[3] += 1

    def plus(self, j: int) -> Optional[float]:
        d = self.data.get(j)
        return d[0] / d[1] if d and d[1] >= PSCOST_RELIABLE else None

    def minus(self, j: int) -> Optional[float]:
        d = self.data.get(j)
        return d[2] / d[3] if d and d[3] >= PSCOST_RELIABLE else None

    def score(self, j: int, b: Interval, point: float) -> Optional[float]:
        if b.lo <= -INF or b.hi >= INF:
            return None
        p, m = self.plus(j), self.minus(j)
        up = None if p is None else p * (point - b.lo)
        dn = None if m is None else m * (b.hi - point)
        if up is not None and dn is not None:
            return up * dn
        return up if up is not None else dn


def score_candidates(cands: Sequence[Candidate], bounds: Sequence[Interval], point: Sequence[float],
                     is_integral: Callable[[int], bool], implied: Callable[[int], bool] = lambda j: False,
                     pscost: Optional[Pseudocosts] = None, constant_objective: bool = False,
                     weights: Optional[Weights] = None, agg: str = AGG_SUM,
                     dual: Optional[Dict[int, float]] = None) -> List[Candidate]:
    """Fill the per-candidate scores and the aggregated final score s^f."""
    for c in cands:
        b = bounds[c.var]
        c.point = branching_point(b, float(point[c.var]))
        c.sv = c.violation(agg)
        c.sp = None if (pscost is None or constant_objective) else pscost.score(c.var, b, c.point)
        c.sb = domain_score(b)
        c.si = integrality_score(is_integral(c.var), b, implied(c.var))
        c.sd = (dual or {}).get(c.var, 0.0)

    def mx(vals):
        vals = [v for v in vals if v is not None]
        return max(vals) if vals else 0.0

    mv, mp, mb = mx(c.sv for c in cands), mx(c.sp for c in cands), mx(c.sb for c in cands)
    mi, md = mx(c.si for c in cands), mx(c.sd for c in cands)
    W = weights or Weights()

    def part(v, m):
        return v / m if m > 0 else 0.0

    for c in cands:
        num = (W.violation * part(c.sv, mv) + W.domain * part(c.sb, mb) +
               W.integrality * part(c.si, mi) + W.dual * part(c.sd, md))
        den = W.violation + W.domain + W.integrality + W.dual
        if c.sp is not None and mp > 0:
            num += W.pscost * part(c.sp, mp)
            den += W.pscost
        c.sf = num / den if den > 0 else 0.0
    return list(cands)


def choice_set(cands: Sequence[Candidate], factor: float = HIGH_SCORE_FACTOR) -> List[Candidate]:
    if not cands:
        return []
    best = max(c.sf for c in cands)
    return sorted([c for c in cands if c.sf >= factor * best], key=lambda c: c.var)


def split(b: Interval, point: float, integral: bool) -> Tuple[Interval, Interval]:
    """Child domains for branching at point."""
    if integral:
        f = math.floor(point)
        if f >= b.hi:
            f = b.hi - 1
        if f < b.lo:
            f = b.lo
        return Interval(b.lo, f), Interval(f + 1, b.hi)
    return Interval(b.lo, point), Interval(point, b.hi)


def select_and_split(cands: Sequence[Candidate], rng: random.Random, bounds: Sequence[Interval],
                     point: Sequence[float], is_integral: Callable[[int], bool],
                     factor: float = HIGH_SCORE_FACTOR):
    """(variable, branch point, (down bounds, up bounds)) chosen from the 0.9 set."""
    pool = choice_set(cands, factor)
    if not pool:
        return None
    c = pool[rng.randrange(len(pool))] if len(pool) > 1 else pool[0]
    j = c.var
    integral = is_integral(j)
    p = branching_point(bounds[j], float(point[j]))
    if integral:
        x = float(point[j])
        if abs(x - round(x)) > 1e-9 and bounds[j].lo <= x <= bounds[j].hi:
            p = x
    down, up = split(bounds[j], p, integral)
    lb = list(bounds)
    ub = list(bounds)
    lb[j] = down
    ub[j] = up
    return j, p, (lb, ub)


class CandidateStore:
    """Violation scores registered during one enforcement round."""

    def __init__(self):
        self.cands: Dict[int, Candidate] = {}

    def register(self, shares: Dict[int, float]):
        for j, s in shares.items():
            self.cands.setdefault(j, Candidate(j)).add(s)

    def candidates(self, bounds: Sequence[Interval]) -> List[Candidate]:
        return [c for j, c in sorted(self.cands.items()) if bounds[j].width > 0]

    def __len__(self):
        return len(self.cands)
