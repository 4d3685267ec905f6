"""Cuts: the RowPrep container, numerics cleanup, strong-cut test, cut pool.

A cut is kept as sum_j a_j x_j <= b (``>=`` rows are negated on cleanup).
Cleanup follows four steps: bound the coefficient range by eliminating an
end term with a variable bound, scale by a power of two, move coefficients
that are almost integral onto the integer by relaxing with a bound, and
push a right-hand side that is almost zero away from the rounding zone.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .interval import INF, Interval

MAX_COEF_RATIO = 1e7
STRONG_MAX_COEF = 1e4
MIN_EFFICACY = 1e-4
WEAK_CUT_THRESHOLD = 0.2
WEAK_CUT_MINVIOL_FACTOR = 0.5
ENFO_AUXVIOL_FACTOR = 0.01
EPSILON = 1e-9
RHS_NEAR_ZERO = 1.1e-9
ROUNDOFF_GUARD = 2.0 ** -50

NO_BOUND, LOST_VIOLATION, WEAK = "no-bound", "lost-violation", "weak"


@dataclass
class RowPrep:
    coefs: Dict[int, float]
    side: float
    sense: str = "<="
    local: bool = False
    cons_id: Optional[int] = None
    handler: str = ""
    gap: float = 0.0
    bounds_used: List[int] = field(default_factory=list)

    def copy(self) -> "RowPrep":
        return RowPrep(dict(self.coefs), self.side, self.sense, self.local, self.cons_id,
                       self.handler, self.gap, list(self.bounds_used))

    def activity(self, x: Sequence[float]) -> float:
        return math.fsum(a * float(x[j]) for j, a in self.coefs.items())

    def violation(self, x: Sequence[float]) -> float:
        """Amount by which x violates the row (negative when satisfied strictly)."""
        act = self.activity(x)
        return act - self.side if self.sense == "<=" else self.side - act

    def norm(self) -> float:
        return math.sqrt(math.fsum(a * a for a in self.coefs.values()))

    def efficacy(self, x: Sequence[float]) -> float:
        n = self.norm()
        return self.violation(x) / n if n > 0 else 0.0

    def to_le(self) -> "RowPrep":
        r = self.copy()
        if r.sense == ">=":
            r.coefs = {j: -a for j, a in r.coefs.items()}
            r.side = -r.side
            r.sense = "<="
        return r

    def max_abs(self) -> float:
        return max((abs(a) for a in self.coefs.values()), default=0.0)


@dataclass
class Rejected:
    reason: str


@dataclass
class CleanupStats:
    created: int = 0
    cleaned: int = 0
    rejected: Counter = field(default_factory=Counter)

    def row(self) -> str:
        rej = ", ".join(f"{k}={v}" for k, v in sorted(self.rejected.items())) or "none"
        return f"cuts created={self.created} cleaned={self.cleaned} rejected: {rej}"


def _drop_zeros(r: RowPrep):
    r.coefs = {j: a for j, a in r.coefs.items() if a != 0.0}


def _eliminate(r: RowPrep, j: int, bounds: Sequence[Interval]) -> bool:
    """Remove a_j x_j using the bound that keeps the row valid."""
    a = r.coefs[j]
    b = bounds[j].lo if a > 0 else bounds[j].hi
    if abs(b) >= INF:
        return False
    del r.coefs[j]
    r.side -= a * b
    r.local = True
    r.bounds_used.append(j)
    return True


def _loss(r: RowPrep, j: int, bounds: Sequence[Interval], x: Optional[Sequence[float]]) -> float:
    a = r.coefs[j]
    b = bounds[j].lo if a > 0 else bounds[j].hi
    if abs(b) >= INF:
        return math.inf
    if x is None:
        return 0.0
    return abs(a * (float(x[j]) - b))


def _reduce_range(r: RowPrep, bounds, x) -> Optional[str]:
    while len(r.coefs) > 1:
        items = sorted(r.coefs.items(), key=lambda t: (-abs(t[1]), t[0]))
        big, small = items[0], items[-1]
        if abs(big[1]) <= MAX_COEF_RATIO * abs(small[1]):
            return None
        lb, ls = _loss(r, big[0], bounds, x), _loss(r, small[0], bounds, x)
        if math.isinf(lb) and math.isinf(ls):
            return NO_BOUND
        # less violation lost wins; ties eliminate the larger coefficient
        j = big[0] if lb <= ls else small[0]
        _eliminate(r, j, bounds)
    return None


def _scale(r: RowPrep, f: float):
    r.coefs = {j: a * f for j, a in r.coefs.items()}
    r.side *= f


def _pow2_to_range(m: float, lo: float, hi: float) -> float:
    """Power of two that brings m into [lo, hi]."""
    if m > hi:
        return 2.0 ** (-math.ceil(math.log2(m / hi)))
    if m < lo:
        return 2.0 ** math.ceil(math.log2(lo / m))
    return 1.0


def _snap_integers(r: RowPrep, bounds) -> Optional[str]:
    for j in sorted(r.coefs):
        a = r.coefs[j]
        k = float(round(a))
        d = k - a
        if d == 0.0 or abs(d) > EPSILON:
            continue
        # add (k - a) x_j <= (k - a) * bound; the bound makes the addition valid
        b = bounds[j].hi if d > 0 else bounds[j].lo
        if abs(b) >= INF:
            return NO_BOUND
        r.coefs[j] = k
        r.side += d * b
        r.local = True
        r.bounds_used.append(j)
    _drop_zeros(r)
    return None


def _fix_rhs(r: RowPrep):
    if -EPSILON <= r.side <= 0.0:
        r.side = 0.0
    elif 0.0 < r.side <= EPSILON:
        r.side = RHS_NEAR_ZERO


def cleanup(row: RowPrep, bounds: Sequence[Interval], point: Optional[Sequence[float]] = None,
            min_violation: float = 0.0, strong: bool = True, feastol: float = 1e-6,
            stats: Optional[CleanupStats] = None):
    """Cleaned copy of row in <= form, or Rejected(reason).

    ``min_violation`` is required at ``point`` after cleanup (when a point
    is given).  Strong mode scales the largest coefficient into
    [1e-4, 1e4]; weak mode scales the violation up toward 1e-4 while the
    largest coefficient stays below 10/feastol and guards against
    round-off dominated violations.
    """
    r = row.to_le()
    _drop_zeros(r)
    if stats is not None:
        stats.created += 1

    def reject(reason: str):
        if stats is not None:
            stats.rejected[reason] += 1
        return Rejected(reason)

    if not r.coefs:
        if point is not None and -r.side < min_violation:
            return reject(LOST_VIOLATION)
        return r
    why = _reduce_range(r, bounds, point)
    if why:
        return reject(why)
    m = r.max_abs()
    if strong:
        f = _pow2_to_range(m, MIN_EFFICACY, STRONG_MAX_COEF)
        if f != 1.0:
            _scale(r, f)
    else:
        cap = 10.0 / feastol
        if m >= cap:
            f = 2.0 ** (-math.ceil(math.log2(m / cap) + 1e-12))
            if point is None or r.violation(point) * f >= min_violation:
                _scale(r, f)
        if point is not None:
            v = r.violation(point)
            m = r.max_abs()
            if 10 * EPSILON <= v < MIN_EFFICACY:
                p = math.ceil(math.log2(MIN_EFFICACY / v))
                while p > 0 and m * 2.0 ** p >= cap:
                    p -= 1
                if p > 0:
                    _scale(r, 2.0 ** p)
    why = _snap_integers(r, bounds)
    if why:
        return reject(why)
    _fix_rhs(r)
    if point is not None:
        v = r.violation(point)
        if v < min_violation or v <= 0.0:
            return reject(LOST_VIOLATION)
        if not strong:
            terms = max([abs(r.side)] + [abs(a * float(point[j])) for j, a in r.coefs.items()])
            if v < ROUNDOFF_GUARD * terms:
                return reject(LOST_VIOLATION)
    if stats is not None:
        stats.cleaned += 1
    return r


def is_strong(estimator_value: float, function_value: float, aux_value: float,
              sense: str = "under", threshold: float = WEAK_CUT_THRESHOLD) -> bool:
    """Does the estimator close at least ``threshold`` of the gap at the point?

    For an underestimator of h at a point where h > w the estimator must
    satisfy l >= w + threshold * (h - w); overestimators are mirrored.
    """
    if sense == "under":
        gap = function_value - aux_value
        return estimator_value - aux_value >= threshold * gap
    gap = aux_value - function_value
    return aux_value - estimator_value >= threshold * gap


class CutPool:
    """Globally valid cuts, deduplicated by rounded coefficients."""

    def __init__(self, capacity: int = 5000):
        self.cuts: List[RowPrep] = []
        self._keys = set()
        self.capacity = capacity

    @staticmethod
    def _key(r: RowPrep) -> Tuple:
        return (tuple(sorted((j, round(a, 12)) for j, a in r.coefs.items())), round(r.side, 12), r.sense)

    def add(self, r: RowPrep) -> bool:
        if r.local:
            return False
        k = self._key(r)
        if k in self._keys:
            return False
        if len(self.cuts) >= self.capacity:
            old = self.cuts.pop(0)
            self._keys.discard(self._key(old))
        self._keys.add(k)
        self.cuts.append(r)
        return True

    def violated(self, x: Sequence[float], tol: float) -> List[RowPrep]:
        return [r for r in self.cuts if r.violation(x) > tol]

    def __len__(self) -> int:
        return len(self.cuts)
