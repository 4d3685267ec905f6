"""Conservative interval arithmetic.

Intervals are closed, with infinity encoded as +-1e20.  Any endpoint whose
magnitude reaches that threshold is treated as infinite.  Results of
operations that cannot be computed exactly in floating point are widened
outward by a relative 1e-12, which keeps every image a superset of the
exact one without touching the FPU rounding mode.

The module also hosts the univariate quadratic interval equation solver
used by the quadratic handler and reverse propagation of powers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Tuple

INF = 1e20
REL_INFLATE = 1e-12
_TWO_PI = 2.0 * math.pi


def is_inf(v: float) -> bool:
    return abs(v) >= INF


def clamp(v: float) -> float:
    """Map values at or beyond the infinity threshold onto +-INF."""
    if v != v:  # nan
        raise ValueError("nan in interval arithmetic")
    if v >= INF:
        return INF
    if v <= -INF:
        return -INF
    return v


def _down(v: float) -> float:
    if v <= -INF:
        return -INF
    if v >= INF:
        return INF
    return clamp(v - REL_INFLATE * abs(v))


def _up(v: float) -> float:
    if v >= INF:
        return INF
    if v <= -INF:
        return -INF
    return clamp(v + REL_INFLATE * abs(v))


def _two_sum(a: float, b: float) -> Tuple[float, float]:
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


def _split(a: float) -> Tuple[float, float]:
    c = 134217729.0 * a  # 2**27 + 1
    hi = c - (c - a)
    return hi, a - hi


def _two_prod_err(a: float, b: float, p: float) -> float:
    ah, al = _split(a)
    bh, bl = _split(b)
    return ((ah * bh - p) + ah * bl + al * bh) + al * bl


def _add_down(a: float, b: float) -> float:
    if a <= -INF or b <= -INF:
        return -INF
    if a >= INF or b >= INF:
        return INF
    s, err = _two_sum(a, b)
    if err < 0:
        s = math.nextafter(s, -math.inf)
    return clamp(s)


def _add_up(a: float, b: float) -> float:
    if a >= INF or b >= INF:
        return INF
    if a <= -INF or b <= -INF:
        return -INF
    s, err = _two_sum(a, b)
    if err > 0:
        s = math.nextafter(s, math.inf)
    return clamp(s)


def _mul_point(a: float, b: float, up: bool) -> float:
    if a == 0.0 or b == 0.0:
        return 0.0
    if is_inf(a) or is_inf(b):
        return INF if (a > 0) == (b > 0) else -INF
    p = a * b
    if abs(p) < 1e150 and abs(p) > 1e-150:
        err = _two_prod_err(a, b, p)
        if err > 0 and up:
            p = math.nextafter(p, math.inf)
        elif err < 0 and not up:
            p = math.nextafter(p, -math.inf)
    else:
        p = _up(p) if up else _down(p)
    return clamp(p)


@dataclass(frozen=True)
class Interval:
    """Closed interval [lo, hi]; the empty interval has lo > hi."""

    lo: float
    hi: float

    def __post_init__(self):
        if self.lo != self.lo or self.hi != self.hi:
            raise ValueError("nan interval bound")

    # -- constructors -------------------------------------------------------
    @staticmethod
    def make(lo: float, hi: float) -> "Interval":
        lo, hi = clamp(lo), clamp(hi)
        if lo > hi:
            return EMPTY
        return Interval(lo, hi)

    @staticmethod
    def point(v: float) -> "Interval":
        v = clamp(v)
        return Interval(v, v)

    @staticmethod
    def hull_of(values: Iterable[float]) -> "Interval":
        vals = list(values)
        if not vals:
            return EMPTY
        return Interval.make(min(vals), max(vals))

    # -- predicates ---------------------------------------------------------
    @property
    def is_empty(self) -> bool:
        return self.lo > self.hi

    @property
    def lo_inf(self) -> bool:
        return self.lo <= -INF

    @property
    def hi_inf(self) -> bool:
        return self.hi >= INF

    @property
    def is_bounded(self) -> bool:
        return not self.is_empty and not self.lo_inf and not self.hi_inf

    @property
    def width(self) -> float:
        if self.is_empty:
            return 0.0
        if self.lo_inf or self.hi_inf:
            return INF
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        if self.lo_inf and self.hi_inf:
            return 0.0
        if self.lo_inf:
            return min(0.0, self.hi)
        if self.hi_inf:
            return max(0.0, self.lo)
        return 0.5 * (self.lo + self.hi)

    def contains(self, x: float, tol: float = 0.0) -> bool:
        if self.is_empty:
            return False
        x = min(max(x, -INF), INF)
        return self.lo - tol <= x <= self.hi + tol

    def contains_interval(self, other: "Interval") -> bool:
        if other.is_empty:
            return True
        if self.is_empty:
            return False
        return self.lo <= other.lo and other.hi <= self.hi

    def contains_zero(self) -> bool:
        return self.contains(0.0)

    # -- lattice ------------------------------------------------------------
    def intersect(self, other: "Interval") -> "Interval":
        if self.is_empty or other.is_empty:
            return EMPTY
        return Interval.make(max(self.lo, other.lo), min(self.hi, other.hi))

    def hull(self, other: "Interval") -> "Interval":
        if self.is_empty:
            return other
        if other.is_empty:
            return self
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def inflate(self, rel: float = REL_INFLATE, absolute: float = 0.0) -> "Interval":
        if self.is_empty:
            return self
        lo = self.lo if self.lo_inf else self.lo - rel * abs(self.lo) - absolute
        hi = self.hi if self.hi_inf else self.hi + rel * abs(self.hi) + absolute
        return Interval.make(lo, hi)

    # -- operators ----------------------------------------------------------
    def __add__(self, other):
        return add(self, _as_interval(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_interval(other))

    def __rsub__(self, other):
        return sub(_as_interval(other), self)

    def __mul__(self, other):
        return mul(self, _as_interval(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _as_interval(other))

    def __rtruediv__(self, other):
        return div(_as_interval(other), self)

    def __neg__(self):
        return neg(self)

    def __repr__(self) -> str:
        if self.is_empty:
            return "Interval(EMPTY)"
        return f"Interval({self.lo!r}, {self.hi!r})"


EMPTY = Interval(INF, -INF)
ENTIRE = Interval(-INF, INF)


def _as_interval(v) -> Interval:
    if isinstance(v, Interval):
        return v
    return Interval.point(float(v))


# ---------------------------------------------------------------------------
# binary operations
# ---------------------------------------------------------------------------

def add(a: Interval, b: Interval) -> Interval:
    if a.is_empty or b.is_empty:
        return EMPTY
    return Interval.make(_add_down(a.lo, b.lo), _add_up(a.hi, b.hi))


def neg(a: Interval) -> Interval:
    if a.is_empty:
        return EMPTY
    return Interval(-a.hi, -a.lo)


def sub(a: Interval, b: Interval) -> Interval:
    return add(a, neg(b))


def scale(a: Interval, c: float) -> Interval:
    """Multiply an interval by a scalar."""
    return mul(a, Interval.point(c))


def mul(a: Interval, b: Interval) -> Interval:
    if a.is_empty or b.is_empty:
        return EMPTY
    lows = [_mul_point(x, y, False) for x in (a.lo, a.hi) for y in (b.lo, b.hi)]
    highs = [_mul_point(x, y, True) for x in (a.lo, a.hi) for y in (b.lo, b.hi)]
    return Interval.make(min(lows), max(highs))


def reciprocal(b: Interval) -> Interval:
    if b.is_empty:
        return EMPTY
    if b.lo == 0.0 and b.hi == 0.0:
        return ENTIRE
    if b.lo < 0.0 < b.hi:
        return ENTIRE
    if b.lo == 0.0:
        return Interval.make(0.0 if b.hi_inf else _down(1.0 / b.hi), INF)
    if b.hi == 0.0:
        return Interval.make(-INF, 0.0 if b.lo_inf else _up(1.0 / b.lo))
    # 1/y is decreasing on each sign branch
    lo = 0.0 if b.hi_inf else _down(1.0 / b.hi)
    hi = 0.0 if b.lo_inf else _up(1.0 / b.lo)
    return Interval.make(lo, hi)


def div(a: Interval, b: Interval) -> Interval:
    if a.is_empty or b.is_empty:
        return EMPTY
    if b.lo < 0.0 < b.hi or (b.lo == 0.0 and b.hi == 0.0):
        return ENTIRE
    if b.lo == 0.0 or b.hi == 0.0:
        return mul(a, reciprocal(b)).inflate()
    qs = [_div_point(x, y) for x in (a.lo, a.hi) for y in (b.lo, b.hi)]
    return Interval.make(_down(min(qs)), _up(max(qs)))


def _div_point(x: float, y: float) -> float:
    # y != 0
    if is_inf(y):
        return 0.0 if not is_inf(x) else (INF if (x > 0) == (y > 0) else -INF)
    if is_inf(x):
        return INF if (x > 0) == (y > 0) else -INF
    try:
        return clamp(x / y)
    except OverflowError:
        return INF if (x > 0) == (y > 0) else -INF


# ---------------------------------------------------------------------------
# unary operations
# ---------------------------------------------------------------------------

def _ipow(x: float, n: int) -> float:
    if is_inf(x):
        if n % 2 == 0 or x > 0:
            return INF
        return -INF
    try:
        return clamp(x ** n)
    except OverflowError:
        return INF if (x > 0 or n % 2 == 0) else -INF


def _fpow(x: float, p: float) -> float:
    # x >= 0
    if x >= INF:
        return INF if p > 0 else 0.0
    if x == 0.0:
        return 0.0 if p > 0 else INF
    try:
        return clamp(x ** p)
    except OverflowError:
        return INF


def pow_(a: Interval, p: float) -> Interval:
    """Image of y**p.  Integer exponents act on the whole line, others on y >= 0."""
    if a.is_empty:
        return EMPTY
    if p == 0:
        return Interval(1.0, 1.0)
    if p == 1:
        return a
    if float(p).is_integer():
        n = int(p)
        if n > 0:
            if n % 2 == 1:
                return Interval.make(_down(_ipow(a.lo, n)), _up(_ipow(a.hi, n)))
            if a.lo >= 0:
                return Interval.make(_down(_ipow(a.lo, n)), _up(_ipow(a.hi, n)))
            if a.hi <= 0:
                return Interval.make(_down(_ipow(a.hi, n)), _up(_ipow(a.lo, n)))
            return Interval.make(0.0, _up(max(_ipow(a.lo, n), _ipow(a.hi, n))))
        # negative integer exponent: 1 / y**|n|
        return reciprocal(pow_(a, -n)).inflate()
    # fractional exponent: domain y >= 0
    lo = max(a.lo, 0.0)
    if lo > a.hi:
        return EMPTY
    if p > 0:
        return Interval.make(_down(_fpow(lo, p)), _up(_fpow(a.hi, p)))
    return Interval.make(_down(_fpow(a.hi, p)), _up(_fpow(lo, p)))


def _spow(x: float, p: float) -> float:
    if x >= 0:
        return _fpow(x, p)
    return -_fpow(-x, p)


def signpower(a: Interval, p: float) -> Interval:
    """Image of sign(y)*|y|**p, p > 1, which is increasing."""
    if a.is_empty:
        return EMPTY
    return Interval.make(_down(_spow(a.lo, p)), _up(_spow(a.hi, p)))


def _exp(x: float) -> float:
    if x >= INF:
        return INF
    if x <= -INF:
        return 0.0
    try:
        return clamp(math.exp(x))
    except OverflowError:
        return INF


def exp(a: Interval) -> Interval:
    if a.is_empty:
        return EMPTY
    return Interval.make(max(0.0, _down(_exp(a.lo))), _up(_exp(a.hi)))


def _log(x: float) -> float:
    if x <= 0:
        return -INF
    if x >= INF:
        return INF
    return math.log(x)


def log(a: Interval) -> Interval:
    if a.is_empty or a.hi <= 0:
        return EMPTY
    lo = -INF if a.lo <= 0 else _down(_log(a.lo))
    return Interval.make(lo, _up(_log(a.hi)))


def abs_(a: Interval) -> Interval:
    if a.is_empty:
        return EMPTY
    if a.lo >= 0:
        return a
    if a.hi <= 0:
        return neg(a)
    return Interval(0.0, max(-a.lo, a.hi))


def _entropy(x: float) -> float:
    if x <= 0:
        return 0.0
    if x >= INF:
        return -INF
    return clamp(-x * math.log(x))


def entropy(a: Interval) -> Interval:
    """Image of -y*log(y) on y >= 0 (value 0 at y = 0)."""
    if a.is_empty:
        return EMPTY
    lo = max(a.lo, 0.0)
    if lo > a.hi:
        return EMPTY
    v1, v2 = _entropy(lo), _entropy(a.hi)
    low = min(v1, v2)
    peak = 1.0 / math.e
    high = _entropy(peak) if lo <= peak <= a.hi else max(v1, v2)
    low_b = -INF if a.hi_inf else low - REL_INFLATE * abs(low) - 1e-300
    return Interval.make(low_b, _up(high))


def _trig_range(a: Interval, shift: float) -> Interval:
    """Image of cos(y - shift); shift = 0 gives cos, pi/2 gives sin."""
    if a.is_empty:
        return EMPTY
    if a.width >= _TWO_PI:
        return Interval(-1.0, 1.0)
    lo, hi = a.lo - shift, a.hi - shift
    v1, v2 = math.cos(lo), math.cos(hi)
    low, high = min(v1, v2), max(v1, v2)
    # maxima of cos at 2k*pi, minima at (2k+1)*pi
    k = math.ceil(lo / _TWO_PI - 1e-12)
    if k * _TWO_PI <= hi + 1e-12:
        high = 1.0
    k = math.ceil((lo - math.pi) / _TWO_PI - 1e-12)
    if k * _TWO_PI + math.pi <= hi + 1e-12:
        low = -1.0
    low = max(-1.0, low - 1e-12 * (1 + abs(low)))
    high = min(1.0, high + 1e-12 * (1 + abs(high)))
    return Interval(low, high)


def cos(a: Interval) -> Interval:
    return _trig_range(a, 0.0)


def sin(a: Interval) -> Interval:
    return _trig_range(a, math.pi / 2.0)


def square(a: Interval) -> Interval:
    return pow_(a, 2)


# ---------------------------------------------------------------------------
# univariate quadratic interval equation
# ---------------------------------------------------------------------------

Segments = List[Tuple[float, float]]


def _roots(a: float, c: float, r: float) -> Tuple[float, float] | None:
    """Real roots of a*y^2 + c*y - r = 0 (a != 0), sorted, or None."""
    disc = c * c + 4.0 * a * r
    if disc < 0:
        # tolerate tiny negative discriminants from cancellation
        if disc > -1e-14 * max(1.0, c * c, abs(4.0 * a * r)):
            disc = 0.0
        else:
            return None
    sq = math.sqrt(disc)
    q = -0.5 * (c + math.copysign(sq, c)) if c != 0 else -0.5 * sq
    if q == 0.0:
        return (0.0, 0.0)
    r1 = q / a
    r2 = -r / q
    return (min(r1, r2), max(r1, r2))


def _widen(seg: Segments) -> Segments:
    out = []
    for lo, hi in seg:
        if lo > -INF:
            lo = lo - 1e-10 * max(1.0, abs(lo))
        if hi < INF:
            hi = hi + 1e-10 * max(1.0, abs(hi))
        out.append((clamp(lo), clamp(hi)))
    return out


def _quad_le(a: float, c: float, r: float) -> Segments:
    """Segments of y with a*y^2 + c*y <= r."""
    if r >= INF:
        return [(-INF, INF)]
    if r <= -INF:
        return []
    if a == 0.0:
        if c == 0.0:
            return [(-INF, INF)] if r >= 0 else []
        if c > 0:
            return _widen([(-INF, r / c)])
        return _widen([(r / c, INF)])
    rt = _roots(a, c, r)
    if a > 0:
        if rt is None:
            return []
        return _widen([rt])
    if rt is None:
        return [(-INF, INF)]
    return _widen([(-INF, rt[0]), (rt[1], INF)])


def _intersect_segments(s1: Segments, s2: Segments) -> Segments:
    out = []
    for a1, b1 in s1:
        for a2, b2 in s2:
            lo, hi = max(a1, a2), min(b1, b2)
            if lo <= hi:
                out.append((lo, hi))
    return out


def solve_univariate_quadratic(a: float, b: Interval, rhs: Interval,
                               domain: Interval) -> Interval:
    """Hull of {y in domain : a*y^2 + beta*y in rhs for some beta in b}."""
    if domain.is_empty or b.is_empty or rhs.is_empty:
        return EMPTY
    result = EMPTY
    r_lo, r_hi = rhs.lo, rhs.hi
    # y >= 0: beta*y spans [b.lo*y, b.hi*y]
    # y <= 0: beta*y spans [b.hi*y, b.lo*y]
    for part, c_le, c_ge in (
        (Interval.make(max(domain.lo, 0.0), domain.hi), b.lo, b.hi),
        (Interval.make(domain.lo, min(domain.hi, 0.0)), b.hi, b.lo),
    ):
        if part.is_empty:
            continue
        if is_inf(c_le) or is_inf(c_ge):
            # unbounded linear coefficient: any nonzero y can be matched
            result = result.hull(_unbounded_coef_case(a, c_le, c_ge, rhs, part))
            continue
        seg: Segments = [(part.lo, part.hi)]
        if r_hi < INF:
            seg = _intersect_segments(seg, _quad_le(a, c_le, r_hi))
        if r_lo > -INF:
            seg = _intersect_segments(seg, _quad_le(-a, -c_ge, -r_lo))
        for lo, hi in seg:
            result = result.hull(Interval.make(lo, hi))
    return result.intersect(domain)


def _unbounded_coef_case(a, c_le, c_ge, rhs, part) -> Interval:
    # With an unbounded coefficient interval the image over beta is a
    # half-line or the whole line for every y != 0; be conservative.
    if rhs.contains(0.0):
        return part
    if part.lo == 0.0 and part.hi == 0.0:
        return EMPTY
    return part
