"""Dense bounded-variable primal simplex.

Solves

    min  c^T x   s.t.  row_lo <= A x <= row_hi,  col_lo <= x <= col_hi

by adding one logical (slack) variable per row, s = A x, and running a
two-phase primal simplex on [A  -I] (x, s) = 0 with all variables bounded
(bounds may be infinite).  Phase 1 minimizes the sum of bound violations of
the basic variables.  Dantzig pricing is used until 50 consecutive
degenerate pivots occur, after which Bland's rule takes over.

Infinite bounds are encoded as +-1e20 like everywhere else in the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .interval import INF

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERLIMIT = "iteration-limit"

_AT_LO, _AT_HI, _FREE, _BASIC = 0, 1, 2, 3
AT_LO, BASIC = _AT_LO, _BASIC
BLAND_AFTER = 50
REFACTOR_EVERY = 40


@dataclass
class Basis:
    """Warm-start snapshot: basic variable ids and nonbasic status.

    Variable ids: columns are 0..n-1, the slack of row i is n + i.
    """

    basic: List[int]
    status: List[int]
    ncols: int


@dataclass
class LpProblem:
    c: np.ndarray
    A: np.ndarray
    row_lo: np.ndarray
    row_hi: np.ndarray
    col_lo: np.ndarray
    col_hi: np.ndarray

    @staticmethod
    def build(c, A, row_lo, row_hi, col_lo, col_hi) -> "LpProblem":
        c = np.asarray(c, dtype=float)
        n = c.shape[0]
        A = np.asarray(A, dtype=float).reshape(-1, n) if len(A) else np.zeros((0, n))
        return LpProblem(c, A, np.asarray(row_lo, float), np.asarray(row_hi, float),
                         np.asarray(col_lo, float), np.asarray(col_hi, float))

    @property
    def nrows(self) -> int:
        return self.A.shape[0]

    @property
    def ncols(self) -> int:
        return self.c.shape[0]


@dataclass
class LpResult:
    status: str
    x: Optional[np.ndarray] = None
    obj: float = float("nan")
    duals: Optional[np.ndarray] = None
    redcost: Optional[np.ndarray] = None
    activity: Optional[np.ndarray] = None
    basis: Optional[Basis] = None
    ray: Optional[np.ndarray] = None
    iterations: int = 0


class _Simplex:
    def __init__(self, p: LpProblem, tol: float, warm: Optional[Basis]):
        self.p = p
        m, n = p.nrows, p.ncols
        self.m, self.n = m, n
        self.N = n + m
        self.M = np.hstack([p.A, -np.eye(m)]) if m else np.zeros((0, n))
        self.lo = np.concatenate([p.col_lo, p.row_lo]).astype(float)
        self.hi = np.concatenate([p.col_hi, p.row_hi]).astype(float)
        self.cost = np.concatenate([p.c, np.zeros(m)])
        self.tol = tol
        self.opt_tol = 1e-9
        self.piv_tol = 1e-9
        self.iters = 0
        self.degenerate = 0
        self.status = np.full(self.N, _AT_LO, dtype=int)
        self.x = np.zeros(self.N)
        for j in range(self.N):
            self._set_nonbasic_default(j)
        self.basic = list(range(n, n + m))
        if warm is not None:
            self._apply_warm(warm)
        for i, j in enumerate(self.basic):
            self.status[j] = _BASIC
        self._refactor()

    # -- setup -------------------------------------------------------------
    def _set_nonbasic_default(self, j):
        lo, hi = self.lo[j], self.hi[j]
        if lo > -INF:
            self.status[j], self.x[j] = _AT_LO, lo
        elif hi < INF:
            self.status[j], self.x[j] = _AT_HI, hi
        else:
            self.status[j], self.x[j] = _FREE, 0.0

    def _apply_warm(self, warm: Basis):
        n, m = self.n, self.m
        if warm.ncols != n:
            return
        mapped = [j for j in warm.basic if j < self.N]
        old_rows = len(warm.status) - warm.ncols
        # slacks of appended rows become basic
        mapped += [n + i for i in range(old_rows, m)]
        if len(mapped) != m or len(set(mapped)) != m:
            return
        B = self.M[:, mapped]
        if m and abs(np.linalg.det(B)) < 1e-12:
            return
        self.basic = mapped
        for j, st in enumerate(warm.status[:self.N]):
            if j in set(mapped):
                continue
            if st == _AT_HI and self.hi[j] < INF:
                self.status[j], self.x[j] = _AT_HI, self.hi[j]
            elif st == _AT_LO and self.lo[j] > -INF:
                self.status[j], self.x[j] = _AT_LO, self.lo[j]
            else:
                self._set_nonbasic_default(j)

    def _refactor(self):
        if self.m:
            self.Binv = np.linalg.inv(self.M[:, self.basic])
        else:
            self.Binv = np.zeros((0, 0))
        self._since_refactor = 0
        self._compute_basics()

    def _compute_basics(self):
        if not self.m:
            return
        nb = self.status != _BASIC
        rhs = -self.M[:, nb] @ self.x[nb]
        self.x[self.basic] = self.Binv @ rhs

    # -- main loop -----------------------------------------------------------
    def _infeasibility_costs(self):
        xb = self.x[self.basic]
        lo = self.lo[self.basic]
        hi = self.hi[self.basic]
        cb = np.zeros(self.m)
        cb[xb < lo - self.tol] = -1.0
        cb[xb > hi + self.tol] = 1.0
        return cb

    def _price(self, d, bland):
        st = self.status
        movable = (st != _BASIC) & (self.lo < self.hi)
        up = movable & ((st == _AT_LO) | (st == _FREE)) & (d < -self.opt_tol)
        down = movable & ((st == _AT_HI) | (st == _FREE)) & (d > self.opt_tol)
        score = np.where(up | down, np.abs(d), 0.0)
        cands = np.flatnonzero(score)
        if cands.size == 0:
            return -1, 0
        j = int(cands[0]) if bland else int(np.argmax(score))
        return j, (1 if up[j] else -1)

    def run(self, max_iter: int) -> str:
        phase = 1
        while True:
            if self.iters >= max_iter:
                return ITERLIMIT
            if self._since_refactor >= REFACTOR_EVERY:
                self._refactor()
            if phase == 1:
                cb = self._infeasibility_costs()
                if not cb.any():
                    phase = 2
                    self.degenerate = 0
                    continue
                cfull = np.zeros(self.N)
            else:
                cb = self.cost[self.basic]
                cfull = self.cost
            y = cb @ self.Binv if self.m else np.zeros(0)
            d = cfull - (y @ self.M if self.m else np.zeros(self.N))
            self.y = y
            q, direction = self._price(d, self.degenerate >= BLAND_AFTER)
            if q < 0:
                if phase == 1:
                    self.farkas = y
                    return INFEASIBLE
                return OPTIMAL
            alpha = self.Binv @ self.M[:, q] if self.m else np.zeros(0)
            # basic change per unit step of entering in `direction`
            delta = -direction * alpha
            step, leave, leave_to = self._ratio(delta, phase)
            span = self.hi[q] - self.lo[q]
            if span < INF and (leave < 0 or span <= step):
                # bound flip of the entering variable
                self._move(q, direction, span, delta)
                self.status[q] = _AT_HI if direction > 0 else _AT_LO
                self.x[q] = self.hi[q] if direction > 0 else self.lo[q]
                self.iters += 1
                self.degenerate = 0
                continue
            if leave < 0:
                if phase == 1:
                    # cannot happen with exact arithmetic; recover by refactoring
                    self._refactor()
                    self.iters += 1
                    continue
                ray = np.zeros(self.N)
                ray[q] = direction
                ray[self.basic] = delta
                self.ray = ray[:self.n]
                return UNBOUNDED
            self._move(q, direction, step, delta)
            self.degenerate = self.degenerate + 1 if step <= 1e-12 else 0
            self._pivot(leave, q, alpha, leave_to)
            self.iters += 1

    def _ratio(self, delta, phase):
        tol = self.tol
        bas = np.asarray(self.basic, dtype=int)
        xv, lo, hi = self.x[bas], self.lo[bas], self.hi[bas]
        ok = np.abs(delta) >= self.piv_tol
        pos, neg = ok & (delta > 0), ok & (delta < 0)
        below = (xv < lo - tol) if phase == 1 else np.zeros(len(bas), bool)
        above = (xv > hi + tol) if phase == 1 else np.zeros(len(bas), bool)
        # increasing basics stop at hi, or at lo when currently below it
        bound = np.full(len(bas), np.nan)
        to = np.full(len(bas), _AT_LO)
        up_lo = pos & below
        up_hi = pos & ~below & ~above & (hi < INF)
        dn_hi = neg & above
        dn_lo = neg & ~above & ~below & (lo > -INF)
        bound[up_lo], to[up_lo] = lo[up_lo], _AT_LO
        bound[up_hi], to[up_hi] = hi[up_hi], _AT_HI
        bound[dn_hi], to[dn_hi] = hi[dn_hi], _AT_HI
        bound[dn_lo], to[dn_lo] = lo[dn_lo], _AT_LO
        cand = up_lo | up_hi | dn_hi | dn_lo
        if not cand.any():
            return np.inf, -1, _AT_LO
        t = np.full(len(bas), np.inf)
        t[cand] = np.maximum((bound[cand] - xv[cand]) * np.sign(delta[cand]), 0.0) / np.abs(delta[cand])
        best = t.min()
        ties = np.flatnonzero(t <= best + 1e-12)
        if self.degenerate >= BLAND_AFTER:
            i = int(ties[np.argmin(bas[ties])])
        else:
            i = int(ties[np.argmax(np.abs(delta[ties]))])
        return float(t[i]), i, int(to[i])

    def _move(self, q, direction, step, delta):
        self.x[q] += direction * step
        if self.m:
            self.x[self.basic] += step * delta

    def _pivot(self, r, q, alpha, leave_to):
        j_out = self.basic[r]
        self.status[j_out] = leave_to
        self.x[j_out] = self.lo[j_out] if leave_to == _AT_LO else self.hi[j_out]
        if self.lo[j_out] <= -INF and self.hi[j_out] >= INF:
            self.status[j_out] = _FREE
        self.basic[r] = q
        self.status[q] = _BASIC
        # product-form update of the inverse
        piv = alpha[r]
        row = self.Binv[r, :] / piv
        self.Binv -= np.outer(alpha, row)
        self.Binv[r, :] = row
        self._since_refactor += 1
        self._compute_basics()


def solve(p: LpProblem, warm: Optional[Basis] = None, tol: float = 1e-9,
          max_iter: Optional[int] = None) -> LpResult:
    """Solve an LP; see module docstring for the form."""
    if np.any(p.col_lo > p.col_hi) or np.any(p.row_lo > p.row_hi):
        return LpResult(INFEASIBLE, ray=None)
    m, n = p.nrows, p.ncols
    if max_iter is None:
        max_iter = 10 * (m + n) ** 2 + 100
    s = _Simplex(p, tol, warm)
    status = s.run(max_iter)
    res = LpResult(status, iterations=s.iters)
    if status == OPTIMAL:
        s._refactor()
        x = s.x[:n].copy()
        cb = s.cost[s.basic]
        y = cb @ s.Binv if m else np.zeros(0)
        res.x = x
        res.obj = float(p.c @ x)
        res.duals = y.copy()
        res.redcost = p.c - (y @ p.A if m else np.zeros(n))
        res.activity = p.A @ x if m else np.zeros(0)
        res.basis = Basis(list(s.basic), [int(v) for v in s.status], n)
    elif status == INFEASIBLE:
        res.ray = getattr(s, "farkas", None)
    elif status == UNBOUNDED:
        res.ray = getattr(s, "ray", None)
        res.x = s.x[:n].copy()
    return res
