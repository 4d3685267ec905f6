"""Feasibility-based bound tightening over the propagation formulation.

A forward pass computes an activity for every node from (slightly relaxed)
variable bounds.  Constraints whose activity is not contained in their sides
seed a breadth-first backward pass.  Backward results for inner nodes are kept
in a store of their own and are never fed into the forward pass; variable
tightenings are only accepted when they are worth it (fixing, at least 5% of
the domain, or reaching zero).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

from . import expr as E
from .expr import Expr
from .extform import PROP, ExtForm
from .interval import INF, Interval

SIDE_RELAX = 1e-9
CROSS_TOL = 1e-9
MIN_IMPROVE = 0.05
MAX_ROUNDS = 10


def relax_bound(b: float, width: float, lower: bool) -> float:
    """Relax one finite bound of a continuous variable outward."""
    if abs(b) >= INF:
        return b
    delta = 1e-9 * max(1.0, abs(b))
    if math.isfinite(width) and width < INF:
        delta = min(delta, 1e-3 * width)
    if lower:
        r = b - delta
        nxt = math.ceil(b) - 1.0 if float(b).is_integer() else math.floor(b)
        return max(r, nxt)
    r = b + delta
    nxt = math.floor(b) + 1.0 if float(b).is_integer() else math.ceil(b)
    return min(r, nxt)


def relax_input_bounds(bounds: Sequence[Interval], integral: Sequence[bool]) -> List[Interval]:
    out = []
    for b, isint in zip(bounds, integral):
        if isint or b.is_empty:
            out.append(b)
            continue
        w = b.hi - b.lo
        out.append(Interval(relax_bound(b.lo, w, True), relax_bound(b.hi, w, False)))
    return out


@dataclass
class PropResult:
    status: str  # "ok" | "infeasible"
    bounds: List[Interval]
    tightenings: int = 0
    rounds: int = 0
    redundant: List[int] = field(default_factory=list)
    changed: Set[int] = field(default_factory=set)

    @property
    def infeasible(self) -> bool:
        return self.status == "infeasible"


class _Infeasible(Exception):
    pass


class Propagator:
    """FBBT engine bound to one extended formulation."""

    def __init__(self, ef: ExtForm, feastol: float = 1e-6, min_improve: float = MIN_IMPROVE,
                 max_rounds: int = MAX_ROUNDS):
        self.ef = ef
        self.feastol = feastol
        self.min_improve = min_improve
        self.max_rounds = max_rounds
        self.n = ef.n
        # linear rows become sums over fresh var nodes
        self.lin_roots: List[Tuple[Expr, float, float]] = []
        for r in ef.linear:
            if not r.coefs:
                continue
            cols = sorted(r.coefs)
            e = E.sum_([E.var(j) for j in cols], [r.coefs[j] for j in cols])
            self.lin_roots.append((e, r.lhs, r.rhs))
        self.roots: List[Tuple[Expr, float, float, Optional[int]]] = []
        for ec in ef.cons:
            if ec.aux is None:
                self.roots.append((ec.root, ec.lhs, ec.rhs, ec.id))
        for e, lo, hi in self.lin_roots:
            self.roots.append((e, lo, hi, None))
        self.order = E.topo_order([r[0] for r in self.roots] + list(ef.aux_nodes))
        self.claimed: Dict[int, tuple] = {}
        for ec in ef.cons:
            cl = ec.claim_for(PROP)
            if cl is not None and cl.handler.name != "default":
                self.claimed[id(ec.root)] = (ec, cl)
        self.integral: Dict[int, bool] = {}
        for node in self.order:
            if node.kind == "var":
                self.integral[id(node)] = ef.col_integral(node.index)
            elif node.kind == "val":
                self.integral[id(node)] = False
            else:
                self.integral[id(node)] = E.node_integrality(
                    node, [self.integral[id(c)] for c in node.children])

    # -- helpers ------------------------------------------------------------
    @staticmethod
    def _round_inward(a: Interval) -> Interval:
        if a.is_empty:
            return a
        lo = a.lo if a.lo <= -INF else math.ceil(a.lo - 1e-6)
        hi = a.hi if a.hi >= INF else math.floor(a.hi + 1e-6)
        return Interval.make(lo, hi)

    def forward(self, var_bounds: Sequence[Interval]) -> Dict[int, Interval]:
        """Activities of all nodes from the given variable bounds."""
        fwd: Dict[int, Interval] = {}
        for node in self.order:
            if node.kind == "var":
                a = var_bounds[node.index]
            elif node.kind == "val":
                a = Interval.point(node.const)
            else:
                a = E.node_interval(node, [fwd[id(c)] for c in node.children])
                cl = self.claimed.get(id(node))
                if cl is not None:
                    ec, claim = cl
                    a = a.intersect(claim.handler.inteval(ec, claim, lambda c: fwd[id(c)]))
                if self.integral[id(node)]:
                    a = self._round_inward(a)
            fwd[id(node)] = a
            node.activity = a
        return fwd

    def _accept_var(self, old: Interval, lo: float, hi: float, isint: bool
                    ) -> Tuple[Interval, bool]:
        """Apply the tightening rules; returns (new bounds, changed)."""
        if isint:
            lo = lo if lo <= -INF else math.ceil(lo - self.feastol)
            hi = hi if hi >= INF else math.floor(hi + self.feastol)
        nlo, nhi = old.lo, old.hi
        # bounds crossing the old domain by a hair fix the variable instead
        if lo > old.hi:
            if lo <= old.hi + CROSS_TOL * max(1.0, abs(old.hi)):
                return Interval(old.hi, old.hi), old.lo != old.hi
            raise _Infeasible
        if hi < old.lo:
            if hi >= old.lo - CROSS_TOL * max(1.0, abs(old.lo)):
                return Interval(old.lo, old.lo), old.lo != old.hi
            raise _Infeasible
        width = old.hi - old.lo
        changed = False
        if lo > old.lo and self._worth(old.lo, lo, width, old, True, hi):
            nlo, changed = lo, True
        if hi < old.hi and self._worth(old.hi, hi, width, old, False, lo):
            nhi, changed = hi, True
        if nlo > nhi:
            if nlo - nhi <= CROSS_TOL * max(1.0, abs(nhi)):
                m = nhi if nlo == old.lo else nlo
                return Interval(m, m), True
            raise _Infeasible
        return Interval(nlo, nhi), changed

    def _worth(self, oldb: float, newb: float, width: float, old: Interval, lower: bool,
               other: float) -> bool:
        if abs(oldb) >= INF:
            return True
        # fixes the variable
        if lower and newb >= min(old.hi, other) - 1e-9:
            return True
        if not lower and newb <= max(old.lo, other) + 1e-9:
            return True
        # reaches or passes zero
        if lower and oldb < 0 <= newb:
            return True
        if not lower and oldb > 0 >= newb:
            return True
        ref = width if width < INF else max(1.0, abs(oldb))
        return abs(newb - oldb) >= self.min_improve * ref

    # -- main entry points --------------------------------------------------
    def fbbt(self, bounds: Sequence[Interval], mode: str = "node", init: bool = False
             ) -> PropResult:
        """Run propagation on column bounds; mode is "node" or "redundancy"."""
        ef = self.ef
        bounds = list(bounds)
        if mode == "redundancy":
            return self._redundancy(bounds)
        n = self.n
        vb = bounds[:n]
        integral = [ef.col_integral(j) for j in range(n)]
        bwd: Dict[int, Interval] = {}
        for node in ef.aux_nodes:
            b = bounds[node.aux]
            if not (b.lo <= -INF and b.hi >= INF):
                bwd[id(node)] = b
        res = PropResult("ok", bounds)
        try:
            for rnd in range(self.max_rounds):
                res.rounds = rnd + 1
                fwd = self.forward(relax_input_bounds(vb, integral))
                changed = self._backward(fwd, bwd, vb, integral, init and rnd == 0, res)
                if not changed:
                    break
            fwd = self.forward(relax_input_bounds(vb, integral))
            for root, lo, hi, _ in self.roots:
                a = fwd[id(root)]
                if a.is_empty or a.lo > hi + SIDE_RELAX + self.feastol or a.hi < lo - SIDE_RELAX - self.feastol:
                    raise _Infeasible
        except _Infeasible:
            res.status = "infeasible"
            return res
        out = list(vb)
        for node in ef.aux_nodes:
            a = fwd[id(node)]
            b = bwd.get(id(node))
            if b is not None:
                a = a.intersect(b)
            if a.is_empty:
                res.status = "infeasible"
                return res
            out.append(a)
        out.extend(bounds[n + ef.naux:])
        res.bounds = out
        return res

    def _backward(self, fwd, bwd, vb, integral, init, res) -> bool:
        """One breadth-first backward pass; returns True if a variable changed."""
        def cur(node: Expr) -> Interval:
            if node.kind == "var":
                return vb[node.index]
            a = fwd[id(node)]
            b = bwd.get(id(node))
            return a if b is None else a.intersect(b)

        queue = deque()
        queued: Set[int] = set()
        targets: Dict[int, Interval] = {}
        for root, lo, hi, _ in self.roots:
            sides = Interval(lo - SIDE_RELAX if lo > -INF else -INF,
                             hi + SIDE_RELAX if hi < INF else INF)
            a = fwd[id(root)]
            t = a.intersect(sides)
            if t.is_empty:
                raise _Infeasible
            if init or not sides.contains_interval(a):
                if root.kind == "var":
                    continue
                prev = targets.get(id(root))
                targets[id(root)] = t if prev is None else prev.intersect(t)
                if id(root) not in queued:
                    queue.append(root)
                    queued.add(id(root))
        if init:
            for node in self.ef.aux_nodes:
                if id(node) not in queued:
                    queue.append(node)
                    queued.add(id(node))
        var_changed = False
        while queue:
            node = queue.popleft()
            queued.discard(id(node))
            t = cur(node)
            extra = targets.pop(id(node), None)
            if extra is not None:
                t = t.intersect(extra)
            if t.is_empty:
                raise _Infeasible
            cl = self.claimed.get(id(node))
            if cl is not None:
                ec, claim = cl
                pairs = claim.handler.reverseprop(ec, claim, t, cur)
                if pairs is None:
                    raise _Infeasible
            else:
                pairs = list(zip(node.children, E.node_reverse(node, t, [cur(c) for c in node.children])))
            for c, enc in pairs:
                if c.kind == "val":
                    if not enc.contains(c.const, 1e-9):
                        raise _Infeasible
                    continue
                if c.kind == "var":
                    j = c.index
                    old = vb[j]
                    new, ch = self._accept_var(old, enc.lo, enc.hi, integral[j])
                    if ch:
                        vb[j] = new
                        res.tightenings += 1
                        res.changed.add(j)
                        var_changed = True
                    continue
                old = cur(c)
                new = old.intersect(enc)
                if self.integral.get(id(c)):
                    new = self._round_inward(new)
                if new.is_empty:
                    if not enc.is_empty and (enc.lo - old.hi <= CROSS_TOL * max(1.0, abs(old.hi))
                                             and old.lo - enc.hi <= CROSS_TOL * max(1.0, abs(old.lo))):
                        new = Interval.point(old.hi if enc.lo > old.hi else old.lo)
                    else:
                        raise _Infeasible
                if new.lo > old.lo or new.hi < old.hi:
                    bwd[id(c)] = new
                    if c.children and id(c) not in queued:
                        queue.append(c)
                        queued.add(id(c))
        return var_changed

    def _redundancy(self, bounds: List[Interval]) -> PropResult:
        tol = self.feastol
        vb = []
        for j in range(self.n):
            b = bounds[j]
            if b.lo == b.hi:
                vb.append(b)
            else:
                vb.append(Interval(b.lo - tol if b.lo > -INF else -INF,
                                   b.hi + tol if b.hi < INF else INF))
        fwd = self.forward(vb)
        res = PropResult("ok", bounds)
        for k, (root, lo, hi, ecid) in enumerate(self.roots):
            a = fwd[id(root)]
            slo = lo - tol if lo > -INF else -INF
            shi = hi + tol if hi < INF else INF
            if a.is_empty or a.lo > shi or a.hi < slo:
                res.status = "infeasible"
                return res
            if slo <= a.lo and a.hi <= shi:
                res.redundant.append(k)
        return res


def fbbt(ef: ExtForm, bounds: Optional[Sequence[Interval]] = None, mode: str = "node",
         feastol: float = 1e-6) -> PropResult:
    p = Propagator(ef, feastol)
    if bounds is None:
        bounds = ef.initial_bounds()
    return p.fbbt(bounds, mode)


def initsolve_propagate(ef: ExtForm, bounds: Optional[Sequence[Interval]] = None,
                        feastol: float = 1e-6) -> PropResult:
    """Backward propagation on every function of the propagation formulation,
    storing implied bounds on the auxiliary variables."""
    p = Propagator(ef, feastol)
    if bounds is None:
        bounds = ef.initial_bounds()
    return p.fbbt(bounds, "node", init=True)
