"""Problem container: variables, two-sided constraints, vbound relations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List

from .expr import DomainError, Expr, VarRef, VarType, evaluate
from .interval import INF, Interval


@dataclass
class Constraint:
    """lhs <= expr <= rhs (either side may be infinite)."""

    name: str
    expr: Expr
    lhs: float = -INF
    rhs: float = INF

    def violation(self, point, feastol: float = 1e-6) -> float:
        """Absolute violation at point; inf if the expression is undefined there."""
        try:
            v = evaluate(self.expr, point, feastol)
        except (DomainError, ZeroDivisionError, OverflowError):
            return math.inf
        if not math.isfinite(v):
            return math.inf
        viol = 0.0
        if self.lhs > -INF:
            viol = max(viol, self.lhs - v)
        if self.rhs < INF:
            viol = max(viol, v - self.rhs)
        return viol


@dataclass
class VBound:
    """Variable-bound relation y >= coef*x + const (vlb) or y <= coef*x + const (vub)."""

    kind: str
    y: int
    x: int
    coef: float
    const: float


@dataclass
class Problem:
    vars: List[VarRef] = field(default_factory=list)
    constraints: List[Constraint] = field(default_factory=list)
    sense: str = "minimize"
    vbounds: List[VBound] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.vars)

    def index_of(self, name: str) -> int:
        for v in self.vars:
            if v.name == name:
                return v.index
        raise KeyError(name)

    def names(self) -> Dict[int, str]:
        return {v.index: v.name for v in self.vars}

    def add_var(self, name: str, vartype: VarType = VarType.CONTINUOUS,
                lo: float = -INF, hi: float = INF, obj: float = 0.0) -> VarRef:
        if vartype is VarType.BINARY:
            lo, hi = max(lo, 0.0), min(hi, 1.0)
        v = VarRef(len(self.vars), name, vartype, Interval.make(lo, hi), obj)
        self.vars.append(v)
        return v

    def objective_value(self, point) -> float:
        return sum(v.objective * float(point[v.index]) for v in self.vars)

    def max_violation(self, point, feastol: float = 1e-6, check_integrality: bool = True,
                      check_bounds: bool = True) -> float:
        """Largest violation of constraints, bounds and integrality at point."""
        viol = 0.0
        for v in self.vars:
            x = float(point[v.index])
            if check_bounds:
                if v.bounds.lo > -INF:
                    viol = max(viol, v.bounds.lo - x)
                if v.bounds.hi < INF:
                    viol = max(viol, x - v.bounds.hi)
            if check_integrality and v.is_integral:
                viol = max(viol, abs(x - round(x)))
        for c in self.constraints:
            viol = max(viol, c.violation(point, feastol))
        for vb in self.vbounds:
            y, x = float(point[vb.y]), float(point[vb.x])
            rhs = vb.coef * x + vb.const
            viol = max(viol, rhs - y if vb.kind == "vlb" else y - rhs)
        return viol

    def is_feasible(self, point, feastol: float = 1e-6) -> bool:
        return self.max_violation(point, feastol) <= feastol
