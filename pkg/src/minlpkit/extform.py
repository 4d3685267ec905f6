"""Extended formulations: locks, the DETECT loop and the default handler.

Every nonlinear constraint lhs <= g(x) <= rhs becomes an extended constraint
whose root is g.  Handlers inspect the root and may ask for auxiliary
variables on subexpressions; each such subexpression becomes an extended
constraint h(x, w') ~ w of its own.  One auxiliary variable is kept per
node, so the propagation and the relaxation formulations share them.

A handler works on the *view* of a root: a copy of the expression where
every descendant that carries an auxiliary variable is replaced by a var
node indexed by its column.  Columns are laid out as original variables
(0..n-1), auxiliary variables (n..n+naux-1), then extra relaxation-only
variables requested by handlers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Set, Tuple

from . import expr as E
from . import estimators as est
from .expr import Expr, Mono
from .interval import ENTIRE, INF, Interval

PROP, UNDER, OVER = "prop", "under", "over"
ROLES = (PROP, UNDER, OVER)


# ---------------------------------------------------------------------------
# locks
# ---------------------------------------------------------------------------

@dataclass
class LockCount:
    down: int = 0
    up: int = 0


class Locks:
    """Expression and variable lock bookkeeping.

    The monotonicity used when a node is locked for the first time is stored
    and reused while it stays locked, so unlocking subtracts exactly what
    locking added even if bounds changed in between.
    """

    def __init__(self):
        self.vars: Dict[int, LockCount] = {}
        self._mono: Dict[int, List[Mono]] = {}

    def var(self, index: int) -> LockCount:
        return self.vars.setdefault(index, LockCount())

    def _child_mono(self, e: Expr) -> List[Mono]:
        m = self._mono.get(id(e))
        if m is None:
            m = [E.monotonicity(e, i) for i in range(len(e.children))]
            self._mono[id(e)] = m
        return m

    def _apply(self, e: Expr, down: int, up: int, sign: int):
        if down == 0 and up == 0:
            return
        if e.kind == "val":
            return
        if e.kind == "var":
            lc = self.var(e.index)
            lc.down += sign * down
            lc.up += sign * up
            e.locks_down += sign * down
            e.locks_up += sign * up
            return
        monos = self._child_mono(e)
        e.locks_down += sign * down
        e.locks_up += sign * up
        for c, m in zip(e.children, monos):
            if m is Mono.INC:
                self._apply(c, down, up, sign)
            elif m is Mono.DEC:
                self._apply(c, up, down, sign)
            elif m is Mono.CONST:
                continue
            else:
                self._apply(c, down + up, down + up, sign)
        if sign < 0 and e.locks_down == 0 and e.locks_up == 0:
            self._mono.pop(id(e), None)

    def lock(self, root: Expr, lhs_finite: bool, rhs_finite: bool):
        self._apply(root, int(lhs_finite), int(rhs_finite), +1)

    def unlock(self, root: Expr, lhs_finite: bool, rhs_finite: bool):
        self._apply(root, int(lhs_finite), int(rhs_finite), -1)


def propagate_locks(root: Expr, lhs_finite: bool, rhs_finite: bool,
                    bounds=None, locks: Optional[Locks] = None) -> Locks:
    """Add the locks of lhs <= root <= rhs; returns the lock table used.

    If ``bounds`` is given, activities are refreshed first so monotonicity
    reflects them.
    """
    if bounds is not None:
        E.interval_eval(root, bounds)
    locks = locks or Locks()
    locks.lock(root, lhs_finite, rhs_finite)
    return locks


def sense_for_aux(locks: LockCount) -> str:
    """Sense of h ~ w for an auxiliary variable given the locks of h."""
    if locks.down > 0 and locks.up > 0:
        return "="
    if locks.down == 0 and locks.up > 0:
        return "<="
    if locks.up == 0 and locks.down > 0:
        return ">="
    return "="


# ---------------------------------------------------------------------------
# extended constraints and handlers
# ---------------------------------------------------------------------------

@dataclass
class Estimate:
    """Affine function const + sum coefs[col] * x[col] bounding a view."""

    coefs: Dict[int, float]
    const: float
    local: bool = True
    tight: bool = False
    branch_cols: List[int] = field(default_factory=list)

    def value(self, x: Sequence[float]) -> float:
        return self.const + math.fsum(a * float(x[j]) for j, a in self.coefs.items())


@dataclass
class Claim:
    handler: "Handler"
    roles: Set[str]
    aux_requests: List[Expr] = field(default_factory=list)
    data: Any = None


@dataclass
class ExtConstraint:
    id: int
    root: Expr
    aux: Optional[int]
    lhs: float = -INF
    rhs: float = INF
    sense: str = "="
    cons_index: Optional[int] = None
    claims: List[Claim] = field(default_factory=list)
    view: Optional[Expr] = None
    view_map: Dict[int, Expr] = field(default_factory=dict)

    @property
    def origin(self) -> str:
        return "original" if self.aux is None else "auxiliary"

    @property
    def needs_under(self) -> bool:
        if self.aux is None:
            return self.rhs < INF
        return self.sense in ("<=", "=")

    @property
    def needs_over(self) -> bool:
        if self.aux is None:
            return self.lhs > -INF
        return self.sense in (">=", "=")

    def required_roles(self) -> Set[str]:
        r = {PROP}
        if self.needs_under:
            r.add(UNDER)
        if self.needs_over:
            r.add(OVER)
        return r

    def claim_for(self, role: str) -> Optional[Claim]:
        for c in self.claims:
            if role in c.roles:
                return c
        return None

    def handler_names(self) -> Dict[str, str]:
        out = {}
        for role in ROLES:
            c = self.claim_for(role)
            if c is not None:
                out[role] = c.handler.name
        return out


class Handler:
    """Base class of nonlinear handlers; see module docstring for views."""

    name = "base"

    def detect(self, ec: ExtConstraint, ef: "ExtForm", roles: Set[str]) -> Optional[Claim]:
        return None

    def finalize(self, ec: ExtConstraint, claim: Claim, ef: "ExtForm") -> None:
        pass

    def inteval(self, ec: ExtConstraint, claim: Claim, cur: Callable[[Expr], Interval]) -> Interval:
        """Enclosure of the root given enclosures of the view leaves."""
        return ENTIRE

    def reverseprop(self, ec: ExtConstraint, claim: Claim, target: Interval,
                    cur: Callable[[Expr], Interval]) -> Optional[List[Tuple[Expr, Interval]]]:
        """Enclosures for original nodes implied by root in target (None: infeasible)."""
        return []

    def estimate(self, ec: ExtConstraint, claim: Claim, ef: "ExtForm", x: Sequence[float],
                 bounds: Sequence[Interval], sense: str) -> List[Estimate]:
        return []

    def separate(self, ec: ExtConstraint, claim: Claim, ef: "ExtForm", x: Sequence[float],
                 bounds: Sequence[Interval], sense: str, strong: bool = True) -> Optional[list]:
        """Cuts for handlers that do not go through estimators; None means use estimate."""
        return None

    def initial_rows(self, ec: ExtConstraint, claim: Claim, ef: "ExtForm",
                     bounds: Sequence[Interval], sense: str) -> Optional[list]:
        """Initial cuts for handlers that separate directly; None means use estimates."""
        return None

    def initial_estimates(self, ec: ExtConstraint, claim: Claim, ef: "ExtForm",
                          bounds: Sequence[Interval], sense: str) -> List[Estimate]:
        leaves = ef.view_leaf_cols(ec)
        pts = est.initial_points([bounds[j] for j in leaves])
        out = []
        for p in pts:
            x = ef.point_from(leaves, p, bounds)
            out.extend(self.estimate(ec, claim, ef, x, bounds, sense))
        return out


class DefaultHandler(Handler):
    """Myopic fallback: auxiliary variables for all children, operator callbacks."""

    name = "default"

    def detect(self, ec, ef, roles):
        # propagation works on activities of subexpressions; only estimation
        # needs the children as columns
        req = []
        if roles & {UNDER, OVER}:
            req = [c for c in ec.root.children if c.kind not in ("var", "val")]
        return Claim(self, set(roles), req)

    def inteval(self, ec, claim, cur):
        return E.node_interval(ec.root, [cur(c) for c in ec.root.children])

    def reverseprop(self, ec, claim, target, cur):
        root = ec.root
        new = E.node_reverse(root, target, [cur(c) for c in root.children])
        return list(zip(root.children, new))

    def estimate(self, ec, claim, ef, x, bounds, sense):
        root = ec.root
        ch = root.children
        cb, cr, ci, cols = [], [], [], []
        for c in ch:
            if c.kind == "val":
                cb.append(Interval.point(c.const))
                cr.append(c.const)
                ci.append(float(c.const).is_integer())
                cols.append(None)
            else:
                j = ef.col_of(c)
                b = bounds[j]
                cb.append(b)
                cr.append(min(max(float(x[j]), b.lo), b.hi))
                ci.append(ef.col_integral(j))
                cols.append(j)
        le = est.estimate(root, cb, cr, sense, ci)
        if le is None:
            # no finite estimator: branching on the children may help
            return [Estimate({}, math.nan, True, False,
                             [j for j in cols if j is not None and bounds[j].width > 0])]
        coefs: Dict[int, float] = {}
        const = le.const
        for a, c, j in zip(le.coefs, ch, cols):
            if j is None:
                const += a * c.const
            elif a != 0.0:
                coefs[j] = coefs.get(j, 0.0) + a
        branch = [] if le.tangent or root.kind == "sum" else [
            j for j in cols if j is not None and bounds[j].width > 0]
        return [Estimate(coefs, const, le.local, le.tangent, branch)]


# ---------------------------------------------------------------------------
# linear detection
# ---------------------------------------------------------------------------

def linear_form(e: Expr) -> Optional[Tuple[Dict[int, float], float]]:
    """(coefs, const) if e is affine in variables, else None."""
    if e.kind == "val":
        return {}, e.const
    if e.kind == "var":
        return {e.index: 1.0}, 0.0
    if e.kind == "sum":
        coefs: Dict[int, float] = {}
        const = e.const
        for a, c in zip(e.coefs, e.children):
            if c.kind == "var":
                coefs[c.index] = coefs.get(c.index, 0.0) + a
            elif c.kind == "val":
                const += a * c.const
            else:
                sub = linear_form(c)
                if sub is None:
                    return None
                for j, v in sub[0].items():
                    coefs[j] = coefs.get(j, 0.0) + a * v
                const += a * sub[1]
        return coefs, const
    if e.kind == "prod" and len(e.children) == 1:
        sub = linear_form(e.children[0])
        if sub is None:
            return None
        return {j: e.const * v for j, v in sub[0].items()}, e.const * sub[1]
    return None


@dataclass
class LinearRow:
    name: str
    coefs: Dict[int, float]
    lhs: float
    rhs: float


# ---------------------------------------------------------------------------
# the extended formulation
# ---------------------------------------------------------------------------

def default_handlers() -> List[Handler]:
    from .nls import SocHandler
    from .nlq import QuadraticHandler
    from .nlc import ConvexityHandler
    from .nlr import QuotientHandler
    return [SocHandler(), QuadraticHandler(), ConvexityHandler(), QuotientHandler(),
            DefaultHandler()]


class ExtForm:
    """Both extended formulations of a problem."""

    def __init__(self, problem, handlers: Optional[List[Handler]] = None):
        self.problem = problem
        self.n = problem.n
        self.handlers = handlers if handlers is not None else default_handlers()
        self.cons: List[ExtConstraint] = []
        self.linear: List[LinearRow] = []
        self.aux_nodes: List[Expr] = []
        self.extra_bounds: List[Interval] = []
        self.extra_names: List[str] = []
        self.locks = Locks()
        self._var_bounds = [v.bounds for v in problem.vars]
        self._integral = [v.is_integral for v in problem.vars]
        self._aux_integral: List[bool] = []
        self._orders: Dict[int, tuple] = {}

    # -- columns ------------------------------------------------------------
    @property
    def naux(self) -> int:
        return len(self.aux_nodes)

    @property
    def ncols(self) -> int:
        return self.n + self.naux + len(self.extra_bounds)

    def col_of(self, node: Expr) -> int:
        if node.kind == "var":
            return node.index
        if node.aux is None:
            raise KeyError("node has no auxiliary variable")
        return node.aux

    def col_integral(self, j: int) -> bool:
        if j < self.n:
            return self._integral[j]
        k = j - self.n
        if k < len(self._aux_integral):
            return self._aux_integral[k]
        return False

    def col_name(self, j: int) -> str:
        if j < self.n:
            return self.problem.vars[j].name
        k = j - self.n
        if k < self.naux:
            return f"w{k + 1}"
        return self.extra_names[k - self.naux]

    def col_names(self) -> Dict[int, str]:
        return {j: self.col_name(j) for j in range(self.ncols)}

    def add_extra(self, name: str, bounds: Interval) -> int:
        self.extra_bounds.append(bounds)
        self.extra_names.append(name)
        return self.ncols - 1

    def initial_bounds(self, var_bounds: Optional[Sequence[Interval]] = None) -> List[Interval]:
        """Column bounds: variable bounds, aux activities, extra bounds."""
        vb = list(var_bounds) if var_bounds is not None else list(self._var_bounds)
        out = vb + [n.activity for n in self.aux_nodes] + list(self.extra_bounds)
        return out

    def node_bounds(self, node: Expr) -> Interval:
        if node.kind == "var":
            return self._var_bounds[node.index]
        if node.kind == "val":
            return Interval.point(node.const)
        return node.activity

    # -- views --------------------------------------------------------------
    def _build_view(self, ec: ExtConstraint):
        root = ec.root
        memo: Dict[int, Expr] = {}
        vmap: Dict[int, Expr] = {}

        def rec(n: Expr) -> Expr:
            got = memo.get(id(n))
            if got is not None:
                return got
            if n is not root and n.aux is not None:
                v = E.var(n.aux, self.col_name(n.aux) if n.aux < self.n + self.naux else "")
            elif n.kind == "var":
                v = E.var(n.index, n.name)
            elif n.kind == "val":
                v = E.val(n.const)
            else:
                kids = [rec(c) for c in n.children]
                v = Expr(n.kind, kids, n.const, n.coefs)
            memo[id(n)] = v
            vmap[id(v)] = n
            return v

        ec.view = rec(root)
        ec.view_map = vmap

    def view(self, ec: ExtConstraint) -> Expr:
        if ec.view is None:
            self._build_view(ec)
        return ec.view

    def original_of(self, ec: ExtConstraint, view_node: Expr) -> Expr:
        return ec.view_map[id(view_node)]

    def view_leaf_cols(self, ec: ExtConstraint) -> List[int]:
        return E.variables(self.view(ec))

    def view_bounds(self, ec: ExtConstraint) -> Dict[int, Interval]:
        out = {}
        for j in self.view_leaf_cols(ec):
            out[j] = self.col_bounds_now(j)
        return out

    def col_bounds_now(self, j: int) -> Interval:
        if j < self.n:
            return self._var_bounds[j]
        k = j - self.n
        if k < self.naux:
            return self.aux_nodes[k].activity
        return self.extra_bounds[k - self.naux]

    def point_from(self, cols: Sequence[int], vals: Sequence[float],
                   bounds: Sequence[Interval]) -> List[float]:
        x = [b.mid if b.is_bounded else 0.0 for b in bounds]
        for j, v in zip(cols, vals):
            x[j] = v
        return x

    def eval_view(self, ec: ExtConstraint, x: Sequence[float], feastol: float = 1e-6) -> float:
        v = self.view(ec)
        order = self._orders.get(ec.id)
        if order is None or order[0] is not v:
            order = (v, E.topo_order([v]))
            self._orders[ec.id] = order
        return E.evaluate(v, x, feastol, order=order[1])

    def aux_value(self, ec: ExtConstraint, x: Sequence[float]) -> Optional[float]:
        return None if ec.aux is None else float(x[ec.aux])

    def violation(self, ec: ExtConstraint, x: Sequence[float], feastol: float = 1e-6
                  ) -> Tuple[float, float]:
        """(violation of h <= w side, violation of h >= w side) at x."""
        try:
            h = self.eval_view(ec, x, feastol)
        except (E.DomainError, ZeroDivisionError, OverflowError, ValueError):
            return math.inf, math.inf
        if not math.isfinite(h):
            return math.inf, math.inf
        if ec.aux is None:
            under = max(0.0, h - ec.rhs) if ec.rhs < INF else 0.0
            over = max(0.0, ec.lhs - h) if ec.lhs > -INF else 0.0
        else:
            w = float(x[ec.aux])
            under = max(0.0, h - w) if ec.needs_under else 0.0
            over = max(0.0, w - h) if ec.needs_over else 0.0
        return under, over

    # -- construction -------------------------------------------------------
    def build(self) -> "ExtForm":
        prob = self.problem
        vb = {v.index: v.bounds for v in prob.vars}
        roots = []
        for ci, c in enumerate(prob.constraints):
            lf = linear_form(c.expr)
            if lf is not None:
                coefs, const = lf
                self.linear.append(LinearRow(c.name, coefs, c.lhs - const if c.lhs > -INF else -INF,
                                             c.rhs - const if c.rhs < INF else INF))
                continue
            roots.append((ci, c))
        for vb_ in prob.vbounds:
            # vlb: y - coef*x >= const, vub: y - coef*x <= const
            coefs = {vb_.y: 1.0}
            coefs[vb_.x] = coefs.get(vb_.x, 0.0) - vb_.coef
            if vb_.kind == "vlb":
                self.linear.append(LinearRow(f"{vb_.kind}_{vb_.y}_{vb_.x}", coefs, vb_.const, INF))
            else:
                self.linear.append(LinearRow(f"{vb_.kind}_{vb_.y}_{vb_.x}", coefs, -INF, vb_.const))
        # activities and locks
        for ci, c in roots:
            E.interval_eval(c.expr, vb)
        for ci, c in roots:
            self.locks.lock(c.expr, c.lhs > -INF, c.rhs < INF)
        for c in prob.constraints:
            lf = linear_form(c.expr)
            if lf is not None:
                for j, a in lf[0].items():
                    lc = self.locks.var(j)
                    lo_f, hi_f = c.lhs > -INF, c.rhs < INF
                    if a > 0:
                        lc.down += lo_f
                        lc.up += hi_f
                    elif a < 0:
                        lc.down += hi_f
                        lc.up += lo_f
        self._roots = roots
        # fixpoint: rerun detection until no handler requests a new aux variable
        aux_set: List[Expr] = []
        for _ in range(50):
            before = len(aux_set)
            self._detect_pass(aux_set)
            if len(aux_set) == before:
                break
        self._renumber(aux_set)
        self._detect_pass(aux_set)
        for ec in self.cons:
            for cl in ec.claims:
                cl.handler.finalize(ec, cl, self)
        return self

    def _renumber(self, aux_set: List[Expr]):
        # parents before children so users of an aux variable have smaller ids
        order = E.topo_order([c.expr for _, c in self._roots])
        rank = {id(n): i for i, n in enumerate(reversed(order))}
        aux_set.sort(key=lambda n: rank.get(id(n), 0))
        self.aux_nodes = list(aux_set)
        for k, node in enumerate(self.aux_nodes):
            node.aux = self.n + k
        isint = lambda j: self._integral[j]
        self._aux_integral = [E.integrality(node, isint) for node in self.aux_nodes]

    def _detect_pass(self, aux_set: List[Expr]):
        self.cons = []
        self.extra_bounds, self.extra_names = [], []
        members = {id(n) for n in aux_set}
        self.aux_nodes = aux_set
        pending: List[ExtConstraint] = []
        done: Set[int] = set()

        def ensure(node: Expr):
            if node.kind in ("var", "val"):
                return
            if id(node) not in members:
                members.add(id(node))
                aux_set.append(node)
                node.aux = self.n + len(aux_set) - 1
            if id(node) in done:
                return
            done.add(id(node))
            lc = LockCount(node.locks_down, node.locks_up)
            ec = ExtConstraint(0, node, node.aux, sense=sense_for_aux(lc))
            pending.append(ec)

        def process(ec: ExtConstraint):
            ec.id = len(self.cons)
            self.cons.append(ec)
            self._build_view(ec)
            need = ec.required_roles()
            for h in self.handlers:
                remaining = need - {r for c in ec.claims for r in c.roles}
                if not remaining:
                    break
                cl = h.detect(ec, self, remaining)
                if cl is None:
                    continue
                cl.roles &= remaining
                if not cl.roles:
                    continue
                ec.claims.append(cl)
                for s in cl.aux_requests:
                    ensure(s)
            # depth-first over newly requested subexpressions
            while pending:
                process(pending.pop(0))

        for ci, c in self._roots:
            lhs, rhs = c.lhs, c.rhs
            sense = "=" if lhs > -INF and rhs < INF else ("<=" if rhs < INF else ">=")
            process(ExtConstraint(0, c.expr, None, lhs, rhs, sense, ci))
        # nodes that already carry an aux variable from earlier passes keep one
        for node in list(aux_set):
            if id(node) not in done:
                ensure(node)
        while pending:
            process(pending.pop(0))

    # -- queries -----------------------------------------------------------
    def aux_constraint(self, col: int) -> Optional[ExtConstraint]:
        for ec in self.cons:
            if ec.aux == col:
                return ec
        return None

    def original_vars_of_col(self, col: int) -> List[int]:
        """Original variables an auxiliary column depends on."""
        if col < self.n:
            return [col]
        k = col - self.n
        if k < self.naux:
            return E.variables(self.aux_nodes[k])
        return []

    def dump(self) -> str:
        names = self.col_names()
        lines = []
        for ec in self.cons:
            body = E.to_string(self.view(ec), names)
            tags = " ".join(f"{r}={h}" for r, h in ec.handler_names().items())
            if ec.aux is None:
                lo = "" if ec.lhs <= -INF else f"{E._num(ec.lhs)} <= "
                hi = "" if ec.rhs >= INF else f" <= {E._num(ec.rhs)}"
                lines.append(f"[{ec.id}] original  {lo}{body}{hi}  {tags}")
            else:
                lines.append(f"[{ec.id}] auxiliary {body} {ec.sense} {names[ec.aux]}  {tags}")
        for r in self.linear:
            body = " + ".join(f"{E._num(a)}*{names[j]}" for j, a in sorted(r.coefs.items()))
            lines.append(f"[lin] {r.name}: {E._num(r.lhs)} <= {body} <= {E._num(r.rhs)}")
        return "\n".join(lines)


def build(problem, handlers: Optional[List[Handler]] = None) -> ExtForm:
    return ExtForm(problem, handlers).build()
