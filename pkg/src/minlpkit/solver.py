"""Spatial branch-and-bound driver.

Each node runs domain propagation, then alternates LP solves with
separation.  After the separation loop stalls, fractional integers are
branched on first.  Nonlinear constraints are then enforced in this order:
tighten the LP tolerance, separate strong and then weak cuts, branch on
registered candidates, propagate, branch on any unfixed variable, and
finally cut the node off.  A point only becomes an incumbent after it has
been checked against the original constraints.
"""

from __future__ import annotations

import heapq
import math
import random
import time
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import branch as B
from . import expr as E
from . import lp
from . import mixing
from .extform import OVER, UNDER, ExtConstraint, ExtForm
from .interval import INF, Interval
from .model import Constraint, Problem
from .prop import Propagator
from .sepa import CleanupStats, CutPool, Rejected, RowPrep, cleanup, is_strong
from .simplify import cse, simplify

OPTIMAL, INFEASIBLE, LIMIT = "optimal", "infeasible", "limit"
CHECK_ORIGINAL, CHECK_EXTENDED = "original", "extended"

# outcomes of enforcement
FEASIBLE, CUTS, RESOLVE, TIGHTENED, BRANCHED, CUTOFF = (
    "feasible", "cuts-added", "resolve", "bounds-tightened", "branched", "cutoff")

LP_CLAMP = 1e6
INT_TOL = 1e-6


@dataclass
class SolveOptions:
    feastol: float = 1e-6
    epsilon: float = 1e-9
    gap_rel: float = 1e-4
    gap_abs: float = 1e-6
    time_limit: float = math.inf
    node_limit: Optional[int] = None
    seed: int = 0
    max_sepa_rounds: int = 20
    check_mode: str = CHECK_ORIGINAL
    weights: B.Weights = field(default_factory=B.Weights)
    violsplit: str = B.MIDNESS
    scoreagg: str = B.AGG_SUM
    highscorefactor: float = B.HIGH_SCORE_FACTOR
    presolve: bool = True
    # nodes shallower than this may branch on auxiliary columns (0: never)
    aux_branch_depth: int = 0


@dataclass
class SolveStats:
    nodes: int = 0
    lp_solves: int = 0
    lp_iterations: int = 0
    cuts: Counter = field(default_factory=Counter)
    weak_cuts: int = 0
    tol_tightenings: int = 0
    branchings: int = 0
    integer_branchings: int = 0
    unfixed_branchings: int = 0
    enforce_cutoffs: int = 0
    prop_cutoffs: int = 0
    outcomes: Counter = field(default_factory=Counter)
    detections: Counter = field(default_factory=Counter)
    cleanup: CleanupStats = field(default_factory=CleanupStats)
    presolve: Dict[str, int] = field(default_factory=dict)
    time: float = 0.0

    def as_dict(self) -> dict:
        return {
            "nodes": self.nodes, "lp_solves": self.lp_solves, "lp_iterations": self.lp_iterations,
            "cuts": dict(self.cuts), "weak_cuts": self.weak_cuts,
            "tol_tightenings": self.tol_tightenings, "branchings": self.branchings,
            "integer_branchings": self.integer_branchings,
            "unfixed_branchings": self.unfixed_branchings,
            "enforce_cutoffs": self.enforce_cutoffs, "prop_cutoffs": self.prop_cutoffs,
            "outcomes": dict(self.outcomes), "detections": dict(self.detections),
            "cleanup": {"created": self.cleanup.created, "cleaned": self.cleanup.cleaned,
                        "rejected": dict(self.cleanup.rejected)},
            "presolve": dict(self.presolve), "time": round(self.time, 4),
        }

    def table(self) -> str:
        lines = ["statistics"]
        lines.append(f"  nodes              {self.nodes}")
        lines.append(f"  LP solves          {self.lp_solves} ({self.lp_iterations} iterations)")
        lines.append(f"  branchings         {self.branchings} (integer {self.integer_branchings},"
                     f" unfixed fallback {self.unfixed_branchings})")
        lines.append(f"  weak cuts          {self.weak_cuts}")
        lines.append(f"  tol^lp tightenings {self.tol_tightenings}")
        lines.append(f"  enforce cutoffs    {self.enforce_cutoffs}")
        lines.append(f"  propagation cutoffs {self.prop_cutoffs}")
        lines.append("  detections: " + (", ".join(f"{k}={v}" for k, v in sorted(self.detections.items())) or "none"))
        lines.append("  cuts: " + (", ".join(f"{k}={v}" for k, v in sorted(self.cuts.items())) or "none"))
        lines.append("  " + self.cleanup.row())
        if self.presolve:
            lines.append("  presolve: " + ", ".join(f"{k}={v}" for k, v in sorted(self.presolve.items())))
        lines.append(f"  time               {self.time:.3f}s")
        return "\n".join(lines)


@dataclass
class SolveResult:
    status: str
    primal: float = math.inf
    dual: float = -math.inf
    x: Optional[List[float]] = None
    names: List[str] = field(default_factory=list)
    stats: SolveStats = field(default_factory=SolveStats)
    sense: str = "minimize"

    @property
    def gap(self) -> float:
        if self.x is None or not math.isfinite(self.primal) or not math.isfinite(self.dual):
            return math.inf
        d = abs(self.primal - self.dual)
        if d == 0.0:
            return 0.0
        den = min(abs(self.primal), abs(self.dual))
        return d / den if den > 0 else math.inf

    def solution(self) -> Dict[str, float]:
        return {} if self.x is None else {n: float(v) for n, v in zip(self.names, self.x)}

    def to_json(self) -> dict:
        def num(v):
            return v if math.isfinite(v) else (None if math.isnan(v) else ("inf" if v > 0 else "-inf"))
        return {"status": self.status, "primal": num(self.primal), "dual": num(self.dual),
                "gap": num(self.gap), "solution": self.solution(), "stats": self.stats.as_dict()}


# ---------------------------------------------------------------------------
# presolve
# ---------------------------------------------------------------------------

@dataclass
class PresolveResult:
    problem: Problem
    status: str = "ok"
    info: Dict[str, int] = field(default_factory=dict)


def copy_problem(p: Problem) -> Problem:
    return Problem([replace(v) for v in p.vars],
                   [Constraint(c.name, c.expr, c.lhs, c.rhs) for c in p.constraints],
                   p.sense, list(p.vbounds))


def _sign_normalize(c: Constraint) -> Tuple[Constraint, bool]:
    """Flip a sum with more negative than positive coefficients."""
    e = c.expr
    if e.kind != "sum":
        return c, False
    neg = sum(1 for a in e.coefs if a < 0)
    pos = len(e.coefs) - neg
    if neg <= pos:
        return c, False
    flipped = simplify(E.sum_(list(e.children), [-a for a in e.coefs], -e.const))
    lhs = -c.rhs if c.rhs < INF else -INF
    rhs = -c.lhs if c.lhs > -INF else INF
    return Constraint(c.name, flipped, lhs, rhs), True


def presolve(problem: Problem, feastol: float = 1e-6) -> PresolveResult:
    """Simplify, share subexpressions, normalize signs, merge duplicates, round integer bounds."""
    p = copy_problem(problem)
    info = Counter()
    for v in p.vars:
        if v.is_integral and not v.bounds.is_empty:
            lo = math.ceil(v.bounds.lo - INT_TOL) if v.bounds.lo > -INF else -INF
            hi = math.floor(v.bounds.hi + INT_TOL) if v.bounds.hi < INF else INF
            if lo > hi:
                return PresolveResult(p, INFEASIBLE, dict(info))
            if (lo, hi) != (v.bounds.lo, v.bounds.hi):
                info["int_rounded"] += 1
            v.bounds = Interval(lo, hi)
    cons = []
    for c in p.constraints:
        c = Constraint(c.name, simplify(c.expr), c.lhs, c.rhs)
        c, flipped = _sign_normalize(c)
        info["scaled"] += flipped
        if c.expr.kind == "val":
            v = c.expr.const
            if (c.lhs > -INF and v < c.lhs - feastol) or (c.rhs < INF and v > c.rhs + feastol):
                return PresolveResult(p, INFEASIBLE, dict(info))
            info["constant_dropped"] += 1
            continue
        cons.append(c)
    # merge structurally equal constraints
    merged: Dict[tuple, Constraint] = {}
    order = []
    for c in cons:
        k = c.expr.key()
        m = merged.get(k)
        if m is None:
            merged[k] = c
            order.append(k)
            continue
        info["merged"] += 1
        m.lhs = max(m.lhs, c.lhs)
        m.rhs = min(m.rhs, c.rhs)
        if m.lhs > m.rhs + feastol:
            return PresolveResult(p, INFEASIBLE, dict(info))
    cons = [merged[k] for k in order]
    shared = cse([c.expr for c in cons])
    for c, e in zip(cons, shared):
        c.expr = e
    p.constraints = cons
    # vbound preprocessing can fix binaries
    for s in mixing.collect(p):
        for j, val in s.fixings:
            b = p.vars[j].bounds
            if not b.lo <= val <= b.hi:
                return PresolveResult(p, INFEASIBLE, dict(info))
            p.vars[j].bounds = Interval(val, val)
            info["vbound_fixings"] += 1
    return PresolveResult(p, "ok", dict(info))


# ---------------------------------------------------------------------------
# nodes
# ---------------------------------------------------------------------------

@dataclass
class Node:
    bounds: List[Interval]
    dual: float
    depth: int
    id: int
    cuts: List[RowPrep] = field(default_factory=list)
    branch_var: Optional[int] = None
    branch_down: bool = True
    width_change: float = 0.0
    parent_dual: float = -math.inf
    warm: object = None


def _tighter(tol_lp: float, v: float, eps: float) -> float:
    """Next LP tolerance: v/2, but always at least a halving so resolves terminate."""
    return max(eps, min(v, tol_lp) / 2)


class Solver:
    def __init__(self, problem: Problem, options: Optional[SolveOptions] = None, handlers=None):
        self.original = problem
        self.opt = options or SolveOptions()
        self.handlers = handlers
        self.stats = SolveStats()
        self.rng = random.Random(self.opt.seed)
        self.pscost = B.Pseudocosts()
        self.pool = CutPool()
        self.incumbent: Optional[List[float]] = None
        self.primal = math.inf
        self.gap_dual = math.inf
        self._ids = 0
        self._depth = 0

    # -- setup -------------------------------------------------------------
    def _setup(self) -> Optional[str]:
        o = self.opt
        if o.presolve:
            pr = presolve(self.original, o.feastol)
            self.stats.presolve = pr.info
            if pr.status == INFEASIBLE:
                return INFEASIBLE
            self.prob = pr.problem
        else:
            self.prob = copy_problem(self.original)
        p = self.prob
        self.n = p.n
        self.sign = -1.0 if p.sense == "maximize" else 1.0
        self.c = np.array([self.sign * v.objective for v in p.vars])
        self.const_obj = not np.any(self.c)
        self.ef: ExtForm = ExtForm(p, self.handlers).build()
        self.prop = Propagator(self.ef, o.feastol)
        for ec in self.ef.cons:
            for role, h in ec.handler_names().items():
                self.stats.detections[f"{h}:{role}"] += 1
        self.mix_sets = mixing.collect(p)
        self.family = self._families()
        return None

    def _families(self) -> Dict[int, List[ExtConstraint]]:
        by_aux = {ec.aux: ec for ec in self.ef.cons if ec.aux is not None}
        fam = {}
        for ec in self.ef.cons:
            if ec.aux is not None:
                continue
            seen, out, stack = set(), [], [ec]
            while stack:
                cur = stack.pop(0)
                if cur.id in seen:
                    continue
                seen.add(cur.id)
                out.append(cur)
                for j in self.ef.view_leaf_cols(cur):
                    sub = by_aux.get(j)
                    if sub is not None:
                        stack.append(sub)
            fam[ec.id] = out
        return fam

    # -- violations --------------------------------------------------------
    def original_violation(self, x, problem: Optional[Problem] = None) -> float:
        """Largest violation of the original problem at x (integrality included)."""
        p = problem or self.original
        return p.max_violation(x, self.opt.feastol)

    def extended_violation(self, xfull, scaled: bool = True) -> float:
        """Largest violation over the extended formulation only.

        With ``scaled`` each violation is divided by max(1, |w|) (or the
        side for original constraints), which is how a reformulating solver
        that never looks back at the original constraints measures it.
        """
        v = 0.0
        for ec in self.ef.cons:
            u, o = self.ef.violation(ec, xfull, self.opt.feastol)
            if scaled:
                ref = float(xfull[ec.aux]) if ec.aux is not None else \
                    (ec.rhs if u >= o else ec.lhs)
                ref = max(1.0, abs(ref)) if math.isfinite(ref) and abs(ref) < INF else 1.0
                u, o = u / ref, o / ref
            v = max(v, u, o)
        for r in self.ef.linear:
            act = sum(a * float(xfull[j]) for j, a in r.coefs.items())
            if r.lhs > -INF:
                v = max(v, r.lhs - act)
            if r.rhs < INF:
                v = max(v, act - r.rhs)
        return v

    def lift(self, x: Sequence[float]) -> List[float]:
        """Extended point with every auxiliary column at the value of its node."""
        full = [float(v) for v in x[:self.n]] + [0.0] * (self.ef.ncols - self.n)
        for node in E.topo_order(self.ef.aux_nodes):
            if node.aux is not None and node.kind != "var":
                full[node.aux] = E.evaluate(node, full, self.opt.feastol)
        return full

    def check_point(self, xfull) -> bool:
        """Feasibility test used to accept incumbents (see ``check_mode``)."""
        x = list(xfull[:self.n])
        if self.opt.check_mode == CHECK_EXTENDED:
            if any(abs(x[j] - round(x[j])) > self.opt.feastol for j in range(self.n)
                   if self.prob.vars[j].is_integral):
                return False
            return self.extended_violation(xfull) <= self.opt.feastol
        return self.original_violation(x) <= self.opt.feastol and \
            self.original_violation(x, self.prob) <= self.opt.feastol

    def _try_incumbent(self, x: Sequence[float], xfull=None) -> bool:
        x = [float(v) for v in x[:self.n]]
        for j, v in enumerate(self.prob.vars):
            if v.is_integral:
                x[j] = float(round(x[j]))
        if self.opt.check_mode == CHECK_EXTENDED:
            ok = xfull is not None and self.check_point(xfull)
            if ok:
                x = [float(v) for v in xfull[:self.n]]
        else:
            ok = self.check_point(x)
        if not ok:
            return False
        val = float(self.c @ np.array(x))
        if val < self.primal - 1e-12:
            self.primal = val
            self.incumbent = x
            return True
        return False

    # -- LP ----------------------------------------------------------------
    def _translate_basis(self, warm, keys: List):
        """Map a basis from an earlier row set onto the rows ``keys``."""
        if warm is None:
            return None
        basis, old_keys = warm
        nc = basis.ncols
        pos = {k: i for i, k in enumerate(keys)}
        basic = []
        status = list(basis.status[:nc]) + [lp.AT_LO] * len(keys)
        for j in basis.basic:
            if j < nc:
                basic.append(j)
            else:
                i = pos.get(old_keys[j - nc])
                if i is not None:
                    basic.append(nc + i)
        old_pos = {k: i for i, k in enumerate(old_keys)}
        for i, k in enumerate(keys):
            oi = old_pos.get(k)
            if oi is None:
                # slacks of new rows start basic
                basic.append(nc + i)
            else:
                status[nc + i] = basis.status[nc + oi]
        if len(basic) != len(keys):
            return None
        return lp.Basis(basic, status, nc)

    def _solve_lp(self, bounds: Sequence[Interval], cuts: Sequence[RowPrep], warm=None):
        nc = self.ef.ncols
        c = np.zeros(nc)
        c[:self.n] = self.c
        rows, lo, hi = [], [], []
        for r in self.ef.linear:
            a = np.zeros(nc)
            for j, v in r.coefs.items():
                a[j] += v
            rows.append(a)
            lo.append(r.lhs)
            hi.append(r.rhs)
        for r in cuts:
            a = np.zeros(nc)
            for j, v in r.coefs.items():
                a[j] += v
            rows.append(a)
            if r.sense == "<=":
                lo.append(-INF)
                hi.append(r.side)
            else:
                lo.append(r.side)
                hi.append(INF)
        cl = np.array([b.lo for b in bounds])
        cu = np.array([b.hi for b in bounds])
        keys = [("L", i) for i in range(len(self.ef.linear))] + [id(r) for r in cuts]
        prob = lp.LpProblem.build(c, np.array(rows) if rows else [], lo, hi, cl, cu)
        res = lp.solve(prob, self._translate_basis(warm, keys))
        self.stats.lp_solves += 1
        self.stats.lp_iterations += res.iterations
        clamped = False
        if res.status == lp.UNBOUNDED:
            # bounded surrogate: the solution serves as a separation point only
            clamped = True
            prob.col_lo = np.maximum(cl, -LP_CLAMP)
            prob.col_hi = np.minimum(cu, LP_CLAMP)
            res = lp.solve(prob)
            self.stats.lp_solves += 1
            self.stats.lp_iterations += res.iterations
        if res.basis is not None:
            res.warm = (res.basis, keys)
        return res, clamped

    # -- cuts --------------------------------------------------------------
    def _row_from_estimate(self, ec: ExtConstraint, side: str, est) -> RowPrep:
        coefs = dict(est.coefs)
        if ec.aux is not None:
            coefs[ec.aux] = coefs.get(ec.aux, 0.0) - 1.0
            bound = 0.0
        else:
            bound = ec.rhs if side == UNDER else ec.lhs
        return RowPrep(coefs, bound - est.const, "<=" if side == UNDER else ">=", est.local,
                       ec.id)

    def _side_violation(self, ec: ExtConstraint, h: float, x, side: str) -> float:
        if ec.aux is None:
            return h - ec.rhs if side == UNDER else ec.lhs - h
        w = float(x[ec.aux])
        return h - w if side == UNDER else w - h

    def _register(self, cands: Optional[B.CandidateStore], cols: Sequence[int], s_v: float,
                  bounds, x):
        if cands is None:
            return False
        orig = []
        for j in cols:
            if j >= self.n and self._depth < self.opt.aux_branch_depth:
                orig.append(j)
            else:
                orig.extend(self.ef.original_vars_of_col(j))
        orig = [j for j in dict.fromkeys(orig) if bounds[j].width > self.opt.epsilon]
        if not orig:
            return False
        cands.register(B.distribute_violation(orig, s_v, bounds, x, self.opt.violsplit))
        return True

    def _separate_ec(self, ec: ExtConstraint, side: str, x, bounds, strong: bool, tol_lp: float,
                     cands: Optional[B.CandidateStore], root: bool) -> Tuple[List[RowPrep], bool]:
        """Cuts for one side of one extended constraint; also reports candidate registration."""
        claim = ec.claim_for(side)
        if claim is None:
            return [], False
        h_ = self.ef.eval_view(ec, x, self.opt.feastol)
        w_ref = float(x[ec.aux]) if ec.aux is not None else (ec.rhs if side == UNDER else ec.lhs)
        s_v = B.violation_score(h_, w_ref)
        hdl = claim.handler
        min_viol = self.opt.feastol if strong else tol_lp
        out: List[RowPrep] = []
        registered = False
        direct = hdl.separate(ec, claim, self.ef, x, bounds, side, strong)
        raws = []
        if direct is not None:
            raws = list(direct)
        else:
            for est in hdl.estimate(ec, claim, self.ef, x, bounds, side):
                if math.isnan(est.const):
                    registered |= self._register(cands, est.branch_cols, s_v, bounds, x)
                    continue
                lval = est.value(x)
                ok = is_strong(lval, h_, w_ref, side) if strong else True
                row = self._row_from_estimate(ec, side, est)
                if not ok or row.violation(x) <= 0:
                    registered |= self._register(cands, est.branch_cols, s_v, bounds, x)
                    continue
                if est.branch_cols and not est.tight:
                    # keep candidates in case the cut is rejected later
                    row._branch = list(est.branch_cols)
                raws.append(row)
        for row in raws:
            row.handler = hdl.name
            row.cons_id = ec.id
            res = cleanup(row, bounds, x, min_viol, strong, self.opt.feastol, self.stats.cleanup)
            if isinstance(res, Rejected):
                cols = list(getattr(row, "_branch", [])) + list(row.coefs)
                registered |= self._register(cands, cols, s_v, bounds, x)
                continue
            res.local = False if root else (res.local or row.local)
            out.append(res)
        return out, registered

    def _separate(self, x, bounds, strong_only: bool, tol_lp: float, cands, root: bool,
                  vg: float, viols: Dict[int, float]) -> List[RowPrep]:
        """Separation over the families of violated original constraints."""
        rows: List[RowPrep] = []
        done = set()
        for ec0 in self.ef.cons:
            if ec0.aux is not None:
                continue
            gi = viols.get(ec0.id, 0.0)
            if gi <= self.opt.feastol:
                continue
            fam_rows: List[RowPrep] = []
            fam_reg = False
            for strong in ((True,) if strong_only else (True, False)):
                if not strong:
                    if fam_rows or fam_reg or gi < 0.5 * vg:
                        break
                for ec in self.family[ec0.id]:
                    key = (ec.id, strong)
                    if key in done:
                        continue
                    done.add(key)
                    try:
                        h_ = self.ef.eval_view(ec, x, self.opt.feastol)
                    except (E.DomainError, ZeroDivisionError, OverflowError, ValueError):
                        continue
                    for side in (UNDER, OVER):
                        if side == UNDER and not ec.needs_under:
                            continue
                        if side == OVER and not ec.needs_over:
                            continue
                        v = self._side_violation(ec, h_, x, side)
                        if strong and (v < self.opt.feastol or v < 0.01 * gi):
                            continue
                        if not strong and v <= 0.0:
                            continue
                        got, reg = self._separate_ec(ec, side, x, bounds, strong, tol_lp, cands, root)
                        fam_rows.extend(got)
                        fam_reg |= reg
                        if got and not strong:
                            self.stats.weak_cuts += len(got)
            rows.extend(fam_rows)
        return rows

    # -- node processing ---------------------------------------------------
    def _violations(self, x) -> Tuple[float, Dict[int, float]]:
        xo = list(x[:self.n])
        viols = {}
        for ec in self.ef.cons:
            if ec.aux is None:
                viols[ec.id] = self.prob.constraints[ec.cons_index].violation(xo, self.opt.feastol)
        vg = max(viols.values(), default=0.0)
        return vg, viols

    def _bound_violation(self, x, bounds) -> float:
        v = 0.0
        for j, b in enumerate(bounds):
            xj = float(x[j])
            v = max(v, b.lo - xj if b.lo > -INF else 0.0, xj - b.hi if b.hi < INF else 0.0)
        return v

    def _new_node(self, bounds, dual, depth, cuts, **kw) -> Node:
        self._ids += 1
        return Node(bounds, dual, depth, self._ids, cuts, **kw)

    def _branch(self, node: Node, var: int, point: float, x, dual: float, cuts) -> List[Node]:
        b = node.bounds[var]
        cuts = self._binding(node, cuts)
        integral = self.ef.col_integral(var)
        down, up = B.split(b, point, integral)
        kids = []
        for child, is_down in ((down, True), (up, False)):
            if child.is_empty or child.lo > child.hi:
                continue
            nb = list(node.bounds)
            nb[var] = child
            wc = (b.hi - child.hi) if is_down else (child.lo - b.lo)
            kids.append(self._new_node(nb, dual, node.depth + 1, list(cuts), branch_var=var,
                                       branch_down=is_down, width_change=wc, parent_dual=dual,
                                       warm=node.warm))
        self.stats.branchings += 1
        return kids

    def _pick_candidate(self, cands: B.CandidateStore, bounds, x) -> Optional[Tuple[int, float]]:
        cl = cands.candidates(bounds)
        cl = [c for c in cl if (c.var < self.n or self._depth < self.opt.aux_branch_depth)
              and bounds[c.var].width > self.opt.epsilon]
        if not cl:
            return None
        isint = lambda j: self.ef.col_integral(j)
        implied = lambda j: j >= self.n or self.prob.vars[j].vartype is E.VarType.IMPLINT
        B.score_candidates(cl, bounds, x, isint, implied, self.pscost, self.const_obj,
                           self.opt.weights, self.opt.scoreagg)
        got = B.select_and_split(cl, self.rng, bounds, x, isint, self.opt.highscorefactor)
        if got is None:
            return None
        return got[0], got[1]

    def _prunes(self, dual: float) -> bool:
        """Node with this bound can be dropped; remembers bounds within the gap tolerance."""
        if dual >= self._prune_value():
            if dual < self.primal:
                self.gap_dual = min(self.gap_dual, dual)
            return True
        return False

    def _prune_value(self) -> float:
        if not math.isfinite(self.primal):
            return math.inf
        return self.primal - max(self.opt.gap_abs, self.opt.gap_rel * abs(self.primal))

    def _initial_cuts(self, bounds) -> None:
        ef = self.ef
        for ec in ef.cons:
            for side in (UNDER, OVER):
                if (side == UNDER and not ec.needs_under) or (side == OVER and not ec.needs_over):
                    continue
                claim = ec.claim_for(side)
                if claim is None:
                    continue
                rows = claim.handler.initial_rows(ec, claim, ef, bounds, side)
                if rows is None:
                    rows = []
                    try:
                        ests = claim.handler.initial_estimates(ec, claim, ef, bounds, side)
                    except (E.DomainError, ZeroDivisionError, OverflowError, ValueError):
                        ests = []
                    for est in ests:
                        if math.isnan(est.const) or not all(map(math.isfinite, est.coefs.values())):
                            continue
                        rows.append(self._row_from_estimate(ec, side, est))
                for r in rows:
                    r.handler = claim.handler.name
                    res = cleanup(r, bounds, None, 0.0, True, self.opt.feastol)
                    if isinstance(res, Rejected):
                        continue
                    res.local = False
                    if self.pool.add(res):
                        self.stats.cuts[res.handler or "init"] += 1

    def _process(self, node: Node) -> List[Node]:
        o = self.opt
        st = self.stats
        root = node.depth == 0
        self._depth = node.depth
        res = self.prop.fbbt(node.bounds)
        if res.infeasible:
            st.prop_cutoffs += 1
            st.outcomes[CUTOFF] += 1
            return []
        bounds = res.bounds
        node.bounds = bounds
        if root:
            self._initial_cuts(bounds)
        tol_lp = o.feastol
        cuts: List[RowPrep] = list(node.cuts)
        rounds = 0
        while True:
            lpres, clamped = self._solve_lp(bounds, cuts, node.warm)
            node.warm = getattr(lpres, "warm", node.warm)
            if lpres.status == lp.INFEASIBLE:
                st.outcomes[CUTOFF] += 1
                return []
            if lpres.status != lp.OPTIMAL:
                # numerical trouble: fall back to branching on the widest variable
                return self._fallback_branch(node, bounds, None, node.dual, cuts)
            x = lpres.x
            dual = -math.inf if clamped else lpres.obj
            if node.branch_var is not None and rounds == 0 and math.isfinite(dual) and \
                    math.isfinite(node.parent_dual):
                self.pscost.update(node.branch_var, node.branch_down, dual - node.parent_dual,
                                   node.width_change)
            dual = max(dual, node.dual)
            if self._prunes(dual):
                st.outcomes[CUTOFF] += 1
                return []
            # pool cuts enter the LP only once violated
            have = {id(r) for r in cuts}
            pooled = [r for r in self.pool.violated(x, o.feastol) if id(r) not in have]
            if pooled:
                cuts.extend(pooled)
                continue
            self._try_incumbent(x, x)
            if self._prunes(dual):
                st.outcomes[CUTOFF] += 1
                return []
            vg, viols = self._violations(x)
            # separation loop on fractional points: strong cuts only
            frac = [j for j in range(self.n) if self.prob.vars[j].is_integral
                    and abs(x[j] - round(x[j])) > INT_TOL]
            if rounds < o.max_sepa_rounds:
                new = self._separate(x, bounds, True, tol_lp, None, root, vg, viols)
                new += mixing.separate_all(self.mix_sets, x, o.feastol) if self.mix_sets else []
                if new:
                    rounds += 1
                    self._add_cuts(new, cuts, root)
                    continue
            if frac:
                j = max(frac, key=lambda k: (min(x[k] - math.floor(x[k]), math.ceil(x[k]) - x[k]), -k))
                st.integer_branchings += 1
                st.outcomes[BRANCHED] += 1
                return self._branch(node, j, float(x[j]), x, dual, cuts)
            outcome, payload, tol_lp = self._enforce(node, x, bounds, tol_lp, vg, viols, root)
            while outcome == RESOLVE:
                # the LP is solved exactly, so the relaxation point is unchanged
                outcome, payload, tol_lp = self._enforce(node, x, bounds, tol_lp, vg, viols, root)
            st.outcomes[outcome] += 1
            if outcome == FEASIBLE:
                self._try_incumbent(x, x)
                return []
            if outcome == CUTS:
                rounds += 1
                self._add_cuts(payload, cuts, root)
                if rounds > 4 * o.max_sepa_rounds:
                    return self._fallback_branch(node, bounds, x, dual, cuts)
                continue
            if outcome == TIGHTENED:
                bounds = payload
                node.bounds = bounds
                rounds += 1
                if rounds > 4 * o.max_sepa_rounds:
                    return self._fallback_branch(node, bounds, x, dual, cuts)
                continue
            if outcome == BRANCHED:
                var, point = payload
                node.bounds = bounds
                return self._branch(node, var, point, x, dual, cuts)
            st.enforce_cutoffs += 1
            return []

    def _add_cuts(self, rows: List[RowPrep], cuts: List[RowPrep], root: bool):
        for r in rows:
            self.stats.cuts[r.handler or "?"] += 1
            if root or not r.local:
                r.local = False
                self.pool.add(r)
            cuts.append(r)

    def _binding(self, node: Node, cuts: List[RowPrep]) -> List[RowPrep]:
        """Rows whose slack is nonbasic in the last LP of the node."""
        if node.warm is None:
            return list(cuts)
        basis, keys = node.warm
        nc = basis.ncols
        tight = {k for i, k in enumerate(keys) if basis.status[nc + i] != lp.BASIC}
        return [r for r in cuts if id(r) in tight]

    def _fallback_branch(self, node, bounds, x, dual, cuts) -> List[Node]:
        best, bw = None, 0.0
        for j in range(self.n):
            b = bounds[j]
            w = b.hi - b.lo
            if w > self.opt.epsilon and w > bw:
                best, bw = j, w
        if best is None:
            self.stats.outcomes[CUTOFF] += 1
            return []
        self.stats.unfixed_branchings += 1
        self.stats.outcomes[BRANCHED] += 1
        node.bounds = bounds
        xv = float(x[best]) if x is not None else bounds[best].mid
        return self._branch(node, best, B.branching_point(bounds[best], xv), x, dual, cuts)

    def _enforce(self, node, x, bounds, tol_lp, vg, viols, root):
        """One step of the enforcement state machine: (outcome, payload, tol_lp)."""
        o = self.opt
        st = self.stats
        eps = o.epsilon
        if o.check_mode == CHECK_EXTENDED:
            if self.extended_violation(x) <= o.feastol:
                return FEASIBLE, None, tol_lp
        elif vg <= o.feastol:
            return FEASIBLE, None, tol_lp
        vh = 0.0
        for ec in self.ef.cons:
            u, v = self.ef.violation(ec, x, o.feastol)
            vh = max(vh, u, v)
        vb = self._bound_violation(x, bounds)
        if vb > vh and tol_lp > eps:
            st.tol_tightenings += 1
            return RESOLVE, None, _tighter(tol_lp, vb, eps)
        if vh < tol_lp and tol_lp > eps:
            st.tol_tightenings += 1
            return RESOLVE, None, _tighter(tol_lp, vh, eps)
        cands = B.CandidateStore()
        rows = self._separate(x, bounds, False, tol_lp, cands, root, vg, viols)
        if rows:
            return CUTS, rows, tol_lp
        if len(cands):
            got = self._pick_candidate(cands, bounds, x)
            if got is not None:
                return BRANCHED, got, tol_lp
        if vb > eps and tol_lp > eps:
            st.tol_tightenings += 1
            return RESOLVE, None, _tighter(tol_lp, vb, eps)
        if vh > eps and tol_lp > eps:
            st.tol_tightenings += 1
            return RESOLVE, None, _tighter(tol_lp, vh, eps)
        pr = self.prop.fbbt(bounds)
        if pr.infeasible:
            return CUTOFF, None, tol_lp
        if any(not (a.lo == b.lo and a.hi == b.hi) for a, b in zip(pr.bounds[:self.n], bounds[:self.n])):
            return TIGHTENED, pr.bounds, tol_lp
        # any unfixed variable of a violated constraint
        cand = B.CandidateStore()
        for ec in self.ef.cons:
            if ec.aux is None and viols.get(ec.id, 0.0) > o.feastol:
                cols = [j for j in E.variables(self.prob.constraints[ec.cons_index].expr)
                        if bounds[j].width > eps]
                if cols:
                    cand.register(B.distribute_violation(cols, viols[ec.id], bounds, x, B.UNIFORM))
        if len(cand):
            got = self._pick_candidate(cand, bounds, x)
            if got is not None:
                st.unfixed_branchings += 1
                return BRANCHED, got, tol_lp
        return CUTOFF, None, tol_lp

    # -- main loop ---------------------------------------------------------
    def solve(self) -> SolveResult:
        t0 = time.perf_counter()
        o = self.opt
        names = [v.name for v in self.original.vars]
        status = self._setup()
        if status == INFEASIBLE:
            self.stats.time = time.perf_counter() - t0
            return SolveResult(INFEASIBLE, names=names, stats=self.stats, sense=self.original.sense)
        bounds0 = self.ef.initial_bounds([v.bounds for v in self.prob.vars])
        init = self.prop.fbbt(bounds0, init=True)
        if init.infeasible:
            self.stats.time = time.perf_counter() - t0
            return SolveResult(INFEASIBLE, names=names, stats=self.stats, sense=self.original.sense)
        root = self._new_node(init.bounds, -math.inf, 0, [])
        heap: List[Tuple[float, int, int, Node]] = [(root.dual, 0, root.id, root)]
        limit_hit = False
        while heap:
            if o.node_limit is not None and self.stats.nodes >= o.node_limit:
                limit_hit = True
                break
            if time.perf_counter() - t0 > o.time_limit:
                limit_hit = True
                break
            dual, _, _, node = heapq.heappop(heap)
            if self._prunes(dual):
                continue
            self.stats.nodes += 1
            for kid in self._process(node):
                heapq.heappush(heap, (kid.dual, kid.depth, kid.id, kid))
        open_duals = [h[0] for h in heap if h[0] < self._prune_value()]
        if limit_hit and open_duals:
            dual = min(open_duals)
        else:
            dual = self.primal if self.incumbent is not None else math.inf
            if limit_hit and not heap:
                limit_hit = False
        if self.incumbent is not None:
            dual = min(dual, self.primal, self.gap_dual)
        self.stats.time = time.perf_counter() - t0
        if limit_hit:
            status = LIMIT
        else:
            status = OPTIMAL if self.incumbent is not None else INFEASIBLE
        primal = self.primal if self.incumbent is not None else math.inf
        if self.sign < 0:
            primal, dual = -primal, -dual
        return SolveResult(status, primal, dual, self.incumbent, names, self.stats, self.original.sense)


def solve(problem: Problem, options: Optional[SolveOptions] = None, **kw) -> SolveResult:
    if options is None:
        options = SolveOptions(**kw)
    return Solver(problem, options).solve()
