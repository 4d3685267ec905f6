"""Command line front end.

    minlpkit solve FILE [flags]
    minlpkit propagate FILE [flags]
    minlpkit check FILE --point x=1,y=2 [flags]

Exit codes: 0 optimal or check passed, 1 check failed, 2 infeasible,
3 limit reached, 64 usage error, 65 parse error.  With --json every mode
prints one object with the keys status, primal, dual, gap, solution, stats.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Dict, List, Optional

from . import parse, solver
from .extform import ExtForm
from .prop import Propagator

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INFEASIBLE, EXIT_LIMIT = 0, 1, 2, 3
EXIT_USAGE, EXIT_PARSE = 64, 65


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="minlpkit", description="Spatial branch-and-bound for small MINLPs.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("file")
        sp.add_argument("--feastol", type=float, default=1e-6)
        sp.add_argument("--epsilon", type=float, default=1e-9)
        sp.add_argument("--gap-rel", type=float, default=1e-4)
        sp.add_argument("--gap-abs", type=float, default=1e-6)
        sp.add_argument("--time-limit", type=float, default=math.inf)
        sp.add_argument("--node-limit", type=int, default=None)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--stats", action="store_true")
        sp.add_argument("--json", action="store_true")
        return sp

    common(sub.add_parser("solve", help="solve to global optimality"))
    common(sub.add_parser("propagate", help="presolve and bound propagation only"))
    ck = common(sub.add_parser("check", help="check a point against the model"))
    ck.add_argument("--point", required=True, help="comma separated name=value pairs")
    return p


def _num(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return None
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _payload(status, primal=None, dual=None, gap=None, solution=None, stats=None) -> dict:
    return {"status": status, "primal": _num(primal), "dual": _num(dual), "gap": _num(gap),
            "solution": solution or {}, "stats": stats or {}}


def parse_point(text: str, names: List[str]) -> Dict[str, float]:
    out = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise UsageError(f"bad point entry {item!r}; expected name=value")
        k, v = item.split("=", 1)
        k = k.strip()
        if k not in names:
            raise UsageError(f"unknown variable {k!r} in --point")
        try:
            out[k] = float(v)
        except ValueError:
            raise UsageError(f"bad value for {k!r}: {v!r}")
    missing = [n for n in names if n not in out]
    if missing:
        raise UsageError("point misses " + ", ".join(missing))
    return out


def _options(a) -> solver.SolveOptions:
    return solver.SolveOptions(feastol=a.feastol, epsilon=a.epsilon, gap_rel=a.gap_rel,
                               gap_abs=a.gap_abs, time_limit=a.time_limit,
                               node_limit=a.node_limit, seed=a.seed)


def _fmt(v: float) -> str:
    return f"{v:.10g}" if math.isfinite(v) else ("inf" if v > 0 else "-inf")


def cmd_solve(prob, a, out) -> int:
    res = solver.solve(prob, _options(a))
    if a.json:
        out.write(json.dumps(res.to_json(), indent=2) + "\n")
    else:
        out.write(f"status   {res.status}\n")
        out.write(f"primal   {_fmt(res.primal)}\n")
        out.write(f"dual     {_fmt(res.dual)}\n")
        out.write(f"gap      {_fmt(res.gap)}\n")
        for k, v in res.solution().items():
            out.write(f"  {k} = {v:.12g}\n")
        if a.stats:
            out.write(res.stats.table() + "\n")
    return {solver.OPTIMAL: EXIT_OK, solver.INFEASIBLE: EXIT_INFEASIBLE}.get(res.status, EXIT_LIMIT)


def cmd_propagate(prob, a, out) -> int:
    pr = solver.presolve(prob, a.feastol)
    names = [v.name for v in prob.vars]
    status, bounds, tight = "infeasible", {}, 0
    if pr.status != solver.INFEASIBLE:
        ef = ExtForm(pr.problem).build()
        res = Propagator(ef, a.feastol).fbbt(ef.initial_bounds(), init=True)
        if not res.infeasible:
            status, tight = "propagated", res.tightenings
            bounds = {n: [_num(b.lo if b.lo > -solver.INF else -math.inf),
                          _num(b.hi if b.hi < solver.INF else math.inf)]
                      for n, b in zip(names, res.bounds[:len(names)])}
    stats = {"tightenings": tight, "presolve": pr.info}
    if a.json:
        payload = _payload(status, stats=dict(stats, bounds=bounds))
        out.write(json.dumps(payload, indent=2) + "\n")
    else:
        out.write(f"status   {status}\n")
        for n, (lo, hi) in bounds.items():
            out.write(f"  {n} in [{lo}, {hi}]\n")
        if a.stats:
            out.write(f"  tightenings {tight}\n")
    return EXIT_OK if status == "propagated" else EXIT_INFEASIBLE


def cmd_check(prob, a, out) -> int:
    names = [v.name for v in prob.vars]
    pt = parse_point(a.point, names)
    x = [pt[n] for n in names]
    viol = prob.max_violation(x, a.feastol)
    ok = viol <= a.feastol
    status = "feasible" if ok else "infeasible"
    obj = prob.objective_value(x)
    if a.json:
        out.write(json.dumps(_payload(status, primal=obj, solution=pt,
                                      stats={"max_violation": viol}), indent=2) + "\n")
    else:
        out.write(f"status   {status}\n")
        out.write(f"objective {_fmt(obj)}\n")
        out.write(f"max violation {viol:.3e}\n")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def main(argv: Optional[List[str]] = None, out=None) -> int:
    out = out or sys.stdout
    try:
        a = build_parser().parse_args(argv)
        if a.command is None:
            raise UsageError("missing subcommand (solve, propagate, check)")
        try:
            with open(a.file) as f:
                text = f.read()
        except OSError as e:
            raise UsageError(f"cannot read {a.file}: {e.strerror}")
        try:
            prob = parse.parse_model(text)
        except parse.ParseError as e:
            sys.stderr.write(f"{a.file}: {e}\n")
            return EXIT_PARSE
        run = {"solve": cmd_solve, "propagate": cmd_propagate, "check": cmd_check}[a.command]
        return run(prob, a, out)
    except UsageError as e:
        sys.stderr.write(f"minlpkit: {e}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
