"""Canonical simplification and common-subexpression elimination.

Canonical form:

* sums have no sum children, no constant children, no zero coefficients,
  no repeated children, and children sorted by ``compare``;
* products have no product children and no constant children, a product
  that sits inside a sum has factor 1 (the factor moves to the sum
  coefficient), and a product of a single factor is written as a sum;
* repeated factors of a product are collected into one power;
* operators over constants are folded.
"""

from __future__ import annotations

import math
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .expr import DomainError, Expr, node_value, val


def _key_sort(nodes: List[Expr]) -> List[Expr]:
    return sorted(nodes, key=lambda n: n.key())


def make_sum(const: float, terms: Sequence[Tuple[float, Expr]]) -> Expr:
    """Canonical sum from canonical children."""
    acc: Dict[tuple, List] = {}
    order: List[tuple] = []

    def push(a: float, c: Expr):
        if a == 0.0:
            return
        k = c.key()
        if k in acc:
            acc[k][0] += a
        else:
            acc[k] = [a, c]
            order.append(k)

    for a, c in terms:
        if a == 0.0:
            continue
        if c.kind == "val":
            const += a * c.const
        elif c.kind == "sum":
            const += a * c.const
            for b, g in zip(c.coefs, c.children):
                push(a * b, g)
        elif c.kind == "prod" and c.const != 1.0:
            inner = Expr("prod", c.children, 1.0) if len(c.children) > 1 else c.children[0]
            push(a * c.const, inner)
        else:
            push(a, c)
    items = [(acc[k][0], acc[k][1]) for k in order if acc[k][0] != 0.0]
    items.sort(key=lambda t: t[1].key())
    if not items:
        return val(const)
    if len(items) == 1 and const == 0.0:
        a, c = items[0]
        if a == 1.0:
            return c
        if c.kind == "prod":
            return Expr("prod", c.children, a * c.const)
    return Expr("sum", [c for _, c in items], const, [a for a, _ in items])


def make_prod(coef: float, factors: Sequence[Expr]) -> Expr:
    """Canonical product from canonical factors."""
    flat: List[Expr] = []
    stack = list(factors)
    while stack:
        f = stack.pop(0)
        if f.kind == "val":
            coef *= f.const
        elif f.kind == "prod":
            coef *= f.const
            flat.extend(f.children)
        elif f.kind == "sum" and f.const == 0.0 and len(f.children) == 1:
            coef *= f.coefs[0]
            stack.insert(0, f.children[0])
        else:
            flat.append(f)
    if coef == 0.0:
        return val(0.0)
    # collect powers of the same base
    exps: Dict[tuple, List] = {}
    order: List[tuple] = []
    for f in flat:
        if f.kind == "pow":
            base, p = f.children[0], f.const
        else:
            base, p = f, 1.0
        k = base.key()
        if k in exps:
            exps[k][0] += p
        else:
            exps[k] = [p, base]
            order.append(k)
    out: List[Expr] = []
    for k in order:
        p, base = exps[k]
        if p == 0.0:
            continue
        g = base if p == 1.0 else make_pow(base, p)
        if g.kind == "val":
            coef *= g.const
        elif g.kind == "prod":
            coef *= g.const
            out.extend(g.children)
        elif g.kind == "sum" and g.const == 0.0 and len(g.children) == 1:
            coef *= g.coefs[0]
            out.append(g.children[0])
        else:
            out.append(g)
    if coef == 0.0:
        return val(0.0)
    if not out:
        return val(coef)
    if len(out) == 1:
        if coef == 1.0:
            return out[0]
        return make_sum(0.0, [(coef, out[0])])
    return Expr("prod", _key_sort(out), coef)


def _fold(kind: str, p: float, c: Expr) -> Optional[Expr]:
    try:
        v = node_value(Expr(kind, (c,), p), [c.const], feastol=0.0)
    except (DomainError, ZeroDivisionError, OverflowError, ValueError):
        return None
    if not math.isfinite(v):
        return None
    return val(v)


def make_pow(base: Expr, p: float) -> Expr:
    if p == 0.0:
        return val(1.0)
    if p == 1.0:
        return base
    if base.kind == "val":
        f = _fold("pow", p, base)
        if f is not None:
            return f
        return Expr("pow", (base,), p)
    if base.kind == "pow":
        q = base.const
        inner = base.children[0]
        p_int = float(p).is_integer()
        q_int = float(q).is_integer()
        if p_int or not q_int:
            return make_pow(inner, q * p)
        if int(q) % 2 == 1:
            return make_pow(inner, q * p) if not float(q * p).is_integer() \
                else Expr("pow", (base,), p)
        # even integer inner power with fractional outer: |y|^(q p)
        return make_pow(make_unary("abs", 0.0, inner), q * p)
    if base.kind == "sum" and base.const == 0.0 and len(base.children) == 1:
        a = base.coefs[0]
        if a > 0 or float(p).is_integer():
            return make_sum(0.0, [(a ** p, make_pow(base.children[0], p))])
    return Expr("pow", (base,), p)


def make_unary(kind: str, p: float, c: Expr) -> Expr:
    if kind == "pow":
        return make_pow(c, p)
    if c.kind == "val":
        f = _fold(kind, p, c)
        if f is not None:
            return f
    if kind == "abs" and c.kind == "abs":
        return c
    if kind == "log" and c.kind == "exp":
        return c.children[0]
    return Expr(kind, (c,), p)


def simplify(e: Expr, fixed: Optional[Mapping[int, float]] = None,
             memo: Optional[Dict[int, Expr]] = None) -> Expr:
    """Return the canonical form of e; fixed variables are substituted."""
    memo = {} if memo is None else memo
    from .expr import topo_order
    for n in topo_order([e]):
        if id(n) in memo:
            continue
        k = n.kind
        if k == "val":
            r = n
        elif k == "var":
            r = val(fixed[n.index]) if fixed and n.index in fixed else n
        else:
            ch = [memo[id(c)] for c in n.children]
            if k == "sum":
                r = make_sum(n.const, list(zip(n.coefs, ch)))
            elif k == "prod":
                r = make_prod(n.const, ch)
            else:
                r = make_unary(k, n.const, ch[0])
        memo[id(n)] = r
    return memo[id(e)]


def cse(exprs: Sequence[Expr]) -> List[Expr]:
    """Rebuild expressions so that structurally equal subexpressions share a node."""
    table: Dict[tuple, Expr] = {}
    memo: Dict[int, Expr] = {}
    from .expr import topo_order
    for n in topo_order(exprs):
        if n.kind in ("var", "val"):
            r = table.setdefault(n.key(), n)
        else:
            ch = tuple(memo[id(c)] for c in n.children)
            cand = n if all(a is b for a, b in zip(ch, n.children)) else \
                Expr(n.kind, ch, n.const, n.coefs, n.index, n.name)
            r = table.setdefault(cand.key(), cand)
        memo[id(n)] = r
    return [memo[id(e)] for e in exprs]
