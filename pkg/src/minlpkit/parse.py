"""Reader and writer for the line-oriented model format.

    # comment
    var NAME (continuous|integer|binary) [LB, UB] obj COEF
    con NAME: [LHS <=] EXPR (<=|>=|==) RHS
    vlb Y >= COEF * X + CONST
    vub Y <= COEF * X + CONST
    minimize | maximize

Expressions use + - * / ^ (``^`` is right-associative and binds tighter
than unary minus), the functions exp log sin cos abs sqrt entropy and
signpower(e, p), numbers, ``inf`` and variable names.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from . import expr as E
from .expr import Expr, VarType
from .interval import INF
from .model import Constraint, Problem, VBound


class ParseError(ValueError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        self.msg, self.line, self.col = msg, line, col
        where = f"line {line}, col {col}: " if line else ""
        super().__init__(where + msg)


_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<id>[A-Za-z_][A-Za-z_0-9.\[\]]*)
  | (?P<op><=|>=|==|[-+*/^(),:])
""", re.VERBOSE)

_FUNCS = {"exp": E.exp, "log": E.log, "sin": E.sin, "cos": E.cos, "abs": E.abs_,
          "sqrt": E.sqrt, "entropy": E.entropy}
_REMOVED = {"min", "max"}
_RESERVED = set(_FUNCS) | _REMOVED | {"signpower", "inf"}


@dataclass
class Tok:
    kind: str
    text: str
    col: int


def tokenize(s: str, line: int = 0, col0: int = 1) -> List[Tok]:
    out: List[Tok] = []
    pos = 0
    while pos < len(s):
        m = _TOKEN.match(s, pos)
        if not m:
            raise ParseError(f"unexpected character {s[pos]!r}", line, col0 + pos)
        if m.lastgroup != "ws":
            out.append(Tok(m.lastgroup, m.group(), col0 + pos))
        pos = m.end()
    return out


class _ExprParser:
    def __init__(self, toks: List[Tok], names: Dict[str, int], line: int):
        self.toks, self.names, self.line = toks, names, line
        self.i = 0

    def peek(self) -> Optional[Tok]:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def err(self, msg: str, tok: Optional[Tok] = None):
        tok = tok or self.peek()
        col = tok.col if tok else (self.toks[-1].col + len(self.toks[-1].text) if self.toks else 1)
        raise ParseError(msg, self.line, col)

    def take(self, text: Optional[str] = None) -> Tok:
        t = self.peek()
        if t is None:
            self.err("unexpected end of expression")
        if text is not None and t.text != text:
            self.err(f"expected {text!r}, found {t.text!r}")
        self.i += 1
        return t

    def at(self, *texts) -> bool:
        t = self.peek()
        return t is not None and t.kind == "op" and t.text in texts

    # expr := term (('+'|'-') term)*
    def expr(self) -> Expr:
        terms = [self.term()]
        coefs = [1.0]
        while self.at("+", "-"):
            op = self.take().text
            terms.append(self.term())
            coefs.append(1.0 if op == "+" else -1.0)
        if len(terms) == 1:
            return terms[0]
        return E.sum_(terms, coefs)

    # term := unary (('*'|'/') unary)*
    def term(self) -> Expr:
        factors = [self.unary()]
        while self.at("*", "/"):
            op = self.take().text
            f = self.unary()
            factors.append(f if op == "*" else E.power(f, -1.0))
        if len(factors) == 1:
            return factors[0]
        return E.prod(factors)

    def unary(self) -> Expr:
        if self.at("-"):
            self.take()
            e = self.unary()
            if e.kind == "val":
                return E.val(-e.const)
            return E.sum_([e], [-1.0])
        if self.at("+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.at("^"):
            tok = self.take()
            ex = self.unary()
            p = _constant_value(ex)
            if p is None:
                b = _constant_value(base)
                if b is not None and b > 0:
                    return E.exp(E.prod([E.val(math.log(b)), ex]))
                self.err("exponent must be a constant", tok)
            return E.power(base, p)
        return base

    def primary(self) -> Expr:
        t = self.peek()
        if t is None:
            self.err("unexpected end of expression")
        if t.kind == "num":
            self.take()
            return E.val(float(t.text))
        if t.kind == "op" and t.text == "(":
            self.take()
            e = self.expr()
            self.take(")")
            return e
        if t.kind == "id":
            self.take()
            name = t.text
            if name == "inf":
                return E.val(INF)
            if name in _REMOVED:
                self.err(f"operator {name}() is not supported: min/max were removed "
                         "from the expression framework; reformulate with auxiliary "
                         "variables and linear constraints", t)
            if name in _FUNCS or name == "signpower":
                if not self.at("("):
                    self.err(f"expected '(' after {name}")
                self.take("(")
                arg = self.expr()
                if name == "signpower":
                    self.take(",")
                    pt = self.peek()
                    p = _constant_value(self.expr())
                    if p is None or not p > 1:
                        self.err("signpower exponent must be a constant > 1", pt)
                    self.take(")")
                    return E.signpower(arg, p)
                self.take(")")
                return _FUNCS[name](arg)
            if name not in self.names:
                self.err(f"undeclared variable {name!r}", t)
            return E.var(self.names[name], name)
        self.err(f"unexpected token {t.text!r}", t)


def _constant_value(e: Expr) -> Optional[float]:
    if E.variables(e):
        return None
    try:
        return E.evaluate(e, {})
    except (ValueError, ZeroDivisionError, OverflowError):
        return None


def parse_expression(text: str, names: Dict[str, int], line: int = 0, col0: int = 1) -> Expr:
    toks = tokenize(text, line, col0)
    if not toks:
        raise ParseError("empty expression", line, col0)
    p = _ExprParser(toks, names, line)
    e = p.expr()
    if p.peek() is not None:
        p.err(f"unexpected token {p.peek().text!r}")
    return e


def _split_comparisons(toks: List[Tok]) -> List[Tuple[List[Tok], Optional[Tok]]]:
    """Split a token list at top-level comparison operators."""
    parts: List[Tuple[List[Tok], Optional[Tok]]] = []
    cur: List[Tok] = []
    depth = 0
    for t in toks:
        if t.kind == "op" and t.text == "(":
            depth += 1
        elif t.kind == "op" and t.text == ")":
            depth -= 1
        if depth == 0 and t.kind == "op" and t.text in ("<=", ">=", "=="):
            parts.append((cur, t))
            cur = []
        else:
            cur.append(t)
    parts.append((cur, None))
    return parts


def _sub_expr(toks: List[Tok], names, line) -> Expr:
    if not toks:
        raise ParseError("missing expression", line, 1)
    p = _ExprParser(toks, names, line)
    e = p.expr()
    if p.peek() is not None:
        p.err(f"unexpected token {p.peek().text!r}")
    return e


def _number(toks: List[Tok], names, line) -> float:
    e = _sub_expr(toks, names, line)
    v = _constant_value(e)
    if v is None:
        raise ParseError("expected a constant", line, toks[0].col)
    return v


_VAR_LINE = re.compile(
    r"^var\s+(?P<name>\S+)\s+(?P<type>continuous|integer|binary)"
    r"(?:\s*\[\s*(?P<lb>[^,\]]+)\s*,\s*(?P<ub>[^\]]+)\s*\])?"
    r"(?:\s+obj\s+(?P<obj>\S+))?\s*$")


def _parse_num_text(s: str, line: int) -> float:
    s = s.strip()
    try:
        v = float(s)
    except ValueError:
        raise ParseError(f"invalid number {s!r}", line, 1) from None
    return max(-INF, min(INF, v))


def parse_model(text: str) -> Problem:
    prob = Problem()
    names: Dict[str, int] = {}
    con_names = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        stripped = line.strip()
        if not stripped:
            continue
        indent = len(line) - len(line.lstrip())
        word = stripped.split()[0]
        if word in ("minimize", "maximize"):
            if stripped != word:
                raise ParseError(f"unexpected text after {word}", lineno, indent + len(word) + 1)
            prob.sense = word
        elif word == "var":
            m = _VAR_LINE.match(stripped)
            if not m:
                raise ParseError("malformed var line; expected "
                                 "'var NAME (continuous|integer|binary) [LB, UB] obj COEF'",
                                 lineno, indent + 1)
            name = m.group("name")
            if name in names:
                raise ParseError(f"duplicate variable {name!r}", lineno, indent + 5)
            if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9.\[\]]*", name) or name in _RESERVED:
                raise ParseError(f"invalid variable name {name!r}", lineno, indent + 5)
            vt = VarType(m.group("type"))
            lb = _parse_num_text(m.group("lb"), lineno) if m.group("lb") else (0.0 if vt is VarType.BINARY else -INF)
            ub = _parse_num_text(m.group("ub"), lineno) if m.group("ub") else (1.0 if vt is VarType.BINARY else INF)
            obj = _parse_num_text(m.group("obj"), lineno) if m.group("obj") else 0.0
            if lb > ub:
                raise ParseError(f"empty domain for {name!r}", lineno, indent + 1)
            v = prob.add_var(name, vt, lb, ub, obj)
            names[name] = v.index
        elif word == "con":
            body = stripped[3:]
            if ":" not in body:
                raise ParseError("expected ':' after constraint name", lineno, indent + 4)
            cname, rest = body.split(":", 1)
            cname = cname.strip()
            if not cname:
                raise ParseError("missing constraint name", lineno, indent + 4)
            if cname in con_names:
                raise ParseError(f"duplicate constraint {cname!r}", lineno, indent + 4)
            con_names.add(cname)
            col0 = indent + 1 + len(stripped) - len(rest)
            toks = tokenize(rest, lineno, col0)
            parts = _split_comparisons(toks)
            prob.constraints.append(_constraint(cname, parts, names, lineno))
        elif word in ("vlb", "vub"):
            prob.vbounds.append(_vbound(word, stripped[3:], names, lineno, indent + 4))
        else:
            raise ParseError(f"unknown statement {word!r}", lineno, indent + 1)
    return prob


def _constraint(cname, parts, names, lineno) -> Constraint:
    if len(parts) == 2:
        (lt, op), (rt, _) = parts
        left = _sub_expr(lt, names, lineno)
        right = _sub_expr(rt, names, lineno)
        rv = _constant_value(right)
        if rv is None:
            # move everything to the left-hand side
            left = E.sum_([left, right], [1.0, -1.0])
            rv = 0.0
        if op.text == "<=":
            return Constraint(cname, left, -INF, rv)
        if op.text == ">=":
            return Constraint(cname, left, rv, INF)
        return Constraint(cname, left, rv, rv)
    if len(parts) == 3:
        (lt, op1), (mt, op2), (rt, _) = parts
        if op1.text != "<=" or op2.text != "<=":
            raise ParseError("ranged constraints must read LHS <= EXPR <= RHS", lineno, op1.col)
        lhs = _number(lt, names, lineno)
        rhs = _number(rt, names, lineno)
        return Constraint(cname, _sub_expr(mt, names, lineno), lhs, rhs)
    col = parts[0][1].col if parts[0][1] is not None else 1
    raise ParseError("constraint needs one comparison (or two for a ranged row)", lineno, col)


def _vbound(kind, body, names, lineno, col0) -> VBound:
    toks = tokenize(body, lineno, col0)
    parts = _split_comparisons(toks)
    want = ">=" if kind == "vlb" else "<="
    if len(parts) != 2 or parts[0][1].text != want:
        raise ParseError(f"{kind} must read Y {want} COEF * X + CONST", lineno, col0)
    (yt, _), (rt, _) = parts
    if len(yt) != 1 or yt[0].kind != "id" or yt[0].text not in names:
        raise ParseError("left-hand side must be a declared variable", lineno, yt[0].col if yt else col0)
    rhs = _sub_expr(rt, names, lineno)
    vs = E.variables(rhs)
    if len(vs) != 1:
        raise ParseError("right-hand side must be affine in one variable", lineno, rt[0].col)
    x = vs[0]
    c0 = E.evaluate(rhs, {x: 0.0})
    c1 = E.evaluate(rhs, {x: 1.0}) - c0
    c2 = E.evaluate(rhs, {x: 2.0}) - c0
    if abs(c2 - 2 * c1) > 1e-12 * max(1.0, abs(c1)):
        raise ParseError("right-hand side must be affine", lineno, rt[0].col)
    return VBound(kind, names[yt[0].text], x, c1, c0)


# ---------------------------------------------------------------------------
# writer
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return E._num(v)


def format_model(prob: Problem) -> str:
    names = prob.names()
    out = []
    for v in prob.vars:
        out.append(f"var {v.name} {v.vartype.value if v.vartype is not VarType.IMPLINT else 'integer'} "
                   f"[{_fmt(v.bounds.lo)}, {_fmt(v.bounds.hi)}] obj {_fmt(v.objective)}")
    out.append(prob.sense)
    for c in prob.constraints:
        body = E.to_string(c.expr, names)
        if c.lhs > -INF and c.rhs < INF:
            if c.lhs == c.rhs:
                out.append(f"con {c.name}: {body} == {_fmt(c.rhs)}")
            else:
                out.append(f"con {c.name}: {_fmt(c.lhs)} <= {body} <= {_fmt(c.rhs)}")
        elif c.rhs < INF:
            out.append(f"con {c.name}: {body} <= {_fmt(c.rhs)}")
        elif c.lhs > -INF:
            out.append(f"con {c.name}: {body} >= {_fmt(c.lhs)}")
        else:
            out.append(f"con {c.name}: -inf <= {body} <= inf")
    for vb in prob.vbounds:
        op = ">=" if vb.kind == "vlb" else "<="
        out.append(f"{vb.kind} {names[vb.y]} {op} {_fmt(vb.coef)} * {names[vb.x]} + {_fmt(vb.const)}")
    return "\n".join(out) + "\n"
