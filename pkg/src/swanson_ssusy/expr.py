"""Small expression language for the coefficient functions.

Expressions are immutable trees over one independent variable (``x`` by
default) and named real parameters.  The grammar is deliberately fixed:

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | '+' unary | power
    power  := atom ('^' unary)?           # right associative
    atom   := number | name | func '(' expr ')' | '(' expr ')'

with ``func`` one of sqrt, exp, ln, sin, cos, abs.  Evaluation works on
floats and on numpy arrays (for sampling on a grid) and reports domain
errors with the offending subexpression.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

Number = Union[int, float]

FUNCTIONS = ("sqrt", "exp", "ln", "sin", "cos", "abs")


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, text: str, pos: int):
        self.text = text
        self.pos = pos
        self.line = text.count("\n", 0, pos) + 1
        self.column = pos - (text.rfind("\n", 0, pos) + 1) + 1
        super().__init__(f"{message} at line {self.line}, column {self.column}")


class UnknownFunctionError(ExprSyntaxError):
    pass


class UnboundParameterError(ExprError):
    pass


class ExprDomainError(ExprError):
    def __init__(self, message: str, node: "Expr", index: int | None = None):
        self.node = node
        self.index = index
        where = "" if index is None else f" (array index {index})"
        super().__init__(f"{message} in '{render(node)}'{where}")


# --------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Expr:
    pos: int | None = field(default=None, compare=False, repr=False, kw_only=True)

    def __add__(self, other):
        return BinOp("+", self, _coerce(other))

    def __radd__(self, other):
        return BinOp("+", _coerce(other), self)

    def __sub__(self, other):
        return BinOp("-", self, _coerce(other))

    def __rsub__(self, other):
        return BinOp("-", _coerce(other), self)

    def __mul__(self, other):
        return BinOp("*", self, _coerce(other))

    def __rmul__(self, other):
        return BinOp("*", _coerce(other), self)

    def __truediv__(self, other):
        return BinOp("/", self, _coerce(other))

    def __rtruediv__(self, other):
        return BinOp("/", _coerce(other), self)

    def __pow__(self, other):
        return BinOp("^", self, _coerce(other))

    def __rpow__(self, other):
        return BinOp("^", _coerce(other), self)

    def __neg__(self):
        return Neg(self)

    def __str__(self):
        return render(self)


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True)
class Var(Expr):
    name: str = "x"


@dataclass(frozen=True)
class Param(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr


def _coerce(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float, np.floating, np.integer)):
        return Const(float(value))
    raise TypeError(f"cannot use {type(value).__name__} in an expression")


def const(value: Number) -> Const:
    return Const(float(value))


def var(name: str = "x") -> Var:
    return Var(name)


def sqrt(e) -> Call:
    return Call("sqrt", _coerce(e))


def exp(e) -> Call:
    return Call("exp", _coerce(e))


def ln(e) -> Call:
    return Call("ln", _coerce(e))


def sin(e) -> Call:
    return Call("sin", _coerce(e))


def cos(e) -> Call:
    return Call("cos", _coerce(e))


def absolute(e) -> Call:
    return Call("abs", _coerce(e))


# --------------------------------------------------------------------------
# Parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, variable: str):
        self.text = text
        self.variable = variable
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message, tok=None):
        tok = tok or self.peek()
        if tok[0] == "end":
            message = f"{message} (unexpected end of input)"
        raise ExprSyntaxError(message, self.text, tok[2])

    def parse(self) -> Expr:
        if self.peek()[0] == "end":
            self.fail("empty expression")
        e = self.expr()
        if self.peek()[0] != "end":
            self.fail(f"unexpected token {self.peek()[1]!r}")
        return e

    def expr(self):
        left = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            _, op, p = self.take()
            left = BinOp(op, left, self.term(), pos=p)
        return left

    def term(self):
        left = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            _, op, p = self.take()
            left = BinOp(op, left, self.unary(), pos=p)
        return left

    def unary(self):
        kind, val, p = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return Neg(self.unary(), pos=p)
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        kind, val, p = self.peek()
        if kind == "op" and val == "^":
            self.take()
            return BinOp("^", base, self.unary(), pos=p)
        return base

    def atom(self):
        kind, val, p = self.take()
        if kind == "num":
            return Const(float(val), pos=p)
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if val not in FUNCTIONS:
                    raise UnknownFunctionError(f"unknown function {val!r}", self.text, p)
                self.take()
                arg = self.expr()
                self._close()
                return Call(val, arg, pos=p)
            if val in FUNCTIONS:
                self.fail(f"function {val!r} needs an argument", (kind, val, p))
            if val == self.variable:
                return Var(val, pos=p)
            return Param(val, pos=p)
        if kind == "op" and val == "(":
            e = self.expr()
            self._close()
            return e
        self.fail("expected a number, name or '('", (kind, val, p))

    def _close(self):
        if self.peek()[1] != ")" or self.peek()[0] != "op":
            self.fail("expected ')'")
        self.take()


def parse(text: str, variable: str = "x") -> Expr:
    """Parse ``text``; identifiers other than ``variable`` and function names become parameters."""
    return _Parser(text, variable).parse()


# --------------------------------------------------------------------------
# Rendering

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _fmt(value: float) -> str:
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg) or (isinstance(e, Const) and (e.value < 0 or math.copysign(1, e.value) < 0)):
        return 3
    return 5


def render(e: Expr) -> str:
    """Render back into the parse grammar; ``parse(render(e))`` evaluates identically."""
    if isinstance(e, Const):
        if e.value < 0 or math.copysign(1, e.value) < 0:
            return "-" + _fmt(-e.value)
        return _fmt(e.value)
    if isinstance(e, (Var, Param)):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({render(e.arg)})"
    if isinstance(e, Neg):
        inner = render(e.arg)
        return f"-({inner})" if _prec(e.arg) <= 3 else f"-{inner}"
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        ls, rs = render(e.left), render(e.right)
        lp, rp = _prec(e.left), _prec(e.right)
        if e.op == "^":
            if lp <= 4:
                ls = f"({ls})"
            if rp < 4:
                rs = f"({rs})"
            return f"{ls}^{rs}"
        if lp < p or (lp == 3 and p != 1):
            ls = f"({ls})"
        if rp <= p or rp == 3:
            rs = f"({rs})"
        sep = f" {e.op} " if p == 1 else e.op
        return f"{ls}{sep}{rs}"
    raise TypeError(f"not an expression node: {e!r}")


# --------------------------------------------------------------------------
# Structure queries


def free_params(e: Expr) -> set[str]:
    if isinstance(e, Param):
        return {e.name}
    if isinstance(e, Neg):
        return free_params(e.arg)
    if isinstance(e, Call):
        return free_params(e.arg)
    if isinstance(e, BinOp):
        return free_params(e.left) | free_params(e.right)
    return set()


def depends_on_variable(e: Expr) -> bool:
    if isinstance(e, Var):
        return True
    if isinstance(e, (Neg, Call)):
        return depends_on_variable(e.arg)
    if isinstance(e, BinOp):
        return depends_on_variable(e.left) or depends_on_variable(e.right)
    return False


def bind(e: Expr, params: Mapping[str, Number]) -> Expr:
    """Replace parameters by constants (unlisted parameters stay free)."""
    if isinstance(e, Param):
        return Const(params[e.name]) if e.name in params else e
    if isinstance(e, Neg):
        return Neg(bind(e.arg, params))
    if isinstance(e, Call):
        return Call(e.func, bind(e.arg, params))
    if isinstance(e, BinOp):
        return BinOp(e.op, bind(e.left, params), bind(e.right, params))
    return e


def compose(outer: Expr, inner: Expr) -> Expr:
    """Substitute ``inner`` for the independent variable of ``outer``."""
    if isinstance(outer, Var):
        return inner
    if isinstance(outer, Neg):
        return Neg(compose(outer.arg, inner))
    if isinstance(outer, Call):
        return Call(outer.func, compose(outer.arg, inner))
    if isinstance(outer, BinOp):
        return BinOp(outer.op, compose(outer.left, inner), compose(outer.right, inner))
    return outer


# --------------------------------------------------------------------------
# Evaluation


def _first_bad(mask) -> int | None:
    if np.ndim(mask) == 0:
        return None
    return int(np.flatnonzero(mask)[0])


def _is_integer(v) -> bool:
    return bool(np.all(np.isfinite(v)) and np.all(np.asarray(v) == np.round(v)))


def _ev(e: Expr, x, params: Mapping[str, float]):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return x
    if isinstance(e, Param):
        try:
            return float(params[e.name])
        except KeyError:
            raise UnboundParameterError(f"parameter {e.name!r} is not bound") from None
    if isinstance(e, Neg):
        return -_ev(e.arg, x, params)
    if isinstance(e, Call):
        u = _ev(e.arg, x, params)
        if e.func == "sqrt":
            bad = np.asarray(u) < 0
            if np.any(bad):
                raise ExprDomainError("sqrt of a negative number", e, _first_bad(bad))
            return np.sqrt(u)
        if e.func == "ln":
            bad = np.asarray(u) <= 0
            if np.any(bad):
                raise ExprDomainError("ln of a non-positive number", e, _first_bad(bad))
            return np.log(u)
        if e.func == "exp":
            with np.errstate(over="ignore"):
                r = np.exp(u)
            bad = ~np.isfinite(r)
            if np.any(bad):
                raise ExprDomainError("exp overflow", e, _first_bad(bad))
            return r
        if e.func == "sin":
            return np.sin(u)
        if e.func == "cos":
            return np.cos(u)
        if e.func == "abs":
            return np.abs(u)
        raise UnknownFunctionError(f"unknown function {e.func!r}", e.func, 0)
    if isinstance(e, BinOp):
        a = _ev(e.left, x, params)
        b = _ev(e.right, x, params)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            bad = np.asarray(b) == 0
            if np.any(bad):
                raise ExprDomainError("division by zero", e, _first_bad(bad))
            return a / b
        if e.op == "^":
            a_arr = np.asarray(a, dtype=float)
            if _is_integer(b):
                bad = (a_arr == 0) & (np.asarray(b) < 0)
                if np.any(bad):
                    raise ExprDomainError("division by zero", e, _first_bad(bad))
            else:
                bad = a_arr <= 0
                if np.any(bad):
                    raise ExprDomainError("non-integer power of a non-positive base", e, _first_bad(bad))
            with np.errstate(over="ignore"):
                r = np.power(a_arr, b)
            bad = ~np.isfinite(r)
            if np.any(bad):
                raise ExprDomainError("power overflow", e, _first_bad(bad))
            return r if np.ndim(r) else float(r)
    raise TypeError(f"not an expression node: {e!r}")


def evaluate(e: Expr, x, params: Mapping[str, Number] | None = None):
    """Evaluate at a scalar or an array of variable values.

    Raises ExprDomainError (sqrt of negative, ln of non-positive, division by
    zero, non-integer power of a non-positive base) and UnboundParameterError.
    """
    xa = np.asarray(x, dtype=float)
    r = _ev(e, xa if xa.ndim else float(xa), params or {})
    if xa.ndim:
        return np.broadcast_to(np.asarray(r, dtype=float), xa.shape).copy()
    return float(r)


# --------------------------------------------------------------------------
# Simplification


def _is(e: Expr, value: float) -> bool:
    return isinstance(e, Const) and e.value == value


def _fold(node: Expr) -> Expr:
    try:
        v = _ev(node, 0.0, {})
    except ExprError:
        return node
    v = float(v)
    if not math.isfinite(v):
        return node
    return Const(v)


def simplify(e: Expr) -> Expr:
    """Constant folding plus removal of +0, *1, *0, ^1, ^0 and double negation."""
    if isinstance(e, (Const, Var, Param)):
        return e
    if isinstance(e, Neg):
        a = simplify(e.arg)
        if isinstance(a, Const):
            return Const(-a.value)
        if isinstance(a, Neg):
            return a.arg
        return Neg(a)
    if isinstance(e, Call):
        a = simplify(e.arg)
        node = Call(e.func, a)
        return _fold(node) if isinstance(a, Const) else node
    if not isinstance(e, BinOp):
        raise TypeError(f"not an expression node: {e!r}")
    l, r, op = simplify(e.left), simplify(e.right), e.op
    if isinstance(l, Const) and isinstance(r, Const):
        return _fold(BinOp(op, l, r))
    if op == "+":
        if _is(l, 0):
            return r
        if _is(r, 0):
            return l
        if isinstance(r, Neg):
            return simplify(BinOp("-", l, r.arg))
        if isinstance(r, Const) and r.value < 0:
            return BinOp("-", l, Const(-r.value))
    elif op == "-":
        if _is(r, 0):
            return l
        if _is(l, 0):
            return simplify(Neg(r))
        if isinstance(r, Neg):
            return simplify(BinOp("+", l, r.arg))
        if isinstance(r, Const) and r.value < 0:
            return BinOp("+", l, Const(-r.value))
    elif op == "*":
        if _is(l, 0) or _is(r, 0):
            return Const(0.0)
        if _is(l, 1):
            return r
        if _is(r, 1):
            return l
        if _is(l, -1):
            return simplify(Neg(r))
        if _is(r, -1):
            return simplify(Neg(l))
        if isinstance(r, Const) and not isinstance(l, Const):
            l, r = r, l
        if isinstance(l, Const) and isinstance(r, BinOp) and r.op == "*" and isinstance(r.left, Const):
            return simplify(BinOp("*", Const(l.value * r.left.value), r.right))
        if isinstance(l, Neg) and isinstance(r, Neg):
            return simplify(BinOp("*", l.arg, r.arg))
        if isinstance(l, Const) and isinstance(r, Neg):
            return simplify(BinOp("*", Const(-l.value), r.arg))
    elif op == "/":
        if _is(l, 0):
            return Const(0.0)
        if _is(r, 1):
            return l
        if _is(r, -1):
            return simplify(Neg(l))
    elif op == "^":
        if _is(r, 1):
            return l
        if _is(r, 0):
            return Const(1.0)
        if _is(l, 1):
            return Const(1.0)
    return BinOp(op, l, r)


# --------------------------------------------------------------------------
# Differentiation


def _d(e: Expr) -> Expr:
    if isinstance(e, Var):
        return Const(1.0)
    if isinstance(e, (Const, Param)):
        return Const(0.0)
    if isinstance(e, Neg):
        return Neg(_d(e.arg))
    if isinstance(e, Call):
        u, du = e.arg, _d(e.arg)
        if e.func == "sqrt":
            outer = Const(1.0) / (Const(2.0) * e)
        elif e.func == "exp":
            outer = e
        elif e.func == "ln":
            outer = Const(1.0) / u
        elif e.func == "sin":
            outer = Call("cos", u)
        elif e.func == "cos":
            outer = Neg(Call("sin", u))
        elif e.func == "abs":
            # undefined at u == 0; evaluation reports the division by zero there
            outer = u / e
        else:
            raise UnknownFunctionError(f"unknown function {e.func!r}", e.func, 0)
        return outer * du
    if isinstance(e, BinOp):
        u, v = e.left, e.right
        if e.op in ("+", "-"):
            return BinOp(e.op, _d(u), _d(v))
        if e.op == "*":
            return _d(u) * v + u * _d(v)
        if e.op == "/":
            return (_d(u) * v - u * _d(v)) / BinOp("^", v, Const(2.0))
        if e.op == "^":
            if not depends_on_variable(v):
                return v * BinOp("^", u, v - Const(1.0)) * _d(u)
            if not depends_on_variable(u):
                return e * Call("ln", u) * _d(v)
            return e * (_d(v) * Call("ln", u) + v * _d(u) / u)
    raise TypeError(f"not an expression node: {e!r}")


def differentiate(e: Expr, order: int = 1) -> Expr:
    """Exact symbolic derivative with respect to the independent variable."""
    if not isinstance(order, int) or order < 1:
        raise ValueError("order must be a positive integer")
    out = simplify(e)
    for _ in range(order):
        out = simplify(_d(out))
    return out
