"""Scalar expression trees: parsing, evaluation, symbolic differentiation.

Scenario files describe manifolds, dynamics and endpoint maps as strings such
as ``"u2*ln(1+x1^2+x2^2)^2"``. This module turns them into immutable trees
that can be evaluated, differentiated (repeatedly) and compiled to fast
Python callables for the integrators.

Grammar (usual precedence, ``^`` binds tightest and is right associative)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' unary)?          # exponent must fold to an integer
    atom   := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'
    FUNC   := ln | exp | sin | cos | sqrt
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Unary",
    "Binary",
    "Pow",
    "ExprError",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "UnboundVariableError",
    "DomainError",
    "parse",
    "evaluate",
    "differentiate",
    "to_string",
    "compile_exprs",
    "central_difference",
    "FUNCTIONS",
]

FUNCTIONS = ("ln", "exp", "sin", "cos", "sqrt")


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int, text: str = ""):
        self.offset = offset
        self.text = text
        super().__init__(f"{message} at offset {offset}")


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, offset: int):
        self.name = name
        self.offset = offset
        super().__init__(f"unknown identifier {name!r} at offset {offset}")


class UnboundVariableError(ExprError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"variable {name!r} is not bound")


class DomainError(ExprError, ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# Tree nodes


class Expr:
    """Immutable expression node. Subclasses are frozen dataclasses."""

    __slots__ = ()

    def eval(self, bindings: Mapping[str, float]) -> float:
        return evaluate(self, bindings)

    def diff(self, var: str) -> "Expr":
        return differentiate(self, var)

    def free_vars(self) -> frozenset[str]:
        raise NotImplementedError

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float

    def free_vars(self) -> frozenset[str]:
        return frozenset()


@dataclass(frozen=True, eq=True)
class Var(Expr):
    name: str

    def free_vars(self) -> frozenset[str]:
        return frozenset((self.name,))


@dataclass(frozen=True, eq=True)
class Unary(Expr):
    op: str  # "neg" or one of FUNCTIONS
    arg: Expr

    def free_vars(self) -> frozenset[str]:
        return self.arg.free_vars()


@dataclass(frozen=True, eq=True)
class Binary(Expr):
    op: str  # + - * /
    left: Expr
    right: Expr

    def free_vars(self) -> frozenset[str]:
        return self.left.free_vars() | self.right.free_vars()


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    base: Expr
    exponent: int

    def free_vars(self) -> frozenset[str]:
        return self.base.free_vars()


ZERO = Const(0.0)
ONE = Const(1.0)


def _is_const(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


# Smart constructors: constant folding and the trivial identities only.


def add(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Binary("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return Binary("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a, -1.0):
        return neg(b)
    if _is_const(b, -1.0):
        return neg(a)
    return Binary("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 1.0):
        return a
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return ZERO
    if _is_const(a) and _is_const(b) and b.value != 0.0:
        return Const(a.value / b.value)
    return Binary("/", a, b)


def neg(a: Expr) -> Expr:
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def power(a: Expr, k: int) -> Expr:
    if k == 0:
        return ONE
    if k == 1:
        return a
    if _is_const(a) and not (a.value == 0.0 and k < 0):
        return Const(float(a.value) ** k)
    return Pow(a, k)


def func(name: str, a: Expr) -> Expr:
    if _is_const(a):
        try:
            return Const(_apply_func(name, a.value))
        except DomainError:
            pass
    return Unary(name, a)


# ---------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, variables: frozenset[str]):
        self.text = text
        self.vars = variables
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message: str, tok=None) -> ExprSyntaxError:
        tok = tok or self.peek()
        if tok[0] == "end":
            message = f"{message}: unexpected end of input"
        else:
            message = f"{message}: unexpected {tok[1]!r}"
        return ExprSyntaxError(message, tok[2], self.text)

    def expect(self, value: str) -> None:
        tok = self.peek()
        if tok[1] != value or tok[0] != "op":
            raise self.error(f"expected {value!r}")
        self.take()

    def parse(self) -> Expr:
        e = self.expr()
        if self.peek()[0] != "end":
            raise self.error("syntax error")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.unary()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def unary(self) -> Expr:
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.take()
            return neg(self.unary())
        if tok[0] == "op" and tok[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "^":
            self.take()
            exp_tok = self.peek()
            exponent = self.unary()
            if not isinstance(exponent, Const) or exponent.value != int(exponent.value):
                raise ExprSyntaxError(
                    "exponent must be a constant integer", exp_tok[2], self.text
                )
            return power(base, int(exponent.value))
        return base

    def atom(self) -> Expr:
        tok = self.peek()
        kind, value, offset = tok
        if kind == "num":
            self.take()
            return Const(float(value))
        if kind == "name":
            self.take()
            if value in FUNCTIONS:
                if self.peek()[1] != "(":
                    raise self.error(f"expected '(' after {value}")
                self.take()
                arg = self.expr()
                self.expect(")")
                return func(value, arg)
            if value not in self.vars:
                raise UnknownIdentifierError(value, offset)
            return Var(value)
        if kind == "op" and value == "(":
            self.take()
            e = self.expr()
            self.expect(")")
            return e
        raise self.error("syntax error")


def parse(text: str, variables: Iterable[str]) -> Expr:
    """Parse ``text`` into an expression over the declared ``variables``.

    Raises ExprSyntaxError (with ``offset``) on malformed input and
    UnknownIdentifierError for names outside ``variables``.
    """
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0, text)
    return _Parser(text, frozenset(variables)).parse()


# ---------------------------------------------------------------------------
# Evaluation


def _apply_func(name: str, x: float) -> float:
    if name == "ln":
        if x <= 0.0:
            raise DomainError(f"ln of non-positive value {x!r}")
        return math.log(x)
    if name == "sqrt":
        if x < 0.0:
            raise DomainError(f"sqrt of negative value {x!r}")
        return math.sqrt(x)
    if name == "exp":
        try:
            return math.exp(x)
        except OverflowError as exc:
            raise DomainError(f"exp overflow at {x!r}") from exc
    if name == "sin":
        return math.sin(x)
    if name == "cos":
        return math.cos(x)
    raise ExprError(f"unknown function {name!r}")


def evaluate(e: Expr, bindings: Mapping[str, float]) -> float:
    """Evaluate ``e`` in double precision; all free variables must be bound."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return float(bindings[e.name])
        except KeyError:
            raise UnboundVariableError(e.name) from None
    if isinstance(e, Unary):
        x = evaluate(e.arg, bindings)
        if e.op == "neg":
            return -x
        return _apply_func(e.op, x)
    if isinstance(e, Binary):
        a = evaluate(e.left, bindings)
        b = evaluate(e.right, bindings)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if b == 0.0:
            raise DomainError("division by zero")
        return a / b
    if isinstance(e, Pow):
        x = evaluate(e.base, bindings)
        if x == 0.0 and e.exponent < 0:
            raise DomainError("division by zero (negative power of 0)")
        return x**e.exponent
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# Differentiation


def differentiate(e: Expr, var: str) -> Expr:
    """Symbolic partial derivative of ``e`` with respect to ``var``."""
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if var not in e.free_vars():
        return ZERO
    if isinstance(e, Unary):
        g = e.arg
        dg = differentiate(g, var)
        if e.op == "neg":
            return neg(dg)
        if e.op == "ln":
            return div(dg, g)
        if e.op == "exp":
            return mul(e, dg)
        if e.op == "sin":
            return mul(func("cos", g), dg)
        if e.op == "cos":
            return neg(mul(func("sin", g), dg))
        if e.op == "sqrt":
            return div(dg, mul(Const(2.0), e))
        raise ExprError(f"unknown function {e.op!r}")
    if isinstance(e, Binary):
        a, b = e.left, e.right
        da, db = differentiate(a, var), differentiate(b, var)
        if e.op == "+":
            return add(da, db)
        if e.op == "-":
            return sub(da, db)
        if e.op == "*":
            return add(mul(da, b), mul(a, db))
        # quotient rule
        return div(sub(mul(da, b), mul(a, db)), power(b, 2))
    if isinstance(e, Pow):
        k = e.exponent
        return mul(mul(Const(float(k)), power(e.base, k - 1)), differentiate(e.base, var))
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# Printing and compilation


def _fmt_const(x: float) -> str:
    s = repr(float(x))
    return f"({s})" if x < 0 else s


def to_string(e: Expr) -> str:
    """Print in the grammar accepted by :func:`parse` (fully parenthesised)."""
    if isinstance(e, Const):
        return _fmt_const(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-{to_string(e.arg)})"
        return f"{e.op}({to_string(e.arg)})"
    if isinstance(e, Binary):
        return f"({to_string(e.left)} {e.op} {to_string(e.right)})"
    if isinstance(e, Pow):
        return f"({to_string(e.base)}^({e.exponent}))"
    raise TypeError(f"not an expression: {e!r}")


_PY_FUNCS = {
    "math": {"ln": "_m.log", "exp": "_m.exp", "sin": "_m.sin", "cos": "_m.cos", "sqrt": "_m.sqrt"},
    "numpy": {"ln": "_np.log", "exp": "_np.exp", "sin": "_np.sin", "cos": "_np.cos", "sqrt": "_np.sqrt"},
}


def _to_python(e: Expr, names: Mapping[str, str], backend: str) -> str:
    if isinstance(e, Const):
        return repr(float(e.value))
    if isinstance(e, Var):
        return names[e.name]
    if isinstance(e, Unary):
        inner = _to_python(e.arg, names, backend)
        if e.op == "neg":
            return f"(-{inner})"
        return f"{_PY_FUNCS[backend][e.op]}({inner})"
    if isinstance(e, Binary):
        return f"({_to_python(e.left, names, backend)} {e.op} {_to_python(e.right, names, backend)})"
    if isinstance(e, Pow):
        base = _to_python(e.base, names, backend)
        if e.exponent == 2:
            return f"({base} * {base})" if isinstance(e.base, Var) else f"({base} ** 2)"
        if e.exponent < 0 and backend == "numpy":
            return f"(1.0 / ({base} ** {-e.exponent}))"
        return f"({base} ** {e.exponent})"
    raise TypeError(f"not an expression: {e!r}")


def compile_exprs(
    exprs: Sequence[Expr], variables: Sequence[str], backend: str = "numpy"
) -> Callable[..., tuple]:
    """Compile expressions into one callable ``fn(*values) -> tuple``.

    With ``backend="numpy"`` the arguments may be arrays of a common shape and
    constant entries are broadcast against the first argument. With
    ``backend="math"`` the arguments must be Python floats; domain errors are
    raised as :class:`DomainError`.
    """
    names = {v: f"_a{i}" for i, v in enumerate(variables)}
    for e in exprs:
        missing = e.free_vars() - set(variables)
        if missing:
            raise UnboundVariableError(sorted(missing)[0])
    args = ", ".join(names[v] for v in variables)
    bodies = [_to_python(e, names, backend) for e in exprs]
    if backend == "numpy":
        ref = names[variables[0]] if variables else "0.0"
        items = [
            f"_np.broadcast_to(_np.asarray({b}, dtype=float), _np.shape({ref}))"
            if not exprs[i].free_vars()
            else b
            for i, b in enumerate(bodies)
        ]
    else:
        items = bodies
    src = f"def _fn({args}):\n    return ({', '.join(items)}{',' if len(items) == 1 else ''})\n"
    namespace = {"_m": math, "_np": np}
    exec(compile(src, "<riemoc-expr>", "exec"), namespace)
    fn = namespace["_fn"]
    if backend == "numpy":
        return fn

    def guarded(*values):
        try:
            return fn(*values)
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise DomainError(str(exc)) from exc

    return guarded


def central_difference(
    e: Expr, var: str, bindings: Mapping[str, float], h: float = 1e-6
) -> float:
    """Central finite difference of ``e`` in ``var``; independent of :func:`differentiate`."""
    up = dict(bindings)
    down = dict(bindings)
    up[var] = bindings[var] + h
    down[var] = bindings[var] - h
    return (evaluate(e, up) - evaluate(e, down)) / (2.0 * h)
