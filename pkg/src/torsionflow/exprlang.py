"""A small scalar expression language over chart coordinates.

Grammar, lowest precedence first::

    sum     := product (('+' | '-') product)*
    product := factor (('*' | '/') factor)*
    factor  := '-' factor | power
    power   := atom ('^' integer)*
    atom    := number | 'pi' | 'e' | variable | call | '(' sum ')'
    call    := ('sin'|'cos'|'exp'|'log'|'sqrt') '(' sum ')'

Variables are ``x1``, ``x2``, ... (one-based).  Exponents must be integer
literals; they are lowered to repeated multiplication at evaluation time,
so no fractional powers sneak in.  ``pi`` and ``e`` fold to numeric
literals at parse time.

Parse errors carry the byte offset of the offending token and a short
description of what was expected.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from .jets import Jet, jet_arith, jet_constant, jet_variable

__all__ = [
    "ParseError",
    "EvalError",
    "Expr",
    "Num",
    "Var",
    "Neg",
    "Call",
    "BinOp",
    "Pow",
    "parse",
    "pretty",
    "eval_expr",
]

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")
CONSTANTS = {"pi": math.pi, "e": math.e}


class ParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class EvalError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Expr:
    pos: int = field(compare=False, default=0)


@dataclass(frozen=True)
class Num(Expr):
    value: float = 0.0


@dataclass(frozen=True)
class Var(Expr):
    index: int = 1  # one-based coordinate index


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr = None  # type: ignore[assignment]


@dataclass(frozen=True)
class Call(Expr):
    fn: str = ""
    arg: Expr = None  # type: ignore[assignment]


@dataclass(frozen=True)
class BinOp(Expr):
    op: str = "+"
    lhs: Expr = None  # type: ignore[assignment]
    rhs: Expr = None  # type: ignore[assignment]


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr = None  # type: ignore[assignment]
    exponent: int = 1


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(src: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            stripped = src[pos:].lstrip()
            if not stripped:
                break
            offset = len(src) - len(stripped)
            raise ParseError(f"unexpected character {stripped[0]!r}", offset)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, text, pos = self.peek()
        if kind != "op" or text != op:
            raise ParseError(f"expected {op!r}", pos)
        return self.advance()

    def parse(self) -> Expr:
        e = self.sum()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected trailing input {text!r}", pos)
        return e

    def sum(self) -> Expr:
        e = self.product()
        while True:
            kind, text, pos = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                rhs = self.product()
                e = BinOp(pos=pos, op=text, lhs=e, rhs=rhs)
            else:
                return e

    def product(self) -> Expr:
        e = self.factor()
        while True:
            kind, text, pos = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                rhs = self.factor()
                e = BinOp(pos=pos, op=text, lhs=e, rhs=rhs)
            else:
                return e

    def factor(self) -> Expr:
        kind, text, pos = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(pos=pos, arg=self.factor())
        return self.power()

    def power(self) -> Expr:
        e = self.atom()
        while True:
            kind, text, pos = self.peek()
            if kind == "op" and text == "^":
                self.advance()
                nkind, ntext, npos = self.peek()
                sign = 1
                if nkind == "op" and ntext == "-":
                    self.advance()
                    sign = -1
                    nkind, ntext, npos = self.peek()
                if nkind != "num" or any(c in ntext for c in ".eE"):
                    raise ParseError("exponent must be an integer literal", npos)
                self.advance()
                e = Pow(pos=pos, base=e, exponent=sign * int(ntext))
            else:
                return e

    def atom(self) -> Expr:
        kind, text, pos = self.advance()
        if kind == "num":
            return Num(pos=pos, value=float(text))
        if kind == "name":
            if text in CONSTANTS:
                return Num(pos=pos, value=CONSTANTS[text])
            if text in FUNCTIONS:
                self.expect_op("(")
                arg = self.sum()
                self.expect_op(")")
                return Call(pos=pos, fn=text, arg=arg)
            m = re.fullmatch(r"x([1-9]\d*)", text)
            if m:
                return Var(pos=pos, index=int(m.group(1)))
            raise ParseError(f"unknown identifier {text!r}", pos)
        if kind == "op" and text == "(":
            e = self.sum()
            self.expect_op(")")
            return e
        raise ParseError(
            "expected a number, variable, function call or parenthesis", pos
        )


def parse(src: str) -> Expr:
    """Parse source text into an expression tree."""
    return _Parser(src).parse()


def pretty(expr: Expr) -> str:
    """Render an expression tree back to parseable source.

    Fully parenthesized except for atoms, so precedence never needs to be
    reconstructed; ``parse(pretty(e))`` equals ``e`` up to token positions.
    """
    if isinstance(expr, Num):
        return repr(expr.value)
    if isinstance(expr, Var):
        return f"x{expr.index}"
    if isinstance(expr, Neg):
        return f"(-{pretty(expr.arg)})"
    if isinstance(expr, Call):
        return f"{expr.fn}({pretty(expr.arg)})"
    if isinstance(expr, BinOp):
        return f"({pretty(expr.lhs)} {expr.op} {pretty(expr.rhs)})"
    if isinstance(expr, Pow):
        exp = expr.exponent
        shown = f"(-{-exp})" if exp < 0 else str(exp)
        return f"({pretty(expr.base)} ^ {shown})"
    raise TypeError(f"not an expression node: {expr!r}")


def eval_expr(expr: Expr, point, dim: int, degree: int) -> Jet:
    """Evaluate an expression to a jet of the given dimension and degree.

    ``point`` supplies the coordinate values; variables beyond ``dim`` are
    an evaluation error, as are domain faults (reported with the offset of
    the subexpression that raised them).
    """
    import numpy as np

    point = np.asarray(point, dtype=float)
    if point.shape != (dim,):
        raise EvalError(f"point must have {dim} coordinates", 0)

    def rec(e: Expr) -> Jet:
        if isinstance(e, Num):
            return jet_constant(e.value, dim, degree)
        if isinstance(e, Var):
            if not 1 <= e.index <= dim:
                raise EvalError(
                    f"variable x{e.index} out of range for dimension {dim}", e.pos
                )
            return jet_variable(e.index - 1, point[e.index - 1], dim, degree)
        if isinstance(e, Neg):
            return -rec(e.arg)
        if isinstance(e, Call):
            arg = rec(e.arg)
            try:
                return jet_arith(e.fn, arg)
            except ValueError as err:
                raise EvalError(f"{e.fn}: {err}", e.pos) from err
        if isinstance(e, BinOp):
            lhs, rhs = rec(e.lhs), rec(e.rhs)
            try:
                return jet_arith(
                    {"+": "add", "-": "sub", "*": "mul", "/": "div"}[e.op], lhs, rhs
                )
            except ValueError as err:
                raise EvalError(f"operator {e.op}: {err}", e.pos) from err
        if isinstance(e, Pow):
            base = rec(e.base)
            try:
                return base**e.exponent
            except ValueError as err:
                raise EvalError(f"power: {err}", e.pos) from err
        raise TypeError(f"not an expression node: {e!r}")

    return rec(expr)
