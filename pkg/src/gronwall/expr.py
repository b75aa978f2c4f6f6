"""Arithmetic expression language for coefficients and kernels.

Grammar (whitespace-insensitive, ``#`` starts a comment to end of line)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | power
    power  := atom ('^' factor)?
    atom   := number | name | func '(' expr ')' | '(' expr ')'

``^`` is right-associative and binds looser than unary minus on its left
operand, so ``-t^2`` parses as ``-(t^2)`` while ``2^-3`` is legal.
Numbers are decimal with an optional exponent (``1e-3``); there is no
implicit multiplication (``2t`` is a syntax error).

Evaluation follows IEEE double semantics: division by zero, ``log`` of a
nonpositive value, and overflow produce infinities or NaNs that are
returned as-is for the caller to flag.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Union

import numpy as np

FUNCTIONS = {
    "exp": np.exp,
    "log": np.log,
    "sin": np.sin,
    "cos": np.cos,
    "sqrt": np.sqrt,
    "abs": np.abs,
}


class ExprError(ValueError):
    """Base class for expression errors; ``offset`` is a byte offset into the source."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (offset {offset})"
        super().__init__(message)
        self.offset = offset


class ExprSyntaxError(ExprError):
    pass


class UnknownVariableError(ExprError):
    pass


class UnknownFunctionError(ExprError):
    pass


class UnboundVariableError(ExprError):
    pass


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Neg, BinOp, Call]

EvalContext = Mapping[str, float]

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # number | name | op | end
    text: str
    offset: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", pos)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            tokens.append(_Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token], allowed_vars: frozenset[str]):
        self.tokens = tokens
        self.pos = 0
        self.allowed_vars = allowed_vars

    @property
    def current(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, text: str) -> None:
        tok = self.current
        if tok.kind != "op" or tok.text != text:
            raise ExprSyntaxError(f"expected {text!r}", tok.offset)
        self.advance()

    def parse_expr(self) -> Expr:
        node = self.parse_term()
        while self.current.kind == "op" and self.current.text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.parse_term())
        return node

    def parse_term(self) -> Expr:
        node = self.parse_factor()
        while self.current.kind == "op" and self.current.text in "*/":
            op = self.advance().text
            node = BinOp(op, node, self.parse_factor())
        return node

    def parse_factor(self) -> Expr:
        if self.current.kind == "op" and self.current.text == "-":
            self.advance()
            return Neg(self.parse_factor())
        node = self.parse_atom()
        if self.current.kind == "op" and self.current.text == "^":
            self.advance()
            return BinOp("^", node, self.parse_factor())
        return node

    def parse_atom(self) -> Expr:
        tok = self.current
        if tok.kind == "number":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "name":
            self.advance()
            if self.current.kind == "op" and self.current.text == "(":
                if tok.text not in FUNCTIONS:
                    raise UnknownFunctionError(
                        f"unknown function {tok.text!r}", tok.offset
                    )
                self.advance()
                arg = self.parse_expr()
                self.expect_op(")")
                return Call(tok.text, arg)
            if tok.text not in self.allowed_vars:
                raise UnknownVariableError(
                    f"unknown variable {tok.text!r}", tok.offset
                )
            return Var(tok.text)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.parse_expr()
            self.expect_op(")")
            return node
        raise ExprSyntaxError("expected a number, variable or '('", tok.offset)


def parse(source: str, allowed_vars: Iterable[str]) -> Expr:
    """Parse ``source`` into an AST whose variables come from ``allowed_vars``."""
    if not source.strip():
        raise ExprSyntaxError("empty expression", 0)
    parser = _Parser(_tokenize(source), frozenset(allowed_vars))
    node = parser.parse_expr()
    tok = parser.current
    if tok.kind != "end":
        raise ExprSyntaxError(f"unexpected {tok.text!r}", tok.offset)
    return node


def evaluate(e: Expr, ctx: EvalContext):
    """Evaluate ``e`` with the bindings in ``ctx``.

    Bindings may be floats or numpy arrays (broadcast together).  The
    result is a float for all-scalar contexts, otherwise an ndarray.
    Non-finite intermediate values propagate; an unbound variable raises
    :class:`UnboundVariableError`.
    """
    with np.errstate(all="ignore"):
        result = _eval(e, ctx)
    if np.ndim(result) == 0:
        return float(result)
    return result


def _eval(e: Expr, ctx: EvalContext):
    if isinstance(e, Num):
        return np.float64(e.value)
    if isinstance(e, Var):
        try:
            value = ctx[e.name]
        except KeyError:
            raise UnboundVariableError(f"unbound variable {e.name!r}") from None
        return np.asarray(value, dtype=np.float64)
    if isinstance(e, Neg):
        return np.negative(_eval(e.operand, ctx))
    if isinstance(e, Call):
        return FUNCTIONS[e.func](_eval(e.arg, ctx))
    if isinstance(e, BinOp):
        left = _eval(e.left, ctx)
        right = _eval(e.right, ctx)
        if e.op == "+":
            return np.add(left, right)
        if e.op == "-":
            return np.subtract(left, right)
        if e.op == "*":
            return np.multiply(left, right)
        if e.op == "/":
            return np.divide(left, right)
        if e.op == "^":
            return np.power(left, right)
    raise TypeError(f"not an expression node: {e!r}")


def free_variables(e: Expr) -> frozenset[str]:
    """Exact set of variable names appearing in ``e``."""
    if isinstance(e, Num):
        return frozenset()
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Neg):
        return free_variables(e.operand)
    if isinstance(e, Call):
        return free_variables(e.arg)
    if isinstance(e, BinOp):
        return free_variables(e.left) | free_variables(e.right)
    raise TypeError(f"not an expression node: {e!r}")


def rename_variables(e: Expr, mapping: Mapping[str, str]) -> Expr:
    """Return a copy of ``e`` with variable names substituted per ``mapping``."""
    if isinstance(e, Num):
        return e
    if isinstance(e, Var):
        return Var(mapping.get(e.name, e.name))
    if isinstance(e, Neg):
        return Neg(rename_variables(e.operand, mapping))
    if isinstance(e, Call):
        return Call(e.func, rename_variables(e.arg, mapping))
    if isinstance(e, BinOp):
        return BinOp(
            e.op,
            rename_variables(e.left, mapping),
            rename_variables(e.right, mapping),
        )
    raise TypeError(f"not an expression node: {e!r}")


# Printing precedence levels; a child is parenthesized when its level is
# below what its position requires.
_PREC_ADD = 1
_PREC_MUL = 2
_PREC_NEG = 3
_PREC_POW = 4
_PREC_ATOM = 5

_BINOP_PREC = {"+": _PREC_ADD, "-": _PREC_ADD, "*": _PREC_MUL, "/": _PREC_MUL, "^": _PREC_POW}


def to_source(e: Expr) -> str:
    """Render ``e`` as a string that re-parses to a structurally identical AST."""
    return _render(e, 0)


def _render(e: Expr, min_prec: int) -> str:
    if isinstance(e, Num):
        text = repr(e.value)
        prec = _PREC_ATOM if e.value >= 0 else _PREC_NEG
    elif isinstance(e, Var):
        text, prec = e.name, _PREC_ATOM
    elif isinstance(e, Call):
        text, prec = f"{e.func}({_render(e.arg, 0)})", _PREC_ATOM
    elif isinstance(e, Neg):
        text, prec = "-" + _render(e.operand, _PREC_NEG), _PREC_NEG
    elif isinstance(e, BinOp):
        prec = _BINOP_PREC[e.op]
        if e.op == "^":
            # right-associative; the base must be an atom
            left = _render(e.left, _PREC_ATOM)
            right = _render(e.right, _PREC_NEG)
            text = f"{left}^{right}"
        else:
            left = _render(e.left, prec)
            right = _render(e.right, prec + 1)
            joiner = f" {e.op} " if prec == _PREC_ADD else e.op
            text = f"{left}{joiner}{right}"
    else:
        raise TypeError(f"not an expression node: {e!r}")
    if prec < min_prec:
        return f"({text})"
    return text
