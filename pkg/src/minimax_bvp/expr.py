"""Scalar expressions of the time variable ``t``.

Matrix entries, functionals, inputs and noise shapes are declared as short
strings such as ``"cos(t)/20"`` or ``"0.5 + 0.159155*t + 0.1*sin(t)"``.
This module turns them into an immutable AST and evaluates that AST either at
a single time or over a numpy array of times.

Grammar (whitelist only, explicit ``*`` required)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('-' | '+') unary | power
    power   := atom ('^' unary)?            # right-associative
    atom    := NUMBER | 't' | 'pi' | 'e' | FUNC '(' expr ')' | '(' expr ')'
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "abs")
CONSTANTS = {"pi": math.pi, "e": math.e}
BINARY_OPS = ("+", "-", "*", "/", "^")


class ExprSyntaxError(ValueError):
    """Malformed expression; ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, text: str, offset: int):
        self.text = text
        self.offset = offset
        super().__init__(f"{message} at offset {offset} in {text!r}")


class ExprDomainError(ArithmeticError):
    """Evaluation left the real domain (log of non-positive, division by zero, ...)."""


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    """The time variable ``t``."""


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Const, Var, Call, Neg, BinOp]

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # "num" | "name" | "op" | "end"
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def _error(self, message: str, tok: _Token | None = None) -> ExprSyntaxError:
        tok = tok or self.tok
        return ExprSyntaxError(message, self.text, tok.pos)

    def _advance(self) -> _Token:
        tok = self.tok
        self.i += 1
        return tok

    def _expect(self, text: str) -> None:
        if self.tok.kind != "op" or self.tok.text != text:
            found = self.tok.text or "end of input"
            raise self._error(f"expected {text!r}, found {found!r}")
        self._advance()

    def parse(self) -> Expr:
        node = self.expr()
        if self.tok.kind != "end":
            if self.tok.text == ")":
                raise self._error("unbalanced ')'")
            raise self._error(f"unexpected {self.tok.text!r} (implicit multiplication is not allowed)")
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self._advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self._advance().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text == "-":
            self._advance()
            return Neg(self.unary())
        if self.tok.kind == "op" and self.tok.text == "+":
            self._advance()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self._advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self._advance()
            value = float(tok.text)
            if not math.isfinite(value):
                raise self._error("numeric literal overflows", tok)
            return Const(value)
        if tok.kind == "name":
            self._advance()
            if tok.text == "t":
                return Var()
            if tok.text in CONSTANTS:
                return Const(CONSTANTS[tok.text])
            if tok.text in FUNCTIONS:
                if self.tok.kind != "op" or self.tok.text != "(":
                    raise self._error(f"function {tok.text!r} requires parentheses")
                self._advance()
                arg = self.expr()
                self._expect(")")
                return Call(tok.text, arg)
            raise self._error(f"unknown identifier {tok.text!r}", tok)
        if tok.kind == "op" and tok.text == "(":
            self._advance()
            node = self.expr()
            if self.tok.kind != "op" or self.tok.text != ")":
                raise self._error("unbalanced '('", tok)
            self._advance()
            return node
        if tok.kind == "end":
            raise self._error("dangling operator or empty expression")
        raise self._error(f"unexpected {tok.text!r}")


def parse(text: str) -> Expr:
    """Parse an expression string into an immutable AST."""
    if not isinstance(text, str):
        raise TypeError(f"expression must be a string, got {type(text).__name__}")
    if not text.strip():
        raise ExprSyntaxError("empty expression", text, 0)
    return _Parser(text).parse()


def as_expr(value) -> Expr:
    """Accept an AST, a string, or a real number."""
    if isinstance(value, (Const, Var, Call, Neg, BinOp)):
        return value
    if isinstance(value, str):
        return parse(value)
    if isinstance(value, (int, float, np.floating, np.integer)) and not isinstance(value, bool):
        if not math.isfinite(float(value)):
            raise ValueError(f"non-finite constant {value!r}")
        return Const(float(value))
    raise TypeError(f"cannot interpret {value!r} as an expression")


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def to_string(node: Expr) -> str:
    """Render an AST back to text that reparses to the same tree."""
    if isinstance(node, Const):
        return repr(float(node.value))
    if isinstance(node, Var):
        return "t"
    if isinstance(node, Call):
        return f"{node.func}({to_string(node.arg)})"
    if isinstance(node, Neg):
        return f"-({to_string(node.arg)})"
    if node.op == "^":
        return f"({to_string(node.left)})^({to_string(node.right)})"
    left = to_string(node.left)
    right = to_string(node.right)
    # left-assoc: a left child of equal precedence needs no parentheses
    if isinstance(node.left, BinOp) and node.left.op != "^" and _PREC[node.left.op] < _PREC[node.op]:
        left = f"({left})"
    if isinstance(node.right, BinOp) and node.right.op != "^" and _PREC[node.right.op] <= _PREC[node.op]:
        right = f"({right})"
    return f"{left} {node.op} {right}"


def depends_on_t(node: Expr) -> bool:
    if isinstance(node, Var):
        return True
    if isinstance(node, Const):
        return False
    if isinstance(node, (Call, Neg)):
        return depends_on_t(node.arg)
    return depends_on_t(node.left) or depends_on_t(node.right)


def _domain(message: str) -> ExprDomainError:
    return ExprDomainError(message)


def _eval(node: Expr, t: np.ndarray) -> np.ndarray:
    if isinstance(node, Const):
        return np.full(t.shape, node.value)
    if isinstance(node, Var):
        return t
    if isinstance(node, Neg):
        return -_eval(node.arg, t)
    if isinstance(node, Call):
        x = _eval(node.arg, t)
        f = node.func
        if f == "log" and np.any(x <= 0.0):
            raise _domain("log of a non-positive value")
        if f == "sqrt" and np.any(x < 0.0):
            raise _domain("sqrt of a negative value")
        return getattr(np, "absolute" if f == "abs" else f)(x)
    a = _eval(node.left, t)
    b = _eval(node.right, t)
    op = node.op
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if np.any(b == 0.0):
            raise _domain("division by zero")
        return a / b
    if np.any((a < 0.0) & (b != np.round(b))):
        raise _domain("negative base raised to a non-integer power")
    if np.any((a == 0.0) & (b < 0.0)):
        raise _domain("zero raised to a negative power")
    return np.power(a, b)


def evaluate_array(node: Expr, t) -> np.ndarray:
    """Evaluate over an array of times; raises ``ExprDomainError`` on any bad point."""
    t = np.asarray(t, dtype=float)
    with np.errstate(all="ignore"):
        out = np.asarray(_eval(node, t), dtype=float)
    if not np.all(np.isfinite(out)):
        raise ExprDomainError(f"non-finite value while evaluating {to_string(node)!r}")
    return np.broadcast_to(out, t.shape).copy()


def evaluate(node: Expr, t: float) -> float:
    """Value of the expression at a single time ``t``."""
    return float(evaluate_array(node, np.asarray(float(t))))
