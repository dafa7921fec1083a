"""Bivariate scaling-factor expressions.

Grammar (whitespace ignored)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?          # right associative, constant exponent
    atom    := NUMBER | 'x' | 'y' | FUNC '(' expr ')' | '(' expr ')'
    FUNC    := 'sin' | 'cos' | 'exp' | 'abs' | 'sqrt'

so ``^`` binds tighter than unary minus, which binds tighter than ``*``/``/``.
``-2^2`` is ``-4`` and ``2^3^2`` is ``512``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import CapViolation, EvalError, ExprSyntaxError, UnknownIdentifier

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "abs": np.abs,
    "sqrt": np.sqrt,
}
VARIABLES = ("x", "y")


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
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Neg, BinOp, Call]


# -- tokenizer -------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


@dataclass
class _Tok:
    kind: str  # "num" | "name" | "op" | "end"
    text: str
    offset: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos == len(text):
            break
        mo = _TOKEN.match(text, pos)
        if mo is None or mo.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos))
        kind = mo.lastgroup
        toks.append(_Tok(kind, mo.group(kind), _byte_offset(text, mo.start(kind))))
        pos = mo.end()
    toks.append(_Tok("end", "", _byte_offset(text, len(text))))
    return toks


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


# -- parser ----------------------------------------------------------------

_BINARY = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 40}
_UNARY_BP = 30


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> None:
        tok = self.next()
        if tok.text != text:
            what = "end of input" if tok.kind == "end" else repr(tok.text)
            raise ExprSyntaxError(f"expected {text!r}, found {what}", tok.offset)

    def parse(self) -> Expr:
        tree = self.expression(0)
        tok = self.peek()
        if tok.kind != "end":
            raise ExprSyntaxError(f"unexpected {tok.text!r}", tok.offset)
        return tree

    def expression(self, rbp: int) -> Expr:
        left = self.nud(self.next())
        while True:
            tok = self.peek()
            lbp = _BINARY.get(tok.text, 0) if tok.kind == "op" else 0
            if lbp <= rbp:
                return left
            self.next()
            if tok.text == "^":
                right = self.expression(lbp - 1)
                if _has_variable(right):
                    raise ExprSyntaxError("exponent must be a constant", tok.offset)
            else:
                right = self.expression(lbp)
            left = BinOp(tok.text, left, right)

    def nud(self, tok: _Tok) -> Expr:
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "name":
            if tok.text in VARIABLES:
                return Var(tok.text)
            if tok.text in FUNCTIONS:
                self.expect("(")
                arg = self.expression(0)
                self.expect(")")
                return Call(tok.text, arg)
            raise UnknownIdentifier(tok.text, tok.offset)
        if tok.text == "-":
            return Neg(self.expression(_UNARY_BP))
        if tok.text == "(":
            inner = self.expression(0)
            self.expect(")")
            return inner
        what = "end of input" if tok.kind == "end" else repr(tok.text)
        raise ExprSyntaxError(f"unexpected {what}", tok.offset)


def _has_variable(e: Expr) -> bool:
    if isinstance(e, Var):
        return True
    if isinstance(e, Num):
        return False
    if isinstance(e, Neg):
        return _has_variable(e.operand)
    if isinstance(e, Call):
        return _has_variable(e.arg)
    return _has_variable(e.left) or _has_variable(e.right)


def parse(text: str) -> Expr:
    return _Parser(text).parse()


def to_string(e: Expr) -> str:
    """Fully parenthesised form; ``parse(to_string(e)) == e``."""
    if isinstance(e, Num):
        return repr(e.value) if e.value >= 0 else f"({e.value!r})"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_string(e.operand)})"
    if isinstance(e, Call):
        return f"{e.func}({to_string(e.arg)})"
    return f"({to_string(e.left)} {e.op} {to_string(e.right)})"


def is_constant(e: Expr) -> bool:
    return not _has_variable(e)


# -- evaluation ------------------------------------------------------------

def _ev(e: Expr, x, y):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return x if e.name == "x" else y
    if isinstance(e, Neg):
        return np.negative(_ev(e.operand, x, y))
    if isinstance(e, Call):
        return FUNCTIONS[e.func](_ev(e.arg, x, y))
    a, b = _ev(e.left, x, y), _ev(e.right, x, y)
    if e.op == "+":
        return np.add(a, b)
    if e.op == "-":
        return np.subtract(a, b)
    if e.op == "*":
        return np.multiply(a, b)
    if e.op == "/":
        return np.divide(a, b)
    return np.power(a, b)


def evaluate(e: Expr, x, y):
    """Evaluate at scalar or array ``x``, ``y``; non-finite results raise."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    with np.errstate(all="ignore"):
        out = np.broadcast_to(np.asarray(_ev(e, x, y), dtype=float), np.broadcast(x, y).shape)
    if not np.all(np.isfinite(out)):
        raise EvalError(f"non-finite value evaluating {to_string(e)}")
    return float(out) if out.ndim == 0 else np.array(out)


eval_expr = evaluate


# -- bounds ----------------------------------------------------------------

def sample_region(rect, density: int):
    x0, x1, y0, y1 = rect
    X, Y = np.meshgrid(np.linspace(x0, x1, density), np.linspace(y0, y1, density), indexing="ij")
    return X, Y


def certify_bounds(e: Expr, rect, density: int = 64, pad: float = 0.0,
                   region=None) -> tuple[float, float]:
    """Sampled ``(min |s|, max |s|)`` over ``rect = (x0, x1, y0, y1)``.

    Sampling is on a ``density x density`` lattice that includes the rectangle's
    edges and corners; it is not a rigorous enclosure.  ``pad`` widens the
    interval on both sides.
    """
    if density < 2:
        raise ValueError("density must be >= 2")
    if is_constant(e):
        v = abs(evaluate(e, 0.0, 0.0))
        lo = hi = v
    else:
        vals = np.abs(evaluate(e, *sample_region(rect, density)))
        lo, hi = float(vals.min()), float(vals.max())
    lo, hi = max(lo - pad, 0.0), hi + pad
    if hi >= 1.0:
        where = f" on region {region}" if region is not None else ""
        raise CapViolation(f"|s| reaches {hi:.6g} >= 1{where}", region=region, value=hi)
    return lo, hi


def lipschitz_estimate(e: Expr, rect, density: int = 64) -> float:
    """Largest finite-difference slope of ``e`` on the sampling lattice."""
    if is_constant(e):
        return 0.0
    X, Y = sample_region(rect, density)
    return lattice_lipschitz(evaluate(e, X, Y), X[1, 0] - X[0, 0], Y[0, 1] - Y[0, 0])


def lattice_lipschitz(vals: np.ndarray, hx: float, hy: float) -> float:
    slopes = [np.abs(np.diff(vals, axis=0)) / hx, np.abs(np.diff(vals, axis=1)) / hy]
    hd = math.hypot(hx, hy)
    slopes.append(np.abs(vals[1:, 1:] - vals[:-1, :-1]) / hd)
    slopes.append(np.abs(vals[1:, :-1] - vals[:-1, 1:]) / hd)
    return float(max(s.max() if s.size else 0.0 for s in slopes))
