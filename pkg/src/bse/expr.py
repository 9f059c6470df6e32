"""Arithmetic expressions in (x, y) for user-supplied source terms.

Precedence-climbing parser over ``+ - * / ^`` with right-associative ``^``
binding tighter than unary minus, so ``-2^2 == -4``.  Available names:
variables ``x``, ``y``, the derived ``r`` (distance from origin) and
``theta`` (atan2 angle in (-pi, pi]), constants ``pi``, ``e``, and the
unary functions sin, cos, exp, sqrt, abs, log.
"""

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParseError

VARIABLES = ("x", "y", "r", "theta")
CONSTANTS = {"pi": math.pi, "e": math.e}
FUNCTIONS = ("sin", "cos", "exp", "sqrt", "abs", "log")

_PREC_ADD = 10
_PREC_MUL = 20
_PREC_NEG = 30
_PREC_POW = 40


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Name:
    ident: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class Bin:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Num | Name | Neg | Bin | Call

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            rest = text[pos:].lstrip()
            if not rest:
                break
            raise ParseError(f"unexpected character {rest[0]!r}", offset=len(text) - len(rest))
        if m.lastgroup == "num":
            tokens.append(("num", float(m.group("num")), m.start("num")))
        elif m.lastgroup == "ident":
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", None, len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, expected):
        kind, value, offset = self.peek()
        got = "end of input" if kind == "end" else repr(value)
        raise ParseError(f"expected {expected}, got {got}", offset=offset)

    def parse(self):
        e = self.expression(0)
        if self.peek()[0] != "end":
            self.fail("operator or end of input")
        return e

    def expression(self, min_prec):
        left = self.prefix()
        while True:
            kind, value, _ = self.peek()
            if kind != "op" or value not in "+-*/^":
                break
            prec = {"+": _PREC_ADD, "-": _PREC_ADD, "*": _PREC_MUL,
                    "/": _PREC_MUL, "^": _PREC_POW}[value]
            if prec < min_prec:
                break
            self.advance()
            # right-associative ^ re-enters at its own level
            right = self.expression(prec if value == "^" else prec + 1)
            left = Bin(value, left, right)
        return left

    def prefix(self):
        kind, value, offset = self.peek()
        if kind == "op" and value == "-":
            self.advance()
            return Neg(self.expression(_PREC_NEG))
        if kind == "op" and value == "(":
            self.advance()
            e = self.expression(0)
            if self.peek()[:2] != ("op", ")"):
                self.fail("')' to close parenthesis")
            self.advance()
            return e
        if kind == "num":
            self.advance()
            return Num(value)
        if kind == "ident":
            self.advance()
            if self.peek()[:2] == ("op", "("):
                if value not in FUNCTIONS:
                    raise ParseError(
                        f"unknown function {value!r} (expected one of {', '.join(FUNCTIONS)})",
                        offset=offset)
                self.advance()
                arg = self.expression(0)
                if self.peek()[:2] != ("op", ")"):
                    self.fail("')' to close function call")
                self.advance()
                return Call(value, arg)
            if value not in VARIABLES and value not in CONSTANTS:
                raise ParseError(
                    f"unknown name {value!r} (expected one of "
                    f"{', '.join(VARIABLES + tuple(CONSTANTS))})", offset=offset)
            return Name(value)
        self.fail("number, name, '(' or '-'")


def parse(text: str) -> Expr:
    """Parse an expression string into an AST."""
    return _Parser(text).parse()


def evaluate(e: Expr, x: float, y: float) -> float:
    """IEEE double evaluation at the point (x, y).

    Raises DomainError for log or sqrt of a negative argument; other IEEE
    special cases (division by zero, 0/0, fractional powers of negatives)
    follow double-precision semantics.
    """
    theta = math.atan2(y, x)
    if theta == -math.pi:
        theta = math.pi
    env = {"x": np.float64(x), "y": np.float64(y),
           "r": np.float64(math.hypot(x, y)), "theta": np.float64(theta)}
    with np.errstate(all="ignore"):
        return float(_eval(e, env))


def _eval(e, env):
    if isinstance(e, Num):
        return np.float64(e.value)
    if isinstance(e, Name):
        if e.ident in CONSTANTS:
            return np.float64(CONSTANTS[e.ident])
        return env[e.ident]
    if isinstance(e, Neg):
        return -_eval(e.operand, env)
    if isinstance(e, Bin):
        a = _eval(e.left, env)
        b = _eval(e.right, env)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            return a / b
        return np.power(a, b)
    if isinstance(e, Call):
        a = _eval(e.arg, env)
        if e.func == "sqrt":
            if a < 0.0:
                raise DomainError(f"sqrt of negative argument {float(a)}")
            return np.sqrt(a)
        if e.func == "log":
            if a < 0.0:
                raise DomainError(f"log of negative argument {float(a)}")
            return np.log(a)
        if e.func == "abs":
            return np.abs(a)
        return {"sin": np.sin, "cos": np.cos, "exp": np.exp}[e.func](a)
    raise TypeError(f"not an expression node: {e!r}")


def to_string(e: Expr) -> str:
    """Canonical rendering; parse(to_string(e)) reproduces the AST."""
    return _render(e, 0)


def _render(e, context_prec):
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Name):
        return e.ident
    if isinstance(e, Call):
        return f"{e.func}({_render(e.arg, 0)})"
    if isinstance(e, Neg):
        text = "-" + _render(e.operand, _PREC_NEG)
        return f"({text})" if context_prec > _PREC_NEG else text
    prec = {"+": _PREC_ADD, "-": _PREC_ADD, "*": _PREC_MUL,
            "/": _PREC_MUL, "^": _PREC_POW}[e.op]
    if e.op == "^":
        text = _render(e.left, prec + 1) + e.op + _render(e.right, prec)
    else:
        text = _render(e.left, prec) + e.op + _render(e.right, prec + 1)
    return f"({text})" if context_prec > prec else text


def eval_on_points(e: Expr, points) -> np.ndarray:
    """Evaluate at an (n, 2) array of points, returning nodal values."""
    points = np.asarray(points, dtype=np.float64)
    return np.array([evaluate(e, float(p[0]), float(p[1])) for p in points])
