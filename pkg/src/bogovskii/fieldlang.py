"""Tiny expression language for scalar fields and radial shape functions.

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | '+' unary | power
    power   := atom ('^' unary)?            # right associative
    atom    := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'

Unary minus binds looser than ``^`` so ``-2^2`` is ``-4``.  Identifiers are the
coordinates ``x1 .. xn``, ``r`` (Euclidean norm of the point) and, when parsing
shape functions, the angles ``theta`` and ``phi``.  Functions: sin, cos, exp,
log, sqrt, abs.

Evaluation is vectorised: a point array of shape ``(..., n)`` yields values of
shape ``(...)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
}

ANGLE_NAMES = ("theta", "phi")


class FieldSyntaxError(ValueError):
    """Raised on malformed input; carries a 1-based line and column."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} at line {line}, column {column}")
        self.message = message
        self.line = line
        self.column = column


class FieldEvalError(ArithmeticError):
    """Evaluation produced NaN or an infinity (e.g. log of a negative number)."""


# ---------------------------------------------------------------- AST nodes


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    """Coordinate ``x<index>`` (1-based)."""

    index: int


@dataclass(frozen=True)
class Name:
    """Derived variable: ``r``, ``theta`` or ``phi``."""

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


Expr = Union[Num, Var, Name, Neg, BinOp, Call]


# ---------------------------------------------------------------- tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # "num", "ident", "op", "end"
    text: str
    line: int
    col: int


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise FieldSyntaxError(
                f"unexpected character {src[pos]!r}", line, pos - line_start + 1
            )
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind != "ws":
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("end", "", line, pos - line_start + 1))
    return toks


# ---------------------------------------------------------------- parser


class _Parser:
    def __init__(self, src: str, names: Sequence[str]):
        self.toks = _tokenize(src)
        self.i = 0
        self.names = set(names)

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def fail(self, message: str, tok: _Tok | None = None):
        tok = tok or self.tok
        raise FieldSyntaxError(message, tok.line, tok.col)

    def accept(self, *ops: str) -> _Tok | None:
        tok = self.tok
        if tok.kind == "op" and tok.text in ops:
            self.i += 1
            return tok
        return None

    def expect(self, op: str) -> None:
        if self.accept(op) is None:
            found = "end of input" if self.tok.kind == "end" else repr(self.tok.text)
            self.fail(f"expected {op!r}, found {found}")

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "end":
            self.fail(f"unexpected {self.tok.text!r}")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while (t := self.accept("+", "-")) is not None:
            e = BinOp(t.text, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while (t := self.accept("*", "/")) is not None:
            e = BinOp(t.text, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.accept("-") is not None:
            return Neg(self.unary())
        if self.accept("+") is not None:
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.accept("^") is not None:
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Num(float(tok.text))
        if tok.kind == "ident":
            self.i += 1
            name = tok.text
            if name in FUNCTIONS:
                if self.accept("(") is None:
                    self.fail(f"expected '(' after function {name!r}")
                arg = self.expr()
                self.expect(")")
                return Call(name, arg)
            m = re.fullmatch(r"x([1-9]\d*)", name)
            if m:
                return Var(int(m.group(1)))
            if name == "r" or name in self.names:
                return Name(name)
            self.fail(f"unknown identifier {name!r}", tok)
        if self.accept("(") is not None:
            e = self.expr()
            self.expect(")")
            return e
        if tok.kind == "end":
            self.fail("unexpected end of input")
        self.fail(f"unexpected {tok.text!r}")


def parse(src: str, names: Sequence[str] = ()) -> Expr:
    """Parse ``src`` into an AST.  ``names`` enables extra identifiers (angles)."""
    for nm in names:
        if nm not in ANGLE_NAMES:
            raise ValueError(f"unsupported extra identifier {nm!r}")
    return _Parser(src, names).parse()


# ---------------------------------------------------------------- evaluation


def _eval(e: Expr, env: Mapping[str, np.ndarray], x: np.ndarray):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        if e.index > x.shape[-1]:
            raise IndexError(f"x{e.index} used on a {x.shape[-1]}-dimensional point")
        return x[..., e.index - 1]
    if isinstance(e, Name):
        return env[e.name]
    if isinstance(e, Neg):
        return -_eval(e.operand, env, x)
    if isinstance(e, Call):
        return FUNCTIONS[e.func](_eval(e.arg, env, x))
    a = _eval(e.left, env, x)
    b = _eval(e.right, env, x)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if e.op == "/":
        return a / b
    return np.power(a, b)


class _LazyEnv(dict):
    def __init__(self, x: np.ndarray, angles: Mapping[str, np.ndarray]):
        super().__init__(angles)
        self.x = x

    def __missing__(self, key):
        if key == "r":
            val = np.sqrt(np.sum(self.x * self.x, axis=-1))
            self[key] = val
            return val
        raise KeyError(f"variable {key!r} has no value in this context")


def evaluate(e: Expr, x, angles: Mapping[str, np.ndarray] | None = None) -> np.ndarray:
    """Evaluate ``e`` at points ``x`` (shape ``(..., n)``).

    Raises FieldEvalError if any result is NaN or infinite.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    env = _LazyEnv(x, angles or {})
    with np.errstate(all="ignore"):
        out = np.asarray(_eval(e, env, x), dtype=float)
    out = np.broadcast_to(out, x.shape[:-1]).copy() if out.shape != x.shape[:-1] else out
    if not np.all(np.isfinite(out)):
        bad = np.argwhere(~np.isfinite(np.atleast_1d(out)))[0]
        where = x[tuple(bad)] if x.ndim > 1 else x
        raise FieldEvalError(f"non-finite value at point {np.asarray(where).tolist()}")
    return out


def max_var_index(e: Expr) -> int:
    if isinstance(e, Var):
        return e.index
    if isinstance(e, (Neg,)):
        return max_var_index(e.operand)
    if isinstance(e, Call):
        return max_var_index(e.arg)
    if isinstance(e, BinOp):
        return max(max_var_index(e.left), max_var_index(e.right))
    return 0


# ---------------------------------------------------------------- printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _PREC["neg"]
    if isinstance(e, Num) and e.value < 0:
        return _PREC["neg"]
    return _PREC["atom"]


def to_source(e: Expr) -> str:
    """Render with the minimum parentheses needed to re-parse to the same tree."""
    if isinstance(e, Num):
        return repr(e.value) if e.value != int(e.value) or abs(e.value) >= 1e16 else str(int(e.value))
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Name):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({to_source(e.arg)})"
    if isinstance(e, Neg):
        inner = to_source(e.operand)
        if _prec(e.operand) < _PREC["neg"]:
            inner = f"({inner})"
        return f"-{inner}"
    p = _PREC[e.op]
    left, right = to_source(e.left), to_source(e.right)
    if e.op == "^":
        # base must be an atom; exponent may be a unary or another power
        if _prec(e.left) <= p:
            left = f"({left})"
        if _prec(e.right) < _PREC["neg"]:
            right = f"({right})"
    else:
        if _prec(e.left) < p:
            left = f"({left})"
        if _prec(e.right) <= p:
            right = f"({right})"
    return f"{left} {e.op} {right}"


def dump(e: Expr) -> str:
    """Compact structural form, e.g. ``Add(Var(1), Mul(2, Var(2)))``."""
    names = {"+": "Add", "-": "Sub", "*": "Mul", "/": "Div", "^": "Pow"}
    if isinstance(e, Num):
        v = e.value
        return str(int(v)) if v == int(v) and abs(v) < 1e16 else repr(v)
    if isinstance(e, Var):
        return f"Var({e.index})"
    if isinstance(e, Name):
        return f"Name({e.name})"
    if isinstance(e, Neg):
        return f"Neg({dump(e.operand)})"
    if isinstance(e, Call):
        return f"{e.func}({dump(e.arg)})"
    return f"{names[e.op]}({dump(e.left)}, {dump(e.right)})"


class CompiledField:
    """A parsed expression bound to its source text; callable on point arrays."""

    def __init__(self, src: str, names: Sequence[str] = ()):
        self.src = src
        self.expr = parse(src, names)

    def __call__(self, x, angles=None) -> np.ndarray:
        return evaluate(self.expr, x, angles)

    def __repr__(self):
        return f"CompiledField({self.src!r})"
