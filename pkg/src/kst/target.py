"""Target functions on the unit cube: a registry of built-ins, a small
expression language, and empirical modulus-of-continuity estimation.

Grammar (EBNF):

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := '-' factor | power
    power  := atom ('^' factor)?
    atom   := NUMBER | VAR | IDENT '(' expr ')' | '(' expr ')'
    VAR    := 'x' [1-9][0-9]*

Precedence is ^ above unary minus above * and /, with ^ right
associative. NUMBER is a plain decimal literal. The only functions are
sin, cos, exp, abs and sqrt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import BudgetError, DomainError, ExpressionError

MODULUS_POINT_BUDGET = 10**6

FUNCTIONS: dict[str, Callable[[float], float]] = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "abs": abs,
    "sqrt": math.sqrt,
}


# -- abstract syntax ---------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based


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


Expr = Num | Var | Neg | BinOp | Call


# -- tokenizer and parser ----------------------------------------------------


@dataclass(frozen=True)
class _Token:
    kind: str  # 'num', 'ident', 'var', op character, or 'end'
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    i = 0
    while i < len(text):
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in "+-*/^()":
            tokens.append(_Token(c, c, i))
            i += 1
            continue
        if c.isdigit() or c == ".":
            start = i
            seen_dot = False
            while i < len(text) and (text[i].isdigit() or text[i] == "."):
                if text[i] == ".":
                    if seen_dot:
                        raise ExpressionError("malformed number", i)
                    seen_dot = True
                i += 1
            lit = text[start:i]
            if lit == ".":
                raise ExpressionError("malformed number", start)
            tokens.append(_Token("num", lit, start))
            continue
        if c.isalpha():
            start = i
            while i < len(text) and (text[i].isalnum() or text[i] == "_"):
                i += 1
            word = text[start:i]
            if word[0] == "x" and len(word) > 1 and word[1:].isdigit():
                tokens.append(_Token("var", word, start))
            else:
                tokens.append(_Token("ident", word, start))
            continue
        raise ExpressionError(f"unexpected character {c!r}", i)
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token], n: int):
        self.tokens = tokens
        self.n = n
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            raise ExpressionError(f"expected {kind!r}", tok.pos)
        return self.advance()

    def parse(self) -> Expr:
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ExpressionError("trailing input", tok.pos)
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.peek().kind in ("+", "-"):
            op = self.advance().kind
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.peek().kind in ("*", "/"):
            op = self.advance().kind
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Expr:
        if self.peek().kind == "-":
            self.advance()
            return Neg(self.factor())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek().kind == "^":
            self.advance()
            return BinOp("^", base, self.factor())
        return base

    def atom(self) -> Expr:
        tok = self.peek()
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "var":
            self.advance()
            index = int(tok.text[1:])
            if index < 1 or index > self.n:
                raise ExpressionError(
                    f"variable {tok.text} out of range for dimension {self.n}", tok.pos
                )
            return Var(index)
        if tok.kind == "ident":
            self.advance()
            if tok.text not in FUNCTIONS:
                raise ExpressionError(f"unknown identifier {tok.text!r}", tok.pos)
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return Call(tok.text, arg)
        if tok.kind == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        raise ExpressionError("expected a value", tok.pos)


def parse(text: str, n: int) -> Expr:
    """Parse an expression over x1..xn; errors carry byte offsets."""
    if not text.strip():
        raise ExpressionError("empty expression", 0)
    return _Parser(_tokenize(text), n).parse()


def eval_expr(e: Expr, p: Sequence[float]) -> float:
    """Standard recursive evaluation with domain guards."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return float(p[e.index - 1])
    if isinstance(e, Neg):
        return -eval_expr(e.operand, p)
    if isinstance(e, Call):
        arg = eval_expr(e.arg, p)
        try:
            return FUNCTIONS[e.func](arg)
        except (ValueError, OverflowError) as exc:
            raise DomainError(f"{e.func}({arg}) is undefined") from exc
    if isinstance(e, BinOp):
        a = eval_expr(e.left, p)
        b = eval_expr(e.right, p)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if b == 0.0:
                raise DomainError("division by zero")
            return a / b
        try:
            r = a**b
        except (ValueError, OverflowError, ZeroDivisionError) as exc:
            raise DomainError(f"{a} ^ {b} is undefined") from exc
        if isinstance(r, complex):
            raise DomainError(f"{a} ^ {b} is not real")
        return r
    raise TypeError(f"not an expression node: {e!r}")


def pretty(e: Expr) -> str:
    """Fully parenthesized rendering; parses back to the same function."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Neg):
        return f"(-{pretty(e.operand)})"
    if isinstance(e, Call):
        return f"{e.func}({pretty(e.arg)})"
    return f"({pretty(e.left)}{e.op}{pretty(e.right)})"


# -- target functions --------------------------------------------------------


@dataclass(frozen=True)
class TargetFunction:
    """A function on [0,1]^dim with a known or estimated sup-norm bound."""

    dim: int
    fn: Callable[[Sequence[float]], float]
    sup_norm_bound: float
    provenance: dict

    def __call__(self, p: Sequence[float]) -> float:
        return self.fn(p)

    def eval_batch(self, pts: np.ndarray) -> np.ndarray:
        """Vectorized evaluation of an (N, dim) array of points."""
        return np.asarray([self.fn(row) for row in pts], dtype=float)


def _builtin_specs(n: int) -> dict[str, tuple[Callable, float]]:
    return {
        "zero": (lambda p: 0.0, 0.0),
        "one": (lambda p: 1.0, 1.0),
        "product": (lambda p: math.prod(p), 1.0),
        "gaussian": (lambda p: math.exp(-sum(v * v for v in p)), 1.0),
        "ridge": (lambda p: math.sin(math.pi * sum(p)) / n, 1.0 / n),
    }


def builtin_names() -> list[str]:
    return sorted(_builtin_specs(2))


def builtin_target(name: str, n: int) -> TargetFunction:
    specs = _builtin_specs(n)
    if name not in specs:
        raise ExpressionError(
            f"unknown builtin {name!r}; choose from {sorted(specs)}"
        )
    fn, bound = specs[name]
    return TargetFunction(
        dim=n,
        fn=fn,
        sup_norm_bound=bound,
        provenance={"kind": "builtin", "name": name},
    )


def expression_target(text: str, n: int, bound_resolution: int | None = None) -> TargetFunction:
    """Target from expression text.

    The sup-norm bound is the sampled maximum on a grid matching the
    default audit resolution; exact bounds are only known for built-ins.
    """
    ast = parse(text, n)
    fn = lambda p: eval_expr(ast, p)
    if bound_resolution is None:
        bound_resolution = 101 if n <= 2 else 31
    axes = np.linspace(0.0, 1.0, bound_resolution)
    grids = np.meshgrid(*([axes] * n), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    observed = max(abs(fn(tuple(row))) for row in pts)
    return TargetFunction(
        dim=n,
        fn=fn,
        sup_norm_bound=observed,
        provenance={"kind": "expression", "text": text},
    )


def target_from_provenance(prov: dict, n: int) -> TargetFunction:
    if prov["kind"] == "builtin":
        return builtin_target(prov["name"], n)
    return expression_target(prov["text"], n)


def modulus_estimate(
    f,
    resolution: int,
    steps: Sequence[float],
    dim: int | None = None,
) -> dict[float, float]:
    """Empirical modulus: max |f(x) - f(x')| over axis-aligned pairs.

    For each step h the lattice has ``resolution`` points per axis and
    x' = x + h*e_i, keeping pairs inside the cube. The returned table is
    made nondecreasing in h by a cumulative maximum.
    """
    n = dim if dim is not None else f.dim
    if resolution**n > MODULUS_POINT_BUDGET:
        raise BudgetError(
            f"resolution**n = {resolution**n} exceeds {MODULUS_POINT_BUDGET}"
        )
    fn = f.fn if isinstance(f, TargetFunction) else f
    axes = np.linspace(0.0, 1.0, resolution)
    grids = np.meshgrid(*([axes] * n), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    base = np.asarray([fn(tuple(row)) for row in pts])
    table: dict[float, float] = {}
    running = 0.0
    for h in sorted(float(s) for s in steps):
        worst = 0.0
        for axis in range(n):
            keep = pts[:, axis] + h <= 1.0 + 1e-12
            if not np.any(keep):
                continue
            shifted = pts[keep].copy()
            shifted[:, axis] = np.minimum(shifted[:, axis] + h, 1.0)
            vals = np.asarray([fn(tuple(row)) for row in shifted])
            worst = max(worst, float(np.max(np.abs(vals - base[keep]))))
        running = max(running, worst)
        table[h] = running
    return table
