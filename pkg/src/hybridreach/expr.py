"""Scalar expressions over the state vector x1..xn.

Grammar (whitespace insignificant)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | IDENT | IDENT "(" expr ("," expr)* ")" | "(" expr ")"

``^`` is right associative and binds tighter than unary minus, so
``-x1^2`` is ``-(x1^2)``.  Expressions compile to closures at parse time.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class ExprError(Exception):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} at byte {offset}")
        self.offset = offset


class UnknownIdentifier(ExprError):
    pass


class ArityError(ExprError):
    pass


class DomainError(ExprError):
    pass


def _sqrt(a):
    if a < 0:
        raise DomainError(f"sqrt of negative number {a!r}")
    return math.sqrt(a)


def _exp(a):
    try:
        return math.exp(a)
    except OverflowError:
        raise DomainError(f"exp overflow at {a!r}") from None


# name -> (function, min arity, max arity)
FUNCTIONS: dict[str, tuple[Callable, int, int | None]] = {
    "sin": (math.sin, 1, 1),
    "cos": (math.cos, 1, 1),
    "exp": (_exp, 1, 1),
    "sqrt": (_sqrt, 1, 1),
    "abs": (abs, 1, 1),
    "min": (min, 2, None),
    "max": (max, 2, None),
}


# AST nodes: ("num", value) ("var", index) ("par", name) ("neg", a)
# ("bin", op, a, b) ("call", name, args)
Node = tuple


_TOKEN = re.compile(
    rb"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    rb"|(?P<id>[A-Za-z_][A-Za-z_0-9]*)"
    rb"|(?P<op>[-+*/^(),]))"
)


def _tokenize(data: bytes):
    toks = []
    pos = 0
    n = len(data)
    while pos < n:
        m = _TOKEN.match(data, pos)
        if m is None:
            # trailing whitespace, or an unrecognised byte
            rest = data[pos:]
            if rest.strip() == b"":
                break
            off = pos + (len(rest) - len(rest.lstrip()))
            raise ExprSyntaxError(f"unexpected character {data[off:off + 1]!r}", off)
        kind = m.lastgroup
        toks.append((kind, m.group(kind).decode("ascii"), m.start(kind)))
        pos = m.end()
    toks.append(("end", "", n))
    return toks


class _Parser:
    def __init__(self, text: str, dim: int, params: Sequence[str]):
        self.data = text.encode("utf-8")
        self.toks = _tokenize(self.data)
        self.i = 0
        self.dim = dim
        self.params = tuple(params)

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, val):
        t = self.take()
        if t[1] != val or t[0] == "end":
            raise ExprSyntaxError(f"expected {val!r}, got {t[1] or 'end of input'!r}", t[2])
        return t

    def parse(self) -> Node:
        node = self.expr()
        t = self.peek()
        if t[0] != "end":
            raise ExprSyntaxError(f"unexpected token {t[1]!r}", t[2])
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = ("bin", op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = ("bin", op, node, self.unary())
        return node

    def unary(self):
        t = self.peek()
        if t[0] == "op" and t[1] == "-":
            self.take()
            return ("neg", self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        t = self.peek()
        if t[0] == "op" and t[1] == "^":
            self.take()
            return ("bin", "^", base, self.unary())
        return base

    def atom(self):
        kind, val, off = self.take()
        if kind == "num":
            return ("num", float(val))
        if kind == "id":
            nxt = self.peek()
            if nxt[0] == "op" and nxt[1] == "(":
                return self.call(val, off)
            return self.ident(val, off)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ExprSyntaxError(f"unexpected {val or 'end of input'!r}", off)

    def ident(self, name, off):
        m = re.fullmatch(r"x([1-9]\d*)", name)
        if m:
            k = int(m.group(1))
            if k > self.dim:
                raise UnknownIdentifier(
                    f"{name} at byte {off} exceeds dimension {self.dim}")
            return ("var", k - 1)
        if name in self.params:
            return ("par", name)
        raise UnknownIdentifier(f"unknown identifier {name!r} at byte {off}")

    def call(self, name, off):
        if name not in FUNCTIONS:
            raise UnknownIdentifier(f"unknown function {name!r} at byte {off}")
        self.expect("(")
        args = [self.expr()]
        while self.peek()[1] == "," and self.peek()[0] == "op":
            self.take()
            args.append(self.expr())
        self.expect(")")
        _, lo, hi = FUNCTIONS[name]
        if len(args) < lo or (hi is not None and len(args) > hi):
            want = str(lo) if hi == lo else f"at least {lo}"
            raise ArityError(f"{name} takes {want} argument(s), got {len(args)} (byte {off})")
        return ("call", name, tuple(args))


def _div(a, b):
    if b == 0:
        raise DomainError("division by zero")
    return a / b


def _pow(a, b):
    try:
        r = a ** b
    except ZeroDivisionError:
        raise DomainError(f"0 raised to negative power {b!r}") from None
    except OverflowError:
        raise DomainError(f"overflow in {a!r}^{b!r}") from None
    if isinstance(r, complex):
        raise DomainError(f"negative base {a!r} with fractional exponent {b!r}")
    return r


_BIN = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": _div,
    "^": _pow,
}


def _compile(node: Node):
    kind = node[0]
    if kind == "num":
        v = node[1]
        return lambda x, p: v
    if kind == "var":
        k = node[1]
        return lambda x, p: x[k]
    if kind == "par":
        name = node[1]
        return lambda x, p: p[name]
    if kind == "neg":
        f = _compile(node[1])
        return lambda x, p: -f(x, p)
    if kind == "bin":
        op = _BIN[node[1]]
        fa, fb = _compile(node[2]), _compile(node[3])
        return lambda x, p: op(fa(x, p), fb(x, p))
    if kind == "call":
        fn = FUNCTIONS[node[1]][0]
        fs = [_compile(a) for a in node[2]]
        if len(fs) == 1:
            f0 = fs[0]
            return lambda x, p: fn(f0(x, p))
        return lambda x, p: fn(*[f(x, p) for f in fs])
    raise ExprError(f"bad node {node!r}")


def to_text(node: Node) -> str:
    """Print an AST so that parsing the result gives the same tree."""
    kind = node[0]
    if kind == "num":
        v = node[1]
        s = repr(float(v))
        if s in ("inf", "nan", "-inf"):
            raise ExprError("non-finite literal")
        return s if v >= 0 else f"({s})"
    if kind == "var":
        return f"x{node[1] + 1}"
    if kind == "par":
        return node[1]
    if kind == "neg":
        return f"(-{to_text(node[1])})"
    if kind == "bin":
        return f"({to_text(node[2])} {node[1]} {to_text(node[3])})"
    if kind == "call":
        return f"{node[1]}({', '.join(to_text(a) for a in node[2])})"
    raise ExprError(f"bad node {node!r}")


@dataclass(frozen=True)
class Expr:
    ast: Node
    dim: int
    text: str
    params: tuple = ()
    _fn: Callable = field(repr=False, compare=False, default=None)

    def __call__(self, x, params: dict | None = None) -> float:
        return self.eval(x, params)

    def eval(self, x, params: dict | None = None) -> float:
        if len(x) != self.dim:
            raise ValueError(f"expected state of length {self.dim}, got {len(x)}")
        p = params or {}
        if self.params:
            for name in self.params:
                if name not in p:
                    raise ExprError(f"parameter {name!r} not bound")
        xs = np.asarray(x, dtype=float).tolist()
        try:
            val = float(self._fn(xs, p))
        except OverflowError:
            raise DomainError("overflow") from None
        if not math.isfinite(val):
            raise DomainError(f"non-finite value {val!r} for {self.text!r} at {list(x)!r}")
        return val

    def print(self) -> str:
        return to_text(self.ast)

    def uses_param(self, name: str) -> bool:
        def walk(n):
            if n[0] == "par":
                return n[1] == name
            if n[0] == "neg":
                return walk(n[1])
            if n[0] == "bin":
                return walk(n[2]) or walk(n[3])
            if n[0] == "call":
                return any(walk(a) for a in n[2])
            return False
        return walk(self.ast)


def parse_expr(text: str, dim: int, params: Sequence[str] = ()) -> Expr:
    """Parse ``text`` into an expression over x1..x{dim}.

    ``params`` names extra scalar symbols (for example ``delta`` in a
    perturbation family) that must be bound at evaluation time.
    """
    if dim < 1:
        raise ValueError("dim must be positive")
    ast = _Parser(text, dim, params).parse()
    return Expr(ast=ast, dim=dim, text=text, params=tuple(params), _fn=_compile(ast))


def eval_expr(expr: Expr, x, params: dict | None = None) -> float:
    return expr.eval(x, params)


def default_step(x) -> float:
    return 1e-6 * max(1.0, float(np.linalg.norm(x)))


def grad(expr: Expr, x, h: float | None = None, params: dict | None = None) -> np.ndarray:
    """Central-difference gradient, default step 1e-6*max(1, |x|)."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = default_step(x)
    g = np.empty(len(x))
    for i in range(len(x)):
        e = np.zeros(len(x))
        e[i] = h
        g[i] = (expr.eval(x + e, params) - expr.eval(x - e, params)) / (2 * h)
    return g


@dataclass(frozen=True)
class VecExpr:
    components: tuple
    dim: int

    def __post_init__(self):
        if len(self.components) == 0:
            raise ValueError("empty vector expression")
        for c in self.components:
            if c.dim != self.dim:
                raise ValueError("component dimension mismatch")

    def eval(self, x, params: dict | None = None) -> np.ndarray:
        if len(x) != self.dim:
            raise ValueError(f"expected state of length {self.dim}, got {len(x)}")
        p = params or {}
        for c in self.components:
            for name in c.params:
                if name not in p:
                    raise ExprError(f"parameter {name!r} not bound")
        xs = np.asarray(x, dtype=float).tolist()
        try:
            vals = [float(c._fn(xs, p)) for c in self.components]
        except OverflowError:
            raise DomainError("overflow") from None
        for c, v in zip(self.components, vals):
            if not math.isfinite(v):
                raise DomainError(f"non-finite value {v!r} for {c.text!r} at {xs!r}")
        return np.array(vals)

    __call__ = eval

    def texts(self) -> list[str]:
        return [c.text for c in self.components]


def parse_vec(texts: Sequence[str], dim: int, params: Sequence[str] = ()) -> VecExpr:
    return VecExpr(tuple(parse_expr(t, dim, params) for t in texts), dim)


def affine_form(expr: Expr):
    """Return (a, b) with expr(x) == a.x + b when the tree is affine, else None."""
    n = expr.dim

    def walk(node):
        kind = node[0]
        if kind == "num":
            return np.zeros(n), node[1]
        if kind == "var":
            a = np.zeros(n)
            a[node[1]] = 1.0
            return a, 0.0
        if kind == "par":
            return None
        if kind == "neg":
            r = walk(node[1])
            return None if r is None else (-r[0], -r[1])
        if kind == "bin":
            op = node[1]
            ra, rb = walk(node[2]), walk(node[3])
            if ra is None or rb is None:
                return None
            (a1, b1), (a2, b2) = ra, rb
            c1, c2 = not a1.any(), not a2.any()
            try:
                if op == "+":
                    return a1 + a2, b1 + b2
                if op == "-":
                    return a1 - a2, b1 - b2
                if op == "*":
                    if c1:
                        return b1 * a2, b1 * b2
                    if c2:
                        return b2 * a1, b1 * b2
                    return None
                if op == "/":
                    if c2 and b2 != 0:
                        return a1 / b2, b1 / b2
                    return None
                if op == "^":
                    if c1 and c2:
                        return np.zeros(n), float(_pow(b1, b2))
                    if c2 and b2 == 1:
                        return a1, b1
                    return None
            except ExprError:
                return None
        if kind == "call":
            parts = [walk(a) for a in node[2]]
            if any(p is None or p[0].any() for p in parts):
                return None
            try:
                return np.zeros(n), float(FUNCTIONS[node[1]][0](*[p[1] for p in parts]))
            except ExprError:
                return None
        return None

    r = walk(expr.ast)
    if r is None:
        return None
    return np.asarray(r[0], dtype=float), float(r[1])


def bind(expr: Expr, values: dict) -> Expr:
    """Substitute numeric values for named parameters."""
    def walk(node):
        kind = node[0]
        if kind == "par":
            if node[1] in values:
                return ("num", float(values[node[1]]))
            return node
        if kind == "neg":
            return ("neg", walk(node[1]))
        if kind == "bin":
            return ("bin", node[1], walk(node[2]), walk(node[3]))
        if kind == "call":
            return ("call", node[1], tuple(walk(a) for a in node[2]))
        return node

    if not expr.params:
        return expr
    ast = walk(expr.ast)
    rest = tuple(p for p in expr.params if p not in values)
    return Expr(ast=ast, dim=expr.dim, text=to_text(ast), params=rest, _fn=_compile(ast))


def constant(value: float, dim: int) -> Expr:
    return parse_expr(repr(float(value)) if value >= 0 else f"-{repr(-float(value))}", dim)
