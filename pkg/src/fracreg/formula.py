"""A small expression language for right-hand sides and potentials.

Grammar (``^`` binds tighter than unary minus and associates to the right)::

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := ('+' | '-') unary | power
    power := atom ('^' unary)?
    atom  := NUMBER | 'x' | 'd' | 'pi' | '(' expr ')'
           | ('exp' | 'cos' | 'sin') '(' expr ')' | 'bump' '(' expr ',' expr ')'

``d`` is the distance to the nearer endpoint of the domain the formula is
bound to.  ``bump(c, w)`` is ``exp(-1 / (1 - z^2))`` with ``z = (x - c) / w``
for ``|z| < 1`` and exactly zero elsewhere.
"""
from __future__ import annotations

import operator
import re
from typing import Callable, List, Optional, Tuple

import numpy as np

from .errors import ConfigError, ParseError

_TOKEN = re.compile(r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))")
_UNARY = {"exp": np.exp, "cos": np.cos, "sin": np.sin}

Node = Callable[[np.ndarray, Optional[np.ndarray]], np.ndarray]


def bump(x, c, w):
    x = np.asarray(x, dtype=float)
    z = (x - c) / w
    inside = np.abs(z) < 1
    out = np.zeros(np.broadcast(x, z).shape)
    zi = np.broadcast_to(z, out.shape)[inside]
    out[inside] = np.exp(-1.0 / (1.0 - zi ** 2))
    return out


def _tokenize(text: str) -> List[Tuple[str, str, int]]:
    tokens, pos = [], 0
    stripped = text.rstrip()
    while pos < len(stripped):
        m = _TOKEN.match(stripped, pos)
        if not m or m.end() == pos:
            pos += len(stripped[pos:]) - len(stripped[pos:].lstrip())
            raise ParseError(f"unexpected character {stripped[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(stripped)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0
        self.uses_d = False

    def peek(self):
        return self.tokens[self.i]

    def take(self, value=None):
        tok = self.tokens[self.i]
        if value is not None and tok[1] != value:
            found = tok[1] or "end of input"
            raise ParseError(f"expected {value!r}, found {found!r}", tok[2])
        self.i += 1
        return tok

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ParseError(f"unexpected {tok[1]!r}", tok[2])
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            node = _binary(node, rhs, operator.add if op == "+" else operator.sub)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            rhs = self.unary()
            node = _binary(node, rhs, operator.mul if op == "*" else operator.truediv)
        return node

    def unary(self):
        if self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            inner = self.unary()
            return inner if op == "+" else (lambda x, d: operator.neg(inner(x, d)))
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            expo = self.unary()
            return _binary(base, expo, operator.pow)
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            c = np.float64(val)
            # scalar constants keep numpy's x**2 and x**0.5 fast paths
            return lambda x, d: c
        if kind == "name":
            if val == "x":
                return lambda x, d: x
            if val == "d":
                self.uses_d = True
                return lambda x, d: d
            if val == "pi":
                return lambda x, d: np.float64(np.pi)
            if val in _UNARY:
                fn = _UNARY[val]
                self.take("(")
                arg = self.expr()
                self.take(")")
                return lambda x, d: fn(arg(x, d))
            if val == "bump":
                self.take("(")
                c = self.expr()
                self.take(",")
                w = self.expr()
                self.take(")")
                return lambda x, d: bump(x, c(x, d), w(x, d))
            raise ParseError(f"unknown name {val!r}", pos)
        if val == "(":
            node = self.expr()
            self.take(")")
            return node
        raise ParseError(f"unexpected {val or 'end of input'!r}", pos)


def _binary(lhs, rhs, op):
    return lambda x, d: op(lhs(x, d), rhs(x, d))


class Formula:
    """Parsed expression; call with an array of ``x`` values."""

    def __init__(self, text: str, node: Node, uses_d: bool, domain=None):
        self.text = text
        self._node = node
        self.uses_d = uses_d
        self.domain = domain

    def bind(self, domain: Tuple[float, float]) -> "Formula":
        return Formula(self.text, self._node, self.uses_d, (float(domain[0]), float(domain[1])))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        d = None
        if self.uses_d:
            if self.domain is None:
                raise ConfigError(f"formula {self.text!r} uses d but is not bound to a domain")
            lo, hi = self.domain
            d = np.minimum(x - lo, hi - x)
        with np.errstate(all="ignore"):
            out = self._node(x, d)
        return np.array(np.broadcast_to(np.asarray(out, dtype=float), x.shape))

    def is_constant(self) -> bool:
        probe = np.linspace(-3.0, 3.0, 7)
        if self.uses_d:
            return False
        vals = self(probe)
        return bool(np.all(vals == vals[0]))

    def __repr__(self):
        return f"Formula({self.text!r})"


def parse_formula(text: str, domain: Optional[Tuple[float, float]] = None) -> Formula:
    if not isinstance(text, str) or not text.strip():
        raise ParseError("empty formula", 0)
    p = _Parser(text)
    node = p.parse()
    f = Formula(text.strip(), node, p.uses_d)
    return f.bind(domain) if domain is not None else f
