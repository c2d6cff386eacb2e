"""Tiny arithmetic expression language for user-defined models.

Grammar (recursive descent, right-associative ``^``):

    expr   := term (('+'|'-') term)*
    term   := unary (('*'|'/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := number | name '(' expr ')' | name | '(' expr ')'

Names resolve to the state variables ``x1 .. xd``, named parameters, or
the functions ``sqrt``, ``exp``, ``log``.  Compiled expressions evaluate
with numpy semantics, so they broadcast over batched states.
"""

from __future__ import annotations

import re
from typing import Callable, Dict, List

import numpy as np

from .errors import ConfigError

__all__ = ["compile_expression", "Expression"]

_TOKEN = re.compile(r"\s*(?:(\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?"
                    r"|(\d+[eE][+-]?\d+)"
                    r"|([A-Za-z_][A-Za-z_0-9]*)"
                    r"|(\*\*)"
                    r"|([()+\-*/^]))")

_FUNCTIONS = {"sqrt": np.sqrt, "exp": np.exp, "log": np.log}


def _tokenize(text: str) -> List[str]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise ConfigError(f"bad character in expression at {text[pos:]!r}")
        tok = m.group(0).strip()
        tokens.append("^" if tok == "**" else tok)
        pos = m.end()
    tokens.append("<end>")
    return tokens


class _Parser:
    def __init__(self, tokens: List[str], text: str):
        self.toks = tokens
        self.i = 0
        self.text = text

    def peek(self) -> str:
        return self.toks[self.i]

    def take(self) -> str:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, tok: str) -> None:
        got = self.take()
        if got != tok:
            raise ConfigError(f"expected {tok!r}, got {got!r} in {self.text!r}")

    def expr(self):
        node = self.term()
        while self.peek() in ("+", "-"):
            op = self.take()
            node = (op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek() in ("*", "/"):
            op = self.take()
            node = (op, node, self.unary())
        return node

    def unary(self):
        if self.peek() == "-":
            self.take()
            return ("neg", self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == "^":
            self.take()
            return ("^", base, self.unary())
        return base

    def atom(self):
        tok = self.take()
        if tok == "(":
            node = self.expr()
            self.expect(")")
            return node
        if re.fullmatch(r"(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?|\d+[eE][+-]?\d+", tok):
            return ("num", float(tok))
        if re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", tok):
            if self.peek() == "(":
                self.take()
                arg = self.expr()
                self.expect(")")
                if tok not in _FUNCTIONS:
                    raise ConfigError(f"unknown function {tok!r} in {self.text!r}")
                return ("call", tok, arg)
            return ("var", tok)
        raise ConfigError(f"unexpected token {tok!r} in {self.text!r}")


class Expression:
    """A parsed expression over x1..xd and named parameters."""

    def __init__(self, text: str, dim: int, params: Dict[str, float]):
        self.text = text
        self.dim = dim
        self.params = dict(params)
        parser = _Parser(_tokenize(text), text)
        self.tree = parser.expr()
        if parser.peek() != "<end>":
            raise ConfigError(f"trailing input in expression {text!r}")
        self._check_names(self.tree)

    def _check_names(self, node) -> None:
        kind = node[0]
        if kind == "var":
            name = node[1]
            if name in self.params:
                return
            m = re.fullmatch(r"x(\d+)", name)
            if m and 1 <= int(m.group(1)) <= self.dim:
                return
            raise ConfigError(
                f"unknown name {name!r} in expression {self.text!r} "
                f"(state variables are x1..x{self.dim})")
        if kind in ("num",):
            return
        if kind == "neg":
            self._check_names(node[1])
        elif kind == "call":
            self._check_names(node[2])
        else:
            self._check_names(node[1])
            self._check_names(node[2])

    def __call__(self, x: np.ndarray):
        """Evaluate at states of shape (..., d); broadcasts over leading axes."""
        x = np.asarray(x, dtype=float)
        return self._eval(self.tree, x)

    def _eval(self, node, x):
        kind = node[0]
        if kind == "num":
            return node[1]
        if kind == "var":
            name = node[1]
            if name in self.params:
                return self.params[name]
            return x[..., int(name[1:]) - 1]
        if kind == "neg":
            return -self._eval(node[1], x)
        if kind == "call":
            return _FUNCTIONS[node[1]](self._eval(node[2], x))
        a = self._eval(node[1], x)
        b = self._eval(node[2], x)
        if kind == "+":
            return a + b
        if kind == "-":
            return a - b
        if kind == "*":
            return a * b
        if kind == "/":
            return a / b
        if kind == "^":
            return a ** b
        raise ConfigError(f"corrupt expression tree node {kind!r}")


def compile_expression(text: str, dim: int,
                       params: Dict[str, float] | None = None
                       ) -> Callable[[np.ndarray], np.ndarray]:
    """Compile one expression string into a vectorized evaluator."""
    return Expression(text, dim, params or {})
