"""Tiny arithmetic expression language for config-file fields.

Grammar (usual precedence, ^ binds tightest and associates right):

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := '-' unary | power
    power := atom ('^' unary)?
    atom  := number | name '(' expr ')' | name | '(' expr ')'

Names: the coordinates x and y, the constants pi and e, and the functions
sin, cos, exp, log, abs, sqrt.  Errors carry the character position.
"""

from __future__ import annotations

import math
import re
from typing import Callable

import numpy as np

__all__ = ["ExprError", "parse_expr", "compile_expr"]

_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "abs": np.abs,
    "sqrt": np.sqrt,
}
_CONSTS = {"pi": math.pi, "e": math.e}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


class ExprError(ValueError):
    """Parse or evaluation failure, annotated with the source position."""

    def __init__(self, message: str, pos: int, src: str):
        super().__init__(f"{message} at position {pos}: {src!r}")
        self.pos = pos


def _tokenize(src: str):
    toks = []
    i = 0
    while i < len(src):
        m = _TOKEN.match(src, i)
        if m is None or m.end() == i:
            stripped = src[i:].lstrip()
            if not stripped:
                break
            raise ExprError(f"unexpected character {stripped[0]!r}", i, src)
        if m.group("num") is not None:
            toks.append(("num", float(m.group("num")), m.start("num")))
        elif m.group("name") is not None:
            toks.append(("name", m.group("name"), m.start("name")))
        else:
            toks.append(("op", m.group("op"), m.start("op")))
        i = m.end()
    toks.append(("end", None, len(src)))
    return toks


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.toks = _tokenize(src)
        self.k = 0

    def peek(self):
        return self.toks[self.k]

    def take(self):
        t = self.toks[self.k]
        self.k += 1
        return t

    def expect_op(self, op: str):
        kind, val, pos = self.take()
        if kind != "op" or val != op:
            raise ExprError(f"expected {op!r}", pos, self.src)

    def parse(self):
        node = self.expr()
        kind, _, pos = self.peek()
        if kind != "end":
            raise ExprError("trailing input", pos, self.src)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[:2] in (("op", "+"), ("op", "-")):
            _, op, _ = self.take()
            node = (op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[:2] in (("op", "*"), ("op", "/")):
            _, op, _ = self.take()
            node = (op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return ("neg", self.unary())
        return self.power()

    def power(self):
        node = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            node = ("^", node, self.unary())
        return node

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return ("num", val)
        if kind == "name":
            if val in _FUNCS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return ("call", val, arg)
            if val in _CONSTS:
                return ("num", _CONSTS[val])
            if val in ("x", "y"):
                return ("var", val)
            raise ExprError(f"unknown name {val!r}", pos, self.src)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ExprError("expected a value", pos, self.src)


def parse_expr(src: str):
    """Parse to a nested-tuple AST; raises ExprError with a position."""
    if not src.strip():
        raise ExprError("empty expression", 0, src)
    return _Parser(src).parse()


def _eval(node, x, y):
    tag = node[0]
    if tag == "num":
        return node[1]
    if tag == "var":
        return x if node[1] == "x" else y
    if tag == "neg":
        return -_eval(node[1], x, y)
    if tag == "call":
        return _FUNCS[node[1]](_eval(node[2], x, y))
    a = _eval(node[1], x, y)
    b = _eval(node[2], x, y)
    if tag == "+":
        return a + b
    if tag == "-":
        return a - b
    if tag == "*":
        return a * b
    if tag == "/":
        return a / b
    if tag == "^":
        return a**b
    raise AssertionError(f"bad node {tag!r}")


def compile_expr(src: str) -> Callable:
    """Compile to a vectorized fn(x, y) -> array (broadcasting numpy ops)."""
    ast = parse_expr(src)

    def fn(x, y):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = _eval(ast, np.asarray(x, dtype=np.float64),
                        np.asarray(y, dtype=np.float64))
        return np.broadcast_arrays(out, np.asarray(x, dtype=np.float64))[0].astype(
            np.float64, copy=False
        )

    return fn
