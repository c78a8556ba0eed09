"""The scalar expression language used by model files.

Grammar (whitespace insensitive)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('+' | '-') unary | power
    power   := atom ('^' unary)?
    atom    := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

``^`` is right associative and binds tighter than a leading minus, so
``-x^2`` is ``-(x^2)``.  Functions are ``sin cos exp sqrt``; the only named
constant is ``pi``.  There are no conditionals and no user functions.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import dual

FUNCTIONS = {"sin": dual.sin, "cos": dual.cos, "exp": dual.exp, "sqrt": dual.sqrt}
CONSTANTS = {"pi": math.pi}

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t]+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


class ParseError(ValueError):
    """Syntax or name error in an expression, with 1-based line/column."""

    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    column: int


def tokenize(text: str, line: int = 1, column0: int = 1) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, column0 + pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), column0 + pos))
        pos = m.end()
    tokens.append(Token("end", "", column0 + len(text)))
    return tokens


# AST nodes are plain tuples: ("num", v) ("var", name) ("neg", a) ("call", f, a)
# and (op, a, b) for op in + - * / ^.


class _Parser:
    def __init__(self, text: str, line: int, column0: int):
        self.tokens = tokenize(text, line, column0)
        self.i = 0
        self.line = line

    def peek(self) -> Token:
        return self.tokens[self.i]

    def take(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, msg: str, tok: Token | None = None):
        tok = tok or self.peek()
        raise ParseError(msg, self.line, tok.column)

    def parse(self):
        if self.peek().kind == "end":
            self.fail("empty expression")
        node = self.expr()
        if self.peek().kind != "end":
            self.fail(f"unexpected {self.peek().text!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek().text in ("+", "-") and self.peek().kind == "op":
            op = self.take().text
            node = (op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek().text in ("*", "/") and self.peek().kind == "op":
            op = self.take().text
            node = (op, node, self.unary())
        return node

    def unary(self):
        tok = self.peek()
        if tok.kind == "op" and tok.text in ("+", "-"):
            self.take()
            inner = self.unary()
            return inner if tok.text == "+" else ("neg", inner)
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.take()
            return ("^", base, self.unary())
        return base

    def atom(self):
        tok = self.take()
        if tok.kind == "num":
            return ("num", float(tok.text))
        if tok.kind == "name":
            if self.peek().text == "(":
                if tok.text not in FUNCTIONS:
                    self.fail(f"unknown function {tok.text!r}", tok)
                self.take()
                arg = self.expr()
                if self.take().text != ")":
                    self.fail("expected ')'", self.tokens[self.i - 1])
                return ("call", tok.text, arg)
            if tok.text in FUNCTIONS:
                self.fail(f"function {tok.text!r} needs an argument", tok)
            if tok.text in CONSTANTS:
                return ("num", CONSTANTS[tok.text])
            return ("var", tok.text, tok.column)
        if tok.text == "(":
            node = self.expr()
            if self.take().text != ")":
                self.fail("expected ')'", self.tokens[self.i - 1])
            return node
        self.fail(f"unexpected {tok.text or 'end of input'!r}", tok)


def parse(text: str, line: int = 1, column0: int = 1):
    """Parse ``text`` into an AST tuple."""
    return _Parser(text, line, column0).parse()


def free_names(node) -> set[str]:
    kind = node[0]
    if kind == "num":
        return set()
    if kind == "var":
        return {node[1]}
    if kind == "neg":
        return free_names(node[1])
    if kind == "call":
        return free_names(node[2])
    return free_names(node[1]) | free_names(node[2])


def _compile(node, index: dict[str, int]) -> Callable:
    kind = node[0]
    if kind == "num":
        v = node[1]
        return lambda X: v
    if kind == "var":
        k = index[node[1]]
        return lambda X: X[k]
    if kind == "neg":
        f = _compile(node[1], index)
        return lambda X: -f(X)
    if kind == "call":
        fn = FUNCTIONS[node[1]]
        f = _compile(node[2], index)
        return lambda X: fn(f(X))
    a = _compile(node[1], index)
    b = _compile(node[2], index)
    if kind == "+":
        return lambda X: a(X) + b(X)
    if kind == "-":
        return lambda X: a(X) - b(X)
    if kind == "*":
        return lambda X: a(X) * b(X)
    if kind == "/":
        return lambda X: a(X) / b(X)
    if node[2][0] == "num":
        p = node[2][1]
        return lambda X: _pow_const(a(X), p)
    return lambda X: _pow(a(X), b(X))


def _pow_const(x, p):
    if isinstance(x, dual.Dual):
        return x**p
    return np.power(x, p)


def _pow(x, y):
    if isinstance(x, dual.Dual) or isinstance(y, dual.Dual):
        if isinstance(y, dual.Dual):
            return dual.exp(y * dual.log(x))
        return x**y
    return np.power(x, y)


@dataclass(frozen=True)
class Expression:
    """A parsed expression bound to an ordered list of variable names."""

    source: str
    variables: tuple[str, ...]
    ast: tuple
    fn: Callable

    def __call__(self, X: Sequence):
        return self.fn(X)

    @property
    def is_constant(self) -> bool:
        return self.ast[0] == "num"


def compile_expression(text: str, variables: Sequence[str], line: int = 1, column0: int = 1) -> Expression:
    """Parse and bind ``text``; unknown names raise :class:`ParseError`."""
    ast = parse(text, line, column0)
    index = {name: k for k, name in enumerate(variables)}
    _check_names(ast, index, line)
    return Expression(text.strip(), tuple(variables), ast, _compile(ast, index))


def _check_names(node, index, line):
    kind = node[0]
    if kind == "var":
        if node[1] not in index:
            raise ParseError(f"unknown variable {node[1]!r}", line, node[2])
    elif kind == "neg":
        _check_names(node[1], index, line)
    elif kind == "call":
        _check_names(node[2], index, line)
    elif kind != "num":
        _check_names(node[1], index, line)
        _check_names(node[2], index, line)
