"""Tiny arithmetic expression grammar for coefficient fields.

Grammar (all binary operators left associative except ``^`` which is right
associative and binds tighter than unary minus):

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | VAR | FUNC '(' expr (',' expr)* ')' | '(' expr ')'

Variables: ``x``, ``y`` (2-D only), ``t``.  Functions: ``abs``, ``min``,
``max`` (two or more arguments), ``sin``, ``cos``, ``exp``.  Compiled
expressions evaluate vectorized over numpy arrays.
"""

from __future__ import annotations

import numpy as np

from .errors import ParseError

_FUNCS = {
    "abs": (1, 1, np.abs),
    "sin": (1, 1, np.sin),
    "cos": (1, 1, np.cos),
    "exp": (1, 1, np.exp),
    "min": (2, None, None),
    "max": (2, None, None),
}

_VARS = ("x", "y", "t")


class _Tok:
    __slots__ = ("kind", "text", "pos")

    def __init__(self, kind, text, pos):
        self.kind = kind
        self.text = text
        self.pos = pos


def _tokenize(src):
    toks = []
    i, n = 0, len(src)
    while i < n:
        c = src[i]
        if c.isspace():
            i += 1
            continue
        if c in "+-*/^(),":
            toks.append(_Tok(c, c, i))
            i += 1
            continue
        if c.isdigit() or c == ".":
            j = i
            seen_e = False
            while j < n and (src[j].isdigit() or src[j] == "." or
                             (src[j] in "eE" and not seen_e) or
                             (src[j] in "+-" and j > i and src[j - 1] in "eE")):
                if src[j] in "eE":
                    seen_e = True
                j += 1
            try:
                float(src[i:j])
            except ValueError:
                raise ParseError(f"bad number {src[i:j]!r} at position {i}")
            toks.append(_Tok("num", src[i:j], i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            toks.append(_Tok("name", src[i:j], i))
            i = j
            continue
        raise ParseError(f"unexpected character {c!r} at position {i}")
    toks.append(_Tok("end", "", n))
    return toks


class _Parser:
    def __init__(self, src):
        self.src = src
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None):
        t = self.toks[self.i]
        if kind is not None and t.kind != kind:
            raise ParseError(f"expected {kind!r} at position {t.pos} in {self.src!r}")
        self.i += 1
        return t

    def parse(self):
        node = self.expr()
        t = self.peek()
        if t.kind != "end":
            raise ParseError(f"trailing input at position {t.pos} in {self.src!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek().kind in "+-":
            op = self.take().kind
            node = ("+", node, self.term()) if op == "+" else ("-", node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek().kind in "*/":
            op = self.take().kind
            node = (op, node, self.unary())
        return node

    def unary(self):
        if self.peek().kind == "-":
            self.take()
            return ("neg", self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek().kind == "^":
            self.take()
            return ("^", base, self.unary())
        return base

    def atom(self):
        t = self.peek()
        if t.kind == "num":
            self.take()
            return ("num", float(t.text))
        if t.kind == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        if t.kind == "name":
            self.take()
            if t.text in _VARS and self.peek().kind != "(":
                return ("var", t.text)
            if t.text in _FUNCS:
                lo, hi, _ = _FUNCS[t.text]
                self.take("(")
                args = [self.expr()]
                while self.peek().kind == ",":
                    self.take()
                    args.append(self.expr())
                self.take(")")
                if len(args) < lo or (hi is not None and len(args) > hi):
                    raise ParseError(
                        f"{t.text} takes {lo}{'+' if hi is None else ''} "
                        f"argument(s), got {len(args)} (position {t.pos})")
                return ("call", t.text, args)
            raise ParseError(f"unknown name {t.text!r} at position {t.pos}")
        raise ParseError(f"unexpected token {t.text!r} at position {t.pos} in {self.src!r}")


def _variables(node, acc):
    if node[0] == "var":
        acc.add(node[1])
    elif node[0] == "call":
        for a in node[2]:
            _variables(a, acc)
    elif node[0] in ("+", "-", "*", "/", "^"):
        _variables(node[1], acc)
        _variables(node[2], acc)
    elif node[0] == "neg":
        _variables(node[1], acc)
    return acc


def _eval(node, env):
    op = node[0]
    if op == "num":
        return node[1]
    if op == "var":
        return env[node[1]]
    if op == "neg":
        return -_eval(node[1], env)
    if op == "call":
        args = [_eval(a, env) for a in node[2]]
        if node[1] == "min":
            out = args[0]
            for a in args[1:]:
                out = np.minimum(out, a)
            return out
        if node[1] == "max":
            out = args[0]
            for a in args[1:]:
                out = np.maximum(out, a)
            return out
        return _FUNCS[node[1]][2](args[0])
    a = _eval(node[1], env)
    b = _eval(node[2], env)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return a / b
    return np.power(a, b)


class Expression:
    """A parsed expression evaluable on point arrays.

    ``points`` has shape (N, n); the result broadcasts to shape (N,).
    """

    def __init__(self, source: str):
        self.source = source
        self._ast = _Parser(source).parse()
        self.variables = frozenset(_variables(self._ast, set()))

    @property
    def time_dependent(self) -> bool:
        return "t" in self.variables

    def __call__(self, points: np.ndarray, t: float = 0.0) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        env = {"x": points[:, 0], "t": t}
        if points.shape[1] > 1:
            env["y"] = points[:, 1]
        elif "y" in self.variables:
            raise ParseError(f"variable 'y' used in 1-D expression {self.source!r}")
        return np.broadcast_to(np.asarray(_eval(self._ast, env), dtype=float),
                               (points.shape[0],)).copy()

    def __repr__(self):
        return f"Expression({self.source!r})"
