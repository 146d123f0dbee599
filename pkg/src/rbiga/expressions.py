"""Closed-form scalar expressions in the parameters ``mu1 .. muP``.

The grammar is deliberately small: decimal literals, ``mu<i>``, the binary
operators ``+ - * /``, unary minus, parentheses and ``sqrt``. Expressions
are immutable trees; building them through the arithmetic operators folds
constants and drops trivial factors, nothing more.
"""
import ast
import math
import re

import numpy as np


class ExpressionError(ValueError):
    """Malformed expression or evaluation outside its domain."""


_PARAM = re.compile(r"^mu([1-9][0-9]*)$")


class Expr:
    """Base class; use :func:`parse`, :func:`const` and :func:`param` to build."""

    __slots__ = ("_fn",)
    precedence = 4

    def __init__(self):
        self._fn = None

    # arithmetic with folding
    def __add__(self, other):
        return _add(self, as_expr(other))

    def __radd__(self, other):
        return _add(as_expr(other), self)

    def __sub__(self, other):
        return _add(self, _neg(as_expr(other)))

    def __rsub__(self, other):
        return _add(as_expr(other), _neg(self))

    def __mul__(self, other):
        return _mul(self, as_expr(other))

    def __rmul__(self, other):
        return _mul(as_expr(other), self)

    def __truediv__(self, other):
        return _div(self, as_expr(other))

    def __rtruediv__(self, other):
        return _div(as_expr(other), self)

    def __neg__(self):
        return _neg(self)

    def __repr__(self):
        return f"Expr({str(self)!r})"

    @property
    def is_const(self):
        return isinstance(self, Const)

    def params(self):
        """Set of 1-based parameter indices used."""
        out = set()
        self._collect(out)
        return out

    def max_param(self):
        ps = self.params()
        return max(ps) if ps else 0

    def to_python(self):
        raise NotImplementedError

    def __call__(self, mu):
        """Evaluate at ``mu`` (shape ``(P,)`` or ``(M, P)`` for many points)."""
        if self._fn is None:
            src = f"lambda mu: {self.to_python()}"
            self._fn = eval(src, {"_sqrt": np.sqrt})
        mu = np.asarray(mu, dtype=float)
        if mu.ndim == 1:
            args = mu
        else:
            args = mu.T
        with np.errstate(divide="raise", invalid="raise"):
            try:
                val = self._fn(args)
            except (FloatingPointError, ZeroDivisionError) as exc:
                raise ExpressionError(f"cannot evaluate {self} at mu={mu}: {exc}") from None
        if mu.ndim == 1:
            return float(val)
        return np.broadcast_to(np.asarray(val, dtype=float), (mu.shape[0],)).copy()


class Const(Expr):
    __slots__ = ("value",)
    precedence = 4

    def __init__(self, value):
        super().__init__()
        self.value = float(value)

    def __str__(self):
        v = self.value
        if v == int(v) and abs(v) < 1e15:
            s = str(int(v))
        else:
            s = repr(v)
        return s

    def to_python(self):
        return f"({self.value!r})"

    def _collect(self, out):
        pass


class Param(Expr):
    __slots__ = ("index",)

    def __init__(self, index):
        super().__init__()
        if index < 1:
            raise ExpressionError("parameter indices start at 1")
        self.index = int(index)

    def __str__(self):
        return f"mu{self.index}"

    def to_python(self):
        return f"mu[{self.index - 1}]"

    def _collect(self, out):
        out.add(self.index)


class BinOp(Expr):
    __slots__ = ("op", "left", "right")
    _prec = {"+": 1, "-": 1, "*": 2, "/": 2}

    def __init__(self, op, left, right):
        super().__init__()
        self.op, self.left, self.right = op, left, right

    @property
    def precedence(self):
        return self._prec[self.op]

    def __str__(self):
        ls = str(self.left)
        rs = str(self.right)
        if self.left.precedence < self.precedence:
            ls = f"({ls})"
        if self.right.precedence < self.precedence or (
                self.op in "-/" and self.right.precedence == self.precedence):
            rs = f"({rs})"
        return f"{ls} {self.op} {rs}"

    def to_python(self):
        return f"({self.left.to_python()} {self.op} {self.right.to_python()})"

    def _collect(self, out):
        self.left._collect(out)
        self.right._collect(out)


class Neg(Expr):
    __slots__ = ("arg",)
    precedence = 3

    def __init__(self, arg):
        super().__init__()
        self.arg = arg

    def __str__(self):
        s = str(self.arg)
        return f"-({s})" if self.arg.precedence <= self.precedence else f"-{s}"

    def to_python(self):
        return f"(-{self.arg.to_python()})"

    def _collect(self, out):
        self.arg._collect(out)


class Sqrt(Expr):
    __slots__ = ("arg",)

    def __init__(self, arg):
        super().__init__()
        self.arg = arg

    def __str__(self):
        return f"sqrt({self.arg})"

    def to_python(self):
        return f"_sqrt({self.arg.to_python()})"

    def _collect(self, out):
        self.arg._collect(out)


ZERO = Const(0.0)
ONE = Const(1.0)


def const(value):
    return Const(value)


def param(index):
    return Param(index)


def as_expr(value):
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return parse(value)
    return Const(value)


def is_zero(e):
    return isinstance(e, Const) and e.value == 0.0


def _add(a, b):
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if is_zero(a):
        return b
    if is_zero(b):
        return a
    if isinstance(b, Neg):
        return BinOp("-", a, b.arg)
    if isinstance(b, Const) and b.value < 0:
        return BinOp("-", a, Const(-b.value))
    return BinOp("+", a, b)


def _neg(a):
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _mul(a, b):
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if is_zero(a) or is_zero(b):
        return ZERO
    if isinstance(a, Const) and a.value == 1.0:
        return b
    if isinstance(b, Const) and b.value == 1.0:
        return a
    if isinstance(a, Const) and a.value == -1.0:
        return _neg(b)
    if isinstance(b, Const) and b.value == -1.0:
        return _neg(a)
    if _is_reciprocal(b):
        return _div(a, b.right)
    if _is_reciprocal(a):
        return _div(b, a.right)
    return BinOp("*", a, b)


def _is_reciprocal(e):
    return isinstance(e, BinOp) and e.op == "/" and isinstance(e.left, Const) \
        and e.left.value == 1.0


def _div(a, b):
    if is_zero(b):
        raise ExpressionError("division by the constant zero")
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value / b.value)
    if is_zero(a):
        return ZERO
    if isinstance(b, Const) and b.value == 1.0:
        return a
    return BinOp("/", a, b)


def sqrt(a):
    a = as_expr(a)
    if isinstance(a, Const):
        if a.value < 0:
            raise ExpressionError("sqrt of a negative constant")
        return Const(math.sqrt(a.value))
    return Sqrt(a)


_BINOPS = {ast.Add: "+", ast.Sub: "-", ast.Mult: "*", ast.Div: "/"}


def parse(text):
    """Parse an expression string such as ``"mu1 * mu3 / 2"``."""
    if isinstance(text, (int, float)):
        return Const(text)
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError(f"empty or non-string expression: {text!r}")
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    return _convert(tree.body, text)


def _convert(node, text):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        return Const(node.value)
    if isinstance(node, ast.Name):
        m = _PARAM.match(node.id)
        if not m:
            raise ExpressionError(f"unknown symbol {node.id!r} in {text!r}")
        return Param(int(m.group(1)))
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        a = _convert(node.left, text)
        b = _convert(node.right, text)
        op = _BINOPS[type(node.op)]
        return {"+": _add, "-": lambda x, y: _add(x, _neg(y)),
                "*": _mul, "/": _div}[op](a, b)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        a = _convert(node.operand, text)
        return _neg(a) if isinstance(node.op, ast.USub) else a
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
            and node.func.id == "sqrt" and len(node.args) == 1 and not node.keywords:
        return sqrt(_convert(node.args[0], text))
    raise ExpressionError(f"unsupported construct in {text!r}")


# -- small symbolic matrix helpers ------------------------------------------------

def matrix(rows):
    """Nested lists of strings/numbers/Expr -> nested lists of Expr."""
    return [[as_expr(v) for v in row] for row in rows]


def mat_eval(m, mu):
    return np.array([[e(mu) for e in row] for row in m], dtype=float)


def det(m):
    n = len(m)
    if n == 1:
        return m[0][0]
    if n == 2:
        return m[0][0] * m[1][1] - m[0][1] * m[1][0]
    total = ZERO
    for j in range(n):
        if is_zero(m[0][j]):
            continue
        minor = [row[:j] + row[j + 1:] for row in m[1:]]
        term = m[0][j] * det(minor)
        total = total + term if j % 2 == 0 else total - term
    return total


def inverse(m):
    """Adjugate / determinant; entries are expressions."""
    n = len(m)
    if all(is_zero(m[i][j]) for i in range(n) for j in range(n) if i != j):
        return [[ONE / m[i][i] if i == j else ZERO for j in range(n)] for i in range(n)]
    d = det(m)
    if n == 1:
        return [[ONE / d]]
    cof = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [row[:j] + row[j + 1:] for k, row in enumerate(m) if k != i]
            c = det(minor)
            cof[i][j] = c if (i + j) % 2 == 0 else -c
    return [[cof[j][i] / d for j in range(n)] for i in range(n)]


def matmul(a, b):
    n, k, m = len(a), len(b), len(b[0])
    out = []
    for i in range(n):
        row = []
        for j in range(m):
            s = ZERO
            for t in range(k):
                if is_zero(a[i][t]) or is_zero(b[t][j]):
                    continue
                s = s + a[i][t] * b[t][j]
            row.append(s)
        out.append(row)
    return out


def transpose(a):
    return [list(r) for r in zip(*a)]
