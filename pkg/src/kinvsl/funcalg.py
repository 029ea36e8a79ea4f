"""Closed-form real functions of one variable.

A small expression language (parser, evaluator, symbolic derivative,
substitution) plus a safeguarded Newton/bisection inverse.  Every
coefficient and every transform in the package is ultimately an
``ExprFn``.

Grammar (whitespace-insensitive)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' unary)?          # right associative
    atom   := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'

``x`` is the variable, ``pi`` is a constant, every other identifier is a
named parameter.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Optional, Tuple

import numpy as np

TOL_ROOT = 1e-13
MAX_ITER = 80

FUNCTIONS: Dict[str, Callable] = {
    "exp": np.exp,
    "expm1": np.expm1,
    "ln": np.log,
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "atan": np.arctan,
}
CONSTANTS = {"pi": math.pi}
VARIABLE = "x"


class ParseError(ValueError):
    """Syntax error with the offending position and the accepted tokens."""

    def __init__(self, message: str, position: int, expected: Iterable[str] = ()):
        self.position = position
        self.expected = frozenset(expected)
        exp = ", ".join(sorted(self.expected))
        text = f"{message} at position {position}"
        if exp:
            text += f" (expected one of: {exp})"
        super().__init__(text)


class UnknownIdentifier(ValueError):
    def __init__(self, name: str, position: Optional[int] = None):
        self.name = name
        self.position = position
        where = "" if position is None else f" at position {position}"
        super().__init__(f"unknown identifier '{name}'{where}")


class InversionError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# AST
# --------------------------------------------------------------------------

class Expr:
    """Base node.  Nodes are immutable and hashable by structure."""

    __slots__ = ()

    def eval(self, x, params: Optional[Dict[str, float]] = None):
        return _eval(self, np.asarray(x, dtype=float), params or {})

    @property
    def has_x(self) -> bool:
        return VARIABLE in self.free_names()

    def free_names(self) -> frozenset:
        raise NotImplementedError

    def __str__(self) -> str:
        return _fmt(self, 0)

    def __repr__(self) -> str:
        return f"Expr({self})"

    # operator sugar, handy for building coefficients in code
    def __add__(self, o):
        return add(self, _lift(o))

    def __radd__(self, o):
        return add(_lift(o), self)

    def __sub__(self, o):
        return sub(self, _lift(o))

    def __rsub__(self, o):
        return sub(_lift(o), self)

    def __mul__(self, o):
        return mul(self, _lift(o))

    def __rmul__(self, o):
        return mul(_lift(o), self)

    def __truediv__(self, o):
        return div(self, _lift(o))

    def __rtruediv__(self, o):
        return div(_lift(o), self)

    def __pow__(self, o):
        return power(self, _lift(o))

    def __neg__(self):
        return neg(self)


@dataclass(frozen=True, eq=True, repr=False)
class Num(Expr):
    value: float

    def free_names(self):
        return frozenset()


@dataclass(frozen=True, eq=True, repr=False)
class Name(Expr):
    """Variable ``x``, a constant such as ``pi``, or a parameter."""
    name: str

    def free_names(self):
        if self.name in CONSTANTS:
            return frozenset()
        return frozenset([self.name])


@dataclass(frozen=True, eq=True, repr=False)
class Neg(Expr):
    arg: Expr

    def free_names(self):
        return self.arg.free_names()


@dataclass(frozen=True, eq=True, repr=False)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def free_names(self):
        return self.left.free_names() | self.right.free_names()


@dataclass(frozen=True, eq=True, repr=False)
class Call(Expr):
    fn: str
    arg: Expr

    def free_names(self):
        return self.arg.free_names()


X = Name(VARIABLE)
ZERO = Num(0.0)
ONE = Num(1.0)


def _lift(v) -> Expr:
    if isinstance(v, Expr):
        return v
    if isinstance(v, str):
        return parse(v)
    return Num(float(v))


# --------------------------------------------------------------------------
# smart constructors with light constant folding
# --------------------------------------------------------------------------

def _is(e: Expr, v: float) -> bool:
    return isinstance(e, Num) and e.value == v


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    if isinstance(b, Neg):
        return sub(a, b.arg)
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    if isinstance(b, Neg):
        return add(a, b.arg)
    if a == b:
        return ZERO
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if _is(a, -1.0):
        return neg(b)
    if _is(b, -1.0):
        return neg(a)
    if isinstance(a, Neg) and isinstance(b, Neg):
        return mul(a.arg, b.arg)
    if isinstance(a, Neg):
        return neg(mul(a.arg, b))
    if isinstance(b, Neg):
        return neg(mul(a, b.arg))
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num) and b.value != 0.0:
        return Num(a.value / b.value)
    if _is(a, 0.0):
        return ZERO
    if _is(b, 1.0):
        return a
    if isinstance(a, Neg):
        return neg(div(a.arg, b))
    if isinstance(b, Neg):
        return neg(div(a, b.arg))
    return BinOp("/", a, b)


def power(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        try:
            v = a.value ** b.value
            if isinstance(v, float) and math.isfinite(v):
                return Num(v)
        except (OverflowError, ZeroDivisionError):
            pass
    if _is(b, 0.0):
        return ONE
    if _is(b, 1.0):
        return a
    return BinOp("^", a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def call(fn: str, a: Expr) -> Expr:
    if fn not in FUNCTIONS:
        raise UnknownIdentifier(fn)
    if isinstance(a, Num):
        with np.errstate(all="ignore"):
            v = float(FUNCTIONS[fn](a.value))
        if math.isfinite(v):
            return Num(v)
    return Call(fn, a)


# --------------------------------------------------------------------------
# evaluation and printing
# --------------------------------------------------------------------------

_BIN = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": np.divide,
    "^": np.power,
}


def _eval(e: Expr, x, params):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Name):
        if e.name == VARIABLE:
            return x
        if e.name in params:
            return float(params[e.name])
        if e.name in CONSTANTS:
            return CONSTANTS[e.name]
        raise UnknownIdentifier(e.name)
    if isinstance(e, Neg):
        return -_eval(e.arg, x, params)
    if isinstance(e, BinOp):
        with np.errstate(all="ignore"):
            return _BIN[e.op](_eval(e.left, x, params), _eval(e.right, x, params))
    if isinstance(e, Call):
        with np.errstate(all="ignore"):
            return FUNCTIONS[e.fn](_eval(e.arg, x, params))
    raise TypeError(f"not an expression node: {e!r}")


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _fmt(e: Expr, parent: int) -> str:
    if isinstance(e, Num):
        v = e.value
        s = repr(int(v)) if v == int(v) and abs(v) < 1e15 else repr(v)
        return f"({s})" if v < 0 and parent > 0 else s
    if isinstance(e, Name):
        return e.name
    if isinstance(e, Call):
        return f"{e.fn}({_fmt(e.arg, 0)})"
    if isinstance(e, Neg):
        s = "-" + _fmt(e.arg, _PREC["neg"])
        return f"({s})" if parent >= _PREC["neg"] else s
    p = _PREC[e.op]
    if e.op == "^":
        s = f"{_fmt(e.left, p + 1)}^{_fmt(e.right, p)}"
    else:
        s = f"{_fmt(e.left, p)}{e.op}{_fmt(e.right, p + 1)}"
    return f"({s})" if p < parent else s


def _scalar_pow(a, b):
    try:
        return math.pow(a, b)
    except (ValueError, ZeroDivisionError):
        return math.nan
    except OverflowError:
        return math.inf


def _scalar_fn(f):
    def g(v):
        try:
            return f(v)
        except (ValueError, ZeroDivisionError):
            return math.nan
        except OverflowError:
            return math.inf
    return g


_SCALAR_FUNCS = {
    "exp": _scalar_fn(math.exp),
    "expm1": _scalar_fn(math.expm1),
    "ln": _scalar_fn(math.log),
    "sqrt": _scalar_fn(math.sqrt),
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "atan": math.atan,
}


def _div(a, b):
    try:
        return a / b
    except ZeroDivisionError:
        if a == 0 or a != a:
            return math.nan
        return math.copysign(math.inf, a) * math.copysign(1.0, b)


def _source(e: Expr, params: Dict[str, float], scalar: bool) -> str:
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Name):
        if e.name == VARIABLE:
            return "x"
        if e.name in params:
            return repr(float(params[e.name]))
        if e.name in CONSTANTS:
            return repr(CONSTANTS[e.name])
        raise UnknownIdentifier(e.name)
    if isinstance(e, Neg):
        return f"(-{_source(e.arg, params, scalar)})"
    if isinstance(e, Call):
        return f"F_{e.fn}({_source(e.arg, params, scalar)})"
    l = _source(e.left, params, scalar)
    r = _source(e.right, params, scalar)
    if e.op == "^":
        return f"POW({l}, {r})"
    if e.op == "/" and scalar:
        return f"DIV({l}, {r})"
    return f"({l} {e.op} {r})"


def compile_expr(e: Expr, params: Optional[Dict[str, float]] = None, scalar: bool = False) -> Callable:
    """Turn an expression into a Python function of x (numpy or math based)."""
    src = _source(e, params or {}, scalar)
    if scalar:
        env = {f"F_{k}": v for k, v in _SCALAR_FUNCS.items()}
        env["POW"] = _scalar_pow
        env["DIV"] = _div
    else:
        env = {f"F_{k}": v for k, v in FUNCTIONS.items()}
        env["POW"] = np.power
    env["math"] = math
    code = f"def _f(x):\n    return {src}\n"
    exec(compile(code, "<expr>", "exec"), env)
    return env["_f"]


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<id>[a-z_][a-z0-9_]*)|(?P<op>[-+*/^()]))"
)


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(src: str):
    toks = []
    i = 0
    n = len(src)
    while i < n:
        if src[i].isspace():
            i += 1
            continue
        m = _TOKEN.match(src, i)
        if m is None or m.end() == i:
            raise ParseError(f"unexpected character {src[i]!r}", i,
                             ("number", "identifier", "operator", "("))
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind), start))
        i = m.end()
    toks.append(_Tok("end", "", n))
    return toks


class _Parser:
    def __init__(self, src: str, known: Optional[Iterable[str]]):
        self.toks = _tokenize(src)
        self.i = 0
        self.known = None if known is None else set(known)

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str):
        t = self.peek()
        if t.text != text or t.kind == "end":
            raise ParseError(f"unexpected {t.text or 'end of input'!r}", t.pos, (text,))
        return self.take()

    def parse(self) -> Expr:
        e = self.expr()
        t = self.peek()
        if t.kind != "end":
            raise ParseError(f"unexpected {t.text!r}", t.pos,
                             ("+", "-", "*", "/", "^", "end of input"))
        return e

    def expr(self):
        e = self.term()
        while self.peek().text in ("+", "-") and self.peek().kind == "op":
            op = self.take().text
            r = self.term()
            e = add(e, r) if op == "+" else sub(e, r)
        return e

    def term(self):
        e = self.unary()
        while self.peek().text in ("*", "/") and self.peek().kind == "op":
            op = self.take().text
            r = self.unary()
            e = mul(e, r) if op == "*" else div(e, r)
        return e

    def unary(self):
        t = self.peek()
        if t.kind == "op" and t.text == "-":
            self.take()
            return neg(self.unary())
        if t.kind == "op" and t.text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.take()
            return power(base, self.unary())
        return base

    def atom(self):
        t = self.peek()
        if t.kind == "num":
            self.take()
            return Num(float(t.text))
        if t.kind == "id":
            self.take()
            nxt = self.peek()
            if nxt.kind == "op" and nxt.text == "(":
                if t.text not in FUNCTIONS:
                    raise UnknownIdentifier(t.text, t.pos)
                self.take()
                arg = self.expr()
                self.expect(")")
                return call(t.text, arg)
            if t.text in FUNCTIONS:
                raise ParseError(f"function {t.text!r} needs an argument", nxt.pos, ("(",))
            if (self.known is not None and t.text != VARIABLE
                    and t.text not in CONSTANTS and t.text not in self.known):
                raise UnknownIdentifier(t.text, t.pos)
            return Name(t.text)
        if t.kind == "op" and t.text == "(":
            self.take()
            e = self.expr()
            self.expect(")")
            return e
        raise ParseError(f"unexpected {t.text or 'end of input'!r}", t.pos,
                         ("number", "identifier", "(", "-"))


def parse(source: str, params: Optional[Iterable[str]] = None) -> Expr:
    """Parse ``source``.  If ``params`` is given, any identifier other than
    ``x``, a constant, a function or a listed parameter is rejected."""
    if not isinstance(source, str):
        raise TypeError("expression source must be a string")
    return _Parser(source, params).parse()


# --------------------------------------------------------------------------
# calculus
# --------------------------------------------------------------------------

def differentiate(e: Expr, var: str = VARIABLE) -> Expr:
    """Exact derivative with respect to ``var``; parameters are constants."""
    if var not in e.free_names():
        return ZERO
    if isinstance(e, Name):
        return ONE
    if isinstance(e, Neg):
        return neg(differentiate(e.arg, var))
    if isinstance(e, Call):
        u = e.arg
        du = differentiate(u, var)
        if e.fn == "exp":
            outer = e
        elif e.fn == "expm1":
            outer = call("exp", u)
        elif e.fn == "ln":
            return div(du, u)
        elif e.fn == "sqrt":
            return div(du, mul(Num(2.0), e))
        elif e.fn == "sin":
            outer = call("cos", u)
        elif e.fn == "cos":
            outer = neg(call("sin", u))
        elif e.fn == "tan":
            return div(du, power(call("cos", u), Num(2.0)))
        elif e.fn == "atan":
            return div(du, add(ONE, power(u, Num(2.0))))
        else:  # pragma: no cover - guarded by the parser
            raise UnknownIdentifier(e.fn)
        return mul(outer, du)
    assert isinstance(e, BinOp)
    a, b = e.left, e.right
    da = differentiate(a, var)
    db = differentiate(b, var)
    if e.op == "+":
        return add(da, db)
    if e.op == "-":
        return sub(da, db)
    if e.op == "*":
        return add(mul(da, b), mul(a, db))
    if e.op == "/":
        if var not in b.free_names():
            return div(da, b)
        return sub(div(da, b), div(mul(a, db), power(b, Num(2.0))))
    # power
    if var not in b.free_names():
        return mul(mul(b, power(a, sub(b, ONE))), da)
    if var not in a.free_names():
        return mul(mul(e, call("ln", a)), db)
    return mul(e, add(mul(db, call("ln", a)), div(mul(b, da), a)))


def substitute(e: Expr, mapping: Dict[str, Expr]) -> Expr:
    """Replace names by expressions (rebuilding through the smart constructors)."""
    if isinstance(e, Num):
        return e
    if isinstance(e, Name):
        return mapping.get(e.name, e)
    if isinstance(e, Neg):
        return neg(substitute(e.arg, mapping))
    if isinstance(e, Call):
        return call(e.fn, substitute(e.arg, mapping))
    l = substitute(e.left, mapping)
    r = substitute(e.right, mapping)
    return {"+": add, "-": sub, "*": mul, "/": div, "^": power}[e.op](l, r)


def compose(outer: Expr, inner: Expr) -> Expr:
    """outer(inner(x))."""
    return substitute(outer, {VARIABLE: inner})


def _affine(e: Expr, params: Dict[str, float]) -> Optional[Tuple[float, float]]:
    """(a, b) with e = a + b x if e is affine in x, else None."""
    if isinstance(e, Num):
        return (e.value, 0.0)
    if isinstance(e, Name):
        if e.name == VARIABLE:
            return (0.0, 1.0)
        return (float(params[e.name]) if e.name in params else CONSTANTS[e.name], 0.0)
    if isinstance(e, Neg):
        v = _affine(e.arg, params)
        return None if v is None else (-v[0], -v[1])
    if isinstance(e, Call):
        v = _affine(e.arg, params)
        if v is None or v[1] != 0.0:
            return None
        with np.errstate(all="ignore"):
            return (float(FUNCTIONS[e.fn](v[0])), 0.0)
    l, r = _affine(e.left, params), _affine(e.right, params)
    if l is None or r is None:
        return None
    if e.op == "+":
        return (l[0] + r[0], l[1] + r[1])
    if e.op == "-":
        return (l[0] - r[0], l[1] - r[1])
    if e.op == "*":
        if l[1] == 0.0:
            return (l[0] * r[0], l[0] * r[1])
        if r[1] == 0.0:
            return (l[0] * r[0], l[1] * r[0])
        return None
    if e.op == "/" and r[1] == 0.0:
        return (l[0] / r[0], l[1] / r[0])
    if e.op == "^" and l[1] == 0.0 and r[1] == 0.0:
        return (float(_scalar_pow(l[0], r[0])), 0.0)
    return None


def shift_to_distance(e: Expr, d: float, sign: float, params: Dict[str, float]) -> Expr:
    """Rewrite e(x) as an expression in t with x = d + sign*t.

    Affine subexpressions are collected first, so factors like (1 - x)
    near d = 1 become exactly t instead of a difference of nearly equal
    floats."""
    v = _affine(e, params)
    if v is not None:
        a, b = v
        return add(Num(a + b * d), mul(Num(b * sign), X))
    if isinstance(e, (Num, Name)):
        return e
    if isinstance(e, Neg):
        return neg(shift_to_distance(e.arg, d, sign, params))
    if isinstance(e, Call):
        return call(e.fn, shift_to_distance(e.arg, d, sign, params))
    l = shift_to_distance(e.left, d, sign, params)
    r = shift_to_distance(e.right, d, sign, params)
    if e.op == "-":
        # 1 - exp(u) and exp(u) - 1 lose everything to cancellation as u -> 0
        if _is(l, 1.0) and isinstance(r, Call) and r.fn == "exp":
            return neg(call("expm1", r.arg))
        if _is(r, 1.0) and isinstance(l, Call) and l.fn == "exp":
            return call("expm1", l.arg)
    return {"+": add, "-": sub, "*": mul, "/": div, "^": power}[e.op](l, r)


# --------------------------------------------------------------------------
# bound functions
# --------------------------------------------------------------------------

class Func:
    """Anything the operator code can evaluate: value, first and second
    derivative, vectorised over numpy arrays."""

    def __call__(self, x):
        raise NotImplementedError

    def d1(self, x):
        raise NotImplementedError

    def d2(self, x):
        raise NotImplementedError


@dataclass
class ExprFn(Func):
    """An expression with bound parameter values and a nominal domain."""

    expr: Expr
    params: Dict[str, float] = field(default_factory=dict)
    domain: Tuple[float, float] = (-math.inf, math.inf)
    singular: Tuple[float, ...] = ()

    def __post_init__(self):
        missing = self.expr.free_names() - {VARIABLE} - set(self.params)
        if missing:
            raise UnknownIdentifier(sorted(missing)[0])
        self.params = {k: float(v) for k, v in self.params.items()}
        self._derivs = [self.expr]
        self._vec = {}
        self._sca = {}

    @classmethod
    def from_string(cls, source: str, params: Optional[Dict[str, float]] = None,
                    domain=(-math.inf, math.inf), singular=()) -> "ExprFn":
        params = dict(params or {})
        return cls(parse(source, params.keys()), params, tuple(domain), tuple(singular))

    @classmethod
    def constant(cls, value: float, domain=(-math.inf, math.inf)) -> "ExprFn":
        return cls(Num(float(value)), {}, tuple(domain))

    def derivative_expr(self, k: int = 1) -> Expr:
        while len(self._derivs) <= k:
            self._derivs.append(differentiate(self._derivs[-1]))
        return self._derivs[k]

    def derivative(self, k: int = 1) -> "ExprFn":
        return ExprFn(self.derivative_expr(k), self.params, self.domain, self.singular)

    def _ev(self, k: int, x):
        f = self._vec.get(k)
        if f is None:
            f = self._vec[k] = compile_expr(self.derivative_expr(k), self.params)
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            v = np.asarray(f(x), dtype=float)
        if v.shape != x.shape:
            v = np.broadcast_to(v, x.shape).copy()
        return v

    def scalar(self, k: int = 0) -> Callable[[float], float]:
        """Fast float -> float evaluator of the k-th derivative."""
        f = self._sca.get(k)
        if f is None:
            f = self._sca[k] = compile_expr(self.derivative_expr(k), self.params, scalar=True)
        return f

    def __call__(self, x):
        return self._ev(0, x)

    def d1(self, x):
        return self._ev(1, x)

    def d2(self, x):
        return self._ev(2, x)

    def compose(self, inner: "ExprFn") -> "ExprFn":
        params = dict(inner.params)
        params.update(self.params)
        return ExprFn(compose(self.expr, inner.expr), params, inner.domain, inner.singular)

    def at_distance(self, d: float, sign: float) -> "ExprFn":
        """The same function in the variable t = sign*(x - d) >= 0."""
        return ExprFn(shift_to_distance(self.expr, d, sign, self.params), self.params)

    def with_params(self, **updates) -> "ExprFn":
        params = dict(self.params)
        params.update(updates)
        return ExprFn(self.expr, params, self.domain, self.singular)

    def __str__(self):
        return str(self.expr)


@dataclass
class CallableFn(Func):
    """Func backed by plain callables (used for numerically defined maps)."""

    f: Callable
    df: Optional[Callable] = None
    d2f: Optional[Callable] = None

    def __call__(self, x):
        return np.asarray(self.f(np.asarray(x, dtype=float)), dtype=float)

    def d1(self, x):
        if self.df is None:
            raise NotImplementedError("no first derivative registered")
        return np.asarray(self.df(np.asarray(x, dtype=float)), dtype=float)

    def d2(self, x):
        if self.d2f is None:
            raise NotImplementedError("no second derivative registered")
        return np.asarray(self.d2f(np.asarray(x, dtype=float)), dtype=float)


def as_func(f, params: Optional[Dict[str, float]] = None, domain=(-math.inf, math.inf)) -> Func:
    if isinstance(f, Func):
        return f
    if isinstance(f, Expr):
        return ExprFn(f, dict(params or {}), domain)
    if isinstance(f, str):
        return ExprFn.from_string(f, params, domain)
    if isinstance(f, (int, float)):
        return ExprFn.constant(f, domain)
    raise TypeError(f"cannot turn {type(f).__name__} into a function")


# --------------------------------------------------------------------------
# inversion
# --------------------------------------------------------------------------

def invert_many(f: Func, y, lo, hi, tol: float = TOL_ROOT, max_iter: int = MAX_ITER,
                df: Optional[Callable] = None):
    """Solve f(x) = y elementwise on brackets [lo, hi].

    Newton steps are taken when they stay inside the current bracket,
    otherwise the bracket is bisected.  A point is accepted when
    |f(x) - y| <= tol or the bracket has shrunk to floating resolution.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    lo = np.broadcast_to(np.asarray(lo, dtype=float), y.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), y.shape).copy()
    deriv = df if df is not None else f.d1
    flo = f(lo) - y
    fhi = f(hi) - y
    if np.any(~np.isfinite(flo)) or np.any(~np.isfinite(fhi)):
        raise InversionError("function not finite at bracket end")
    if np.any(flo * fhi > 0):
        raise InversionError("no sign change in bracket")
    # orient so that g(lo) <= 0 <= g(hi)
    swap = flo > 0
    lo[swap], hi[swap] = hi[swap].copy(), lo[swap].copy()
    flo, fhi = np.where(swap, fhi, flo), np.where(swap, flo, fhi)
    x = np.where(fhi != flo, lo - flo * (hi - lo) / np.where(fhi != flo, fhi - flo, 1.0), 0.5 * (lo + hi))
    x = np.where(np.isfinite(x), x, 0.5 * (lo + hi))
    done = np.zeros(y.shape, dtype=bool)
    exact_lo = flo == 0
    exact_hi = fhi == 0
    x[exact_lo] = lo[exact_lo]
    x[exact_hi] = hi[exact_hi]
    done |= exact_lo | exact_hi
    for _ in range(max_iter):
        fx = f(x) - y
        ok = np.isfinite(fx) & (np.abs(fx) <= tol)
        width = np.abs(hi - lo)
        tiny = width <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(x))
        done |= ok | tiny
        if np.all(done):
            return x
        neg_side = fx < 0
        lo = np.where(neg_side & ~done, x, lo)
        hi = np.where(~neg_side & ~done, x, hi)
        with np.errstate(all="ignore"):
            step = fx / deriv(x)
            xn = x - step
        inside = np.isfinite(xn) & ((xn - lo) * (xn - hi) < 0)
        mid = 0.5 * (lo + hi)
        x = np.where(done, x, np.where(inside, xn, mid))
    fx = f(x) - y
    if np.all(done | (np.abs(fx) <= tol)):
        return x
    raise InversionError("maximum iterations exceeded")


def invert(f: Func, y: float, bracket: Tuple[float, float], tol: float = TOL_ROOT,
           max_iter: int = MAX_ITER) -> float:
    """Scalar inverse of a strictly monotone function on ``bracket``."""
    return float(invert_many(f, y, bracket[0], bracket[1], tol, max_iter)[0])
