"""The weighted composition operator (Kf)(x) = A(x) f(phi(x)) and the
checks that it leaves a Sturm-Liouville expression invariant.

Conventions: tau f = (1/r)(-(p f')' + q f), f^[1] = p f', and the
weight constant C is the one in r(x) = C r(phi^{-1}(x)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import PchipInterpolator

from .funcalg import (ExprFn, Func, InversionError, as_func, invert_many, parse,
                      substitute, Num, X)

DEFAULT_L = 40.0


@dataclass
class GridFn:
    """Sampled function: strictly increasing abscissae and values."""

    x: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.values = np.asarray(self.values)
        self._interp = None

    def interpolant(self):
        if self._interp is None:
            self._interp = self._build()
        return self._interp

    def _build(self):
        if np.iscomplexobj(self.values):
            re = PchipInterpolator(self.x, self.values.real, extrapolate=False)
            im = PchipInterpolator(self.x, self.values.imag, extrapolate=False)
            return lambda t: re(t) + 1j * im(t)
        return PchipInterpolator(self.x, self.values, extrapolate=False)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        lo, hi = self.x[0], self.x[-1]
        span = hi - lo
        if np.any(t < lo - 1e-12 * span) or np.any(t > hi + 1e-12 * span):
            raise ValueError("evaluation outside the sampled range")
        return self.interpolant()(np.clip(t, lo, hi))


@dataclass
class SLProblem:
    """Coefficients p, q, r on (a, b); either end may be infinite."""

    p: Func
    q: Func
    r: Func
    a: float
    b: float
    singular: Tuple[float, ...] = ()
    name: str = ""
    params: Dict[str, float] = field(default_factory=dict)
    truncation: Optional[float] = None  # working length used for infinite ends

    def __post_init__(self):
        self.p = as_func(self.p, self.params, (self.a, self.b))
        self.q = as_func(self.q, self.params, (self.a, self.b))
        self.r = as_func(self.r, self.params, (self.a, self.b))
        self.a = float(self.a)
        self.b = float(self.b)
        if not self.a < self.b:
            raise ValueError("interval must satisfy a < b")

    @classmethod
    def from_strings(cls, p: str, q: str, r: str, a, b, params=None, **kw) -> "SLProblem":
        params = {k: float(v) for k, v in (params or {}).items()}
        mk = lambda s: ExprFn.from_string(s, params, (float(a), float(b)))
        return cls(mk(p), mk(q), mk(r), float(a), float(b), params=params, **kw)

    @property
    def L(self) -> float:
        return self.truncation if self.truncation is not None else DEFAULT_L

    def finite_range(self, L: Optional[float] = None) -> Tuple[float, float]:
        """Interval with infinite ends replaced by a working truncation."""
        L = self.L if L is None else L
        a = self.a if math.isfinite(self.a) else (self.b - L if math.isfinite(self.b) else -L)
        b = self.b if math.isfinite(self.b) else (self.a + L if math.isfinite(self.a) else L)
        return a, b

    def check_positivity(self, n: int = 2000) -> Dict[str, bool]:
        x = graded_grid(self, n)
        return {"p": bool(np.all(self.p(x) > 0)), "r": bool(np.all(self.r(x) > 0))}

    def tau(self, f: Func, x) -> np.ndarray:
        """(tau f)(x) through exact derivatives of f."""
        x = np.asarray(x, dtype=float)
        return (-(self.p.d1(x) * f.d1(x) + self.p(x) * f.d2(x)) + self.q(x) * f(x)) / self.r(x)


@dataclass
class KTransform:
    """The pair (A, phi) with weight constant C.  ``phi_inv`` is a
    registered closed form; without it phi^{-1} is found numerically."""

    A: Func
    phi: Func
    C: float = 1.0
    phi_inv: Optional[Func] = None
    domain: Tuple[float, float] = (-math.inf, math.inf)
    name: str = ""

    def __post_init__(self):
        self.A = as_func(self.A)
        self.phi = as_func(self.phi)
        if self.phi_inv is not None and not callable(self.phi_inv):
            self.phi_inv = as_func(self.phi_inv)
        self.C = float(self.C)

    @classmethod
    def from_strings(cls, A: str, phi: str, C: float = 1.0, phi_inv: Optional[str] = None,
                     params=None, domain=(-math.inf, math.inf), name="") -> "KTransform":
        params = {k: float(v) for k, v in (params or {}).items()}
        mk = lambda s: ExprFn.from_string(s, params, domain)
        return cls(mk(A), mk(phi), C, mk(phi_inv) if phi_inv else None, tuple(domain), name)

    def inverse_phi(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.phi_inv is not None:
            return np.asarray(self.phi_inv(x), dtype=float)
        a, b = self.domain
        lo = np.full_like(x, a if math.isfinite(a) else -1.0)
        hi = np.full_like(x, b if math.isfinite(b) else 1.0)
        if not math.isfinite(a):
            lo = np.minimum(lo, x - 1.0)
            while np.any(self.phi(lo) > x):
                lo = np.where(self.phi(lo) > x, 2 * lo - 1.0, lo)
        if not math.isfinite(b):
            hi = np.maximum(hi, x + 1.0)
            while np.any(self.phi(hi) < x):
                hi = np.where(self.phi(hi) < x, 2 * hi + 1.0, hi)
        return invert_many(self.phi, x, lo, hi)

    def a_quasi(self, problem: SLProblem, x) -> np.ndarray:
        """A^[1] = p A'."""
        return problem.p(x) * self.A.d1(x)

    def a_quasi_prime(self, problem: SLProblem, x) -> np.ndarray:
        """(A^[1])' = p' A' + p A''."""
        return problem.p.d1(x) * self.A.d1(x) + problem.p(x) * self.A.d2(x)

    def boundary_matrix(self, problem: SLProblem, d: float) -> np.ndarray:
        from .extensions import boundary_transform
        return boundary_transform(problem, self, d).M


# --------------------------------------------------------------------------
# grids
# --------------------------------------------------------------------------

def graded_grid(problem: SLProblem, n: int = 1000, levels: int = 32, L: Optional[float] = None,
                singular: Optional[Sequence[float]] = None) -> np.ndarray:
    """``n`` interior points, geometric toward declared singular ends.

    Near a singular finite end d the points d +- (b - a) 10^{-k/8},
    k = 1..levels, are included; the rest is uniform.
    """
    a, b = problem.finite_range(L)
    span = b - a
    sing = problem.singular if singular is None else singular
    pts = []
    for d in sing:
        if not math.isfinite(d):
            continue
        k = np.arange(1, levels + 1)
        off = span * 10.0 ** (-k / 8.0)
        if abs(d - a) <= 1e-12 * span:
            pts.append(a + off)
        elif abs(d - b) <= 1e-12 * span:
            pts.append(b - off)
    m = max(n - sum(len(p) for p in pts), 2)
    pts.append(np.linspace(a, b, m + 2)[1:-1])
    x = np.unique(np.concatenate(pts))
    x = x[(x > a) & (x < b)]
    if len(x) > n:
        keep = np.round(np.linspace(0, len(x) - 1, n)).astype(int)
        x = x[np.unique(keep)]
    return x


# --------------------------------------------------------------------------
# actions of K, K*, K^{-1}
# --------------------------------------------------------------------------

def _sampler(f) -> Callable:
    if isinstance(f, GridFn):
        return f.__call__
    if isinstance(f, Func) or callable(f):
        return f
    raise TypeError("expected a function or GridFn")


def apply_K(K: KTransform, f, x=None) -> GridFn:
    """(Kf)(x) = A(x) f(phi(x)); grid inputs are read through monotone cubic
    interpolation."""
    if x is None:
        if not isinstance(f, GridFn):
            raise ValueError("grid required for function input")
        x = f.x
    x = np.asarray(x, dtype=float)
    fs = _sampler(f)
    return GridFn(x, K.A(x) * fs(K.phi(x)))


def apply_K_adjoint(K: KTransform, g, x=None) -> GridFn:
    """(K*g)(x) = A(y) / (C phi'(y)) g(y), y = phi^{-1}(x)."""
    if x is None:
        x = g.x
    x = np.asarray(x, dtype=float)
    y = K.inverse_phi(x)
    return GridFn(x, K.A(y) / (K.C * K.phi.d1(y)) * _sampler(g)(y))


def apply_K_inverse(K: KTransform, f, x=None) -> GridFn:
    """(K^{-1} f)(x) = f(y) / A(y), y = phi^{-1}(x)."""
    if x is None:
        x = f.x
    x = np.asarray(x, dtype=float)
    y = K.inverse_phi(x)
    return GridFn(x, _sampler(f)(y) / K.A(y))


# --------------------------------------------------------------------------
# boundedness
# --------------------------------------------------------------------------

def check_boundedness(K: KTransform, problem: SLProblem, n_sample: int = 2000,
                      rtol: float = 1e-3) -> Dict:
    """Empirical sup A^2/phi' and sup phi'/A^2 over refining samples.

    Finite ends are approached geometrically (deeper each round); infinite
    ends are handled on expanding compacts L = 10, 20, 40, 80 and the trend
    is reported rather than a limit.
    """
    rounds = []
    infinite = not (math.isfinite(problem.a) and math.isfinite(problem.b))
    ends = [d for d in (problem.a, problem.b) if math.isfinite(d)]
    for i, (levels, L) in enumerate([(16, 10.0), (32, 20.0), (48, 40.0), (64, 80.0)]):
        x = graded_grid(problem, n_sample, levels=levels, L=L, singular=ends)
        A2 = K.A(x) ** 2
        dphi = K.phi.d1(x)
        with np.errstate(all="ignore"):
            s1 = float(np.max(A2 / dphi))
            s2 = float(np.max(dphi / A2))
        positive = bool(np.all(dphi > 0) and np.all(K.A(x) != 0))
        rounds.append({"levels": levels, "L": L if infinite else None,
                       "sup_ratio_1": s1, "sup_ratio_2": s2, "phi_increasing": positive})
    last, prev = rounds[-1], rounds[-2]
    finite = all(math.isfinite(r["sup_ratio_1"]) and math.isfinite(r["sup_ratio_2"]) for r in rounds)
    stable = finite and all(
        abs(last[k] - prev[k]) <= rtol * max(1.0, abs(last[k])) for k in ("sup_ratio_1", "sup_ratio_2"))
    ok = bool(finite and stable and all(r["phi_increasing"] for r in rounds))
    return {"sup_ratio_1": last["sup_ratio_1"], "sup_ratio_2": last["sup_ratio_2"],
            "ok": ok, "trend": rounds}


# --------------------------------------------------------------------------
# coefficient functional equations
# --------------------------------------------------------------------------

def _rel(lhs, rhs) -> np.ndarray:
    return np.abs(lhs - rhs) / (1.0 + np.abs(lhs) + np.abs(rhs))


def coefficient_sides(problem: SLProblem, K: KTransform, x) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    """Both sides of the r-, p- and q-equations at the points x."""
    x = np.asarray(x, dtype=float)
    y = K.inverse_phi(x)
    Ay = K.A(y)
    dphi = K.phi.d1(y)
    r_rhs = K.C * problem.r(y)
    p_rhs = Ay ** 2 * dphi * problem.p(y)
    q_rhs = Ay / dphi * (Ay * problem.q(y) - K.a_quasi_prime(problem, y))
    return {"r": (problem.r(x), r_rhs), "p": (problem.p(x), p_rhs), "q": (problem.q(x), q_rhs)}


def residual_coefficient_eqs(problem: SLProblem, K: KTransform, grid=None, n: int = 1000) -> Dict[str, float]:
    """Max relative residual of each functional equation over the grid
    (denominator 1 + |lhs| + |rhs|)."""
    x = graded_grid(problem, n) if grid is None else np.asarray(grid, dtype=float)
    try:
        sides = coefficient_sides(problem, K, x)
    except InversionError as exc:
        raise InversionError(f"phi^-1 evaluation failed: {exc}") from exc
    out = {}
    for key, (lhs, rhs) in sides.items():
        res = _rel(lhs, rhs)
        out["res_" + key] = float(np.max(res)) if np.all(np.isfinite(res)) else math.inf
    return out


def schrodinger_residual(K: KTransform, x) -> float:
    """Max relative residual of A(x)^2 phi'(x) = 1."""
    x = np.asarray(x, dtype=float)
    return float(np.max(_rel(K.A(x) ** 2 * K.phi.d1(x), 1.0)))


# --------------------------------------------------------------------------
# operator identity K* tau K f = tau f
# --------------------------------------------------------------------------

@dataclass
class TestFunction:
    """Smooth function supported in [lo, hi]; ``fn`` is valid inside."""

    fn: ExprFn
    lo: float
    hi: float
    label: str = ""


def bump_functions(problem: SLProblem, count: int = 3, L: float = 20.0) -> List[TestFunction]:
    """C-infinity bumps times low-degree polynomials, supported inside
    [a + 0.05 (b - a), b - 0.05 (b - a)] (infinite ends cut at L)."""
    a, b = problem.finite_range(L)
    lo = a + 0.05 * (b - a)
    hi = b - 0.05 * (b - a)
    polys = ["1", "1+t", "1+t^2/2-t/3", "t", "2-t^2"]
    supports = [(lo, hi), (lo, 0.5 * (lo + hi) + 0.25 * (hi - lo)), (lo + 0.3 * (hi - lo), hi)]
    out = []
    for j in range(count):
        s0, s1 = supports[j % len(supports)]
        t = parse("(2*x-s0-s1)/(s1-s0)", ["s0", "s1"])
        t = substitute(t, {"s0": Num(s0), "s1": Num(s1)})
        base = parse(f"({polys[j % len(polys)]})*exp(-1/(1-t^2))", ["t"])
        e = substitute(base, {"t": t})
        out.append(TestFunction(ExprFn(e, {}, (s0, s1)), s0, s1, f"bump{j}"))
    return out


def _gauss_nodes(lo: float, hi: float, panels: int = 64, order: int = 16):
    g, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    h = np.diff(edges) / 2
    mid = (edges[:-1] + edges[1:]) / 2
    x = (mid[:, None] + h[:, None] * g[None, :]).ravel()
    wt = (h[:, None] * w[None, :]).ravel()
    return x, wt


def tau_K_at(problem: SLProblem, K: KTransform, f: Func, y) -> np.ndarray:
    """(tau K f)(y) from exact derivatives of A, phi and f (chain rule)."""
    y = np.asarray(y, dtype=float)
    A, dA, d2A = K.A(y), K.A.d1(y), K.A.d2(y)
    ph, dph, d2ph = K.phi(y), K.phi.d1(y), K.phi.d2(y)
    f0, f1, f2 = f(ph), f.d1(ph), f.d2(ph)
    kf = A * f0
    dkf = dA * f0 + A * f1 * dph
    d2kf = d2A * f0 + 2 * dA * f1 * dph + A * (f2 * dph ** 2 + f1 * d2ph)
    p, dp = problem.p(y), problem.p.d1(y)
    return (-(dp * dkf + p * d2kf) + problem.q(y) * kf) / problem.r(y)


def residual_operator_identity(problem: SLProblem, K: KTransform, f) -> float:
    """Relative L^2_r norm of K* tau K f - tau f over the support of f."""
    if isinstance(f, TestFunction):
        lo, hi, fn = f.lo, f.hi, f.fn
    else:
        fn = as_func(f)
        lo, hi = problem.finite_range()
    x, w = _gauss_nodes(lo, hi)
    y = K.inverse_phi(x)
    with np.errstate(all="ignore"):
        lhs = K.A(y) / (K.C * K.phi.d1(y)) * tau_K_at(problem, K, fn, y)
        rhs = problem.tau(fn, x)
    lhs = np.nan_to_num(lhs)
    rhs = np.nan_to_num(rhs)
    r = problem.r(x)
    num = math.sqrt(float(np.sum(w * r * (lhs - rhs) ** 2)))
    den = math.sqrt(float(np.sum(w * r * rhs ** 2)))
    return num / max(den, 1e-300)
