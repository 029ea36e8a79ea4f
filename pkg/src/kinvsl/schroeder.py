"""Schroeder's equation f(phi^{-1}(x)) = s f(x): residual checks, the
Koenigs construction at an attracting fixed point, and the two generators
(powers, periodic modulation) that produce new admissible coefficients
when A is constant.
"""
from __future__ import annotations

import math
from typing import Callable, Dict, Optional

import numpy as np
from scipy import integrate

from .funcalg import ExprFn, Func, Num, X, call, compose, differentiate, div, mul, power, sub
from .ktransform import GridFn, KTransform, SLProblem, graded_grid


class KoenigsError(RuntimeError):
    pass


class FamilyError(ValueError):
    pass


def _eval(f, x):
    if isinstance(f, GridFn):
        return f(x)
    return np.asarray(f(np.asarray(x, dtype=float)), dtype=float)


def verify_schroeder(f, phi_inv, s: float, grid) -> float:
    """max |f(phi_inv(x)) - s f(x)| / (1 + |lhs| + |rhs|) over the grid."""
    x = np.asarray(grid, dtype=float)
    lhs = _eval(f, _eval(phi_inv, x))
    rhs = s * _eval(f, x)
    res = np.abs(lhs - rhs) / (1.0 + np.abs(lhs) + np.abs(rhs))
    if not np.all(np.isfinite(res)):
        return math.inf
    return float(np.max(res)) if res.size else 0.0


# --------------------------------------------------------------------------
# Koenigs function
# --------------------------------------------------------------------------

def _neville_zero(t: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Polynomial extrapolation to t = 0; rows of v are samples at t."""
    p = [row.copy() for row in v]
    m = len(t)
    for k in range(1, m):
        for i in range(m - k):
            p[i] = (t[i + k] * p[i] - t[i] * p[i + 1]) / (t[i + k] - t[i])
    return p[0]


def koenigs_eval(phi: Func, fixed_point: float, x, depth: int = 60, tol: float = 1e-13,
                 order: int = 4) -> np.ndarray:
    """sigma(x) = lim (phi^n(x) - d) / phi'(d)^n.

    The rescaled iterates carry an error expansion in powers of
    phi'(d)^n, which is removed by polynomial extrapolation in
    t_n = phi'(d)^n over the last ``order`` iterates.  Iteration stops
    when successive estimates agree to ``tol`` or once rounding (amplified
    by phi'(d)^-n) exceeds the best score seen; per point the estimate
    minimizing successive change plus rounding bound is kept.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    d = float(fixed_point)
    lam = float(np.asarray(phi.d1(np.array([d])))[0])
    if not math.isfinite(lam) or abs(lam) >= 1.0 or lam == 0.0:
        raise KoenigsError(f"fixed point is not attracting (phi'(d) = {lam})")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = x.copy()
    ts, seq = [], []
    best = np.full_like(x, np.nan)
    best_gap = np.full_like(x, np.inf)
    done = np.zeros(x.shape, dtype=bool)
    prev = None
    for n in range(1, depth + 1):
        y = np.asarray(phi(y), dtype=float)
        t = lam ** n
        ts.append(t)
        seq.append((y - d) / t)
        k = min(order, len(seq))
        est = _neville_zero(np.array(ts[-k:]), np.array(seq[-k:]))
        if depth < order + 1:
            best = est
        elif prev is not None and k == order and len(seq) > order:
            # rounding in phi^n(x) - d is amplified by 1/|t|; adding it to the
            # gap keeps late plateaus (identical iterates) from looking converged
            rounding = 8.0 * np.finfo(float).eps * (1.0 + abs(d)) / abs(t)
            score = np.abs(est - prev) + rounding
            better = (score < best_gap) & ~done
            best = np.where(better, est, best)
            best_gap = np.where(better, score, best_gap)
            done |= (best_gap <= tol * (1.0 + np.abs(best))) | (rounding > best_gap)
            if np.all(done):
                break
        prev = est
    if np.any(~np.isfinite(best)):
        raise KoenigsError("iterates left the basin of the fixed point")
    if np.any(np.abs(y - d) > 1e-3 * (1.0 + abs(d))) and depth >= 20:
        raise KoenigsError("no convergence toward the fixed point within depth")
    return best


def koenigs(phi: Func, fixed_point: float, depth: int = 40, grid=None, tol: float = 1e-13) -> GridFn:
    """Koenigs function on a grid (default: 200 points of the domain of
    ``phi`` inside its finite part)."""
    if grid is None:
        a, b = getattr(phi, "domain", (0.0, 1.0))
        a = a if math.isfinite(a) else fixed_point - 10.0
        b = b if math.isfinite(b) else fixed_point + 10.0
        grid = np.linspace(a, b, 202)[1:-1]
    grid = np.asarray(grid, dtype=float)
    return GridFn(grid, koenigs_eval(phi, fixed_point, grid, depth=depth, tol=tol))


class KoenigsFn:
    """Callable wrapper, so the Koenigs function can be fed back into
    ``verify_schroeder``."""

    def __init__(self, phi: Func, fixed_point: float, depth: int = 40, tol: float = 1e-13):
        self.phi, self.d, self.depth, self.tol = phi, fixed_point, depth, tol

    def __call__(self, x):
        return koenigs_eval(self.phi, self.d, x, self.depth, self.tol)


# --------------------------------------------------------------------------
# generators
# --------------------------------------------------------------------------

def _check_local_integrability(fn: Callable, domain, name: str):
    a, b = domain
    a = a if math.isfinite(a) else -50.0
    b = b if math.isfinite(b) else 50.0
    lo, hi = a + 0.01 * (b - a), b - 0.01 * (b - a)
    xs = np.linspace(lo, hi, 401)
    v = fn(xs)
    if not np.all(np.isfinite(v)):
        raise FamilyError(f"{name} is not finite on the interior sample")
    val, err = integrate.quad(lambda t: float(abs(fn(np.array([t]))[0])), lo, hi, limit=200)
    if not math.isfinite(val) or err > 1e-6 * (1 + abs(val)):
        raise FamilyError(f"{name} failed the local integrability check")


def family_power(P: ExprFn, A: float, n: int, p: Optional[ExprFn] = None) -> Dict:
    """P_n = P^n, A_n = A^n and p_n = p / (n P^{n-1}).

    Without ``p`` the seed coefficient is recovered as |1 / P'|.
    """
    n = int(n)
    if n < 1:
        raise FamilyError("n must be >= 1")
    if p is None:
        p_expr = div(Num(1.0), differentiate(P.expr))
        sample = P.d1(np.linspace(*_finite(P.domain), 50)[1:-1])
        if np.all(sample < 0):
            p_expr = mul(Num(-1.0), p_expr)
        params = dict(P.params)
    else:
        p_expr = p.expr
        params = dict(P.params)
        params.update(p.params)
    Pn = power(P.expr, Num(float(n)))
    pn = div(p_expr, mul(Num(float(n)), power(P.expr, Num(float(n - 1)))))
    out = {"P_n": ExprFn(Pn, params, P.domain), "A_n": float(A) ** n,
           "p_n": ExprFn(pn, params, P.domain)}
    inv = out["p_n"]
    _check_local_integrability(lambda t: 1.0 / inv(t), P.domain, "1/p_n")
    return out


def _finite(dom):
    a, b = dom
    return (a if math.isfinite(a) else -10.0, b if math.isfinite(b) else 10.0)


def family_periodic(P: ExprFn, G: ExprFn, A: float, sign: float = 1.0,
                    check_sign: bool = True, n_scan: int = 4001) -> ExprFn:
    """p~ with 1/p~ = sign * P' [G(ln P) + G'(ln P)].

    ``sign`` is the orientation in P' = sign / p of the seed.  G must be
    ln(A^2)-periodic; a sign change of p~ on the scan is rejected.
    """
    lnP = call("ln", P.expr)
    Gl = compose(G.expr, lnP)
    dGl = compose(differentiate(G.expr), lnP)
    inv_p = mul(Num(float(sign)), mul(differentiate(P.expr), Gl + dGl))
    params = dict(G.params)
    params.update(P.params)
    pt = ExprFn(div(Num(1.0), inv_p), params, P.domain)
    period = math.log(A * A)
    t = np.linspace(0.0, period, 64)
    if np.max(np.abs(G(t + period) - G(t))) > 1e-9 * (1 + np.max(np.abs(G(t)))):
        raise FamilyError("G is not ln(A^2)-periodic")
    if check_sign:
        # G + G' over one period decides the sign everywhere
        s = np.linspace(0.0, period, n_scan)
        w = G(s) + G.d1(s)
        if np.min(w) * np.max(w) <= 0:
            raise FamilyError("modulated coefficient changes sign (positivity violated)")
        x = np.linspace(*_finite(P.domain), 2001)[1:-1]
        v = pt(x)
        v = v[np.isfinite(v)]
        if v.size and np.min(v) * np.max(v) <= 0:
            raise FamilyError("modulated coefficient changes sign (positivity violated)")
    return pt


def modulated_antiderivative(P: ExprFn, G: ExprFn) -> ExprFn:
    """P G(ln P), the Schroeder solution behind ``family_periodic``."""
    params = dict(G.params)
    params.update(P.params)
    return ExprFn(mul(P.expr, compose(G.expr, call("ln", P.expr))), params, P.domain)


# --------------------------------------------------------------------------
# integrated equations for constant A
# --------------------------------------------------------------------------

def antiderivative(f: Func, anchor: float, x) -> np.ndarray:
    """int_anchor^x f by adaptive quadrature, pointwise."""
    fs = f.scalar() if isinstance(f, ExprFn) else (lambda t: float(f(np.array([t]))[0]))
    out = []
    for xi in np.asarray(x, dtype=float):
        v, _ = integrate.quad(fs, anchor, xi, epsabs=1e-15, epsrel=1e-13, limit=400)
        out.append(v)
    return np.array(out)


def integrated_orientations(problem: SLProblem, K: KTransform, which: str, anchor: float,
                            grid=None, sign: float = 1.0) -> Dict:
    """Integrate 1/p (which='P', with P' = sign/p) or q (which='Q') from
    ``anchor`` and test both placements of the eigenvalue:
    F(phi^{-1} x) = A^2 F(x) and F(phi^{-1} x) = A^{-2} F(x).

    A must be constant.
    """
    xs = graded_grid(problem, 200, levels=16) if grid is None else np.asarray(grid, dtype=float)
    Avals = K.A(xs)
    if np.max(np.abs(Avals - Avals[0])) > 1e-12 * abs(Avals[0]):
        raise ValueError("integrated equations need a constant A")
    A2 = float(Avals[0]) ** 2
    if which == "P":
        integrand = lambda t: sign / problem.p(t)
    elif which == "Q":
        integrand = problem.q
    else:
        raise ValueError("which must be 'P' or 'Q'")
    from .funcalg import CallableFn
    fn = integrand if isinstance(integrand, ExprFn) else CallableFn(integrand)
    F = antiderivative(fn, anchor, xs)
    Fy = antiderivative(fn, anchor, K.inverse_phi(xs))
    scale = 1.0 + np.abs(F) + np.abs(Fy)
    res_up = float(np.max(np.abs(Fy - A2 * F) / (1.0 + np.abs(Fy) + A2 * np.abs(F))))
    res_down = float(np.max(np.abs(Fy - F / A2) / (1.0 + np.abs(Fy) + np.abs(F) / A2)))
    trivial = bool(np.max(np.abs(F)) < 1e-14)
    return {"which": which, "anchor": anchor, "eigenvalue_A2": A2,
            "res_s_A2": res_up, "res_s_A-2": res_down, "identically_zero": trivial,
            "holds": ("both" if trivial else "A2" if res_up < res_down else "A-2"),
            "scale": float(np.max(scale))}
