"""Sturm-Liouville ODE engine on the quasi-derivative system

    y' = y^[1] / p,    (y^[1])' = (q - z r) y,

with endpoint classification (regular / limit circle / limit point),
the L^2 kernel of tau and the eigenvalue of K on it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from .funcalg import ExprFn, Func, Num, differentiate, div, mul, neg, sub
from .ktransform import KTransform, SLProblem

ODE_L = 40.0          # working length for infinite endpoints
EPS_END = 1e-13       # truncation distance from a finite endpoint, relative to the span
RTOL = 1e-12
ATOL = 1e-30
LEVELS = 40           # geometric refinement levels toward a finite endpoint
LEVELS_INF = 32       # linear refinement levels toward an infinite endpoint
GL_ORDER = 24
RECESSIVE_BACKOFF = 1e3  # second start for the recessive consistency test

_GL = np.polynomial.legendre.leggauss(GL_ORDER)


class SolveError(RuntimeError):
    pass


class KernelError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# symbolic tau
# --------------------------------------------------------------------------

def tau_apply(problem: SLProblem, f: ExprFn) -> ExprFn:
    """(1/r)(-(p f')' + q f) as an expression."""
    for c in (problem.p, problem.q, problem.r):
        if not isinstance(c, ExprFn):
            raise TypeError("tau_apply needs expression-backed coefficients")
    p, q, r = problem.p.expr, problem.q.expr, problem.r.expr
    flux = mul(p, differentiate(f.expr))
    body = sub(mul(q, f.expr), differentiate(flux))
    params = dict(problem.params)
    params.update(f.params)
    return ExprFn(div(body, r), params, (problem.a, problem.b))


# --------------------------------------------------------------------------
# solutions
# --------------------------------------------------------------------------

@dataclass
class SolutionFn:
    """Solution of tau y = z y made of dense-output segments."""

    segments: list  # _Segment
    z: float = 0.0
    scale: float = 1.0
    flags: Dict = field(default_factory=dict)
    component: int = 0  # which (y, y^[1]) pair of a jointly integrated system

    @property
    def lo(self) -> float:
        return min(s.lo for s in self.segments)

    @property
    def hi(self) -> float:
        return max(s.hi for s in self.segments)

    @property
    def grid(self) -> np.ndarray:
        ts = np.concatenate([s.ts for s in self.segments])
        return np.unique(ts)

    def _both(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.full((2, x.size), np.nan)
        for seg in self.segments:
            m = (x >= seg.lo) & (x <= seg.hi) & np.isnan(out[0])
            if np.any(m):
                k = 2 * self.component
                out[:, m] = seg(x[m])[k:k + 2]
        if np.any(np.isnan(out[0])):
            raise ValueError("evaluation outside the integrated range")
        return out * self.scale

    def __call__(self, x) -> np.ndarray:
        return self._both(x)[0]

    def values(self, x) -> np.ndarray:
        """Rows (y, y^[1]) at x from one dense-output pass."""
        return self._both(x)

    def y(self, x) -> np.ndarray:
        return self._both(x)[0]

    def y_quasi(self, x) -> np.ndarray:
        return self._both(x)[1]

    def scaled(self, s: float) -> "SolutionFn":
        return SolutionFn(self.segments, self.z, self.scale * s, dict(self.flags), self.component)


def ode_range(problem: SLProblem) -> Tuple[float, float]:
    """Truncated interval the integrator works on."""
    a, b = problem.finite_range(ODE_L)
    span = b - a
    lo = a + EPS_END * span if math.isfinite(problem.a) else a
    hi = b - EPS_END * span if math.isfinite(problem.b) else b
    return lo, hi


def default_anchor(problem: SLProblem) -> float:
    a, b = problem.a, problem.b
    if math.isfinite(a) and math.isfinite(b):
        return 0.5 * (a + b)
    if math.isfinite(a):
        return a + 1.0
    if math.isfinite(b):
        return b - 1.0
    return 0.0


def _scalar(c) -> callable:
    return c.scalar() if isinstance(c, ExprFn) else (lambda t: float(c(np.array([t]))[0]))


def _coeffs(problem: SLProblem):
    return tuple(_scalar(c) for c in (problem.p, problem.q, problem.r))


def _coeffs_at_distance(problem: SLProblem, d: float, sign: float):
    """p, q, r as functions of t = |x - d|, evaluated without forming x."""
    out = []
    for c in (problem.p, problem.q, problem.r):
        if isinstance(c, ExprFn):
            out.append(c.at_distance(d, sign).scalar())
        else:
            f = _scalar(c)
            out.append(lambda t, f=f: f(d + sign * t))
    return tuple(out)


class _Segment:
    """Dense solution on [lo, hi].  With a finite reference endpoint d the
    integration variable is s = -ln((x - d)/(x0 - d)), which turns the
    power-law behaviour at a singular endpoint into exponential behaviour
    in s and keeps step sizes away from the floating-point spacing."""

    def __init__(self, sol, x0: float, x1: float, d: Optional[float]):
        self.sol, self.x0, self.d = sol, x0, d
        self.lo, self.hi = min(x0, x1), max(x0, x1)

    def to_s(self, x):
        if self.d is None:
            return x
        return -np.log((x - self.d) / (self.x0 - self.d))

    def to_x(self, s):
        if self.d is None:
            return s
        return self.d + (self.x0 - self.d) * np.exp(-s)

    def __call__(self, x):
        return self.sol(self.to_s(np.asarray(x, dtype=float)))

    @property
    def ts(self):
        # the exp/log round trip may overshoot the ends by an ulp
        return np.clip(np.sort(self.to_x(self.sol.ts)), self.lo, self.hi)


def _integrate(problem: SLProblem, z: float, x0: float, u0, x1: float, d: Optional[float] = None):
    p, q, r = _coeffs(problem)
    u0 = np.asarray(u0, dtype=float)
    single, pair = u0.size == 2, u0.size == 4
    if d is None:
        def f(x, u):
            if single:
                return (u[1] / p(x), (q(x) - z * r(x)) * u[0])
            ip, c = 1.0 / p(x), q(x) - z * r(x)
            if pair:
                return (u[1] * ip, c * u[0], u[3] * ip, c * u[2])
            du = np.empty_like(u)
            du[0::2] = u[1::2] * ip
            du[1::2] = c * u[0::2]
            return du
        span = (x0, x1)
    else:
        e0 = x0 - d
        sgn = 1.0 if e0 > 0 else -1.0
        pt, qt, rt = _coeffs_at_distance(problem, d, sgn)
        t0 = abs(e0)

        def f(s, u):
            t = t0 * math.exp(-s)
            j = -sgn * t
            if single:
                return (j * u[1] / pt(t), j * (qt(t) - z * rt(t)) * u[0])
            ip, c = j / pt(t), j * (qt(t) - z * rt(t))
            if pair:
                return (u[1] * ip, c * u[0], u[3] * ip, c * u[2])
            du = np.empty_like(u)
            du[0::2] = u[1::2] * ip
            du[1::2] = c * u[0::2]
            return du
        span = (0.0, -math.log((x1 - d) / e0))
    sol = solve_ivp(f, span, u0, method="DOP853", rtol=RTOL, atol=ATOL, dense_output=True)
    if sol.status != 0:
        raise SolveError(f"integration from {x0} toward {x1} stopped: {sol.message}")
    return _Segment(sol.sol, x0, x1, d)


def _toward(problem: SLProblem, x0: float, x1: float) -> Optional[float]:
    """Reference endpoint for a segment ending at x1."""
    if x1 < x0 and math.isfinite(problem.a):
        return problem.a
    if x1 > x0 and math.isfinite(problem.b):
        return problem.b
    return None


def _path(problem: SLProblem, z: float, x0: float, u0, x1: float) -> List[_Segment]:
    """Integrate x0 -> x1; the part leaving a finite endpoint and the part
    approaching one each get their own logarithmic coordinate."""
    mid = default_anchor(problem)
    near_a = math.isfinite(problem.a) and x0 < mid < x1
    near_b = math.isfinite(problem.b) and x1 < mid < x0
    if near_a or near_b:
        first = _integrate(problem, z, x0, u0, mid, problem.a if near_a else problem.b)
        u_mid = first(np.array([mid]))[:, 0]
        return [first, _integrate(problem, z, mid, u_mid, x1, _toward(problem, mid, x1))]
    return [_integrate(problem, z, x0, u0, x1, _toward(problem, x0, x1))]


def _segments(problem: SLProblem, z: float, x0: float, u0, direction: str,
              end: Optional[float]) -> List[_Segment]:
    lo, hi = ode_range(problem)
    if not lo < x0 < hi and not (lo <= x0 <= hi and direction in ("a", "b")):
        raise ValueError("x0 must be interior")
    segs = []
    if end is not None:
        segs += _path(problem, z, x0, u0, float(end))
    else:
        if direction in ("a", "both") and x0 > lo:
            segs += _path(problem, z, x0, u0, lo)
        if direction in ("b", "both") and x0 < hi:
            segs += _path(problem, z, x0, u0, hi)
    if not segs:
        raise ValueError("empty integration range")
    return segs


def solve_tau(problem: SLProblem, z: float, x0: float, init: Sequence[float],
              direction: str = "both", end: Optional[float] = None) -> SolutionFn:
    """Integrate from x0 with (y, y^[1]) = init toward a, b or both
    truncation points (or toward ``end``)."""
    init = np.asarray(init, dtype=float)
    if init.shape != (2,):
        raise ValueError("init must be (y, y^[1])")
    return SolutionFn(_segments(problem, z, x0, init, direction, end), z)


def fundamental_system(problem: SLProblem, z: float, x0: float, inits: Sequence[Sequence[float]],
                       direction: str = "both", end: Optional[float] = None) -> List[SolutionFn]:
    """Several solutions at the same z integrated as one system (shared
    steps); one SolutionFn per row of ``inits``."""
    inits = np.atleast_2d(np.asarray(inits, dtype=float))
    if inits.ndim != 2 or inits.shape[1] != 2:
        raise ValueError("inits must have shape (k, 2)")
    segs = _segments(problem, z, x0, inits.ravel(), direction, end)
    return [SolutionFn(segs, z, component=i) for i in range(inits.shape[0])]


def wronskian(f, g, x, problem: Optional[SLProblem] = None) -> np.ndarray:
    """W(f, g) = f g^[1] - f^[1] g; expression inputs need ``problem``."""
    def parts(h):
        if isinstance(h, SolutionFn):
            both = h._both(x)
            return both[0], both[1]
        if problem is None:
            raise ValueError("expression inputs need the problem for p")
        xx = np.asarray(x, dtype=float)
        return np.asarray(h(xx), dtype=float), problem.p(xx) * h.d1(xx)
    fy, fq = parts(f)
    gy, gq = parts(g)
    return fy * gq - fq * gy


# --------------------------------------------------------------------------
# integrability trend tests
# --------------------------------------------------------------------------

def _panel_integral(g, lo, hi) -> float:
    t, w = _GL
    x = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
    v = np.asarray(g(x), dtype=float)
    return float(0.5 * (hi - lo) * np.dot(w, v))


def trend(partials: Sequence[float], window: int = 8) -> Tuple[str, Dict]:
    """Classify a sequence of partial integrals as converges / diverges /
    inconclusive from its last ``window`` increments."""
    I = np.asarray(partials, dtype=float)
    info = {"last": float(I[-1]) if I.size else 0.0}
    if not np.all(np.isfinite(I)):
        info["reason"] = "non-finite partial integral"
        return "diverges", info
    inc = np.abs(np.diff(I))[-window:]
    scale = 1.0 + abs(I[-1])
    if np.all(inc <= 1e-13 * scale):
        info["ratio"] = 0.0
        return "converges", info
    pos = inc[inc > 0]
    if pos.size < 2:
        info["ratio"] = 0.0
        return "converges", info
    ratio = float(np.exp(np.mean(np.diff(np.log(pos)))))
    info["ratio"] = ratio
    if ratio < 0.97:
        return "converges", info
    if ratio > 0.995:
        return "diverges", info
    return "inconclusive", info


def tail_partials(g, d: float, anchor: float, stop: Optional[float] = None,
                  levels: Optional[int] = None) -> List[float]:
    """Partial integrals of |g| from ``anchor`` toward endpoint ``d``.

    Finite d: panels [d + e_{k+1}, d + e_k], e_k = e_0 2^-k, e_0 = |anchor-d|/2.
    Infinite d: equal panels up to ``stop``.
    """
    g_abs = lambda x: np.abs(g(x))
    if math.isfinite(d):
        levels = LEVELS if levels is None else levels
        sgn = 1.0 if anchor > d else -1.0
        e0 = abs(anchor - d) / 2.0
        total = _panel_integral(g_abs, *sorted((anchor, d + sgn * e0)))
        out = [total]
        e = e0
        for _ in range(levels):
            lo, hi = sorted((d + sgn * e / 2.0, d + sgn * e))
            total += _panel_integral(g_abs, lo, hi)
            out.append(total)
            e /= 2.0
        return out
    levels = LEVELS_INF if levels is None else levels
    if stop is None:
        raise ValueError("infinite endpoint needs a stop point")
    edges = np.linspace(anchor, stop, levels + 1)
    out, total = [], 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        total += _panel_integral(g_abs, *sorted((lo, hi)))
        out.append(total)
    return out


# --------------------------------------------------------------------------
# classification
# --------------------------------------------------------------------------

@dataclass
class EndpointClass:
    kind: str  # Regular | LimitCircle | LimitPoint | Inconclusive
    endpoint: float
    diagnostics: Dict = field(default_factory=dict)

    def __str__(self):
        return self.kind


def _endpoint(problem: SLProblem, which: str) -> float:
    if which not in ("a", "b"):
        raise ValueError("which must be 'a' or 'b'")
    return problem.a if which == "a" else problem.b


def _stop(problem: SLProblem, which: str) -> float:
    lo, hi = ode_range(problem)
    return lo if which == "a" else hi


def coefficient_integrability(problem: SLProblem, which: str, anchor: Optional[float] = None) -> Dict[str, str]:
    d = _endpoint(problem, which)
    anchor = default_anchor(problem) if anchor is None else anchor
    if not math.isfinite(d):
        return {"r": "infinite endpoint", "1/p": "infinite endpoint", "q": "infinite endpoint"}
    out = {}
    for name, g in (("r", problem.r), ("1/p", lambda x: 1.0 / problem.p(x)), ("q", problem.q)):
        out[name] = trend(tail_partials(g, d, anchor))[0]
    return out


def l2_at(problem: SLProblem, sol: SolutionFn, which: str, anchor: Optional[float] = None,
          stop: Optional[float] = None):
    """Trend of int |y|^2 r toward the endpoint ``which``; panels stay
    between ``anchor`` and ``stop`` (default: the truncation point)."""
    d = _endpoint(problem, which)
    anchor = default_anchor(problem) if anchor is None else anchor
    stop = _stop(problem, which) if stop is None else stop
    g = lambda x: sol(x) ** 2 * problem.r(x)
    if math.isfinite(d):
        levels = int(math.floor(math.log2(abs(anchor - d) / 2.0 / abs(stop - d)))) - 1
        return trend(tail_partials(g, d, anchor, levels=min(LEVELS, levels)))
    return trend(tail_partials(g, d, anchor, stop=stop))


def classify_endpoint(problem: SLProblem, which: str, anchor: Optional[float] = None) -> EndpointClass:
    d = _endpoint(problem, which)
    anchor = default_anchor(problem) if anchor is None else anchor
    diag: Dict = {"anchor": anchor}
    if math.isfinite(d):
        coeff = coefficient_integrability(problem, which, anchor)
        diag["coefficients"] = coeff
        if all(v == "converges" for v in coeff.values()):
            return EndpointClass("Regular", d, diag)
    flags = []
    inits = ((1.0, 0.0), (0.0, 1.0))
    for init, sol in zip(inits, fundamental_system(problem, 0.0, anchor, inits, direction=which)):
        verdict, info = l2_at(problem, sol, which, anchor)
        flags.append(verdict)
        diag.setdefault("solutions", []).append({"init": init, "l2": verdict, **info})
    if "inconclusive" in flags:
        return EndpointClass("Inconclusive", d, diag)
    kind = "LimitCircle" if all(f == "converges" for f in flags) else "LimitPoint"
    return EndpointClass(kind, d, diag)


# --------------------------------------------------------------------------
# kernel of tau and the eigenvalue of K on it
# --------------------------------------------------------------------------

def _inner_start(problem: SLProblem, which: str) -> float:
    """Second, less extreme starting point for the recessive solution."""
    lo, hi = ode_range(problem)
    anchor = default_anchor(problem)
    if which == "a":
        if math.isfinite(problem.a):
            return problem.a + RECESSIVE_BACKOFF * (lo - problem.a)
        return lo + 0.25 * (anchor - lo)
    if math.isfinite(problem.b):
        return problem.b - RECESSIVE_BACKOFF * (problem.b - hi)
    return hi - 0.25 * (hi - anchor)


def recessive_solution(problem: SLProblem, which: str, z: float = 0.0,
                       start: Optional[float] = None) -> SolutionFn:
    """Solution started near endpoint ``which`` with (y, y^[1]) = (0, 1)
    and integrated inward across the interval (the stable direction for
    the solution that is subdominant at that end), normalized to 1 at the
    anchor."""
    lo, hi = ode_range(problem)
    if start is None:
        start = lo if which == "a" else hi
    end = hi if which == "a" else lo
    sol = SolutionFn(_path(problem, z, start, (0.0, 1.0), end), z)
    x_mid = default_anchor(problem)
    v = float(sol(x_mid)[0])
    if v == 0.0 or not math.isfinite(v):
        raise KernelError("recessive solution vanishes or overflows at the anchor")
    return sol.scaled(1.0 / v)


def recessive_check(problem: SLProblem, which: str, z: float = 0.0) -> Tuple[SolutionFn, Dict]:
    """Recessive solution plus a consistency test: restarting from a less
    extreme point must reproduce it where both are far from their starts.
    Without a subdominant solution (e.g. 1 and x for -y'' = 0 at infinity)
    the two runs disagree at O(1)."""
    inner = _inner_start(problem, which)
    sol = recessive_solution(problem, which, z)
    alt = recessive_solution(problem, which, z, start=inner)
    anchor = default_anchor(problem)
    d = _endpoint(problem, which)
    if math.isfinite(d):
        far, stop = 0.5 * (anchor + d), inner
    else:
        far = stop = 0.5 * (anchor + inner)
    lo_c, hi_c = sorted((anchor, far))
    xs = np.linspace(lo_c, hi_c, 64)
    ya, yb = sol(xs), alt(xs)
    mismatch = float(np.max(np.abs(ya - yb) / (np.abs(ya) + np.abs(yb) + 1e-300)))
    return sol, {"mismatch": mismatch, "exists": mismatch <= 1e-6, "stop": stop}


@dataclass
class KernelBasis:
    solutions: List[SolutionFn]
    classes: Dict[str, EndpointClass]
    dimension: int  # number of solutions that are L^2 on (a, b)

    def __len__(self):
        return len(self.solutions)

    def __getitem__(self, i):
        return self.solutions[i]


def kernel_basis(problem: SLProblem, anchor: Optional[float] = None) -> KernelBasis:
    """tau y = 0 solutions in L^2(r dx).

    With a limit point end the candidate is the recessive solution there
    (with two, the one recessive at a); its membership in L^2 at the other
    end is recorded in ``flags['in_l2']``.
    """
    anchor = default_anchor(problem) if anchor is None else anchor
    classes = {w: classify_endpoint(problem, w, anchor) for w in ("a", "b")}
    for w, c in classes.items():
        if c.kind == "Inconclusive":
            raise KernelError(f"endpoint {w} could not be classified")
    lp = [w for w in ("a", "b") if classes[w].kind == "LimitPoint"]
    if not lp:
        sols = fundamental_system(problem, 0.0, anchor, ((1.0, 0.0), (0.0, 1.0)))
        for s in sols:
            s.flags["in_l2"] = True
        return KernelBasis(sols, classes, 2)
    w = lp[0]
    sol, info = recessive_check(problem, w)
    ok = info["exists"]
    sol.flags["recessive_mismatch"] = info["mismatch"]
    for side in ("a", "b"):
        stop = info["stop"] if side == w else None
        verdict, _ = l2_at(problem, sol, side, anchor, stop=stop)
        sol.flags[f"l2_{side}"] = verdict
        ok &= verdict == "converges"
    sol.flags["in_l2"] = bool(ok)
    sol.flags["recessive_at"] = w
    return KernelBasis([sol], classes, 1 if ok else 0)


@dataclass
class ZetaResult:
    zeta: float
    spread: float
    in_l2: bool
    grid: np.ndarray


def zeta_grid(problem: SLProblem, n: int = 200) -> np.ndarray:
    a, b = problem.finite_range(problem.L)
    w = b - a
    return np.linspace(a + 0.1 * w, b - 0.1 * w, n)


def k_eigenvalue_on_kernel(problem: SLProblem, K: KTransform, basis: Optional[KernelBasis] = None,
                           n: int = 200, tol: float = 1e-8) -> ZetaResult:
    """zeta = (K u)(x) / u(x) on the middle 80% of the working interval."""
    basis = kernel_basis(problem) if basis is None else basis
    if len(basis) != 1:
        raise KernelError(f"kernel has {len(basis)} candidate solutions; need exactly 1")
    u = basis[0]
    x = zeta_grid(problem, n)
    ratio = K.A(x) * u(K.phi(x)) / u(x)
    zeta = float(np.mean(ratio))
    spread = float((np.max(ratio) - np.min(ratio)) / abs(zeta))
    if not spread <= tol:
        raise KernelError(f"K u / u is not constant (spread {spread:.3e})")
    return ZetaResult(zeta, spread, bool(u.flags.get("in_l2", False)), x)


def apply_K_solution(problem: SLProblem, K: KTransform, u: SolutionFn, x) -> Tuple[np.ndarray, np.ndarray]:
    """(K u, (K u)^[1]) at x from u's values and quasi-derivative."""
    x = np.asarray(x, dtype=float)
    y = K.phi(x)
    uy, uq = u._both(y)
    du = uq / problem.p(y)
    Ku = K.A(x) * uy
    dKu = K.A.d1(x) * uy + K.A(x) * du * K.phi.d1(x)
    return Ku, problem.p(x) * dKu
