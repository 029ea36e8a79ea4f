"""Liouville-Green change of variables: a Sturm-Liouville problem becomes a
Schroedinger problem in xi = sigma int_k^x sqrt(r/p), and K is conjugated
to (K~ f)(xi) = C^{-1/4} A^{1/2} phi'^{-1/4} f(xi(phi(x(xi)))).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate

from .funcalg import (CallableFn, ExprFn, Func, Num, compose, differentiate, div, mul, power,
                      sub, add)
from .ktransform import GridFn, KTransform, SLProblem, graded_grid, residual_coefficient_eqs
from .slcore import default_anchor, trend

GL_ORDER = 24
RATIO = 10.0 ** 0.125  # distance ratio of neighbouring table nodes
MIN_DIST = 1e-150
MAX_REACH = 1e150


class LGError(ValueError):
    pass


class LGValidationError(AssertionError):
    pass


def _symbolic(f: Func, name: str) -> ExprFn:
    if not isinstance(f, ExprFn):
        raise LGError(f"{name} must be an expression for the Liouville-Green transform")
    return f


def _merged(*fns: ExprFn):
    params = {}
    for f in fns:
        params.update(f.params)
    return params


def _gl(order: int = GL_ORDER):
    g, w = np.polynomial.legendre.leggauss(order)
    return g, w


def _ray(k: float, d: float) -> np.ndarray:
    """Nodes from k toward the end d, geometric in the distance to d (or
    in the distance travelled when d is infinite)."""
    if math.isfinite(d):
        dist0 = abs(k - d)
        floor = max(dist0 * MIN_DIST, 4 * np.finfo(float).eps * abs(d))
        n = int(math.ceil(math.log(dist0 / floor) / math.log(RATIO)))
        dist = dist0 * RATIO ** -np.arange(0, n + 1)
        return d + math.copysign(1.0, k - d) * dist
    step = max(1.0, abs(k))
    n = int(math.ceil(math.log(MAX_REACH / step) / math.log(RATIO)))
    travel = np.concatenate([[0.0], step * RATIO ** np.arange(0, n)])
    return k + math.copysign(1.0, d) * travel


@dataclass
class LGMap:
    """xi(x) = sigma int_k^x sqrt(r/p) tabulated on graded nodes.

    ``xi`` samples the map, ``x_of_xi`` its inverse; ``forward`` and
    ``inverse`` evaluate them to rounding level.  cal_A, cal_B are the
    images of a and b (infinite when the integral diverges).
    """

    xi: GridFn
    x_of_xi: GridFn
    cal_A: float
    cal_B: float
    anchor: float
    orientation: float
    H: ExprFn  # sqrt(p/r) = sigma dx/dxi
    W: ExprFn  # sqrt(r/p) = sigma dxi/dx

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        t, v = self.xi.x, self.xi.values
        flat = np.atleast_1d(x).ravel()
        if np.any(flat < t[0]) or np.any(flat > t[-1]):
            raise LGError("point outside the tabulated range")
        j = np.clip(np.searchsorted(t, flat), 1, len(t) - 1)
        near = np.where(np.abs(flat - t[j - 1]) <= np.abs(t[j] - flat), j - 1, j)
        g, w = _gl()
        lo = t[near]
        h = 0.5 * (flat - lo)
        nodes = (lo + h)[:, None] + h[:, None] * g[None, :]
        vals = self.W(nodes.ravel()).reshape(nodes.shape)
        out = v[near] + self.orientation * (vals @ w) * h
        return out.reshape(x.shape) if x.ndim else out[0]

    def inverse(self, xi, iters: int = 8) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        flat = np.atleast_1d(xi).ravel()
        lo_xi, hi_xi = self.x_of_xi.x[0], self.x_of_xi.x[-1]
        if np.any(flat < lo_xi) or np.any(flat > hi_xi):
            raise LGError("xi outside the tabulated range")
        x = self.x_of_xi(flat)
        # keep Newton inside the table cell that brackets the target
        xs, vs = self.x_of_xi.values, self.x_of_xi.x
        j = np.clip(np.searchsorted(vs, flat), 1, len(vs) - 1)
        b0, b1 = np.minimum(xs[j - 1], xs[j]), np.maximum(xs[j - 1], xs[j])
        for _ in range(iters):
            step = (self.forward(x) - flat) / (self.orientation * self.W(x))
            xn = np.clip(x - step, b0, b1)
            if np.all(np.abs(xn - x) <= 2 * np.finfo(float).eps * np.abs(x)):
                x = xn
                break
            x = xn
        return x.reshape(xi.shape) if xi.ndim else x[0]

    def pull(self, g: ExprFn) -> CallableFn:
        """xi -> g(x(xi)) with derivatives by the chain rule."""
        H, s = self.H, self.orientation
        gd1 = g.derivative(1)
        f0 = lambda t: g(self.inverse(t))

        def f1(t):
            x = self.inverse(t)
            return s * H(x) * gd1(x)

        def f2(t):
            x = self.inverse(t)
            return H(x) * (H.d1(x) * gd1(x) + H(x) * g.d2(x))

        return CallableFn(f0, f1, f2)


def lg_build(problem: SLProblem, k: Optional[float] = None, orientation: float = 1.0,
             n_check: int = 400) -> LGMap:
    """Tabulate xi for ``problem`` with anchor k (default: the midpoint, or
    a + 1 / b - 1 on half-infinite intervals).

    k may sit at a finite endpoint where sqrt(r/p) is integrable.
    """
    p = _symbolic(problem.p, "p")
    r = _symbolic(problem.r, "r")
    if orientation not in (1.0, -1.0, 1, -1):
        raise LGError("orientation must be +1 or -1")
    orientation = float(orientation)
    a, b = problem.a, problem.b
    k = default_anchor(problem) if k is None else float(k)
    if not (a <= k <= b and math.isfinite(k)):
        raise LGError("anchor must lie in the closed interval")

    xs = graded_grid(problem, n_check)
    pr = p(xs) * r(xs)
    if not np.all(np.isfinite(pr)) or np.any(pr <= 0):
        raise LGError("p r must be positive in the interior")
    params = _merged(p, r)
    W = ExprFn(power(div(r.expr, p.expr), Num(0.5)), params, (a, b))
    H = ExprFn(power(div(p.expr, r.expr), Num(0.5)), params, (a, b))

    g, w = _gl()
    pieces, sums, ends = [], [], []
    for d, side in ((a, -1.0), (b, 1.0)):
        if k == d:
            pieces.append(np.array([k]))
            sums.append(np.array([0.0]))
            ends.append(0.0)
            continue
        nodes = _ray(k, d)
        lo, hi = nodes[:-1], nodes[1:]
        h = 0.5 * (hi - lo)
        with np.errstate(all="ignore"):
            vals = W(((lo + hi) / 2)[:, None] + h[:, None] * g[None, :])
        panel = (vals @ w) * h
        good = np.isfinite(panel)
        cut = len(panel) if np.all(good) else int(np.argmin(good))
        panel = panel[:cut]
        nodes = nodes[: cut + 1]
        cum = np.concatenate([[0.0], np.cumsum(panel)])
        pieces.append(nodes)
        sums.append(cum)
        verdict, _ = trend(cum[1:]) if len(cum) > 9 else ("inconclusive", {})
        if verdict == "converges" and cut == len(good):
            ends.append(float(cum[-1]))
        elif verdict == "converges":
            # the table stopped early; finish the tail adaptively
            tail, _ = integrate.quad(W.scalar(), nodes[-1], d, limit=400)
            ends.append(float(cum[-1] + tail))
        else:
            ends.append(math.inf * side)
        if math.isfinite(d) and math.isfinite(ends[-1]) and nodes[-1] != d:
            # close the table at a finite end so the endpoint itself maps
            pieces[-1] = np.append(nodes, d)
            sums[-1] = np.append(cum, ends[-1])
    # panel sums are signed integrals from k, so both rays read xi directly
    x_tab = np.concatenate([pieces[0][::-1][:-1], pieces[1]])
    v_tab = orientation * np.concatenate([sums[0][::-1][:-1], sums[1]])
    x_tab, keep = np.unique(x_tab, return_index=True)
    v_tab = v_tab[keep]
    moves = np.concatenate([[True], np.diff(v_tab) != 0])
    if not moves[-1]:
        # a run of equal values at the far end keeps its outermost node
        last = len(moves) - 1 - int(np.argmax(moves[::-1]))
        moves[last], moves[-1] = False, True
    x_tab, v_tab = x_tab[moves], v_tab[moves]
    cal = sorted([orientation * ends[0] + 0.0, orientation * ends[1] + 0.0])
    order = np.argsort(v_tab)
    lgmap = LGMap(GridFn(x_tab, v_tab), GridFn(v_tab[order], x_tab[order]),
                  float(cal[0]), float(cal[1]), k, orientation, H, W)
    return lgmap


def potential_expr(problem: SLProblem) -> ExprFn:
    """V as a function of x:
    -(1/16)(1/(pr))[(pr)'/r]^2 + (1/4)(1/r)[(pr)'/r]' + q/r."""
    p = _symbolic(problem.p, "p")
    q = _symbolic(problem.q, "q")
    r = _symbolic(problem.r, "r")
    pr = mul(p.expr, r.expr)
    wq = div(differentiate(pr), r.expr)
    first = mul(Num(-1.0 / 16.0), div(power(wq, Num(2.0)), pr))
    second = mul(Num(0.25), div(differentiate(wq), r.expr))
    V = add(add(first, second), div(q.expr, r.expr))
    return ExprFn(V, _merged(p, q, r), (problem.a, problem.b))


def lg_potential(problem: SLProblem, lgmap: Optional[LGMap] = None) -> CallableFn:
    """V(xi) through exact symbolic derivatives, composed with x(xi)."""
    lgmap = lg_build(problem) if lgmap is None else lgmap
    return lgmap.pull(potential_expr(problem))


def lg_problem(problem: SLProblem, lgmap: LGMap, truncation: Optional[float] = None) -> SLProblem:
    """The Schroedinger problem p = r = 1, q = V on (cal_A, cal_B)."""
    V = lg_potential(problem, lgmap)
    one = ExprFn.constant(1.0, (lgmap.cal_A, lgmap.cal_B))
    sing = []
    for d in problem.singular:
        if math.isfinite(d) and d in (problem.a, problem.b):
            img = lgmap.cal_A if (d == problem.a) == (lgmap.orientation > 0) else lgmap.cal_B
            if math.isfinite(img):
                sing.append(img)
    return SLProblem(one, V, one, lgmap.cal_A, lgmap.cal_B, tuple(sing),
                     name=(problem.name + "_lg") if problem.name else "lg",
                     truncation=truncation if truncation is not None else problem.truncation)


def lg_transform_K(problem: SLProblem, K: KTransform, lgmap: LGMap, validate: bool = True,
                   tol: float = 1e-8, n: int = 500) -> KTransform:
    """(A~, phi~, 1) with A~ = C^{-1/4} A(x)^{1/2} phi'(x)^{-1/4} and
    phi~ = xi o phi o x, x = x(xi)."""
    A = _symbolic(K.A, "A")
    phi = _symbolic(K.phi, "phi")
    W = lgmap.W
    params = _merged(A, phi, W)
    dphi = differentiate(phi.expr)
    At = mul(Num(K.C ** -0.25), mul(power(A.expr, Num(0.5)), power(dphi, Num(-0.25))))
    At_fn = lgmap.pull(ExprFn(At, params, (problem.a, problem.b)))

    # phi~' = sqrt(r/p)(phi(x)) phi'(x) sqrt(p/r)(x); the orientations cancel
    E = ExprFn(mul(mul(compose(W.expr, phi.expr), dphi), lgmap.H.expr), params)
    Ed1 = E.derivative(1)
    s = lgmap.orientation

    def ph0(t):
        return lgmap.forward(phi(lgmap.inverse(t)))

    def ph1(t):
        return E(lgmap.inverse(t))

    def ph2(t):
        x = lgmap.inverse(t)
        return s * lgmap.H(x) * Ed1(x)

    inv = None
    if K.phi_inv is not None:
        pinv = K.phi_inv
        inv = CallableFn(lambda t: lgmap.forward(pinv(lgmap.inverse(t))))
    Kt = KTransform(At_fn, CallableFn(ph0, ph1, ph2), 1.0, inv, (lgmap.cal_A, lgmap.cal_B),
                    (K.name + "_lg") if K.name else "lg")
    if validate:
        target = lg_problem(problem, lgmap)
        grid = lg_grid(problem, lgmap, n)
        res = residual_coefficient_eqs(target, Kt, grid=grid)
        bad = {key: v for key, v in res.items() if not v <= tol}
        if bad:
            raise LGValidationError(f"transformed pair fails the coefficient equations: {bad}")
    return Kt


def lg_grid(problem: SLProblem, lgmap: LGMap, n: int = 500) -> np.ndarray:
    """xi-images of a graded x-grid of the source problem."""
    xs = graded_grid(problem, n)
    v = lgmap.forward(xs)
    return np.sort(v)


def unitary_image(problem: SLProblem, lgmap: LGMap, f: Func):
    """(G f)(xi) = [p r]^{1/4}(x(xi)) f(x(xi))."""
    def g(t):
        x = lgmap.inverse(t)
        return (problem.p(x) * problem.r(x)) ** 0.25 * f(x)
    return g
