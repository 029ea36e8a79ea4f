"""Finite-volume discretisation of tau with separated Robin or coupled
(eta = 0) conditions, the smallest eigenvalues of the resulting pencil,
and the zero-mode / invariance checks built on them.

The scheme is the symmetric form of

    (1/r_i) [ -(p_{i+1/2}(y_{i+1} - y_i)/h_{i+1/2} - p_{i-1/2}(y_i - y_{i-1})/h_{i-1/2}) / w_i + q_i y_i ]

with dual-cell widths w_i, i.e. the pencil (S, M) with M = diag(r_i w_i).
Boundary conditions enter through the boundary term
g^[1](a) g(a) - g^[1](b) g(b) of the quadratic form.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal
from scipy.sparse.linalg import eigsh

from .extensions import Coupled, Separated, _one_sided_limit, canonical_angle
from .ktransform import KTransform, SLProblem

GRADE_RATIO = 1.02
EPS_TRUNC = 1e-8  # distance of the cap from a singular finite end, relative to the span
MAX_COUNT = 10

BoundaryCondition = Union[Separated, Coupled]


class DiscretizationError(ValueError):
    pass


class EigenError(RuntimeError):
    pass


def worker_count() -> int:
    """Thread cap from KINVSL_THREADS (default: CPU count)."""
    raw = os.environ.get("KINVSL_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)


# --------------------------------------------------------------------------
# boundary condition descriptors
# --------------------------------------------------------------------------

def parse_bc(text: str) -> BoundaryCondition:
    """'dirichlet', 'neumann', 'robin:alpha,beta' (radians, '-' for a limit
    point end), 'krein:alpha,beta' (same syntax) or
    'coupled:R11,R12,R21,R22'."""
    text = text.strip().lower()
    if text == "dirichlet":
        return Separated(0.0, 0.0)
    if text == "neumann":
        return Separated(math.pi / 2, math.pi / 2)
    kind, _, rest = text.partition(":")
    vals = [v.strip() for v in rest.split(",")] if rest else []
    if kind in ("robin", "krein") and len(vals) == 2:
        conv = [None if v in ("-", "none") else float(v) for v in vals]
        return Separated(*conv)
    if kind == "coupled" and len(vals) == 4:
        R = [float(v) for v in vals]
        return Coupled(0.0, ((R[0], R[1]), (R[2], R[3])))
    raise ValueError(f"cannot parse boundary condition {text!r}")


def describe_bc(bc: BoundaryCondition) -> str:
    if isinstance(bc, Coupled):
        R = bc.matrix
        return "coupled:" + ",".join(f"{v:.12g}" for v in R.ravel())
    fmt = lambda v: "-" if v is None else f"{v:.12g}"
    return f"robin:{fmt(bc.alpha)},{fmt(bc.beta)}"


# --------------------------------------------------------------------------
# grids
# --------------------------------------------------------------------------

def _graded_side(d: float, lo_dist: float, h: float, ratio: float, toward: float) -> np.ndarray:
    """Points d + toward * dist with geometric dist from lo_dist until the
    spacing reaches h."""
    dist = [lo_dist]
    while dist[-1] * (ratio - 1.0) < h:
        dist.append(dist[-1] * ratio)
    return d + toward * np.array(dist)


def build_grid(lo: float, hi: float, N: int, grade_lo: Optional[float] = None,
               grade_hi: Optional[float] = None, ratio: float = GRADE_RATIO) -> np.ndarray:
    """Uniform grid of N cells on [lo, hi], geometrically graded (distance
    ratio ``ratio``) toward a singular end sitting just outside lo or hi."""
    h = (hi - lo) / N
    parts, left, right = [], lo, hi
    if grade_lo is not None:
        g = _graded_side(grade_lo, lo - grade_lo, h, ratio, 1.0)
        parts.append(g[:-1])
        left = g[-1]
    if grade_hi is not None:
        g = _graded_side(grade_hi, grade_hi - hi, h, ratio, -1.0)[::-1]
        right = g[0]
        tail = g[1:]
    else:
        tail = np.array([])
    if right <= left:
        raise DiscretizationError("grading leaves no room for the uniform part")
    m = max(int(math.ceil((right - left) / h)), 2)
    parts.append(np.linspace(left, right, m + 1))
    parts.append(tail)
    x = np.concatenate(parts)
    return np.unique(x)


# --------------------------------------------------------------------------
# discretisation
# --------------------------------------------------------------------------

@dataclass
class DiscreteExtension:
    grid: np.ndarray          # all nodes, including capped or Dirichlet ends
    free: np.ndarray          # indices of unknowns in ``grid``
    stiffness: sparse.csr_matrix
    weight: np.ndarray        # diagonal of M
    bc: BoundaryCondition
    truncation: Dict[str, Dict] = field(default_factory=dict)
    problem: Optional[SLProblem] = None
    tie: Optional[Tuple[int, int, float]] = None  # (eliminated node, kept node, factor)

    @property
    def tridiagonal(self) -> bool:
        S = self.stiffness.tocoo()
        return bool(np.all(np.abs(S.row - S.col) <= 1))

    def full_vector(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.grid.size)
        out[self.free] = v
        if self.tie is not None:
            gone, kept, fac = self.tie
            out[gone] = fac * out[kept]
        return out

    def symmetry_error(self) -> float:
        S = self.stiffness
        d = abs(S - S.T).max()
        return float(d / max(abs(S).max(), 1e-300))


def _regular(problem: SLProblem, d: float) -> bool:
    return math.isfinite(d) and not any(d == s for s in problem.singular)


def discretize(problem: SLProblem, bc: BoundaryCondition, N: int = 1000,
               L: Optional[float] = None, eps: float = EPS_TRUNC,
               ratio: float = GRADE_RATIO) -> DiscreteExtension:
    """Pencil (S, M) on a grid with N uniform cells plus grading.

    Limit point (or otherwise non-regular) ends are capped with a
    Dirichlet condition at distance eps*span (finite) or at L (infinite).
    """
    L = problem.L if L is None else L
    a, b = problem.finite_range(L)
    span = b - a
    info = {}
    ends = {}
    for side, d in (("a", problem.a), ("b", problem.b)):
        if _regular(problem, d):
            ends[side] = (d, None)
            info[side] = {"kind": "regular", "at": d}
        elif math.isfinite(d):
            cap = d + eps * span if side == "a" else d - eps * span
            ends[side] = (cap, d)
            info[side] = {"kind": "cap", "at": cap, "eps": eps}
        else:
            cap = a if side == "a" else b
            ends[side] = (cap, None)
            info[side] = {"kind": "cap", "at": cap, "L": L}
    if isinstance(bc, Separated):
        for side, ang in (("a", bc.alpha), ("b", bc.beta)):
            if info[side]["kind"] == "cap" and ang is not None and canonical_angle(ang) != 0.0:
                raise DiscretizationError(
                    f"a non-Dirichlet condition at {side} needs a regular endpoint")
    elif not (info["a"]["kind"] == "regular" and info["b"]["kind"] == "regular"):
        raise DiscretizationError("coupled conditions need two regular endpoints")

    x = build_grid(ends["a"][0], ends["b"][0], N, ends["a"][1], ends["b"][1], ratio)
    n = x.size
    h = np.diff(x)
    mid = 0.5 * (x[:-1] + x[1:])
    with np.errstate(all="ignore"):
        pm = problem.p(mid)
        qn = problem.q(x)
        rn = problem.r(x)
    if not np.all(np.isfinite(pm)) or np.any(pm <= 0):
        raise DiscretizationError("p failed at the half points")
    w = np.zeros(n)
    w[:-1] += h / 2
    w[1:] += h / 2
    k = pm / h
    diag = np.zeros(n)
    diag[:-1] += k
    diag[1:] += k
    # removable singularities at a regular end (e.g. 0/0) take the one-sided limit
    for side, idx, direction in (("a", 0, 1.0), ("b", n - 1, -1.0)):
        if info[side]["kind"] != "regular":
            continue
        if not math.isfinite(qn[idx]):
            qn[idx] = _one_sided_limit(problem.q, x[idx], direction)
        if not math.isfinite(rn[idx]):
            rn[idx] = _one_sided_limit(problem.r, x[idx], direction)
    # q and r at capped nodes never enter
    qn = np.where(np.isfinite(qn), qn, 0.0)
    rn = np.where(np.isfinite(rn), rn, 1.0)
    diag += qn * w
    off = -k
    extra = {}
    tie = None
    free = np.ones(n, dtype=bool)
    if isinstance(bc, Separated):
        for side, ang, idx in (("a", bc.alpha, 0), ("b", bc.beta, n - 1)):
            if info[side]["kind"] == "cap" or ang is None or canonical_angle(ang) == 0.0:
                free[idx] = False
                continue
            ang = canonical_angle(ang)
            cot = math.cos(ang) / math.sin(ang)
            if abs(cot) < 1e-15:
                cot = 0.0
            diag[idx] -= cot
    else:
        R = bc.matrix
        if abs(R[0, 1]) > 1e-14:
            diag[0] -= R[0, 0] / R[0, 1]
            diag[-1] -= R[1, 1] / R[0, 1]
            extra[(0, n - 1)] = 1.0 / R[0, 1]
        else:
            # g(b) = R11 g(a) ties the last node to the first
            diag[0] -= R[0, 0] * R[1, 0]
            tie = (n - 1, 0, R[0, 0])
    S = sparse.diags([off, diag, off], [-1, 0, 1], shape=(n, n), format="lil")
    for (i, j), v in extra.items():
        S[i, j] += v
        S[j, i] += v
    M = rn * w
    S = S.tocsr()
    if tie is not None:
        gone, kept, fac = tie
        P = sparse.identity(n, format="lil")
        P[gone, kept] = fac
        P = P.tocsr()[:, [i for i in range(n) if i != gone]]
        S = (P.T @ S @ P).tocsr()
        Md = P.T @ sparse.diags(M) @ P
        M = np.asarray(Md.diagonal()).ravel()
        free[gone] = False
        idx = np.flatnonzero(free)
    else:
        idx = np.flatnonzero(free)
        S = S[idx][:, idx].tocsr()
        M = M[idx]
    return DiscreteExtension(x, idx, S, M, bc, info, problem, tie)


# --------------------------------------------------------------------------
# eigenvalues
# --------------------------------------------------------------------------

@dataclass
class EigenResult:
    values: np.ndarray
    vectors: np.ndarray      # columns on the full grid, M-normalised
    residuals: np.ndarray    # ||T u - lam u|| / max|T_ij| for the scaled pencil, ||u|| = 1
    dx: DiscreteExtension

    def as_rows(self, N: int, L: float) -> List[Dict]:
        return [{"N": N, "L": L, "bc": describe_bc(self.dx.bc), "index": i + 1,
                 "lambda": float(v), "residual": float(r)}
                for i, (v, r) in enumerate(zip(self.values, self.residuals))]


def eigen_smallest(dx: DiscreteExtension, count: int = 1, tol: float = 1e-10) -> EigenResult:
    """Smallest ``count`` eigenvalues of S v = lam M v.

    The pencil is scaled to T = M^{-1/2} S M^{-1/2}; a tridiagonal T goes to
    LAPACK bisection with inverse iteration, a bordered T to sparse
    shift-invert Lanczos.
    """
    if not 1 <= count <= MAX_COUNT:
        raise ValueError(f"count must be in 1..{MAX_COUNT}")
    s = 1.0 / np.sqrt(dx.weight)
    T = sparse.diags(s) @ dx.stiffness @ sparse.diags(s)
    T = T.tocsr()
    n = T.shape[0]
    if dx.tridiagonal:
        d = T.diagonal()
        e = T.diagonal(1)
        vals, vecs = eigh_tridiagonal(d, e, select="i", select_range=(0, count - 1))
    else:
        lower = float(np.min(T.diagonal() - np.asarray(abs(T).sum(axis=1)).ravel()
                             + np.abs(T.diagonal())))
        vals, vecs = eigsh(T.tocsc(), k=count, sigma=lower - 1.0, which="LM")
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    res = np.array([np.linalg.norm(T @ vecs[:, i] - vals[i] * vecs[:, i]) for i in range(count)])
    res = res / max(1.0, float(abs(T).max()))
    if np.any(res > tol):
        raise EigenError(f"relative eigen residual {res.max():.3e} above {tol:.1e}")
    full = np.column_stack([dx.full_vector(s * vecs[:, i]) for i in range(count)])
    return EigenResult(vals, full, res, dx)


def eigen_table(problem: SLProblem, bcs: Sequence[BoundaryCondition], Ns: Sequence[int],
                L: Optional[float] = None, count: int = 1) -> List[Dict]:
    """Rows (N, L, bc, index, lambda, residual) for every (bc, N), solved
    concurrently."""
    L = problem.L if L is None else L
    jobs = [(bc, N) for bc in bcs for N in Ns]

    def run(job):
        bc, N = job
        return eigen_smallest(discretize(problem, bc, N, L), count).as_rows(N, L)

    with ThreadPoolExecutor(max_workers=min(worker_count(), len(jobs) or 1)) as ex:
        out = list(ex.map(run, jobs))
    return [row for rows in out for row in rows]


CSV_COLUMNS = ("N", "L", "bc", "index", "lambda", "residual")


def write_csv(rows: Iterable[Dict], stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r["N"], f"{r['L']:.12e}", r["bc"], r["index"],
                    f"{r['lambda']:.12e}", f"{r['residual']:.12e}"])


# --------------------------------------------------------------------------
# checks
# --------------------------------------------------------------------------

def _bc_residual(ang: float, side: str, g: float, g1: float) -> float:
    """|cos g -/+ sin g^[1]| / |(g, g^[1])|."""
    s = 1.0 if side == "a" else -1.0
    num = abs(math.cos(ang) * g + s * math.sin(ang) * g1)
    return num / max(math.hypot(g, g1), 1e-300)


def krein_zero_mode_check(problem: SLProblem, K: KTransform, bc_krein: Separated, N: int = 4000,
                          L: Optional[float] = None, kernel=None, lam_tol: float = 5e-4,
                          bc_tol: float = 1e-8) -> Dict:
    """(i) the kernel solution satisfies bc_krein at each regular end;
    (ii) the smallest eigenvalue of the bc_krein extension tends to 0 at
    least linearly under doubling of N."""
    from .slcore import kernel_basis
    kernel = kernel_basis(problem) if kernel is None else kernel
    if len(kernel) != 1:
        raise ValueError("the zero-mode check needs a one-dimensional kernel")
    u = kernel.solutions[0]
    residuals = {}
    for side, ang, d in (("a", bc_krein.alpha, problem.a), ("b", bc_krein.beta, problem.b)):
        if ang is None or not _regular(problem, d):
            continue
        # the integrator stops 1e-13 span short of a regular end
        g, g1 = u._both(np.array([min(max(d, u.lo), u.hi)]))[:, 0]
        residuals[side] = _bc_residual(ang, side, float(g), float(g1))
    L = problem.L if L is None else L
    with ThreadPoolExecutor(max_workers=min(worker_count(), 2)) as ex:
        lam = list(ex.map(lambda n: float(eigen_smallest(discretize(problem, bc_krein, n, L)).values[0]),
                          (N, 2 * N)))
    ratio = abs(lam[1]) / abs(lam[0]) if lam[0] != 0 else 0.0
    first_order = abs(lam[1]) <= 1e-12 or ratio <= 0.55
    ok_bc = all(v <= bc_tol for v in residuals.values())
    return {"boundary_residual": residuals, "lambda_N": lam[0], "lambda_2N": lam[1],
            "N": N, "L": L, "refinement_ratio": ratio, "first_order": bool(first_order),
            "lambda_ok": abs(lam[0]) <= lam_tol, "bc_ok": ok_bc,
            "passed": bool(ok_bc and first_order and abs(lam[0]) <= lam_tol)}


def _derivative_at_end(x: np.ndarray, v: np.ndarray, t: float) -> Tuple[float, float]:
    """Value and slope of the grid function at t from a cubic spline."""
    cs = CubicSpline(x, v, bc_type="not-a-knot")
    return float(cs(t)), float(cs(t, 1))


def eigenfunction_invariance_check(dx: DiscreteExtension, K: KTransform, eigvec: np.ndarray) -> Dict:
    """Boundary-condition residual of K applied to a discrete eigenfunction.

    (Kv)(d) = A(d) v(phi(d)) and (Kv)^[1](d) = p(d)[A'(d) v(phi(d))
    + A(d) v'(phi(d)) phi'(d)], with v read through a cubic spline.
    """
    problem = dx.problem
    if problem is None or not isinstance(dx.bc, Separated):
        raise ValueError("needs a separated condition on a discretised problem")
    x = dx.grid
    v = np.asarray(eigvec, dtype=float)
    if v.size != x.size:
        v = dx.full_vector(v)
    v = v / np.max(np.abs(v))
    out = {}
    for side, ang, d in (("a", dx.bc.alpha, problem.a), ("b", dx.bc.beta, problem.b)):
        if dx.truncation[side]["kind"] != "regular" or ang is None:
            continue
        pt = np.array([d])
        y = float(K.phi(pt)[0])
        if not x[0] - 1e-12 <= y <= x[-1] + 1e-12:
            out[side] = {"error": "phi maps the endpoint outside the grid"}
            continue
        val, slope = _derivative_at_end(x, v, min(max(y, x[0]), x[-1]))
        A, dA, dphi = float(K.A(pt)[0]), float(K.A.d1(pt)[0]), float(K.phi.d1(pt)[0])
        g = A * val
        g1 = float(problem.p(pt)[0]) * (dA * val + A * slope * dphi)
        out[side] = {"residual": _bc_residual(canonical_angle(ang), side, g, g1),
                     "value": g, "quasi": g1}
    worst = max((o["residual"] for o in out.values() if "residual" in o), default=0.0)
    return {"sides": out, "residual": worst}
