"""K-invariance of self-adjoint boundary conditions.

Boundary data are (g(d), g^[1](d)); K acts on them through

    M_d = [[A(d), 0], [A^[1](d), A(d) phi'(d)]].

A separated condition with covector l is invariant iff l M_d is parallel
to l; a coupled condition (g(b), g^[1](b)) = e^{i eta} R (g(a), g^[1](a))
is invariant iff M_b R = R M_a.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .ktransform import KTransform, SLProblem

log = logging.getLogger(__name__)

ZERO_TOL = 1e-12
ANGLE_TOL = 1e-12


class BoundaryLimitError(ValueError):
    pass


class InconsistentTests(AssertionError):
    """Two independent formulations of the same invariance test disagree."""


# --------------------------------------------------------------------------
# boundary transform
# --------------------------------------------------------------------------

@dataclass
class BoundaryTransform:
    d: float
    M: np.ndarray
    A: float
    A1: float
    dphi: float

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.M))


def transform_from(A: float, A1: float, dphi: float, d: float = math.nan) -> BoundaryTransform:
    M = np.array([[A, 0.0], [A1, A * dphi]], dtype=float)
    return BoundaryTransform(d, M, float(A), float(A1), float(dphi))


def _one_sided_limit(fn, d: float, direction: float, levels: int = 8) -> float:
    """fn(d) if finite, else polynomial extrapolation of fn(d + direction*h)
    over h = h0 2^-k."""
    with np.errstate(all="ignore"):
        v = float(np.asarray(fn(np.array([d])))[0])
    if math.isfinite(v):
        return v
    h0 = 1e-3 * max(1.0, abs(d))
    hs = h0 * 0.5 ** np.arange(levels)
    with np.errstate(all="ignore"):
        vals = np.array([float(np.asarray(fn(np.array([d + direction * h])))[0]) for h in hs])
    if not np.all(np.isfinite(vals)):
        raise BoundaryLimitError(f"no finite limit at {d}")
    p = list(vals)
    for k in range(1, levels):
        for i in range(levels - k):
            p[i] = (hs[i + k] * p[i] - hs[i] * p[i + 1]) / (hs[i + k] - hs[i])
    # a divergent limit shows up as extrapolants that keep growing
    if abs(p[0]) > 1e6 * (1.0 + np.max(np.abs(vals[:2]))):
        raise BoundaryLimitError(f"divergent limit at {d}")
    return float(p[0])


def boundary_transform(problem: SLProblem, K: KTransform, d: float) -> BoundaryTransform:
    """M_d from interior limits of A, A^[1] = p A' and phi'."""
    d = float(d)
    if not math.isfinite(d):
        raise BoundaryLimitError("boundary data need a finite endpoint")
    if d == problem.a:
        direction = 1.0
    elif d == problem.b:
        direction = -1.0
    else:
        raise ValueError("d must be an endpoint of the problem")
    A = _one_sided_limit(K.A, d, direction)
    A1 = _one_sided_limit(lambda x: problem.p(x) * K.A.d1(x), d, direction)
    dphi = _one_sided_limit(K.phi.d1, d, direction)
    return transform_from(A, A1, dphi, d)


# --------------------------------------------------------------------------
# boundary conditions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Separated:
    """cos(alpha) g(a) + sin(alpha) g^[1](a) = 0 and
    cos(beta) g(b) - sin(beta) g^[1](b) = 0; None marks a limit point end."""

    alpha: Optional[float] = 0.0
    beta: Optional[float] = 0.0


@dataclass(frozen=True)
class Coupled:
    eta: float
    R: Tuple[Tuple[float, float], Tuple[float, float]]

    def __post_init__(self):
        if abs(np.linalg.det(np.asarray(self.R, dtype=float)) - 1.0) > 1e-12:
            raise ValueError("coupled conditions need det R = 1")

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.R, dtype=float)


def canonical_angle(alpha: float) -> float:
    a = math.fmod(alpha, math.pi)
    if a < 0:
        a += math.pi
    if math.pi - a <= ANGLE_TOL:
        a = 0.0
    return a


def same_angle(a: float, b: float) -> bool:
    return abs(math.sin(a - b)) <= ANGLE_TOL


def covector(angle: float, side: str) -> np.ndarray:
    if side == "a":
        return np.array([math.cos(angle), math.sin(angle)])
    if side == "b":
        return np.array([math.cos(angle), -math.sin(angle)])
    raise ValueError("side must be 'a' or 'b'")


def robin_mu(angle: float, side: str = "a") -> float:
    """mu in g^[1](d) = mu g(d) for the separated angle (inf for Dirichlet)."""
    angle = canonical_angle(angle)
    if angle == 0.0:
        return math.inf
    if same_angle(angle, math.pi / 2):
        return 0.0
    mu = -math.cos(angle) / math.sin(angle)
    return mu if side == "a" else -mu


def robin_angle(mu: float, side: str = "a") -> float:
    """Inverse of ``robin_mu``."""
    if math.isinf(mu):
        return 0.0
    v = -mu if side == "a" else mu
    return math.atan2(1.0, v)


# --------------------------------------------------------------------------
# separated conditions
# --------------------------------------------------------------------------

def _is_zero(v: float, scale: float) -> bool:
    return abs(v) <= ZERO_TOL * max(scale, 1e-300)


def separated_invariance_tests(M: np.ndarray, alpha: float, side: str) -> Tuple[bool, bool]:
    """(eigenvector test, closed-form test).

    The first checks that l M_d is parallel to l.  The second checks
    alpha = 0 or the scalar relation
    sin(a) A^[1] + (1 - phi') cos(a) A = 0 at a (A^[1] with flipped sign at b).
    """
    M = np.asarray(M, dtype=float)
    l = covector(alpha, side)
    lM = l @ M
    # the cross product carries a factor l[1]; accept when that weight is
    # negligible (Dirichlet) or when the cross product per unit weight is,
    # measured against the entry size of M.  A bare angle test would accept
    # every covector of a near-identity shear.
    cross = lM[0] * l[1] - lM[1] * l[0]
    w = abs(l[1])
    size = float(np.abs(M).sum())
    eig = cross == 0.0 or (w > 0 and abs(cross) <= ZERO_TOL * max(w * size, abs(cross) / w))

    A, A1 = M[0, 0], M[1, 0]
    dphi = M[1, 1] / A
    s = 1.0 if side == "a" else -1.0
    rel = s * math.sin(alpha) * A1 + (1.0 - dphi) * math.cos(alpha) * A
    scale = abs(A1) + abs(A) + abs(A * dphi)
    formula = _is_zero(math.sin(alpha), 1.0) or _is_zero(rel, scale)
    return eig, formula


def separated_invariance(M: np.ndarray, alpha: float, side: str = "a") -> bool:
    eig, formula = separated_invariance_tests(M, alpha, side)
    if eig != formula:
        raise InconsistentTests(f"separated tests disagree at alpha={alpha!r}, side={side}")
    return eig


@dataclass
class InvariantSet:
    kind: str  # "dirichlet_only" | "two" | "all"
    angles: List[float] = field(default_factory=list)

    def contains(self, alpha: float) -> bool:
        if self.kind == "all":
            return True
        return any(same_angle(alpha, a) for a in self.angles)

    def describe(self) -> str:
        if self.kind == "all":
            return "all alpha in [0, pi)"
        return "{" + ", ".join(f"{a:.12g}" for a in self.angles) + "}"


def separated_invariant_set(M: np.ndarray, side: str = "a") -> InvariantSet:
    """All invariant angles at one endpoint."""
    M = np.asarray(M, dtype=float)
    A, A1 = M[0, 0], M[1, 0]
    dphi = M[1, 1] / A
    scale = abs(A) + abs(A1) + abs(A * dphi)
    a1_zero = _is_zero(A1, scale)
    unit = _is_zero(1.0 - dphi, 1.0)
    if unit and a1_zero:
        return InvariantSet("all", [])
    if unit:
        return InvariantSet("dirichlet_only", [0.0])
    if a1_zero:
        return InvariantSet("two", [0.0, math.pi / 2])
    s = 1.0 if side == "a" else -1.0
    v = -s * A1 / ((1.0 - dphi) * A)
    return InvariantSet("two", [0.0, canonical_angle(math.atan2(1.0, v))])


# --------------------------------------------------------------------------
# coupled conditions
# --------------------------------------------------------------------------

def coupled_residual(M_a: np.ndarray, M_b: np.ndarray, R: np.ndarray) -> float:
    M_a, M_b, R = (np.asarray(m, dtype=float) for m in (M_a, M_b, R))
    D = M_b @ R - R @ M_a
    scale = np.linalg.norm(M_b) * np.linalg.norm(R) + np.linalg.norm(R) * np.linalg.norm(M_a)
    return float(np.max(np.abs(D)) / max(scale, 1e-300))


def coupled_invariance(M_a: np.ndarray, M_b: np.ndarray, eta: float, R: np.ndarray,
                       cross_check: bool = True) -> bool:
    """M_b R = R M_a (eta cancels).  The explicit case systems are
    evaluated alongside and disagreements are logged."""
    R = np.asarray(R, dtype=float)
    if abs(np.linalg.det(R) - 1.0) > 1e-12:
        raise ValueError("det R must be 1")
    ok = coupled_residual(M_a, M_b, R) <= ZERO_TOL
    if cross_check:
        listed = coupled_listed_conditions(M_a, M_b, R)
        if listed != ok:
            log.info("coupled invariance: intertwining=%s, listed case systems=%s (M_a=%s, M_b=%s, R=%s)",
                     ok, listed, M_a.tolist() if hasattr(M_a, "tolist") else M_a,
                     M_b.tolist() if hasattr(M_b, "tolist") else M_b, R.tolist())
    return ok


def coupled_listed_conditions(M_a: np.ndarray, M_b: np.ndarray, R: np.ndarray) -> bool:
    """The case systems as displayed for coupled conditions: A(a) = A(b)
    together with either (A^[1](a) = 0 and two linear relations) or
    (R12 = 0, phi'(a) = phi'(b) and one linear relation).  Kept as a
    cross-check of the intertwining test."""
    M_a, M_b, R = (np.asarray(m, dtype=float) for m in (M_a, M_b, R))
    Aa, A1a, pa = M_a[0, 0], M_a[1, 0], M_a[1, 1] / M_a[0, 0]
    Ab, A1b, pb = M_b[0, 0], M_b[1, 0], M_b[1, 1] / M_b[0, 0]
    (R11, R12), (R21, R22) = R
    scale = 1.0 + abs(Aa) + abs(Ab) + abs(A1a) + abs(A1b)
    z = lambda v: _is_zero(v, scale * (1.0 + np.max(np.abs(R))))
    if not z(Aa - Ab):
        return False
    first = (z(A1a) and z(R11 * A1b + R21 * Aa * (pb - 1.0))
             and z(R22 * Aa * (pa - pb) - R12 * A1b))
    second = (z(R12) and z(pa - pb) and z(R11 * A1b + R21 * Aa * (pb - 1.0) - R22 * A1a))
    return bool(first or second)


def coupled_invariant_space(M_a: np.ndarray, M_b: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Basis (k x 2 x 2) of all real R with M_b R = R M_a; the invariant
    coupled conditions are its members with det R = 1."""
    M_a, M_b = np.asarray(M_a, dtype=float), np.asarray(M_b, dtype=float)
    I = np.eye(2)
    # row-major vec: vec(M_b R) = (M_b kron I) vec R, vec(R M_a) = (I kron M_a^T) vec R
    L = np.kron(M_b, I) - np.kron(I, M_a.T)
    _, s, vt = np.linalg.svd(L)
    scale = max(1.0, s[0])
    null = vt[s <= tol * scale]
    return null.reshape(-1, 2, 2)


def has_unimodular_member(basis: np.ndarray, samples: int = 64) -> bool:
    """Whether the span contains some R with det R = 1."""
    if basis.shape[0] == 0:
        return False
    if basis.shape[0] == 1:
        return abs(np.linalg.det(basis[0])) > 1e-12 and np.linalg.det(basis[0]) != 0.0
    # det is a quadratic form on the span; it takes a positive value iff
    # the form is not negative semidefinite
    k = basis.shape[0]
    Q = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            B, C = basis[i], basis[j]
            Q[i, j] = 0.5 * (B[0, 0] * C[1, 1] + C[0, 0] * B[1, 1] - B[0, 1] * C[1, 0] - C[0, 1] * B[1, 0])
    return bool(np.max(np.linalg.eigvalsh(Q)) > 1e-12)


# --------------------------------------------------------------------------
# block (vector-valued) conditions
# --------------------------------------------------------------------------

def condition_invariance(L: np.ndarray, M: np.ndarray, tol: float = 1e-8) -> bool:
    """Rows of L define the condition L v = 0 on boundary data v; it is
    preserved by v -> M v iff the rows of L M lie in the row space of L."""
    L, M = np.asarray(L, dtype=float), np.asarray(M, dtype=float)
    r = np.linalg.matrix_rank(L, tol=tol * max(1.0, np.linalg.norm(L)))
    both = np.vstack([L, L @ M])
    return int(np.linalg.matrix_rank(both, tol=tol * max(1.0, np.linalg.norm(both)))) == r


def condition_residual(L: np.ndarray, M: np.ndarray) -> float:
    """Distance of the rows of L M from the row space of L (relative)."""
    L, M = np.asarray(L, dtype=float), np.asarray(M, dtype=float)
    Q, _ = np.linalg.qr(L.T)
    LM = L @ M
    resid = LM.T - Q @ (Q.T @ LM.T)
    return float(np.linalg.norm(resid) / max(np.linalg.norm(LM), 1e-300))


# --------------------------------------------------------------------------
# classification report
# --------------------------------------------------------------------------

def _kernel_angle(u, problem: SLProblem, side: str, iset: InvariantSet, tol: float = 1e-8):
    """Invariant angle satisfied by the kernel function's boundary data."""
    from .slcore import ode_range
    lo, hi = ode_range(problem)
    x = lo if side == "a" else hi
    both = u._both(np.array([x]))[:, 0]
    v = both / np.linalg.norm(both)
    cands = iset.angles if iset.kind != "all" else []
    for ang in cands:
        if abs(covector(ang, side) @ v) <= tol:
            return ang
    if iset.kind == "all":
        # the kernel data define their own angle
        return canonical_angle(math.atan2(-v[0], v[1]) if side == "a" else math.atan2(v[0], v[1]))
    return None


def _rule_angle(bt: BoundaryTransform, side: str) -> Optional[float]:
    """Krein angle from the endpoint data alone (one regular end, strictly
    positive minimal operator): Neumann if A^[1] = 0, the cot^-1 formula
    otherwise; undefined when phi' = 1."""
    iset = separated_invariant_set(bt.M, side)
    if iset.kind != "two":
        return None
    return iset.angles[1]


def classify_invariant_extensions(problem: SLProblem, K: KTransform, kernel=None) -> Dict:
    """Per-endpoint invariant sets, coupled families when both ends are
    regular, and the Friedrichs / Krein tags."""
    from .slcore import kernel_basis
    kernel = kernel_basis(problem) if kernel is None else kernel
    classes = kernel.classes
    report: Dict = {"endpoints": {}, "coupled": None, "friedrichs": {}, "krein": {}}
    transforms = {}
    for side in ("a", "b"):
        cls = classes[side]
        d = problem.a if side == "a" else problem.b
        entry: Dict = {"endpoint": d, "class": cls.kind}
        if cls.kind == "LimitPoint":
            entry["conditions"] = "none (limit point)"
        elif cls.kind == "LimitCircle":
            entry["conditions"] = "not classified (limit circle, non-regular)"
        elif cls.kind == "Regular":
            bt = boundary_transform(problem, K, d)
            transforms[side] = bt
            iset = separated_invariant_set(bt.M, side)
            entry.update({"M": bt.M.tolist(), "A": bt.A, "A1": bt.A1, "dphi": bt.dphi,
                          "invariant_set": iset.kind, "angles": list(iset.angles),
                          "robin_mu": [robin_mu(a, side) for a in iset.angles]})
            report["friedrichs"][side] = 0.0
            ang, source = None, None
            if len(kernel) == 1 and kernel.solutions[0].flags.get("in_l2"):
                ang = _kernel_angle(kernel.solutions[0], problem, side, iset)
                source = "kernel"
            if ang is None and kernel.dimension == 0:
                ang = _rule_angle(bt, side)
                source = "endpoint rule" if ang is not None else None
            if ang is not None:
                report["krein"][side] = {"angle": ang, "robin_mu": robin_mu(ang, side),
                                         "source": source}
        else:
            entry["conditions"] = "inconclusive classification"
        report["endpoints"][side] = entry
    if "a" in transforms and "b" in transforms:
        basis = coupled_invariant_space(transforms["a"].M, transforms["b"].M)
        report["coupled"] = {"dimension": int(basis.shape[0]),
                             "basis": basis.tolist(),
                             "admits_sl2": has_unimodular_member(basis),
                             "A_equal": bool(abs(transforms["a"].A - transforms["b"].A)
                                             <= ZERO_TOL * abs(transforms["a"].A))}
    return report
