"""Finite-dimensional laboratory for invariant extensions.

Extensions of a symmetric operator with Friedrichs extension S_F are
parametrised by an auxiliary operator B on a subspace D(B) of ker(S*):

    D(S) + {S_F^{-1} B f + f : f in D(B)} + {S_F^{-1} eta : eta in D(B)^perp}.

K acts on ker(S*) through a small matrix K~, and the extension is
K-invariant iff K~ D(B) = D(B) and P_{D(B)} K~* B K~ = B on D(B).  The
kernel is sampled from the continuum solutions; S_F^{-1} is the banded
Dirichlet solve of the finite-volume pencil.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.linalg import null_space, orth, solve_banded

from .extensions import boundary_transform, condition_invariance
from .ktransform import KTransform, SLProblem
from .slcore import SolutionFn, kernel_basis, k_eigenvalue_on_kernel
from .spectral import DiscreteExtension, Separated, discretize

LEAK_TOL = 1e-6
INV_TOL = 1e-10
CLUSTER_GAP = 1e-8


def _sample(u: SolutionFn, x) -> np.ndarray:
    """u on x, reading points within rounding of a regular end at the end
    of the integrated range."""
    return u(np.clip(np.asarray(x, dtype=float), u.lo, u.hi))


def _node_weights(problem: SLProblem, x: np.ndarray) -> np.ndarray:
    h = np.diff(x)
    w = np.zeros(x.size)
    w[:-1] += h / 2
    w[1:] += h / 2
    with np.errstate(all="ignore"):
        r = problem.r(x)
    return np.where(np.isfinite(r), r, 0.0) * w


# --------------------------------------------------------------------------
# models
# --------------------------------------------------------------------------

@dataclass
class DefectModel:
    """Discrete S_F^{-1}, an orthonormal kernel basis on the grid and the
    matrix of K on that basis."""

    problem: Optional[SLProblem]
    K: Optional[KTransform]
    dx: Optional[DiscreteExtension]
    grid: np.ndarray
    weights: np.ndarray
    kernel: np.ndarray           # columns, orthonormal in the weighted product
    K_tilde: np.ndarray
    off_span: float
    solutions: List[SolutionFn] = field(default_factory=list)
    norms: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def dimension(self) -> int:
        return int(self.K_tilde.shape[0])

    def inner(self, f, g) -> complex:
        return complex(np.sum(self.weights * np.conj(f) * g))

    def S_F_inverse(self, f: np.ndarray) -> np.ndarray:
        """Solution y of tau y = f with the Friedrichs (Dirichlet / cap)
        conditions, on the full grid."""
        dx = self.dx
        if dx is None:
            raise ValueError("synthetic model has no discretisation")
        S = dx.stiffness
        ab = np.zeros((3, S.shape[0]))
        ab[0, 1:] = S.diagonal(1)
        ab[1] = S.diagonal()
        ab[2, :-1] = S.diagonal(-1)
        rhs = dx.weight * np.asarray(f)[dx.free]
        if np.iscomplexobj(rhs):
            y = solve_banded((1, 1), ab, rhs.real) + 1j * solve_banded((1, 1), ab, rhs.imag)
            out = np.zeros(self.grid.size, dtype=complex)
        else:
            y = solve_banded((1, 1), ab, rhs)
            out = np.zeros(self.grid.size)
        out[dx.free] = y
        return out


def synthetic_model(K_tilde) -> DefectModel:
    """Model with only the kernel-level data (no grid)."""
    Kt = np.atleast_2d(np.asarray(K_tilde))
    k = Kt.shape[0]
    return DefectModel(None, None, None, np.zeros(0), np.zeros(0), np.eye(k), Kt, 0.0)


def build_scalar_model(problem: SLProblem, K: KTransform, N: int = 2000,
                       L: Optional[float] = None, kernel=None) -> DefectModel:
    """Sample the L^2 kernel solutions, orthonormalise them and project
    K onto their span (least squares), reporting the off-span leakage."""
    kernel = kernel_basis(problem) if kernel is None else kernel
    dx = discretize(problem, Separated(0.0, 0.0), N, L)
    x = dx.grid
    wts = _node_weights(problem, x)
    sols = [u for u in kernel.solutions if u.flags.get("in_l2")]
    if not sols:
        return DefectModel(problem, K, dx, x, wts, np.zeros((x.size, 0)), np.zeros((0, 0)), 0.0)
    V = np.column_stack([_sample(u, x) for u in sols])
    KV = np.column_stack([K.A(x) * _sample(u, K.phi(x)) for u in sols])
    sq = np.sqrt(wts)[:, None]
    Q, R = np.linalg.qr(sq * V)
    E = Q / np.where(sq > 0, sq, 1.0)
    KE = np.linalg.solve(R.T, (sq * KV).T).T  # K applied to the orthonormal columns, weighted
    Kt = Q.T @ KE
    leak = np.linalg.norm(KE - Q @ Kt) / max(np.linalg.norm(KE), 1e-300)
    norms = np.abs(np.diag(R))
    return DefectModel(problem, K, dx, x, wts, E, Kt, float(leak), sols, norms)


# --------------------------------------------------------------------------
# auxiliary operators
# --------------------------------------------------------------------------

@dataclass
class AuxiliaryOperator:
    """B on the span of ``domain_basis`` (kernel coordinates, orthonormal
    columns); nonnegative self-adjoint or dissipative."""

    domain_basis: np.ndarray
    B: np.ndarray
    kind: str = ""

    def __post_init__(self):
        Q = np.asarray(self.domain_basis)
        if Q.ndim == 1:
            Q = Q[:, None]
        self.domain_basis = Q
        m = Q.shape[1]
        self.B = np.asarray(self.B).reshape(m, m) if m else np.zeros((0, 0))
        if m and np.linalg.norm(Q.conj().T @ Q - np.eye(m)) > 1e-10:
            self.domain_basis, _ = np.linalg.qr(Q)
        if not self.kind:
            self.kind = self._classify()

    def _classify(self) -> str:
        B = self.B
        if B.size == 0:
            return "selfadjoint"
        if np.linalg.norm(B - B.conj().T) <= 1e-12 * max(1.0, np.linalg.norm(B)):
            if np.min(np.linalg.eigvalsh(0.5 * (B + B.conj().T))) < -1e-12:
                raise ValueError("self-adjoint B must be nonnegative")
            return "selfadjoint"
        rng = np.random.default_rng(0)
        m = B.shape[0]
        for _ in range(64):
            f = rng.normal(size=m) + 1j * rng.normal(size=m)
            if np.imag(np.vdot(f, B @ f)) < -1e-12 * np.linalg.norm(f) ** 2:
                raise ValueError("B is neither nonnegative self-adjoint nor dissipative")
        return "dissipative"

    @classmethod
    def zero(cls, domain_basis) -> "AuxiliaryOperator":
        Q = np.asarray(domain_basis)
        m = Q.shape[1] if Q.ndim == 2 else 1
        return cls(Q, np.zeros((m, m)))


def check_invariance_condition(aux: AuxiliaryOperator, K_tilde, tol: float = INV_TOL) -> bool:
    """K~ D(B) = D(B) and ||P K~* B K~ - B|| <= tol on D(B)."""
    Kt = np.atleast_2d(np.asarray(K_tilde))
    Q = aux.domain_basis
    if Q.shape[1] == 0:
        return True
    KQ = Kt @ Q
    leak = KQ - Q @ (Q.conj().T @ KQ)
    if np.linalg.norm(leak) > tol * max(1.0, np.linalg.norm(Kt)):
        return False
    G = Q.conj().T @ KQ
    lhs = G.conj().T @ aux.B @ G
    return bool(np.linalg.norm(lhs - aux.B) <= tol * max(1.0, np.linalg.norm(aux.B)))


# --------------------------------------------------------------------------
# invariant subspaces and enumeration
# --------------------------------------------------------------------------

@dataclass
class RootCluster:
    value: complex
    multiplicity: int
    root_space: np.ndarray
    eigen_space: np.ndarray

    @property
    def unimodular(self) -> bool:
        return abs(abs(self.value) - 1.0) <= CLUSTER_GAP


def root_clusters(K_tilde, gap: float = CLUSTER_GAP) -> List[RootCluster]:
    """Eigenvalues grouped at relative gap ``gap``, with root spaces
    null((K~ - z)^m) and eigenspaces null(K~ - z)."""
    Kt = np.atleast_2d(np.asarray(K_tilde)).astype(complex)
    k = Kt.shape[0]
    vals = np.linalg.eigvals(Kt)
    groups: List[List[complex]] = []
    for v in sorted(vals, key=lambda z: (z.real, z.imag)):
        for g in groups:
            if abs(v - g[0]) <= gap * max(1.0, abs(g[0])):
                g.append(v)
                break
        else:
            groups.append([v])
    out = []
    for g in groups:
        z = complex(np.mean(g))
        m = len(g)
        real = np.all(Kt.imag == 0) and abs(z.imag) <= gap * max(1.0, abs(z))
        if real:
            z = complex(z.real)
        base = Kt.real if real else Kt
        shifted = base - (z.real if real else z) * np.eye(k)
        scale = max(1.0, np.linalg.norm(Kt))
        rs = null_space(np.linalg.matrix_power(shifted, m), rcond=1e-7 * scale ** m)
        es = null_space(shifted, rcond=1e-7 * scale)
        if es.shape[1] < m:
            warnings.warn(f"defective K~ at eigenvalue {z:.6g}; root spaces only", RuntimeWarning)
        out.append(RootCluster(z, m, rs, es))
    return out


def _span(*blocks) -> np.ndarray:
    cols = [b for b in blocks if b.size]
    if not cols:
        return np.zeros((0, 0))
    return orth(np.hstack(cols))


def enumerate_invariant_extensions(model: DefectModel, K_tilde=None, samples: int = 16,
                                   seed: int = 0) -> Dict:
    """Extensions with B = 0 on each root-space-generated K~-invariant
    subspace, plus nonzero-B families on unimodular root spaces; each
    candidate (or sampled family member) is re-verified."""
    Kt = model.K_tilde if K_tilde is None else np.atleast_2d(np.asarray(K_tilde))
    k = Kt.shape[0]
    if k > 2:
        raise ValueError("enumeration supports kernels of dimension <= 2")
    clusters = root_clusters(Kt) if k else []
    rng = np.random.default_rng(seed)
    items = []
    infinite = any(c.eigen_space.shape[1] > 1 for c in clusters)
    for subset in itertools.chain.from_iterable(
            itertools.combinations(range(len(clusters)), n) for n in range(len(clusters) + 1)):
        Q = _span(*[clusters[i].root_space for i in subset]) if subset else np.zeros((k, 0))
        dim = Q.shape[1] if Q.size else 0
        Q = Q if dim else np.zeros((k, 0))
        if dim == 0:
            label = "friedrichs"
        elif dim == k:
            label = "krein"
        else:
            label = "subspace[" + ",".join(f"{clusters[i].value:.6g}" for i in subset) + "]"
        aux = AuxiliaryOperator.zero(Q)
        items.append({"label": label, "dimension": dim, "B": "0",
                      "eigenvalues": [complex(clusters[i].value) for i in subset],
                      "basis": Q, "verified": check_invariance_condition(aux, Kt)})
        uni = [i for i in subset if clusters[i].unimodular]
        if uni:
            U = _span(*[clusters[i].root_space for i in uni])
            ok = True
            dissipative = dim == 1
            for _ in range(samples):
                m = U.shape[1]
                H = rng.normal(size=(m, m))
                H = H @ H.T
                if dissipative:
                    H = H + 1j * abs(rng.normal()) * np.eye(m)
                Bm = Q.conj().T @ U @ H @ U.conj().T @ Q
                ok &= check_invariance_condition(AuxiliaryOperator(Q, Bm), Kt)
            items.append({"label": label + "+family", "dimension": dim,
                          "B": "dissipative family" if dissipative else "nonnegative family",
                          "eigenvalues": [complex(clusters[i].value) for i in uni],
                          "basis": Q, "verified": bool(ok)})
    finite = [it for it in items if it["B"] == "0"]
    families = [it for it in items if it["B"] != "0"]
    return {"kernel_dimension": k, "clusters": clusters, "extensions": finite,
            "families": families, "parameterized": bool(infinite or families),
            "count": None if (infinite or families) else len(finite)}


def bkvg_domain_vector(model: DefectModel, aux: AuxiliaryOperator, f, eta_perp=None) -> np.ndarray:
    """S_F^{-1} B f + f + S_F^{-1} eta on the grid; f in D(B) coordinates,
    eta in kernel coordinates orthogonal to D(B)."""
    Q = aux.domain_basis
    E = model.kernel
    k = E.shape[1]
    out = np.zeros(model.grid.size, dtype=complex)
    if Q.shape[1]:
        fc = np.atleast_1d(np.asarray(f, dtype=complex))
        out += E @ (Q @ fc) + model.S_F_inverse(E @ (Q @ (aux.B @ fc)))
    if eta_perp is not None:
        ec = np.atleast_1d(np.asarray(eta_perp, dtype=complex))
        if Q.shape[1] and np.linalg.norm(Q.conj().T @ ec) > 1e-10 * max(1.0, np.linalg.norm(ec)):
            raise ValueError("eta must be orthogonal to D(B)")
        if ec.size != k:
            raise ValueError("eta has the wrong dimension")
        out += model.S_F_inverse(E @ ec)
    return out.real if np.all(np.abs(out.imag) <= 1e-14 * (1 + np.abs(out.real))) else out


# --------------------------------------------------------------------------
# boundary data of extensions
# --------------------------------------------------------------------------

def kernel_boundary_data(model: DefectModel, side: str) -> np.ndarray:
    """Rows (u_j(d), u_j^[1](d)) of the orthonormal kernel columns."""
    d = model.problem.a if side == "a" else model.problem.b
    out = []
    for u, nrm in zip(model.solutions, model.norms):
        g, g1 = u._both(np.array([min(max(d, u.lo), u.hi)]))[:, 0]
        out.append((g / nrm, g1 / nrm))
    return np.array(out)


def friedrichs_quasi(model: DefectModel, side: str) -> np.ndarray:
    """y^[1](d) for y = S_F^{-1} e_j by the Lagrange identity
    <e_j, u_j> = +-y^[1](d) u_j(d) (the other end contributes nothing).
    Only valid for a one-dimensional kernel or diagonal coupling."""
    data = kernel_boundary_data(model, side)
    s = 1.0 if side == "a" else -1.0
    # <e_j, e_j> = 1 and e_j(d) = data[j, 0]
    return s / data[:, 0]


def extension_rows_scalar(model: DefectModel, in_domain: bool, side: str) -> np.ndarray:
    """Covector (cos, +-sin) of the separated condition at ``side`` for the
    B = 0 extension on D(B) = kernel (in_domain) or D(B) = {0}."""
    data = kernel_boundary_data(model, side)[0]
    if not in_domain:
        data = np.array([0.0, friedrichs_quasi(model, side)[0]])
    row = np.array([data[1], -data[0]])
    return row / np.linalg.norm(row)


# --------------------------------------------------------------------------
# defect-1 dichotomy
# --------------------------------------------------------------------------

def defect_one_admissible(zeta: complex, candidates: Sequence[complex]) -> List[complex]:
    """Values b of B = b on the whole one-dimensional kernel that pass the
    invariance condition for K~ = zeta."""
    Q = np.ones((1, 1))
    out = []
    for b in candidates:
        aux = AuxiliaryOperator(Q, np.array([[b]]))
        if check_invariance_condition(aux, np.array([[zeta]])):
            out.append(b)
    return out


# --------------------------------------------------------------------------
# two-component block model
# --------------------------------------------------------------------------

@dataclass
class BlockModel:
    """K = [[0, K_c], [K_d, 0]] on two copies of one scalar problem."""

    scalar: DefectModel
    K_c: KTransform
    K_d: KTransform
    K_tilde: np.ndarray
    zeta_c: float
    zeta_d: float
    boundary_map: np.ndarray  # on (f, g, f^[1], g^[1]) at the regular end
    side: str

    @property
    def eigen(self):
        vals, vecs = np.linalg.eig(self.K_tilde)
        order = np.argsort(-vals.real)
        return vals[order].real, vecs[:, order].real

    def model(self) -> DefectModel:
        s = self.scalar
        return DefectModel(None, None, None, s.grid, s.weights, np.eye(2), self.K_tilde, s.off_span)

    def extension_rows(self, Q: np.ndarray) -> np.ndarray:
        """Boundary rows (2 x 4) of the B = 0 extension with D(B) = span Q
        (kernel coordinates): the annihilator of the boundary data of
        Q and of S_F^{-1}(D(B)^perp)."""
        data = kernel_boundary_data(self.scalar, self.side)[0]
        fq = friedrichs_quasi(self.scalar, self.side)[0]
        perp = null_space(Q.conj().T) if Q.shape[1] else np.eye(2)
        cols = []
        for v in Q.T:
            cols.append([v[0] * data[0], v[1] * data[0], v[0] * data[1], v[1] * data[1]])
        for v in perp.T:
            cols.append([0.0, 0.0, v[0] * fq, v[1] * fq])
        D = np.array(cols, dtype=float)
        rows = null_space(D).T
        return rows


def _block_boundary_map(Mc: np.ndarray, Md: np.ndarray) -> np.ndarray:
    """(f, g, f1, g1) -> boundary data of (K_c g, K_d f)."""
    M = np.zeros((4, 4))
    M[0, 1] = Mc[0, 0]
    M[1, 0] = Md[0, 0]
    M[2, 1], M[2, 3] = Mc[1, 0], Mc[1, 1]
    M[3, 0], M[3, 2] = Md[1, 0], Md[1, 1]
    return M


def build_block_model(c: float, d: float, problem_factory: Optional[Callable] = None,
                      mu: float = 1.0, N: int = 2000) -> BlockModel:
    """Two-component model from the rational-map family at parameters c, d."""
    if not (c > 0 and d > 0):
        raise ValueError("c and d must be positive")
    if problem_factory is None:
        from .gallery import rational_map as problem_factory
    bc_, bd = problem_factory(mu=mu, c=c), problem_factory(mu=mu, c=d)
    xs = np.linspace(0.1, 0.9, 9)
    if np.max(np.abs(bc_.problem.p(xs) - bd.problem.p(xs))) > 0:
        raise ValueError("the two components must share the scalar problem")
    kernel = kernel_basis(bc_.problem)
    sc = build_scalar_model(bc_.problem, bc_.K, N, kernel=kernel)
    sd = build_scalar_model(bd.problem, bd.K, N, kernel=kernel)
    if sc.dimension != 1:
        raise ValueError("the scalar problem needs a one-dimensional kernel")
    kc, kd = float(sc.K_tilde[0, 0]), float(sd.K_tilde[0, 0])
    zc = k_eigenvalue_on_kernel(bc_.problem, bc_.K, kernel).zeta
    zd = k_eigenvalue_on_kernel(bd.problem, bd.K, kernel).zeta
    Kt = np.array([[0.0, kc], [kd, 0.0]])
    regular = [s for s, c_ in kernel.classes.items() if c_.kind == "Regular"]
    if len(regular) != 1:
        raise ValueError("the block model expects exactly one regular end")
    side = regular[0]
    dend = bc_.problem.a if side == "a" else bc_.problem.b
    Mc = boundary_transform(bc_.problem, bc_.K, dend).M
    Md = boundary_transform(bd.problem, bd.K, dend).M
    sc.off_span = max(sc.off_span, sd.off_span)
    return BlockModel(sc, bc_.K, bd.K, Kt, zc, zd, _block_boundary_map(Mc, Md), side)


def block_report(bm: BlockModel) -> Dict:
    """Enumeration for the block model with boundary rows, invariance
    of the rows under the boundary map and the closed-form comparison."""
    enum = enumerate_invariant_extensions(bm.model())
    vals, vecs = bm.eigen
    Ac, Ad = bm.zeta_c, bm.zeta_d
    expected = {
        "friedrichs": np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]]),
        "krein": np.array([[0, 0, 1.0, 0], [0, 0, 0, 1.0]]),
        "plus": np.array([[math.sqrt(Ad), -math.sqrt(Ac), 0, 0], [0, 0, math.sqrt(Ac), math.sqrt(Ad)]]),
        "minus": np.array([[math.sqrt(Ad), math.sqrt(Ac), 0, 0], [0, 0, math.sqrt(Ac), -math.sqrt(Ad)]]),
    }
    out = []
    for it in enum["extensions"]:
        Q = it["basis"]
        name = it["label"]
        if it["dimension"] == 1:
            ev = it["eigenvalues"][0].real
            name = "plus" if ev > 0 else "minus"
        rows = bm.extension_rows(Q)
        ref = expected[name]
        P1 = rows.T @ np.linalg.pinv(rows.T)
        P2 = ref.T @ np.linalg.pinv(ref.T)
        out.append({"name": name, "dimension": it["dimension"], "verified": it["verified"],
                    "rows": rows, "row_mismatch": float(np.linalg.norm(P1 - P2, 2)),
                    "invariant": condition_invariance(rows, bm.boundary_map),
                    "expected_invariant": condition_invariance(ref, bm.boundary_map)})
    vp = np.array([math.sqrt(Ac), math.sqrt(Ad)])
    vm = np.array([math.sqrt(Ac), -math.sqrt(Ad)])
    vec_err = []
    for ref, v in zip((vp, vm), vecs.T):
        v = v / np.linalg.norm(v)
        ref = ref / np.linalg.norm(ref)
        vec_err.append(float(min(np.linalg.norm(v - ref), np.linalg.norm(v + ref))))
    return {"eigenvalues": vals.tolist(), "expected_eigenvalues": [math.sqrt(Ac * Ad), -math.sqrt(Ac * Ad)],
            "eigenvector_error": vec_err, "extensions": out, "count": enum["count"],
            "zeta": {"c": Ac, "d": Ad}, "off_span": bm.scalar.off_span,
            "K_tilde": bm.K_tilde.tolist()}
