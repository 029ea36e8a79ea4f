"""Bundled coefficient triples with their transforms.

Each entry builds an ``SLProblem`` and a ``KTransform`` from expression
strings plus a dictionary of closed-form facts used by the checks
(kernel function, expected kernel eigenvalue, anchor of the integrated
Schroeder solutions, Liouville-Green data).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Tuple

from .funcalg import ExprFn
from .ktransform import KTransform, SLProblem

INF = math.inf


@dataclass
class Built:
    problem: SLProblem
    K: KTransform
    facts: Dict = field(default_factory=dict)
    source: Dict = field(default_factory=dict)  # expression strings, for JSON round trips


@dataclass
class Entry:
    id: str
    summary: str
    defaults: Dict[str, float]
    factory: Callable[..., Built]
    scalar: bool = True  # False for the block model

    def build(self, **overrides) -> Built:
        params = dict(self.defaults)
        unknown = set(overrides) - set(params)
        if unknown:
            raise KeyError(f"unknown parameter(s) for {self.id}: {sorted(unknown)}")
        params.update({k: float(v) for k, v in overrides.items()})
        return self.factory(**params)


def _make(p, q, r, a, b, A, phi, phi_inv, C, params, singular=(), name="", grid_length=None,
          facts=None) -> Built:
    problem = SLProblem.from_strings(p, q, r, a, b, params, singular=tuple(singular), name=name,
                                     truncation=grid_length)
    K = KTransform.from_strings(A, phi, C, phi_inv, params, (a, b), name)
    source = {"interval": [a, b], "p": p, "q": q, "r": r, "params": dict(params),
              "K": {"A": A, "phi": phi, "phi_inv": phi_inv, "C": C}}
    return Built(problem, K, dict(facts or {}), source)


def half_line_scaling(lam: float = 2.0) -> Built:
    """-f'' on (0, inf) with (Kf)(x) = lam^{-1/2} f(lam x)."""
    return _make("1", "0", "1", 0.0, INF, "lam^(-1/2)", "lam*x", "x/lam", 1.0,
                 {"lam": lam}, name="example_2_8", grid_length=20.0,
                 facts={"robin_invariant_mu": [0.0, INF]})


def rational_map(mu: float = 1.0, c: float = 1.0) -> Built:
    """p = mu x^2, q = 0, r = 1 on (0,1) with phi_c(x) = (1+c)x/(1+cx)."""
    return _make("mu*x^2", "0", "1", 0.0, 1.0, "(1+c)^(1/2)", "(1+c)*x/(1+c*x)",
                 "x/(1+c-c*x)", 1.0, {"mu": mu, "c": c}, singular=(0.0,), name="example_3_9",
                 facts={"kernel": "1", "zeta": math.sqrt(1 + c),
                        "P": "(1/x-1)/mu", "P_anchor": 1.0, "P_sign": -1.0,
                        "lg": {"anchor": 1.0, "orientation": -1.0},
                        "endpoint_classes": {"a": "LimitPoint", "b": "Regular"}})


def power_family(n: float = 1.0, mu: float = 1.0, gamma: float = 0.0, c: float = 1.0) -> Built:
    """n-th member of the power family built on the rational-map seed, with
    the matching potential."""
    disc = 1 + 4 * (gamma / mu) ** n
    facts = {"Q": "gamma^n*(x/(1-x))^n", "Q_anchor": 0.0,
             "P": "((1/x-1)/mu)^n", "P_anchor": 1.0, "P_sign": -1.0}
    if n == 1:
        facts["lg"] = {"anchor": 1.0, "orientation": -1.0}
    if disc >= 0:
        e = (n / 2) * (1 - math.sqrt(disc))
        facts["kernel"] = f"(1/x-1)^({e!r})"
        facts["zeta"] = (1 + c) ** ((n / 2) * math.sqrt(disc))
    upper = 4 ** (-1 / n) * n ** (-1 / n) * (2 + 1 / n) ** (1 / n) * mu
    facts["limit_circle_upper"] = upper
    return _make("mu^n*x^(n+1)*(1-x)^(1-n)/n", "n*gamma^n*x^(n-1)*(1-x)^(-n-1)", "1",
                 0.0, 1.0, "(1+c)^(n/2)", "(1+c)*x/(1+c*x)", "x/(1+c-c*x)", 1.0,
                 {"n": n, "mu": mu, "gamma": gamma, "c": c}, singular=(0.0, 1.0),
                 name="example_3_10", facts=facts)


def bessel_like(gamma: float = 0.0, mu: float = 4.0, c: float = 3.0) -> Built:
    """Schroedinger operator on (0, inf) with a Bessel-type singularity at 0
    and a variable multiplier A."""
    s = "sqrt(mu)"
    disc = 1 + 4 * gamma / mu
    facts = {"kernel": f"exp(-{s}*x/2)*(exp({s}*x)-1)^({0.5 * (1 - math.sqrt(disc))!r})",
             "zeta": (1 + c) ** (math.sqrt(disc) / 2),
             "krein_alpha": math.atan2(1.0, math.sqrt(mu) / 2)}
    return _make("1", f"gamma/(1-exp(-{s}*x))^2+mu/4", "1", 0.0, INF,
                 f"(1+c*exp(-{s}*x))^(1/2)",
                 f"-ln((1+c)*exp(-{s}*x)/(1+c*exp(-{s}*x)))/{s}",
                 f"-ln(exp(-{s}*x)/(1+c-c*exp(-{s}*x)))/{s}", 1.0,
                 {"gamma": gamma, "mu": mu, "c": c},
                 singular=(0.0,) if gamma != 0 else (), name="example_3_11", grid_length=20.0,
                 facts=facts)


def generated_power(n: float = 3.0, mu: float = 1.0, c: float = 1.0) -> Built:
    """Power-family triple minted by ``schroeder.family_power`` from the
    rational-map seed (q = 0, r = 1)."""
    from .schroeder import family_power
    seed = rational_map(mu, c)
    P = ExprFn.from_string("(1/x-1)/mu", {"mu": mu}, (0.0, 1.0))
    fam = family_power(P, math.sqrt(1 + c), int(n), p=seed.problem.p)
    p_src = str(fam["p_n"].expr)
    A_src = repr(fam["A_n"])
    built = _make(p_src, "0", "1", 0.0, 1.0, A_src, "(1+c)*x/(1+c*x)", "x/(1+c-c*x)", 1.0,
                  {"mu": mu, "c": c}, singular=(0.0, 1.0), name="remark_3_6_power",
                  facts={"kernel": "1", "zeta": fam["A_n"]})
    built.source["params"]["n"] = n
    return built


def generated_periodic(mu: float = 1.0, c: float = 1.0, g0: float = 12.0) -> Built:
    """Periodically modulated p from ``schroeder.family_periodic`` with
    G(t) = g0 + sin(2 pi t / ln(1+c))."""
    from .schroeder import family_periodic
    params = {"mu": mu, "c": c, "g0": g0}
    P = ExprFn.from_string("(1/x-1)/mu", params, (0.0, 1.0))
    G = ExprFn.from_string("g0+sin(2*pi*x/ln(1+c))", params)
    pt = family_periodic(P, G, math.sqrt(1 + c), sign=-1.0)
    return _make(str(pt.expr), "0", "1", 0.0, 1.0, "(1+c)^(1/2)", "(1+c)*x/(1+c*x)",
                 "x/(1+c-c*x)", 1.0, params, singular=(0.0,), name="remark_3_6_periodic",
                 facts={"kernel": "1", "zeta": math.sqrt(1 + c)})


def block_placeholder(c: float = 1.0, d: float = 3.0, mu: float = 1.0) -> Built:
    """Scalar building block of the two-component model (see bkvglab)."""
    built = rational_map(mu, c)
    built.facts.update({"block": True, "c": c, "d": d,
                        "eigenvalues": [(1 + c) ** 0.25 * (1 + d) ** 0.25,
                                        -(1 + c) ** 0.25 * (1 + d) ** 0.25]})
    return built


GALLERY: Dict[str, Entry] = {}


def _register(entry: Entry):
    GALLERY[entry.id] = entry


_register(Entry("example_2_8", "half-line -f'' with the scaling K f = lam^-1/2 f(lam x)",
                {"lam": 2.0}, half_line_scaling))
_register(Entry("example_3_9", "p = mu x^2 on (0,1), rational phi_c, constant A",
                {"mu": 1.0, "c": 1.0}, rational_map))
_register(Entry("example_3_10", "power family p_n, q_n on (0,1) (n = 1 by default)",
                {"n": 1.0, "mu": 1.0, "gamma": 0.5, "c": 1.0}, power_family))
_register(Entry("example_3_10_n2", "power family, n = 2",
                {"n": 2.0, "mu": 1.0, "gamma": 0.5, "c": 1.0}, power_family))
_register(Entry("example_3_10_n3", "power family, n = 3",
                {"n": 3.0, "mu": 1.0, "gamma": 0.5, "c": 1.0}, power_family))
_register(Entry("example_3_11", "Schroedinger operator on (0,inf), Bessel-type potential",
                {"gamma": 0.0, "mu": 4.0, "c": 3.0}, bessel_like))
_register(Entry("example_3_14", "two-component block operator with anti-diagonal K",
                {"c": 1.0, "d": 3.0, "mu": 1.0}, block_placeholder, scalar=False))
_register(Entry("remark_3_6_power", "power-family triple generated from the seed",
                {"n": 3.0, "mu": 1.0, "c": 1.0}, generated_power))
_register(Entry("remark_3_6_periodic", "periodically modulated p generated from the seed",
                {"mu": 1.0, "c": 1.0, "g0": 12.0}, generated_periodic))


def get(entry_id: str, **params) -> Built:
    if entry_id not in GALLERY:
        raise KeyError(f"unknown gallery id {entry_id!r}")
    return GALLERY[entry_id].build(**params)


def scalar_ids() -> List[str]:
    return [k for k, e in GALLERY.items() if e.scalar]
