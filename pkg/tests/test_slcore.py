import math

import numpy as np
import pytest

import _props
from kinvsl import extensions as ex
from kinvsl import gallery
from kinvsl import slcore as sl
from kinvsl.funcalg import ExprFn
from kinvsl.ktransform import SLProblem

CLASSES = [
    ("example_2_8", {}, ("Regular", "LimitPoint")),
    ("example_3_9", {}, ("LimitPoint", "Regular")),
    ("example_3_10", {}, ("LimitPoint", "LimitCircle")),       # gamma = 0.5 < 3/4
    ("example_3_10", {"gamma": 1.0}, ("LimitPoint", "LimitPoint")),
    ("example_3_11", {}, ("Regular", "LimitPoint")),
    ("example_3_11", {"gamma": 1.0}, ("LimitCircle", "LimitPoint")),  # q ~ 1/(4 x^2)
]


@pytest.mark.parametrize("gid, params, expected", CLASSES)
def test_endpoint_classification(gid, params, expected):
    b = gallery.get(gid, **params)
    got = tuple(sl.classify_endpoint(b.problem, w).kind for w in ("a", "b"))
    assert got == expected


def test_classification_matches_gallery_facts():
    b = gallery.get("example_3_9")
    facts = b.facts["endpoint_classes"]
    assert {w: sl.classify_endpoint(b.problem, w).kind for w in ("a", "b")} == facts


ZETA = [
    ("example_3_9", {"c": 1.0}), ("example_3_9", {"c": 3.0}),
    ("example_3_10", {}), ("example_3_10_n2", {}), ("example_3_10_n3", {}),
    ("example_3_11", {}), ("example_3_11", {"gamma": 1.0}),
    ("remark_3_6_power", {}), ("remark_3_6_periodic", {}),
]


@pytest.mark.parametrize("gid, params", ZETA)
def test_kernel_eigenvalue_matches_closed_form(gid, params):
    b = gallery.get(gid, **params)
    z = sl.k_eigenvalue_on_kernel(b.problem, b.K)
    assert z.in_l2
    assert z.spread <= 1e-8
    assert z.zeta == pytest.approx(b.facts["zeta"], rel=1e-8)


def test_no_kernel_eigenvalue_without_l2_solution():
    b = gallery.get("example_2_8")
    kb = sl.kernel_basis(b.problem)
    assert kb.dimension == 0
    with pytest.raises(sl.KernelError):
        sl.k_eigenvalue_on_kernel(b.problem, b.K, kb)


@pytest.mark.parametrize("gid, params", [("example_3_9", {}), ("example_3_11", {}),
                                         ("example_3_11", {"gamma": 1.0}), ("example_3_10", {})])
def test_kernel_matches_closed_form_and_tau_annihilates_it(gid, params):
    b = gallery.get(gid, **params)
    k = ExprFn.from_string(b.facts["kernel"], b.problem.params)
    u = sl.kernel_basis(b.problem)[0]
    x = sl.zeta_grid(b.problem, 80)
    ratio = u(x) / k(x)
    assert np.max(np.abs(ratio - ratio[0])) <= 1e-8 * abs(ratio[0])
    tk = sl.tau_apply(b.problem, k)
    assert np.max(np.abs(tk(x))) / np.max(np.abs(k(x))) <= 1e-8


@pytest.mark.parametrize("gid", ["example_3_9", "example_3_11", "remark_3_6_power", "remark_3_6_periodic"])
def test_unimodular_zeta_iff_boundary_condition(gid):
    b = gallery.get(gid)
    z = sl.k_eigenvalue_on_kernel(b.problem, b.K).zeta
    d = b.problem.b if sl.classify_endpoint(b.problem, "b").kind == "Regular" else b.problem.a
    bt = ex.boundary_transform(b.problem, b.K, d)
    cond = abs(bt.dphi - 1.0) <= 1e-12 and abs(bt.A1) <= 1e-12
    assert (abs(abs(z) - 1.0) <= 1e-8) == cond
    assert not cond


def test_fundamental_system_matches_separate_solves():
    prob = SLProblem.from_strings("1+x^2", "cos(x)", "1", 0.0, 1.0)
    y1, y2 = sl.fundamental_system(prob, 2.0, 0.3, [(1.0, 0.0), (0.0, 1.0)])
    s1 = sl.solve_tau(prob, 2.0, 0.3, (1.0, 0.0))
    x = np.linspace(0.01, 0.99, 30)
    assert np.allclose(y1(x), s1(x), rtol=1e-10, atol=1e-12)
    assert np.allclose(y2.y_quasi(x[:1]), sl.solve_tau(prob, 2.0, 0.3, (0.0, 1.0)).y_quasi(x[:1]), rtol=1e-10)
    # W(y1, y2) = 1 from the initial data
    assert np.allclose(sl.wronskian(y1, y2, x), 1.0, atol=1e-10)


def test_solution_matches_trig_closed_form():
    # -y'' = z y with y(0.5) = 1, y'(0.5) = 0 gives cos(sqrt(z)(x - 0.5))
    prob = SLProblem.from_strings("1", "0", "1", 0.0, 1.0)
    y = sl.solve_tau(prob, 9.0, 0.5, (1.0, 0.0))
    x = np.linspace(0.0 + 1e-9, 1.0 - 1e-9, 41)
    assert np.allclose(y(x), np.cos(3.0 * (x - 0.5)), atol=1e-11)
    assert np.allclose(y.y_quasi(x), -3.0 * np.sin(3.0 * (x - 0.5)), atol=1e-10)


def test_solve_tau_input_checks():
    prob = SLProblem.from_strings("1", "0", "1", 0.0, 1.0)
    with pytest.raises(ValueError):
        sl.solve_tau(prob, 0.0, 2.0, (1.0, 0.0))
    with pytest.raises(ValueError):
        sl.solve_tau(prob, 0.0, 0.5, (1.0, 0.0, 0.0))
    y = sl.solve_tau(prob, 0.0, 0.5, (1.0, 0.0))
    with pytest.raises(ValueError):
        y(np.array([1.5]))


def test_trend_detection():
    conv = np.cumsum(2.0 ** -np.arange(20))
    div = np.cumsum(np.ones(20))
    assert sl.trend(conv)[0] == "converges"
    assert sl.trend(div)[0] == "diverges"


def test_wronskian_constancy_sample():
    assert _props.run_suite(*_props.WRONSKIAN, n=60) == 60
