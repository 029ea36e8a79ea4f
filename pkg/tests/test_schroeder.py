import numpy as np
import pytest

from kinvsl import gallery
from kinvsl import ktransform as kt
from kinvsl import schroeder as sc
from kinvsl.funcalg import ExprFn

X = np.linspace(0.05, 0.95, 50)


@pytest.mark.parametrize("c", [1.0, 3.0])
def test_koenigs_matches_closed_form(c):
    # in w = 1/x - 1 the map is w -> w / (1 + c), so sigma(x) = 1 - 1/x
    b = gallery.get("example_3_9", c=c)
    sigma = sc.koenigs_eval(b.K.phi, 1.0, X)
    exact = 1.0 - 1.0 / X
    assert np.max(np.abs(sigma - exact) / (1.0 + np.abs(exact))) <= 1e-11


@pytest.mark.parametrize("c", [1.0, 3.0])
def test_koenigs_residual_is_monotone_in_depth(c):
    b = gallery.get("example_3_9", c=c)
    res = [sc.verify_schroeder(sc.KoenigsFn(b.K.phi, 1.0, depth=k), b.K.phi_inv, 1 + c, X)
           for k in (5, 10, 20, 40, 80)]
    assert all(r2 <= r1 for r1, r2 in zip(res, res[1:]))
    assert res[-1] <= 1e-12


def test_koenigs_grid_wrapper():
    b = gallery.get("example_3_9")
    g = sc.koenigs(b.K.phi, 1.0)
    assert np.allclose(g.values, 1 - 1 / g.x, rtol=1e-10)


def test_repelling_fixed_point_rejected():
    b = gallery.get("example_3_9")
    with pytest.raises(sc.KoenigsError):
        sc.koenigs_eval(b.K.phi, 0.0, [0.5])


SEED = ExprFn.from_string("(1/x-1)/mu", {"mu": 1.0}, (0.0, 1.0))
GRID = np.linspace(0.01, 0.99, 200)


def test_seed_solves_schroeder_equation():
    b = gallery.get("example_3_9")
    assert sc.verify_schroeder(SEED, b.K.phi_inv, 2.0, GRID) <= 1e-14


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_power_family_inherits_the_equation(n):
    b = gallery.get("example_3_9")
    fam = sc.family_power(SEED, 2.0 ** 0.5, n)
    assert fam["A_n"] == pytest.approx(2.0 ** (n / 2))
    assert sc.verify_schroeder(fam["P_n"], b.K.phi_inv, fam["A_n"] ** 2, GRID) <= 1e-10


@pytest.mark.parametrize("n", [2, 3])
def test_power_family_coefficients_pass_the_checks(n):
    b = gallery.get("remark_3_6_power", n=float(n))
    assert max(kt.residual_coefficient_eqs(b.problem, b.K).values()) <= 1e-10


def test_power_family_rejects_bad_order():
    with pytest.raises(sc.FamilyError):
        sc.family_power(SEED, 2.0 ** 0.5, 0)


def test_periodic_family_sign_and_period_checks():
    with pytest.raises(sc.FamilyError, match="sign"):
        sc.family_periodic(SEED, ExprFn.from_string("2+sin(2*pi*x/ln(2))"), 2.0 ** 0.5, sign=-1.0)
    with pytest.raises(sc.FamilyError, match="periodic"):
        sc.family_periodic(SEED, ExprFn.from_string("12+sin(x)"), 2.0 ** 0.5, sign=-1.0)
    pt = sc.family_periodic(SEED, ExprFn.from_string("12+sin(2*pi*x/ln(2))"), 2.0 ** 0.5, sign=-1.0)
    assert np.all(pt(GRID) > 0)


def test_modulated_antiderivative_solves_schroeder_equation():
    b = gallery.get("example_3_9")
    G = ExprFn.from_string("12+sin(2*pi*x/ln(2))")
    assert sc.verify_schroeder(sc.modulated_antiderivative(SEED, G), b.K.phi_inv, 2.0, GRID) <= 1e-13


@pytest.mark.parametrize("n", [1.0, 2.0, 3.0])
def test_integrated_potential_orientation(n):
    b = gallery.get("example_3_10", n=n, gamma=0.5)
    rep = sc.integrated_orientations(b.problem, b.K, "Q", 0.0)
    assert rep["holds"] == "A-2"
    assert rep["res_s_A-2"] <= 1e-10


def test_integrated_flux_orientation():
    b = gallery.get("example_3_9")
    rep = sc.integrated_orientations(b.problem, b.K, "P", 1.0, sign=-1.0)
    assert rep["holds"] == "A2" and rep["res_s_A2"] <= 1e-10


def test_integrated_needs_constant_A():
    b = gallery.get("example_3_11")
    with pytest.raises(ValueError):
        sc.integrated_orientations(b.problem, b.K, "P", 1.0)
