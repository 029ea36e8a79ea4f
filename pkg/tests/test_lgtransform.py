import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinvsl import gallery
from kinvsl import ktransform as kt
from kinvsl import lgtransform as lg


def _pair(src, tgt):
    facts = src.facts["lg"]
    lgmap = lg.lg_build(src.problem, k=facts["anchor"], orientation=facts["orientation"])
    return lgmap, lg.lg_transform_K(src.problem, src.K, lgmap), tgt


@pytest.mark.parametrize("mu,c", [(4.0, 3.0), (1.0, 1.0), (9.0, 0.5)])
def test_rational_map_goes_to_bessel_like_without_singular_term(mu, c):
    # xi = -ln(x)/sqrt(mu), V = mu/4, A~ = sqrt(1 + c x): worked by hand
    src = gallery.get("example_3_9", mu=mu, c=c)
    tgt = gallery.get("example_3_11", gamma=0.0, mu=mu, c=c)
    lgmap, Kt, _ = _pair(src, tgt)
    assert lgmap.cal_A == 0.0 and lgmap.cal_B == math.inf
    x = np.linspace(0.01, 0.99, 50)
    assert np.allclose(lgmap.forward(x), -np.log(x) / math.sqrt(mu), rtol=1e-12, atol=1e-14)
    xi = lg.lg_grid(src.problem, lgmap, 300)
    assert np.allclose(lg.lg_potential(src.problem, lgmap)(xi), mu / 4, rtol=1e-10)
    assert np.allclose(Kt.A(xi), tgt.K.A(xi), rtol=1e-10)
    assert np.allclose(Kt.phi(xi), tgt.K.phi(xi), rtol=1e-9, atol=1e-10)


def test_power_family_member_goes_to_bessel_like():
    src = gallery.get("example_3_10", n=1.0, mu=4.0, gamma=1.0, c=1.0)
    tgt = gallery.get("example_3_11", gamma=1.0, mu=4.0, c=1.0)
    lgmap, Kt, tgt = _pair(src, tgt)
    xi = lg.lg_grid(src.problem, lgmap, 500)
    V = lg.lg_potential(src.problem, lgmap)(xi)
    assert np.max(np.abs(V - tgt.problem.q(xi)) / (1 + np.abs(V))) <= 1e-9
    res = kt.residual_coefficient_eqs(lg.lg_problem(src.problem, lgmap), Kt, grid=xi)
    assert max(res.values()) <= 1e-8


def test_trivial_problem_is_a_fixed_point():
    prob = kt.SLProblem.from_strings("1", "x", "1", 0.0, 2.0)
    lgmap = lg.lg_build(prob, k=0.0)
    x = np.linspace(0.0, 2.0, 21)
    assert np.allclose(lgmap.forward(x), x, atol=1e-14)
    assert lgmap.cal_B == pytest.approx(2.0, abs=1e-14)
    assert np.allclose(lg.lg_potential(prob, lgmap)(x[1:-1]), x[1:-1], atol=1e-12)


@settings(max_examples=60, deadline=None, derandomize=True)
@given(st.floats(0.02, 0.98))
def test_forward_inverse_round_trip(x):
    b = gallery.get("example_3_10", n=1.0, mu=4.0, gamma=1.0, c=1.0)
    lgmap = lg.lg_build(b.problem, k=1.0, orientation=-1.0)
    assert lgmap.inverse(lgmap.forward(x)) == pytest.approx(x, rel=1e-12)


def test_unitary_image_preserves_norm():
    from scipy import integrate
    b = gallery.get("example_3_9", mu=4.0, c=3.0)
    lgmap = lg.lg_build(b.problem, k=1.0, orientation=-1.0)
    f = lambda x: np.sin(3 * np.asarray(x)) * np.asarray(x)
    g = lg.unitary_image(b.problem, lgmap, f)
    nx, _ = integrate.quad(lambda x: f(x) ** 2, 0.0, 1.0, epsrel=1e-12)
    nxi, _ = integrate.quad(lambda t: float(g(np.array([t]))[0]) ** 2, 0.0, 12.0, epsrel=1e-10, limit=400)
    tail = 1e-10  # x(12) = e^-24, the rest of the mass is negligible
    assert nxi == pytest.approx(nx, rel=1e-8, abs=tail)


def test_bad_orientation_and_anchor():
    b = gallery.get("example_3_9")
    with pytest.raises(lg.LGError):
        lg.lg_build(b.problem, orientation=2.0)
    with pytest.raises(lg.LGError):
        lg.lg_build(b.problem, k=5.0)


def test_mismatched_transform_is_rejected():
    b = gallery.get("example_3_10", n=1.0, mu=4.0, gamma=1.0, c=1.0)
    lgmap = lg.lg_build(b.problem, k=1.0, orientation=-1.0)
    # the map of another c with the original multiplier breaks the q equation
    other = gallery.get("example_3_10", n=1.0, mu=4.0, gamma=1.0, c=3.0).K
    bad = kt.KTransform(b.K.A, other.phi, 1.0, other.phi_inv, (0.0, 1.0))
    with pytest.raises(lg.LGValidationError):
        lg.lg_transform_K(b.problem, bad, lgmap)
