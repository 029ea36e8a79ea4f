"""The nine acceptance criteria at their stated tolerances and time limits.

Each test records one PASS/FAIL line (printed in the terminal summary and
on stdout) before asserting.
"""
import math
import time

import numpy as np
import pytest

import _props
from kinvsl import bkvglab as bk
from kinvsl import extensions as ex
from kinvsl import gallery
from kinvsl import ktransform as kt
from kinvsl import lgtransform as lg
from kinvsl import slcore as sl
from kinvsl import spectral as sp


def record(log, number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    log.append(line)
    print(line)
    return ok


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


# --------------------------------------------------------------------------

RESIDUAL_CASES = (
    [("example_3_9", {"mu": 1.0, "c": c}) for c in (1.0, 3.0)]
    + [("example_3_10", {"n": n, "mu": 1.0, "gamma": g}) for n in (1.0, 2.0, 3.0) for g in (0.0, 0.5)]
    + [("example_3_11", {"mu": 4.0, "c": 3.0, "gamma": g}) for g in (0.0, 1.0)]
)


def test_criterion_1_coefficient_residuals(acceptance_log):
    worst, slowest, bad = 0.0, 0.0, []
    for gid, params in RESIDUAL_CASES:
        b = gallery.get(gid, **params)
        res, dt = timed(kt.residual_coefficient_eqs, b.problem, b.K, n=1000)
        worst = max(worst, *res.values())
        slowest = max(slowest, dt)
        if max(res.values()) > 1e-10 or dt >= 1.0:
            bad.append((gid, params, res, dt))
    ok = not bad
    record(acceptance_log, 1, ok, f"{len(RESIDUAL_CASES)} triples, max residual {worst:.2e}, "
                                  f"slowest {slowest:.3f} s")
    assert ok, bad


def test_criterion_2_operator_identity(acceptance_log):
    worst, slowest, bad = 0.0, 0.0, []
    ids = gallery.scalar_ids()
    for gid in ids:
        b = gallery.get(gid)
        t0 = time.perf_counter()
        res = [kt.residual_operator_identity(b.problem, b.K, f) for f in kt.bump_functions(b.problem, 3)]
        dt = time.perf_counter() - t0
        worst, slowest = max(worst, *res), max(slowest, dt)
        if max(res) > 1e-5 or dt >= 5.0:
            bad.append((gid, res, dt))
    ok = not bad
    record(acceptance_log, 2, ok, f"{len(ids)} entries x 3 bumps, max relative L2 residual {worst:.2e}, "
                                  f"slowest {slowest:.3f} s")
    assert ok, bad


def test_criterion_3_boundary_classification(acceptance_log):
    t0 = time.perf_counter()
    b = gallery.get("example_3_11", gamma=0.0, mu=4.0, c=3.0)
    rep = ex.classify_invariant_extensions(b.problem, b.K)
    angles = rep["endpoints"]["a"]["angles"]
    quarter = [a for a in angles if a != 0.0]
    ok_angle = len(quarter) == 1 and abs(quarter[0] - math.pi / 4) <= 1e-12

    b = gallery.get("example_3_9")
    rep = ex.classify_invariant_extensions(b.problem, b.K)
    end = rep["endpoints"]["b"]
    tags = sorted("Dirichlet" if a == 0.0 else "Neumann" if ex.same_angle(a, math.pi / 2) else "Robin"
                  for a in end["angles"])
    ok_dn = tags == ["Dirichlet", "Neumann"] and rep["endpoints"]["a"]["class"] == "LimitPoint"

    b = gallery.get("example_2_8")
    rep = ex.classify_invariant_extensions(b.problem, b.K)
    mus = sorted(rep["endpoints"]["a"]["robin_mu"])
    ok_mu = mus == [0.0, math.inf]
    dt = time.perf_counter() - t0
    ok = ok_angle and ok_dn and ok_mu and dt < 1.0
    record(acceptance_log, 3, ok, f"angle {quarter} vs pi/4, example_3_9 {tags}, example_2_8 mu {mus}, "
                                  f"{dt:.3f} s")
    assert ok


def test_criterion_4_kernel_eigenvalue(acceptance_log):
    rows, ok = [], True
    for gid, params, expected in (("example_3_9", {"c": 3.0}, 2.0),
                                  ("example_3_10", {"n": 2.0, "gamma": 1.0, "mu": 1.0, "c": 1.0},
                                   2.0 ** math.sqrt(5.0))):
        b = gallery.get(gid, **params)
        z, dt = timed(sl.k_eigenvalue_on_kernel, b.problem, b.K)
        good = abs(z.zeta - expected) <= 1e-8 * expected and z.spread <= 1e-8 and dt < 2.0
        ok &= good
        rows.append(f"{gid} zeta {z.zeta:.12g} (exact {expected:.12g}, spread {z.spread:.1e}, {dt:.2f} s)")
    record(acceptance_log, 4, ok, "; ".join(rows))
    assert ok


def test_criterion_5_krein_zero_mode(acceptance_log):
    t0 = time.perf_counter()
    b = gallery.get("example_3_11", gamma=0.0, mu=4.0, c=3.0)
    alpha = math.atan2(1.0, 1.0)  # cot(alpha) = 1
    rep = sp.krein_zero_mode_check(b.problem, b.K, ex.Separated(alpha, None), N=4000, L=20.0)
    lam_f = float(sp.eigen_smallest(sp.discretize(b.problem, ex.Separated(0.0, None), 4000, 20.0)).values[0])
    dt = time.perf_counter() - t0
    lam = rep["lambda_N"]
    ok = (-5e-4 <= lam <= 5e-4 and rep["first_order"] and abs(rep["lambda_2N"]) < abs(lam)
          and lam_f >= 0.999 and dt < 10.0)
    record(acceptance_log, 5, ok, f"Krein lambda1 {lam:.3e} (N=4000), {rep['lambda_2N']:.3e} (N=8000), "
                                  f"ratio {rep['refinement_ratio']:.3f}; Friedrichs {lam_f:.6f}; {dt:.2f} s")
    assert ok


def test_criterion_6_block_model(acceptance_log):
    t0 = time.perf_counter()
    rep = bk.block_report(bk.build_block_model(1.0, 3.0))
    dt = time.perf_counter() - t0
    target = 2.0 ** 0.75
    ev = sorted(rep["eigenvalues"])
    ok_ev = abs(ev[0] + target) <= 1e-8 and abs(ev[1] - target) <= 1e-8
    pm = {e["name"]: e for e in rep["extensions"]}
    ok_rows = all(pm[k]["row_mismatch"] <= 1e-8 for k in ("plus", "minus")) if {"plus", "minus"} <= set(pm) else False
    ok = rep["count"] == 4 and ok_ev and ok_rows and dt < 10.0
    mism = max((e["row_mismatch"] for e in rep["extensions"]), default=math.nan)
    record(acceptance_log, 6, ok, f"{rep['count']} extensions {sorted(pm)}, eigenvalues "
                                  f"{ev[1]:.13f}/{ev[0]:.13f} vs +-2^(3/4), row mismatch {mism:.1e}, {dt:.2f} s")
    assert ok


def test_criterion_7_defect_one(acceptance_log):
    cands = [0.0, 0.5, 1.0, 1j, 1 + 1j]
    t0 = time.perf_counter()
    off = bk.defect_one_admissible(2.0, cands)
    on = bk.defect_one_admissible(complex(math.cos(0.7), math.sin(0.7)), cands)
    dt = time.perf_counter() - t0
    ok = off == [0.0] and on == cands and dt < 1.0
    record(acceptance_log, 7, ok, f"|zeta|=2 admits {off}; |zeta|=1 admits {len(on)} of 5; {dt:.3f} s")
    assert ok


def test_criterion_8_liouville_green(acceptance_log):
    t0 = time.perf_counter()
    src = gallery.get("example_3_10", n=1.0, mu=4.0, gamma=1.0, c=1.0)
    tgt = gallery.get("example_3_11", gamma=1.0, mu=4.0, c=1.0)
    facts = src.facts["lg"]
    lgmap = lg.lg_build(src.problem, k=facts["anchor"], orientation=facts["orientation"])
    V = lg.lg_potential(src.problem, lgmap)
    Kt = lg.lg_transform_K(src.problem, src.K, lgmap)
    xi = lg.lg_grid(src.problem, lgmap, 500)
    qv = tgt.problem.q(xi)
    err_V = float(np.max(np.abs(V(xi) - qv) / (1.0 + np.abs(qv))))
    err_A = float(np.max(np.abs(Kt.A(xi) - tgt.K.A(xi))))
    err_phi = float(np.max(np.abs(Kt.phi(xi) - tgt.K.phi(xi))))
    dt = time.perf_counter() - t0
    ok = err_V <= 1e-9 and err_A <= 1e-9 and err_phi <= 1e-9 and dt < 2.0 and xi.size == 500
    record(acceptance_log, 8, ok, f"V {err_V:.1e}, A~ {err_A:.1e}, phi~ {err_phi:.1e} on {xi.size} points, "
                                  f"{dt:.2f} s")
    assert ok


def test_criterion_9_property_suites(acceptance_log):
    t0 = time.perf_counter()
    parts, failed = [], []
    for name, (body, strategies) in _props.SUITES.items():
        try:
            n = _props.run_suite(body, strategies)
            ok = n >= _props.CASES
            parts.append(f"{name} {n} cases ok" if ok else f"{name} only {n} cases")
        except AssertionError as exc:
            ok = False
            first = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
            parts.append(f"{name} FAILED ({first[:160]})")
        if not ok:
            failed.append(name)
    dt = time.perf_counter() - t0
    ok = not failed and dt < 60.0
    record(acceptance_log, 9, ok, "; ".join(parts) + f"; total {dt:.1f} s")
    assert ok, failed
