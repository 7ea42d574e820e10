"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Thresholds are the stated ones.  The stochastic residual-rate parts of
criteria 7 and 9 are run as stated and currently fail; the observed
ratios are printed with the verdict.
"""

import numpy as np
import pytest

from geowave import checks
from geowave import manifold as mf
from geowave import noise as nz
from geowave.diagnostics import residuals as rs


@pytest.fixture
def report(capsys):
    def emit(number, title, passed, detail=""):
        with capsys.disabled():
            print(f"\ncriterion {number} ({title}): {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return emit


def test_criterion_1_geometry_identities(report):
    res = checks.geometry_identities(n=3, samples=1000, tol=1e-12)
    worst = max(res["errors"].values())
    assert report(1, "geometry identities", res["passed"], f"max relative error {worst:.2e}"), res


def test_criterion_2_noise_law(report):
    ok, details = True, []
    for name in ("zero_mode", "single_pair", "ring8"):
        m = nz.preset_measure(name, 1, wavenumber=3.0)
        res = checks.noise_law(m, draws=10_000, pairs=20)
        ok = ok and res["passed"]
        details.append(f"{name}: max z {res['max_z']:.2f}, HS {res['hs_relative_error']:.1e}")
    assert report(2, "noise law", ok, "; ".join(details))


def test_criterion_3_scheme_order(report):
    sw = checks.standing_wave_order(levels=(32, 64, 128))
    geo = checks.geodesic_order()
    ok = sw["min_order"] >= 1.9 and geo["min_order"] >= 1.9
    assert report(3, "scheme order", ok,
                  f"standing wave {sw['min_order']:.3f}, geodesic {geo['min_order']:.3f}"), (sw, geo)


def test_criterion_4_finite_propagation(report):
    res = checks.finite_propagation(points=8192, tol=1e-12)
    assert report(4, "finite propagation", res["passed"], f"max outside {res['max_outside']:.2e}"), res


def test_criterion_5_constraint_decay(report):
    res = checks.constraint_decay(m_list=(1e2, 1e3, 1e4, 1e5))
    ok = -0.65 <= res["slope"] <= -0.35 and res["mass_ratio"] < 5.0
    assert report(5, "constraint decay", ok, f"slope {res['slope']:.3f}, mass ratio {res['mass_ratio']:.2f}"), res


def test_criterion_6_energy_inequality(report):
    free = checks.energy_inequality("free", members=64)
    damped = checks.energy_inequality("damped", members=64)
    ok = free["passed"] and damped["passed"]
    detail = (f"free C = {free['id']['estimate']:g}/{free['sqrt']['estimate']:g}; damped C change "
              f"id {damped['id']['relative_change']:.1%}, sqrt {damped['sqrt']['relative_change']:.1%}")
    assert report(6, "energy inequality", ok, detail), (free, damped)


def test_criterion_7a_momentum_conservation(report):
    pen = checks.momentum_drift(steps=1000, scheme="penalized")
    proj = checks.momentum_drift(steps=1000, scheme="projected")
    drift = max(pen["relative_drift"], proj["relative_drift"])
    assert report("7a", "momentum drift", drift < 1e-6, f"relative drift {drift:.2e}")


def test_criterion_7b_momentum_residual_rate(report):
    res = checks.residual_ratio_study("momentum", members=64)
    ratios = ", ".join(f"{r:.3f}" for r in res["ratios"])
    lo, hi = res["window"]
    assert report("7b", "momentum residual rate", res["passed"],
                  f"ratios {ratios} vs [{lo:.3f}, {hi:.3f}], fitted order {res['fitted_order']:.2f}"), res


def test_criterion_8_reconstruction(report):
    res = checks.reconstruction_roundtrip(steps=200, tol=1e-10)
    assert report(8, "velocity reconstruction", res["passed"], f"max error {res['max_error']:.2e}"), res


def test_criterion_9a_ito_linear_bitwise(report):
    spec = mf.sphere(3)
    tr = checks._stochastic_trajectory(1.0 / 128, 16, seed=3)
    phi = rs.bump_test_function(tr.params.grid)
    same = all(np.array_equal(rs.ito_residual(tr, rs.linear_map(spec.generators[i]), phi, signed=True),
                              rs.momentum_weak_residual(tr, spec, i, phi, signed=True)) for i in range(3))
    assert report("9a", "Ito residual, linear Y", same, "bit-for-bit" if same else "mismatch")


def test_criterion_9b_ito_residual_rate(report):
    res = checks.residual_ratio_study("ito", members=64)
    ratios = ", ".join(f"{r:.3f}" for r in res["ratios"])
    lo, hi = res["window"]
    assert report("9b", "Ito residual rate", res["passed"],
                  f"ratios {ratios} vs [{lo:.3f}, {hi:.3f}], fitted order {res['fitted_order']:.2f}"), res
