import numpy as np
import pytest

from geowave import checks
from geowave import manifold as mf
from geowave import solver as sv
from geowave.diagnostics import decay as dc
from geowave.grid import Grid

S2 = mf.sphere(3)


def test_loglog_slope_and_geometric():
    m = np.array([1e2, 1e3, 1e4, 1e5])
    assert dc.loglog_slope(m, 3.0 * m ** -0.5) == pytest.approx(-0.5)
    assert dc.is_geometric(m) and dc.is_geometric([8, 4, 2])
    assert not dc.is_geometric([1, 2, 3]) and not dc.is_geometric([1, 1, 1]) and not dc.is_geometric([0, 1])


def test_study_rejects_bad_lists():
    g = Grid(1, 16, 1.0)
    cfg = dc.DecayConfig(g, S2, lambda: sv.great_circle(g), 0.1, dt=1e-3)
    for bad in ([1e2, 1e3, 1e4], [1, 2, 3, 4]):
        with pytest.raises(ValueError, match="geometric"):
            dc.penalty_decay_study(cfg, bad)
    with pytest.raises(sv.StiffnessError):
        dc.penalty_decay_study(cfg, [1e3, 1e4, 1e5, 1e6])


def test_equilibrium_stays_on_manifold():
    g = Grid(1, 16, 1.0)
    p0 = np.array([0.0, 0.6, 0.8])
    init = lambda: sv.State(np.tile(p0, (16, 1)), np.zeros((16, 3)))  # noqa: E731
    cfg = dc.DecayConfig(g, S2, init, 0.2, dt=0.5 / np.sqrt(8e4))
    rep = dc.penalty_decay_study(cfg, [10.0, 1e2, 1e3, 1e4])
    assert np.all(rep.sup_distance < 1e-14)
    assert np.all(rep.sup_penalty_mass < 1e-14)


def test_deterministic_pulse_decays_at_least_like_inverse_sqrt():
    # without forcing the constraint energy itself decays in m, so the distance falls faster than m^-1/2
    res = checks.constraint_decay(noise_strength=0.0, horizon=0.5)
    assert res["slope"] <= -0.35
    assert np.all(np.diff(res["sup_penalty_mass"]) <= 0)


def test_forced_normal_noise_gives_inverse_sqrt_rate():
    res = checks.constraint_decay(ensemble=4, horizon=0.5, m_list=(1e2, 1e3, 1e4, 1e5))
    assert -0.65 <= res["slope"] <= -0.35, res
    assert res["mass_ratio"] < 5.0
