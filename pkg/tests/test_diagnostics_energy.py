import numpy as np
import pytest

from geowave import checks
from geowave import coefficients as co
from geowave import manifold as mf
from geowave import solver as sv
from geowave.diagnostics import energy as en
from geowave.grid import Grid

S2 = mf.sphere(3)


def _with_norms(fd1, gd1):
    return co.CoefficientSet(3, 1, sup_norms={"fd1": fd1, "gd1": gd1})


@pytest.mark.parametrize("fd1,gd1,expected", [(0.0, 0.0, 0.0), (2.0, 0.0, 4.0), (0.5, 1.0, 1.25), (3.0, 0.0, 9.0)])
def test_s_squared_examples(fd1, gd1, expected):
    assert en.s_squared(_with_norms(fd1, gd1)) == pytest.approx(expected)


def test_s_squared_uses_unmollified_norms():
    cs = co.constant_field(3, 1, vector=[0.0, 2.0, 0.0], noise_vector=[0.0, 0.0, 1.0])
    assert en.s_squared(cs) == pytest.approx(max(2.0, 4.0 + 1.0))
    assert en.s_squared(co.mollify(cs, 3.0)) == en.s_squared(cs)
    assert en.s_squared(None) == 0.0


def test_local_energy_zero_state():
    g = Grid(2, 16, 4.0)
    st = sv.State(np.zeros(g.shape + (3,)), np.zeros(g.shape + (3,)))
    assert en.local_energy(st, en.EnergyWindow((2.0, 2.0), 1.0), g) == 0.0


def test_local_energy_constant_field_half_volume():
    for d, P in ((1, 4096), (2, 512)):
        g = Grid(d, P, 4.0)
        U = np.broadcast_to([0.0, 0.6, 0.8], g.shape + (3,)).copy()
        st = sv.State(U, np.zeros_like(U))
        w = en.EnergyWindow((2.0,) * d, 1.0)
        e = en.local_energy(st, w, g)
        mask = en.ball_mask(g, w.center, 1.0)
        assert e == pytest.approx(0.5 * mask.sum() * g.cell_volume, rel=1e-13)
        # the covered volume tends to the ball volume at O(h)
        assert e == pytest.approx(0.5 * en.ball_volume(d, 1.0), rel=4 * d * g.h)


def test_local_energy_matches_norm_form():
    g = Grid(2, 32, 4.0)
    st = sv.random_tangent_field(g, 7, width=0.5, speed=1.5)
    for s2 in (0.0, 1.25):
        w = en.EnergyWindow((2.0, 2.0), 1.5)
        a = en.local_energy(st, w, g, s2)
        b = en.local_energy_from_norms(st, w, g, s2)
        assert abs(a - b["energy"]) <= 1e-12 * abs(b["energy"])
    assert b["constant_half_horizon_form"] == pytest.approx(0.75 * 1.25)
    assert b["constant_volume_form"] == pytest.approx(1.25 * b["covered_volume"])


def test_local_energy_penalty_term():
    g = Grid(1, 64, 4.0)
    st = sv.great_circle(g)
    U = 1.1 * st.U
    off = sv.State(U, st.V)
    base = en.local_energy(off, en.EnergyWindow((2.0,), 1.0), g)
    pen = en.local_energy(off, en.EnergyWindow((2.0,), 1.0, penalty=True, penalty_strength=10.0), g, spec=S2)
    mask = en.ball_mask(g, (2.0,), 1.0)
    assert pen - base == pytest.approx(10.0 * mask.sum() * g.h * (1.21 - 1) ** 2)
    with pytest.raises(ValueError):
        en.local_energy(off, en.EnergyWindow((2.0,), 1.0, penalty=True, penalty_strength=10.0), g)


def test_energy_window_errors():
    g = Grid(1, 16, 4.0)
    st = sv.great_circle(g)
    with pytest.raises(ValueError):
        en.EnergyWindow((0.0,), 0.0)
    with pytest.raises(ValueError):
        en.local_energy(sv.State(st.U, st.V, 1.0), en.EnergyWindow((2.0,), 1.0), g)
    # radius below half a cell covers no cell centre
    with pytest.raises(ValueError, match="no grid cell"):
        en.local_energy(sv.State(st.U, st.V, 0.99), en.EnergyWindow((2.1,), 1.0), g)


def test_local_energy_shrinks_for_free_wave():
    # domain of dependence: the energy in B(x, T - t) cannot grow beyond O(h)
    errs = []
    for P in (256, 512):
        g = Grid(1, P, 8.0)
        st = sv.random_tangent_field(g, 2, width=0.5)
        p = sv.StepParams(g, g.h / 4)
        w = en.EnergyWindow((4.0,), 2.0)
        e0 = en.local_energy(st, w, g)
        worst = 0.0
        for _ in range(int(round(1.0 / p.dt))):
            st = sv.step(st, p)
            worst = max(worst, en.local_energy(st, w, g) - e0)
        errs.append(worst / e0)
    assert errs[0] < 0.05 and errs[1] < 0.05
    assert errs[1] <= errs[0] + 1e-12


def test_L_admissibility_examples():
    assert en.check_L_admissible(en.L_sqrt, 0.5)
    assert en.check_L_admissible(en.L_identity, 1.0)
    assert not en.check_L_admissible(en.L_exp, 1.0)
    assert not en.check_L_admissible(en.L_exp, 1e3)
    assert not en.check_L_admissible(en.L_sqrt, 0.4)
    for q in (0.25, 1.5, 2.0, 3.0):
        assert en.check_L_admissible(en.L_power(q))


def test_energy_inequality_rejects_small_ensemble():
    with pytest.raises(ValueError, match="32"):
        en.energy_inequality_mc(np.ones((31, 5)), np.arange(5.0), en.L_identity)
    with pytest.raises(ValueError):
        en.energy_inequality_mc(np.ones(40), np.arange(40.0), en.L_identity)


def test_energy_inequality_zero_data():
    r = en.energy_inequality_mc(np.zeros((32, 10)), np.linspace(0, 1, 10), en.L_sqrt, bootstrap=20)
    assert r.rhs0 == 0.0 and np.all(r.lhs == 0.0)
    assert r.fitted_C == 0.0 and r.holds()


def test_energy_inequality_exact_exponential():
    # e(t) = e^{a t} on every path: 4 e^{Ct} covers it for C = a - log(4)/t_max at best, rounded up on the grid
    t = np.linspace(0, 1, 51)
    E = np.tile(np.exp(3.0 * t), (40, 1))
    r = en.energy_inequality_mc(E, t, en.L_identity, bootstrap=10)
    assert 3.0 - np.log(4.0) <= r.fitted_C <= (3.0 - np.log(4.0)) * 1.01
    assert r.ci[0] == r.ci[1] == r.fitted_C
    assert r.holds() and not r.holds(0.0)


def test_energy_inequality_event_threshold():
    t = np.linspace(0, 1, 5)
    E = np.vstack([np.ones((20, 5)), np.tile(1 + 10 * t, (20, 1))])
    h = np.r_[np.zeros(20), np.ones(20)]
    r = en.energy_inequality_mc(E, t, en.L_identity, h, event_threshold=0.5, bootstrap=10)
    assert r.event_fraction == 0.5 and r.fitted_C == 0.0
    full = en.energy_inequality_mc(E, t, en.L_identity, bootstrap=10)
    assert full.fitted_C > 0


def test_free_wave_fits_zero_constant():
    res = checks.energy_inequality("free", members=32, bootstrap=20)
    assert res["passed"], res
    assert res["id"]["estimate"] == 0.0 and res["sqrt"]["estimate"] == 0.0
