import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from geowave import noise as nz
from geowave.grid import Grid


def test_validate_measure_symmetrises():
    m = nz.validate_measure([([2.0], 1.0)])
    assert sorted(m.atoms) == [((-2.0,), 0.5), ((2.0,), 0.5)]
    assert m.total_mass == 1.0


def test_validate_measure_zero_atom():
    m = nz.validate_measure([([0.0], 2.0)])
    assert m.atoms == [((0.0,), 2.0)]
    assert m.total_mass == 2.0


def test_validate_measure_merges_mirrors():
    m = nz.validate_measure([([1.0, 0.5], 1.0), ([-1.0, -0.5], 3.0)])
    assert len(m.atoms) == 2
    np.testing.assert_allclose(m.masses, [2.0, 2.0])


@pytest.mark.parametrize("atoms", [[], [([1.0], -1.0)], [([1.0], 0.0)], [([1.0], np.inf)], [([np.nan], 1.0)],
                                   [([1.0], 1.0), ([1.0, 2.0], 1.0)]])
def test_validate_measure_rejects(atoms):
    with pytest.raises(ValueError):
        nz.validate_measure(atoms)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.lists(st.floats(-10, 10), min_size=2, max_size=2), st.floats(1e-3, 10)),
                min_size=1, max_size=6))
def test_measure_invariants(atoms):
    m = nz.validate_measure(atoms)
    assert m.total_mass == pytest.approx(sum(c for _, c in atoms))
    assert np.all(m.masses > 0)
    lookup = {tuple(x): c for x, c in m.atoms}
    for xi, c in m.atoms:
        assert lookup[tuple(-np.array(xi) + 0.0)] == pytest.approx(c)


def test_zero_mode_increment_constant_with_variance():
    m = nz.preset_measure("zero_mode", 1, mass=3.0)
    g = Grid(1, 16, 1.0)
    inc = nz.sample_increment(m, g, 0.01, seed=0, members=range(20000))
    assert np.all(inc.values == inc.values[:, :1])
    var = inc.values[:, 0].var()
    assert var == pytest.approx(0.03, rel=0.05)


def test_single_pair_covariance_monte_carlo():
    xi0 = 2 * np.pi
    m = nz.validate_measure([([xi0], 1.0)])
    dt = 0.01
    z = nz.standard_draws(m, 5, 0, np.arange(10_000))
    x = np.linspace(0, 1, 7)[:, None]
    w = nz.synthesize(m, np.vstack([x, [[0.0]]]), z, dt)
    prod = w[:, :-1] * w[:, -1:]
    se = prod.std(axis=0, ddof=1) / np.sqrt(len(prod))
    target = dt * np.cos(xi0 * x[:, 0])
    assert np.all(np.abs(prod.mean(axis=0) - target) <= 4 * se)


def test_sample_increment_reproducible():
    m = nz.preset_measure("ring8", 2, wavenumber=3.0)
    g = Grid(2, 8, 1.0)
    a = nz.sample_increment(m, g, 0.1, seed=7, step=3, members=[0, 1])
    b = nz.sample_increment(m, g, 0.1, seed=7, step=3, members=[0, 1])
    c = nz.sample_increment(m, g, 0.1, seed=8, step=3, members=[0, 1])
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    assert not np.array_equal(a.values[0], a.values[1])
    assert np.isrealobj(a.values)
    r1 = nz.sample_increment(m, g, 0.1, rng=11)
    r2 = nz.sample_increment(m, g, 0.1, rng=11)
    assert np.array_equal(r1.values, r2.values)


def test_member_stream_independent_of_batch():
    m = nz.preset_measure("single_pair", 1, wavenumber=1.0)
    all_members = nz.standard_draws(m, 3, 5, [0, 1, 2, 3])
    one = nz.standard_draws(m, 3, 5, [2])
    assert np.array_equal(all_members[2], one[0])


def test_sample_increment_rejects_bad_input():
    m = nz.preset_measure("single_pair", 1)
    with pytest.raises(ValueError):
        nz.sample_increment(m, Grid(1, 8, 1.0), 0.0)
    with pytest.raises(ValueError):
        nz.sample_increment(m, Grid(2, 8, 1.0), 0.1)


def test_two_half_steps_match_one_step():
    m = nz.preset_measure("ring8", 1, wavenumber=2.0)
    g = Grid(1, 8, 3.0)
    dt = 0.05
    a = nz.sample_increment(m, g, dt, seed=1, step=0, members=range(4000)).values
    b = nz.sample_increment(m, g, dt, seed=1, step=1, members=range(4000)).values
    one = nz.sample_increment(m, g, 2 * dt, seed=2, step=0, members=range(4000)).values
    two = a + b
    for col in range(0, 8, 3):
        assert stats.ks_2samp(two[:, col], one[:, col]).pvalue > 1e-3
        assert two[:, col].var() == pytest.approx(2 * dt * m.total_mass, rel=0.1)
        assert abs(two[:, col].mean()) < 4 * np.sqrt(2 * dt / 4000)


def test_covariance_kernel_examples():
    m = nz.preset_measure("ring8", 2, wavenumber=4.0, mass=2.5)
    assert nz.covariance_kernel(m, np.zeros(2)) == pytest.approx(2.5)
    pair = nz.validate_measure([([1.0, 0.0], 1.0)])
    assert nz.covariance_kernel(pair, np.array([np.pi, 0.3])) == pytest.approx(-1.0)
    x = np.random.default_rng(0).standard_normal((50, 2))
    np.testing.assert_allclose(nz.covariance_kernel(m, x), nz.covariance_kernel(m, -x), rtol=1e-14)


def test_mode_basis_sums_to_kernel_diagonal():
    m = nz.preset_measure("ring8", 2, wavenumber=3.0)
    x = np.random.default_rng(1).uniform(0, 5, (30, 2))
    e = nz.mode_basis(m, x)
    np.testing.assert_allclose(np.sum(e ** 2, axis=0), m.total_mass, rtol=1e-13)


def test_hs_norm_examples():
    m = nz.preset_measure("single_pair", 1, wavenumber=2.0)
    g = Grid(1, 32, 2.0)
    assert nz.hs_multiplier_norm(m, np.zeros(g.shape), g) == 0.0
    assert nz.hs_multiplier_norm_sq(m, np.ones(g.shape), g) == pytest.approx(2.0, rel=1e-12)
    f = np.random.default_rng(2).standard_normal(g.shape)
    assert nz.hs_multiplier_norm_sq(m, 2 * f, g) == pytest.approx(4 * nz.hs_multiplier_norm_sq(m, f, g), rel=1e-12)


def test_hs_norm_identity_random_fields():
    for name in nz.PRESET_MEASURES:
        m = nz.preset_measure(name, 2, wavenumber=2.0, mass=1.7)
        g = Grid(2, 12, 3.0)
        rng = np.random.default_rng(3)
        region = g.periodic_distance((1.5, 1.5)) < 1.0
        for _ in range(10):
            f = rng.standard_normal(g.shape)
            hs = nz.hs_multiplier_norm_sq(m, f, g, region)
            closed = m.total_mass * np.sum(f[region] ** 2) * g.cell_volume
            assert hs == pytest.approx(closed, rel=1e-12)


def test_hs_norm_empty_region():
    m = nz.preset_measure("zero_mode", 1)
    g = Grid(1, 8, 1.0)
    with pytest.raises(ValueError):
        nz.hs_multiplier_norm(m, np.ones(8), g, np.zeros(8, dtype=bool))


def test_measure_json_roundtrip(tmp_path):
    m = nz.preset_measure("ring8", 2, wavenumber=1.5)
    path = tmp_path / "mu.json"
    path.write_text(json.dumps(nz.measure_to_json(m)))
    back = nz.load_measure(path)
    np.testing.assert_array_equal(back.frequencies, m.frequencies)
    np.testing.assert_array_equal(back.masses, m.masses)


def test_ring8_has_eight_atoms():
    for d in (1, 2, 3):
        m = nz.preset_measure("ring8", d, wavenumber=2.0, mass=1.0)
        assert len(m.atoms) == 8
        assert m.total_mass == pytest.approx(1.0)
