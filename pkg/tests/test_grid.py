import numpy as np
import pytest

from geowave.grid import Grid, backward_diff, centered_grad, forward_diff, laplacian, pairing


def test_grid_validation():
    for bad in ((0, 16, 1.0), (4, 16, 1.0), (1, 7, 1.0), (1, 16, 0.0), (1, 16.5, 1.0)):
        with pytest.raises(ValueError):
            Grid(*bad)


def test_grid_geometry():
    g = Grid(2, 16, 2.0)
    assert g.h == 0.125
    assert g.shape == (16, 16)
    assert g.coords().shape == (16, 16, 2)
    np.testing.assert_array_equal(g.coords()[3, 5], [3 * 0.125, 5 * 0.125])
    assert g.integrate(np.ones(g.shape)) == pytest.approx(4.0)


def test_periodic_distance_wraps():
    g = Grid(1, 10, 1.0)
    d = g.periodic_distance([0.05])
    assert d[0] == pytest.approx(0.05)
    assert d[9] == pytest.approx(0.15)
    assert g.periodic_distance([0.95])[0] == pytest.approx(0.05)


def test_laplacian_constant_and_linearity():
    g = Grid(2, 16, 1.0)
    rng = np.random.default_rng(0)
    assert np.max(np.abs(laplacian(np.full(g.shape + (3,), 2.5), g))) < 1e-10
    f, h = rng.standard_normal((2,) + g.shape + (3,))
    np.testing.assert_allclose(laplacian(3 * f + h, g), 3 * laplacian(f, g) + laplacian(h, g), atol=1e-10)


def test_laplacian_order_on_sine():
    errs = []
    for P in (16, 32, 64, 128):
        g = Grid(1, P, 2.0)
        k = 2 * np.pi / g.length
        u = np.sin(k * g.coords())
        errs.append(np.max(np.abs(laplacian(u, g) + k * k * u)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() >= 1.9


def test_laplacian_3d_eigenfunction():
    g = Grid(3, 8, 1.0)
    x = g.coords()
    u = (np.cos(2 * np.pi * x[..., 0]) * np.cos(2 * np.pi * x[..., 2]))[..., None]
    lam = 2 * (2 - 2 * np.cos(2 * np.pi * g.h)) / g.h ** 2
    np.testing.assert_allclose(laplacian(u, g), -lam * u, atol=1e-10)


def test_differences_compose_to_laplacian():
    g = Grid(2, 12, 1.0)
    u = np.random.default_rng(1).standard_normal(g.shape + (2,))
    lap = sum(backward_diff(forward_diff(u, g, k), g, k) for k in range(2))
    np.testing.assert_allclose(lap, laplacian(u, g), atol=1e-9)


def test_summation_by_parts():
    g = Grid(1, 32, 1.0)
    rng = np.random.default_rng(2)
    u, w = rng.standard_normal((2, 32, 3))
    assert pairing(forward_diff(u, g, 0), w, g) == pytest.approx(-pairing(u, backward_diff(w, g, 0), g))


def test_centered_grad_scalar_layout():
    g = Grid(2, 16, 1.0)
    x = g.coords()
    u = np.sin(2 * np.pi * x[..., 1])
    grad = centered_grad(u, g, vector=False)
    assert grad.shape == (2, 16, 16)
    assert np.max(np.abs(grad[0])) < 1e-12
