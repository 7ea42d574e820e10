import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geowave import manifold as mf

S2 = mf.sphere(3)


def unit_vectors(n):
    return st.lists(st.floats(-1, 1), min_size=n, max_size=n).map(np.array).filter(
        lambda v: np.linalg.norm(v) > 1e-3).map(lambda v: v / np.linalg.norm(v))


# ---------------------------------------------------------------- penalty


def test_penalty_examples():
    assert mf.penalty(S2, np.array([1.0, 0, 0])) == 0.0
    assert mf.penalty(S2, np.zeros(3)) == 1.0
    # sigma = 1 on [1/2, 2], so phi(1.21) = 0.21^2
    assert mf.penalty(S2, np.array([1.1, 0, 0])) == pytest.approx(0.0441, rel=1e-14)


def test_penalty_constant_far_away():
    for r in (2.0, 2.5, 10.0, 1e3):
        assert mf.penalty(S2, np.array([r, 0, 0])) == pytest.approx(1.0, abs=1e-15)
    assert np.all(mf.penalty_grad(S2, np.array([[3.0, 0, 0], [0, 0, 0.1]])) == 0.0)


def test_penalty_grad_example():
    # chain rule on phi(t) = (t - 1)^2: 2 phi'(t) x = 4 (t - 1) x = 4 * 0.21 * 1.1
    g = mf.penalty_grad(S2, np.array([1.1, 0, 0]))
    np.testing.assert_allclose(g, [0.924, 0, 0], rtol=1e-13)


def test_penalty_grad_vanishes_on_sphere():
    rng = np.random.default_rng(0)
    p = mf.sample_points(S2, 100, rng)
    assert np.max(np.abs(mf.penalty_grad(S2, p))) < 1e-14


def test_penalty_grad_matches_central_differences():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((20, 3))
    x *= (rng.uniform(0.55, 1.95, 20) / np.linalg.norm(x, axis=1))[:, None]
    g = mf.penalty_grad(S2, x)
    errs = []
    for step in (1e-3, 5e-4, 2.5e-4):
        fd = np.stack([(mf.penalty(S2, x + step * e) - mf.penalty(S2, x - step * e)) / (2 * step)
                       for e in np.eye(3)], axis=1)
        errs.append(np.max(np.abs(fd - g)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() >= 1.9


def test_penalty_positive_off_manifold_in_shell():
    rng = np.random.default_rng(2)
    d = rng.standard_normal((500, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = rng.uniform(0.3, 3.5, 500)
    r = r[np.abs(r - 1) > 1e-4]
    assert np.all(mf.penalty(S2, d[: len(r)] * r[:, None]) > 0)


def test_sphere_phi_smooth_at_cutoffs():
    # derivative continuous across the inner and outer blend intervals
    t = np.linspace(0.0, 5.0, 100001)
    phi, dphi = mf.sphere_phi(t)
    np.testing.assert_allclose(np.gradient(phi, t)[1:-1], dphi[1:-1], atol=5e-6)


# ---------------------------------------------------------------- generators


def test_sphere_generators_n2():
    G = mf.sphere_generators(2)
    assert G.shape == (1, 2, 2)
    np.testing.assert_array_equal(G[0], [[0, 1], [-1, 0]])


def test_sphere_generators_count_and_skew():
    for n in range(2, 7):
        G = mf.sphere_generators(n)
        assert len(G) == n * (n - 1) // 2
        assert np.max(np.abs(G + np.swapaxes(G, 1, 2))) == 0.0


def test_sphere_generators_action_n3():
    A12, A13, A23 = mf.sphere_generators(3)
    p = np.array([0.0, 1.0, 0.0])
    np.testing.assert_array_equal(A12 @ p, [1, 0, 0])
    np.testing.assert_array_equal(A13 @ p, [0, 0, 0])
    np.testing.assert_array_equal(A23 @ p, [0, 0, -1])


def test_sphere_generators_cross_product_form():
    # relabelled A_1 = A^{23}, A_2 = A^{31} = -A^{13}, A_3 = A^{12} give A_i p = p x e_i
    A12, A13, A23 = mf.sphere_generators(3)
    rng = np.random.default_rng(3)
    for p in rng.standard_normal((100, 3)):
        for A, e in ((A23, [1, 0, 0]), (-A13, [0, 1, 0]), (A12, [0, 0, 1])):
            np.testing.assert_allclose(A @ p, np.cross(p, e), atol=1e-15)


def test_sphere_generators_rejects_small_n():
    with pytest.raises(ValueError):
        mf.sphere_generators(1)


# ---------------------------------------------------------------- projections


def test_tangent_project_examples():
    e1, e2 = np.eye(3)[:2]
    np.testing.assert_array_equal(mf.tangent_project(S2, e1, e1), 0)
    np.testing.assert_array_equal(mf.tangent_project(S2, e1, e2), e2)
    p = np.array([1, 1, 0]) / np.sqrt(2)
    np.testing.assert_allclose(mf.tangent_project(S2, p, e1), [0.5, -0.5, 0], atol=1e-15)


def test_tangent_project_rejects_off_manifold_point():
    with pytest.raises(mf.DomainError):
        mf.tangent_project(S2, np.array([1.0 + 1e-6, 0, 0]), np.ones(3))


@settings(max_examples=60, deadline=None)
@given(unit_vectors(3), st.lists(st.floats(-10, 10), min_size=3, max_size=3))
def test_tangent_project_idempotent_and_orthogonal(p, w):
    w = np.array(w)
    q = mf.tangent_project(S2, p, w)
    assert abs(q @ p) <= 1e-12 * (1 + np.linalg.norm(w))
    np.testing.assert_allclose(mf.tangent_project(S2, p, q), q, atol=1e-12 * (1 + np.linalg.norm(w)))


# ---------------------------------------------------------------- second fundamental form


def test_second_fundamental_form_circle():
    spec = mf.sphere(2)
    np.testing.assert_allclose(mf.second_fundamental_form(spec, np.array([1.0, 0]), np.array([0, 1.0])),
                               [-1, 0], atol=1e-15)


def test_second_fundamental_form_examples():
    assert np.all(mf.second_fundamental_form(S2, np.array([0, 0, 1.0]), np.zeros(3)) == 0)
    np.testing.assert_allclose(mf.second_fundamental_form(S2, np.array([0, 0, 1.0]), np.array([2.0, 0, 0])),
                               [0, 0, -4], atol=1e-14)


def test_second_fundamental_form_closed_form_random():
    for n in (2, 3, 5):
        spec = mf.sphere(n)
        rng = np.random.default_rng(n)
        p = mf.sample_points(spec, 1000, rng)
        xi = mf.sample_tangent(spec, p, rng)
        S = mf.second_fundamental_form(spec, p, xi)
        nrm2 = np.sum(xi ** 2, axis=1)
        err = np.linalg.norm(S + nrm2[:, None] * p, axis=1) / nrm2
        assert err.max() < 1e-12


def test_second_fundamental_form_rejects_normal_direction():
    with pytest.raises(mf.DomainError):
        mf.second_fundamental_form(S2, np.array([1.0, 0, 0]), np.array([1.0, 1.0, 0]))


def test_second_fundamental_form_generic_path_matches_sphere():
    # a copy of the sphere with an explicit partition table takes the finite-difference path
    table = np.eye(3)
    custom = mf.ManifoldSpec(ambient_dim=3, generators=S2.generators, penalty_fn=S2.penalty_fn,
                             penalty_grad_fn=S2.penalty_grad_fn, partition=lambda p: table,
                             base_point=np.array([1.0, 0, 0]), distance_fn=S2.distance_fn, kind="custom")
    rng = np.random.default_rng(5)
    p = mf.sample_points(S2, 20, rng)
    xi = mf.sample_tangent(S2, p, rng)
    np.testing.assert_allclose(mf.second_fundamental_form(custom, p, xi), mf.second_fundamental_form(S2, p, xi),
                               atol=1e-8)


# ---------------------------------------------------------------- reconstruction


def test_reconstruct_tangent_examples():
    e1, e2 = np.eye(3)[:2]
    np.testing.assert_allclose(mf.reconstruct_tangent(S2, e1, mf.momenta(S2, e1, e2)), e2, atol=1e-14)
    np.testing.assert_array_equal(mf.reconstruct_tangent(S2, e1, np.zeros(3)), 0)


def test_reconstruct_tangent_roundtrip_s4():
    spec = mf.sphere(5)
    rng = np.random.default_rng(7)
    p = mf.sample_points(spec, 1000, rng)
    xi = mf.sample_tangent(spec, p, rng)
    rec = mf.reconstruct_tangent(spec, p, mf.momenta(spec, p, xi))
    assert np.max(np.linalg.norm(rec - xi, axis=1) / np.linalg.norm(xi, axis=1)) < 1e-12


@settings(max_examples=60, deadline=None)
@given(unit_vectors(4), st.lists(st.floats(-5, 5), min_size=4, max_size=4))
def test_reconstruct_returns_tangent_part(p, w):
    spec = mf.sphere(4)
    w = np.array(w)
    rec = mf.reconstruct_tangent(spec, p, mf.momenta(spec, p, w))
    np.testing.assert_allclose(rec, w - (w @ p) * p, atol=1e-12 * (1 + np.linalg.norm(w)))


def test_tangent_frame_holds_momenta():
    frame = mf.tangent_frame(S2, np.array([1.0, 0, 0]), np.array([0, 2.0, 0]))
    assert len(frame.momenta) == 3
    np.testing.assert_allclose(mf.reconstruct_tangent(S2, frame.base_point, frame.momenta), [0, 2, 0], atol=1e-15)


# ---------------------------------------------------------------- retraction


def test_retraction_derivative_examples():
    e1, e2 = np.eye(3)[:2]
    assert mf.retraction_derivative_test(S2, e1, e2)
    assert not mf.retraction_derivative_test(S2, e1, e1)
    assert mf.retraction_derivative_test(S2, np.array([0.6, 0.8, 0]), np.array([0.8, -0.6, 0]))


def test_retraction_derivative_domain():
    with pytest.raises(mf.DomainError):
        mf.retraction_derivative_test(S2, np.array([0.1, 0, 0]), np.ones(3))


def test_retraction_fixes_manifold():
    rng = np.random.default_rng(8)
    p = mf.sample_points(S2, 50, rng)
    np.testing.assert_allclose(mf.retraction(S2, p), p, atol=1e-15)


def test_retraction_derivative_agrees_with_orthogonality():
    rng = np.random.default_rng(9)
    p = mf.sample_points(S2, 1000, rng)
    w = rng.standard_normal((1000, 3))
    tangent = rng.random(1000) < 0.5
    w[tangent] -= np.sum(w[tangent] * p[tangent], axis=1, keepdims=True) * p[tangent]
    got = np.array([mf.retraction_derivative_test(S2, pi, wi) for pi, wi in zip(p, w)])
    expected = np.abs(np.sum(w * p, axis=1)) <= 1e-10 * np.linalg.norm(w, axis=1)
    np.testing.assert_array_equal(got, expected)
    np.testing.assert_array_equal(got, tangent)


# ---------------------------------------------------------------- axioms


def test_validate_axioms_sphere():
    for n in (2, 3, 5):
        rep = mf.validate_axioms(mf.sphere(n), 1000, 0)
        assert rep.ok, rep.violations
        assert max(rep.violations.values()) < 1e-12


def _variant(**kw):
    base = dict(ambient_dim=3, generators=S2.generators, penalty_fn=S2.penalty_fn, penalty_grad_fn=S2.penalty_grad_fn,
                partition=None, base_point=np.array([1.0, 0, 0]), distance_fn=S2.distance_fn, kind="custom")
    base.update(kw)
    return mf.ManifoldSpec(**base)


def test_validate_axioms_detects_symmetric_generator():
    G = np.array(S2.generators)
    G[0] = np.diag([1.0, 0, 0])
    rep = mf.validate_axioms(_variant(generators=G), 200, 0)
    assert "skew" in rep.failures()


def test_validate_axioms_detects_doubled_partition():
    rep = mf.validate_axioms(_variant(partition=lambda p: 2 * np.eye(3)), 200, 0)
    assert "reconstruction" in rep.failures()
    assert rep.violations["reconstruction"] == pytest.approx(1.0, rel=1e-10)


def test_spec_is_immutable():
    with pytest.raises(Exception):
        S2.ambient_dim = 4
    with pytest.raises(ValueError):
        S2.generators[0, 0, 1] = 5.0


# ---------------------------------------------------------------- JSON


def test_spec_json_roundtrip(tmp_path):
    doc = mf.spec_to_json(S2)
    assert doc["partition"] == "kronecker"
    path = tmp_path / "s2.json"
    path.write_text(json.dumps(doc))
    back = mf.load_spec(str(path))
    np.testing.assert_array_equal(back.generators, S2.generators)
    assert back.penalty_cutoff_radii == S2.penalty_cutoff_radii
    assert mf.load_spec("sphere:4").ambient_dim == 4


def test_spec_json_constant_partition_table():
    doc = mf.spec_to_json(S2)
    doc["partition"] = np.eye(3).tolist()
    spec = mf.spec_from_json(doc)
    assert mf.validate_axioms(spec, 100, 0).ok
