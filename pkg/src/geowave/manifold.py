"""Extrinsic geometry of the target manifold.

A target is described by a :class:`ManifoldSpec`: a penalty ``F`` vanishing
exactly on the manifold, skew-symmetric generators ``A^i`` of the acting
group, and partition functions ``h_ij`` reconstructing tangent vectors from
their momenta ``<xi, A^i p>``.  The unit sphere ``S^{n-1}`` is built in via
:func:`sphere`; other homogeneous spaces are accepted through explicit
callables and checked with :func:`validate_axioms`.

All point-wise operations broadcast over leading axes: points have shape
``(..., n)`` and generator-indexed results have shape ``(..., N)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.linalg import expm

__all__ = [
    "ManifoldSpec",
    "TangentFrame",
    "DomainError",
    "AxiomReport",
    "ON_MANIFOLD_TOL",
    "sphere",
    "sphere_generators",
    "sphere_phi",
    "penalty",
    "penalty_grad",
    "distance_to_manifold",
    "momenta",
    "tangent_frame",
    "tangent_project",
    "reconstruct_tangent",
    "second_fundamental_form",
    "retraction",
    "retraction_derivative",
    "retraction_derivative_test",
    "sample_points",
    "sample_tangent",
    "validate_axioms",
    "spec_to_json",
    "spec_from_json",
    "load_spec",
]

ON_MANIFOLD_TOL = 1e-8
TANGENCY_TEST_TOL = 1e-10


class DomainError(ValueError):
    """A point or vector lies outside the domain of a geometric operation."""


# ----------------------------------------------------------------------------
# Smooth cut-offs
# ----------------------------------------------------------------------------


def _psi(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def _dpsi(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos]) / s[pos] ** 2
    return out


def smoothstep(s):
    """C-infinity step: 0 for ``s <= 0``, 1 for ``s >= 1``."""
    a, b = _psi(s), _psi(1.0 - np.asarray(s, dtype=float))
    return a / (a + b)


def smoothstep_prime(s):
    s = np.asarray(s, dtype=float)
    a, b = _psi(s), _psi(1.0 - s)
    da, db = _dpsi(s), _dpsi(1.0 - s)
    return (da * b + a * db) / (a + b) ** 2


def _shell_bump(t):
    """Bump equal to 1 on [1/2, 2] and 0 outside [1/4, 4], with derivative."""
    t = np.asarray(t, dtype=float)
    sig = np.zeros_like(t)
    dsig = np.zeros_like(t)
    lo = (t > 0.25) & (t < 0.5)
    mid = (t >= 0.5) & (t <= 2.0)
    hi = (t > 2.0) & (t < 4.0)
    sig[lo] = smoothstep(4.0 * t[lo] - 1.0)
    dsig[lo] = 4.0 * smoothstep_prime(4.0 * t[lo] - 1.0)
    sig[mid] = 1.0
    sig[hi] = smoothstep((4.0 - t[hi]) / 2.0)
    dsig[hi] = -0.5 * smoothstep_prime((4.0 - t[hi]) / 2.0)
    return sig, dsig


def sphere_phi(t):
    """Profile of the sphere penalty, ``F(x) = phi(|x|^2)``.

    ``phi(t) = (t - 1)^2 sigma(t) + 1 - sigma(t)`` where ``sigma`` is the shell
    bump of ``_shell_bump``.  Returns ``(phi, phi')``.
    """
    sig, dsig = _shell_bump(t)
    q = (np.asarray(t, dtype=float) - 1.0) ** 2
    phi = q * sig + (1.0 - sig)
    dphi = 2.0 * (np.asarray(t) - 1.0) * sig + (q - 1.0) * dsig
    return phi, dphi


def _sphere_F(x):
    x = np.asarray(x, dtype=float)
    return sphere_phi(np.einsum("...i,...i->...", x, x))[0]


def _sphere_gradF(x):
    x = np.asarray(x, dtype=float)
    _, dphi = sphere_phi(np.einsum("...i,...i->...", x, x))
    return 2.0 * dphi[..., None] * x


def _sphere_distance(x):
    return np.abs(np.linalg.norm(x, axis=-1) - 1.0)


# ----------------------------------------------------------------------------
# Spec
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class ManifoldSpec:
    """Extrinsic description of a compact homogeneous target ``M`` in ``R^n``.

    Parameters
    ----------
    ambient_dim : int
        Dimension ``n`` of the ambient space.
    generators : ndarray, shape (N, n, n)
        Skew-symmetric matrices ``A^1..A^N``.
    penalty_fn, penalty_grad_fn : callable
        ``F`` and ``grad F``, vectorised over leading axes.
    partition : callable or None
        ``p -> h(p)`` of shape ``(..., N, N)``.  ``None`` means the Kronecker
        delta, which is the sphere's choice.
    penalty_cutoff_radii : (float, float)
        ``(r_in, r_out)`` bounding the shell where ``F`` is non-constant.
    base_point : ndarray, shape (n,)
        A point of ``M``; group orbits of it are used for sampling.
    distance_fn : callable, optional
        Distance to ``M``.  Defaults to ``sqrt(F)`` when not given.
    kind : str
        ``"sphere"`` or ``"custom"``.
    closest_point_fn : callable, optional
        Nearest-point map onto ``M``, used by the projected scheme.  Radial
        unit-sphere penalties fall back to ``x / |x|``.
    """

    ambient_dim: int
    generators: np.ndarray
    penalty_fn: Callable
    penalty_grad_fn: Callable
    partition: Optional[Callable] = None
    penalty_cutoff_radii: tuple = (0.5, 2.0)
    base_point: np.ndarray = None
    distance_fn: Optional[Callable] = None
    kind: str = "custom"
    name: str = field(default="", compare=False)
    closest_point_fn: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        n = int(self.ambient_dim)
        if n < 2:
            raise ValueError(f"ambient_dim must be >= 2, got {n}")
        gens = np.array(self.generators, dtype=float)
        if gens.ndim != 3 or gens.shape[1:] != (n, n):
            raise ValueError(f"generators must have shape (N, {n}, {n}), got {gens.shape}")
        gens.setflags(write=False)
        object.__setattr__(self, "generators", gens)
        r_in, r_out = (float(r) for r in self.penalty_cutoff_radii)
        if not 0.0 < r_in < 1.0 < r_out:
            raise ValueError("cutoff radii must satisfy 0 < r_in < 1 < r_out")
        object.__setattr__(self, "penalty_cutoff_radii", (r_in, r_out))
        if self.base_point is None:
            bp = np.zeros(n)
            bp[0] = 1.0
        else:
            bp = np.array(self.base_point, dtype=float)
        bp.setflags(write=False)
        object.__setattr__(self, "base_point", bp)

    @property
    def n_generators(self) -> int:
        return self.generators.shape[0]

    @property
    def is_sphere(self) -> bool:
        return self.kind == "sphere"

    def h(self, p):
        """Partition matrix ``h_ij(p)``, shape ``(..., N, N)``."""
        p = np.asarray(p, dtype=float)
        if self.partition is None:
            return np.broadcast_to(np.eye(self.n_generators), p.shape[:-1] + (self.n_generators,) * 2)
        return np.asarray(self.partition(p), dtype=float)


@dataclass(frozen=True)
class TangentFrame:
    """A tangent vector stored through its momenta ``<xi, A^i p>``."""

    base_point: np.ndarray
    momenta: np.ndarray


def sphere_generators(n: int) -> np.ndarray:
    """The ``n(n-1)/2`` rotation generators ``A^{ij}``, ``i < j``.

    ``A^{ij}`` has entry ``+1`` at ``(i, j)`` and ``-1`` at ``(j, i)``; the
    ordering is lexicographic in ``(i, j)``.
    """
    if int(n) != n or n < 2:
        raise ValueError(f"invalid dimension n={n}; need n >= 2")
    n = int(n)
    mats = []
    for i, j in combinations(range(n), 2):
        a = np.zeros((n, n))
        a[i, j] = 1.0
        a[j, i] = -1.0
        mats.append(a)
    return np.array(mats)


def sphere(n: int = 3) -> ManifoldSpec:
    """The unit sphere ``S^{n-1}`` in ``R^n`` with Kronecker partition."""
    return ManifoldSpec(
        ambient_dim=n,
        generators=sphere_generators(n),
        penalty_fn=_sphere_F,
        penalty_grad_fn=_sphere_gradF,
        partition=None,
        penalty_cutoff_radii=(0.5, 2.0),
        distance_fn=_sphere_distance,
        kind="sphere",
        name=f"sphere:{n}",
    )


# ----------------------------------------------------------------------------
# Point-wise geometry
# ----------------------------------------------------------------------------


def penalty(spec: ManifoldSpec, x):
    return spec.penalty_fn(np.asarray(x, dtype=float))


def penalty_grad(spec: ManifoldSpec, x):
    return spec.penalty_grad_fn(np.asarray(x, dtype=float))


def distance_to_manifold(spec: ManifoldSpec, x):
    x = np.asarray(x, dtype=float)
    if spec.distance_fn is not None:
        return spec.distance_fn(x)
    return np.sqrt(np.maximum(spec.penalty_fn(x), 0.0))


def _require_on_manifold(spec, p, tol=ON_MANIFOLD_TOL):
    err = np.max(distance_to_manifold(spec, p), initial=0.0)
    if err > tol:
        raise DomainError(f"point is {err:.3e} away from the manifold (tolerance {tol:g})")


def momenta(spec: ManifoldSpec, p, xi):
    """``<xi, A^i p>`` for every generator; shape ``(..., N)``."""
    p = np.asarray(p, dtype=float)
    xi = np.asarray(xi, dtype=float)
    return np.einsum("...a,kab,...b->...k", xi, spec.generators, p)


def tangent_frame(spec: ManifoldSpec, p, xi) -> TangentFrame:
    p = np.asarray(p, dtype=float)
    return TangentFrame(base_point=p, momenta=momenta(spec, p, xi))


def reconstruct_tangent(spec: ManifoldSpec, p, mom):
    """``sum_ij h_ij(p) mom_i A^j p``; exact inverse of :func:`momenta` on ``T_pM``."""
    p = np.asarray(p, dtype=float)
    mom = np.asarray(mom, dtype=float)
    if spec.partition is not None:
        mom = np.einsum("...ij,...i->...j", spec.h(p), mom)
    return np.einsum("...j,jab,...b->...a", mom, spec.generators, p)


def _project_unchecked(spec, p, w):
    if spec.is_sphere:
        pp = np.einsum("...i,...i->...", p, p)
        return w - (np.einsum("...i,...i->...", w, p) / pp)[..., None] * p
    # A^i p spans T_pM and is orthogonal to the normal space, so the
    # momentum round trip is the orthogonal projector.
    return reconstruct_tangent(spec, p, momenta(spec, p, w))


def tangent_project(spec: ManifoldSpec, p, w):
    """Orthogonal projection of ``w`` onto ``T_pM``."""
    p = np.asarray(p, dtype=float)
    w = np.asarray(w, dtype=float)
    _require_on_manifold(spec, p)
    return _project_unchecked(spec, p, w)


def _Ytilde(spec, x):
    """Vector fields ``Y^k(x) = sum_j h_kj(x) A^j x``; shape ``(..., N, n)``."""
    ax = np.einsum("jab,...b->...ja", spec.generators, x)
    return np.einsum("...kj,...ja->...ka", spec.h(x), ax)


def second_fundamental_form(spec: ManifoldSpec, p, xi, fd_step: float = 1e-6):
    """``S_p(xi, xi) = sum_k <xi, A^k p> d_p Y^k(xi)``.

    With the Kronecker partition ``d_p Y^k(xi) = A^k xi`` exactly; otherwise
    the derivative is a Richardson-extrapolated central difference.
    """
    p = np.asarray(p, dtype=float)
    xi = np.asarray(xi, dtype=float)
    _require_on_manifold(spec, p)
    normal = xi - _project_unchecked(spec, p, xi)
    scale = np.maximum(1.0, np.linalg.norm(xi, axis=-1))
    if np.any(np.linalg.norm(normal, axis=-1) > ON_MANIFOLD_TOL * scale):
        raise DomainError("xi is not tangent to the manifold at p")
    mom = momenta(spec, p, xi)
    if spec.partition is None:
        dY = np.einsum("kab,...b->...ka", spec.generators, xi)
    else:
        def central(s):
            return (_Ytilde(spec, p + s * xi) - _Ytilde(spec, p - s * xi)) / (2.0 * s)
        dY = (4.0 * central(fd_step / 2.0) - central(fd_step)) / 3.0
    return np.einsum("...k,...ka->...a", mom, dY)


def retraction(spec: ManifoldSpec, x):
    """Smooth compactly supported ``H`` with ``H = id`` on ``M``.

    For the sphere ``H(x) = chi(|x|) x / |x|`` where ``chi`` equals one on
    ``[r_in, r_out]`` and vanishes outside ``[r_in / 2, 2 r_out]``.
    """
    if not spec.is_sphere:
        raise NotImplementedError("closed-form retraction is only provided for spheres")
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    chi, _ = _radial_window(spec, r)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where((r > 0)[..., None], chi[..., None] * x / r[..., None], 0.0)
    return out


def _radial_window(spec, r):
    r_in, r_out = spec.penalty_cutoff_radii
    r = np.asarray(r, dtype=float)
    up = smoothstep((r - r_in / 2.0) / (r_in / 2.0))
    dup = smoothstep_prime((r - r_in / 2.0) / (r_in / 2.0)) / (r_in / 2.0)
    down = smoothstep((2.0 * r_out - r) / r_out)
    ddown = -smoothstep_prime((2.0 * r_out - r) / r_out) / r_out
    return up * down, dup * down + up * ddown


def retraction_derivative(spec: ManifoldSpec, p):
    """Jacobian ``H'(p)``, shape ``(..., n, n)``."""
    p = np.asarray(p, dtype=float)
    r_in, _ = spec.penalty_cutoff_radii
    r = np.linalg.norm(p, axis=-1)
    if np.any(r < r_in):
        raise DomainError(f"|p| < r_in = {r_in}")
    n = spec.ambient_dim
    if not spec.is_sphere:
        # H'(p) on M is the tangent projector.
        eye = np.broadcast_to(np.eye(n), p.shape[:-1] + (n, n))
        return np.swapaxes(_project_unchecked(spec, p[..., None, :], eye), -1, -2)
    chi, dchi = _radial_window(spec, r)
    uu = np.einsum("...i,...j->...ij", p, p) / (r ** 2)[..., None, None]
    eye = np.eye(n)
    return dchi[..., None, None] * uu + (chi / r)[..., None, None] * (eye - uu)


def retraction_derivative_test(spec: ManifoldSpec, p, w, tol: float = TANGENCY_TEST_TOL):
    """True where ``H'(p) w = w`` (to ``tol``), i.e. where ``w`` is tangent."""
    p = np.asarray(p, dtype=float)
    w = np.asarray(w, dtype=float)
    _require_on_manifold(spec, p)
    Hw = np.einsum("...ij,...j->...i", retraction_derivative(spec, p), w)
    scale = np.maximum(1.0, np.linalg.norm(w, axis=-1))
    ok = np.linalg.norm(Hw - w, axis=-1) <= tol * scale
    return bool(ok) if ok.ndim == 0 else ok


# ----------------------------------------------------------------------------
# Sampling and axiom checks
# ----------------------------------------------------------------------------


def sample_points(spec: ManifoldSpec, k: int, rng: np.random.Generator):
    """``k`` points of ``M``.

    Spheres are sampled uniformly; custom targets by random group orbits
    ``expm(sum_i c_i A^i) p0`` of the base point.
    """
    n = spec.ambient_dim
    if spec.is_sphere:
        x = rng.standard_normal((k, n))
        return x / np.linalg.norm(x, axis=1, keepdims=True)
    c = rng.standard_normal((k, spec.n_generators)) * np.pi
    return np.array([expm(np.tensordot(ci, spec.generators, axes=1)) @ spec.base_point for ci in c])


def sample_tangent(spec: ManifoldSpec, p, rng: np.random.Generator):
    """Random tangent vectors at the points ``p`` (shape ``(k, n)``)."""
    p = np.asarray(p, dtype=float)
    c = rng.standard_normal(p.shape[:-1] + (spec.n_generators,))
    return np.einsum("...k,kab,...b->...a", c, spec.generators, p)


@dataclass
class AxiomReport:
    """Worst-case violations of each axiom check, with the threshold used."""

    violations: dict
    tolerance: float
    samples: int

    @property
    def passed(self) -> dict:
        return {k: bool(v <= self.tolerance) for k, v in self.violations.items()}

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def failures(self) -> list:
        return [k for k, ok in self.passed.items() if not ok]


def validate_axioms(spec: ManifoldSpec, sample_count: int = 1000, rng=None, tol: float = 1e-12) -> AxiomReport:
    """Monte-Carlo check of the ``ManifoldSpec`` invariants.

    Checks performed (key in ``violations``):

    ``skew``
        ``max |A + A^T|`` over all generators.
    ``invariance``
        ``|<grad F(x), A^i x>|`` for ``x`` sampled in the cutoff shell.
    ``reconstruction``
        relative error of ``reconstruct_tangent(momenta(xi))`` against ``xi``.
    ``tangency``
        ``|<A^i p, n>|`` for normal vectors ``n``: generators stay in ``T_pM``.
    ``zero_set``
        ``|F(p)| + |grad F(p)|`` on the manifold.
    ``positivity``
        1 if some off-manifold point of the shell has ``F <= 0`` else 0.
    """
    rng = np.random.default_rng(rng)
    n = spec.ambient_dim
    r_in, r_out = spec.penalty_cutoff_radii
    viol = {}
    G = spec.generators
    viol["skew"] = float(np.max(np.abs(G + np.swapaxes(G, 1, 2))))

    direction = rng.standard_normal((sample_count, n))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = rng.uniform(r_in, r_out, size=(sample_count, 1))
    x = direction * radius
    gF = penalty_grad(spec, x)
    viol["invariance"] = float(np.max(np.abs(np.einsum("sa,kab,sb->sk", gF, G, x))))

    p = sample_points(spec, sample_count, rng)
    xi = sample_tangent(spec, p, rng)
    rec = reconstruct_tangent(spec, p, momenta(spec, p, xi))
    rel = np.linalg.norm(rec - xi, axis=1) / np.maximum(np.linalg.norm(xi, axis=1), 1e-300)
    viol["reconstruction"] = float(np.max(rel))

    # Normal directions: residual of random vectors after removing the span of A^i p.
    w = rng.standard_normal((sample_count, n))
    basis = np.einsum("kab,sb->ska", G, p)
    normals = []
    for s in range(sample_count):
        _, sv, vt = np.linalg.svd(basis[s])
        rank = int(np.sum(sv > sv[0] * max(basis[s].shape) * np.finfo(float).eps))
        v = w[s]
        for _ in range(2):  # second pass removes cancellation error
            v = v - vt[:rank].T @ (vt[:rank] @ v)
        normals.append(v / max(np.linalg.norm(v), 1e-300))
    normals = np.array(normals)
    viol["tangency"] = float(np.max(np.abs(np.einsum("ska,sa->sk", basis, normals))))

    viol["zero_set"] = float(np.max(np.abs(penalty(spec, p)) + np.linalg.norm(penalty_grad(spec, p), axis=1)))
    delta = rng.uniform(1e-3, 0.1, size=(sample_count, 1))
    off = p + delta * normals
    inside = (np.linalg.norm(off, axis=1) > r_in) & (np.linalg.norm(off, axis=1) < r_out)
    viol["positivity"] = float(np.any(penalty(spec, off[inside]) <= 0.0))
    return AxiomReport(violations=viol, tolerance=tol, samples=sample_count)


# ----------------------------------------------------------------------------
# JSON
# ----------------------------------------------------------------------------


def spec_to_json(spec: ManifoldSpec) -> dict:
    """Serialise a spec.  Only radial (sphere-type) penalties are encodable."""
    if spec.partition is None:
        partition = "kronecker"
    else:
        raise ValueError("only the Kronecker partition can be serialised")
    if spec.penalty_fn is not _sphere_F:
        raise ValueError("only the radial sphere penalty can be serialised")
    return {
        "ambient_dim": spec.ambient_dim,
        "generators": [g.reshape(-1).tolist() for g in spec.generators],
        "partition": partition,
        "cutoff_radii": list(spec.penalty_cutoff_radii),
        "penalty": "radial",
    }


def spec_from_json(doc: dict) -> ManifoldSpec:
    """Build a spec from its JSON document.

    ``generators`` is a list of row-major flattened ``n x n`` matrices (nested
    lists are accepted too); ``partition`` is ``"kronecker"`` or a constant
    ``N x N`` table.
    """
    n = int(doc["ambient_dim"])
    gens = np.array([np.asarray(g, dtype=float).reshape(n, n) for g in doc["generators"]])
    part = doc.get("partition", "kronecker")
    if part == "kronecker":
        partition = None
    else:
        table = np.asarray(part, dtype=float)
        if table.shape != (len(gens), len(gens)):
            raise ValueError("partition table must be N x N")
        partition = lambda p, _t=table: np.broadcast_to(_t, np.shape(p)[:-1] + _t.shape)  # noqa: E731
    if doc.get("penalty", "radial") != "radial":
        raise ValueError(f"unsupported penalty {doc.get('penalty')!r}")
    is_rotation_set = partition is None and gens.shape[0] == n * (n - 1) // 2 and np.array_equal(gens, sphere_generators(n))
    return ManifoldSpec(
        ambient_dim=n,
        generators=gens,
        penalty_fn=_sphere_F,
        penalty_grad_fn=_sphere_gradF,
        partition=partition,
        penalty_cutoff_radii=tuple(doc.get("cutoff_radii", (0.5, 2.0))),
        distance_fn=_sphere_distance,
        kind="sphere" if is_rotation_set else "custom",
        name=doc.get("name", ""),
    )


def load_spec(source) -> ManifoldSpec:
    """``"sphere:n"`` preset or path to a JSON spec file."""
    if isinstance(source, str) and source.startswith("sphere:"):
        return sphere(int(source.split(":", 1)[1]))
    return spec_from_json(json.loads(Path(source).read_text()))
