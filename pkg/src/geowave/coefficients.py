"""Drift and diffusion coefficients and their mollification.

Both nonlinearities are affine in the first-order jet ``(v, grad u)``::

    b(p, v, du) = b0(p) v + sum_k bk(p) d_k u + b_{d+1}(p)

with ``b0`` scalar, ``bk`` matrix valued and ``b_{d+1}`` vector valued.  A
:class:`CoefficientSet` holds the ``f`` (drift) and ``g`` (diffusion)
families; missing components are zero.  :func:`mollify` convolves every
component with the rescaled bump ``zeta_m`` in the ambient space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, special
from scipy.interpolate import RegularGridInterpolator

from .manifold import smoothstep

__all__ = [
    "CoefficientSet",
    "RadialComponent",
    "QuadratureMollified",
    "Mollifier",
    "assemble_drift",
    "assemble_diffusion",
    "mollify",
    "radial_cutoff",
    "extend_from_sphere",
    "zero",
    "constant_field",
    "linear_damping",
    "multiplicative_noise",
    "combine",
    "preset",
    "load_tabulated",
    "PRESETS",
    "DEFAULT_SUPPORT_RADIUS",
]

DEFAULT_SUPPORT_RADIUS = 4.0
_SCALAR, _MATRIX, _VECTOR = "scalar", "matrix", "vector"


# ----------------------------------------------------------------------------
# Components
# ----------------------------------------------------------------------------


def radial_cutoff(r, inner: float = 2.0, outer: float = 3.0):
    """Smooth cutoff: 1 for ``r <= inner`` and 0 for ``r >= outer``."""
    return smoothstep((outer - np.asarray(r, dtype=float)) / (outer - inner))


@dataclass(frozen=True)
class RadialComponent:
    """``y -> amplitude * profile(|y|)`` for a constant scalar, vector or matrix amplitude."""

    amplitude: np.ndarray
    profile: Callable = radial_cutoff
    outer_radius: float = 3.0

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        s = self.profile(np.linalg.norm(y, axis=-1))
        amp = np.asarray(self.amplitude, dtype=float)
        return s.reshape(s.shape + (1,) * amp.ndim) * amp

    def sup_norm(self) -> float:
        amp = np.asarray(self.amplitude, dtype=float)
        r = np.linspace(0.0, self.outer_radius, 4001)
        return float(np.linalg.norm(amp) * np.max(np.abs(self.profile(r))))


def _sum_components(a, b):
    if a is None:
        return b
    if b is None:
        return a
    if isinstance(a, RadialComponent) and isinstance(b, RadialComponent) and a.profile is b.profile:
        return RadialComponent(np.asarray(a.amplitude) + np.asarray(b.amplitude), a.profile,
                               max(a.outer_radius, b.outer_radius))
    return lambda y, _a=a, _b=b: _a(y) + _b(y)


@dataclass(frozen=True)
class CoefficientSet:
    """Drift ``f`` and diffusion ``g`` families on ``R^n``.

    Parameters
    ----------
    ambient_dim : int
    spatial_dim : int
    f0, g0 : callable or None
        ``(..., n) -> (...)``.
    f, g : sequence of callables or None
        ``d`` matrix fields ``(..., n) -> (..., n, n)`` multiplying ``d_k u``.
    fd1, gd1 : callable or None
        ``(..., n) -> (..., n)``.
    support_radius : float
        ``R_0``; every component vanishes for ``|y| > R_0``.
    sup_norms : dict
        Recorded ``L^inf`` norms (Euclidean/Frobenius); computed when omitted.
    """

    ambient_dim: int
    spatial_dim: int
    f0: Optional[Callable] = None
    f: Optional[Sequence] = None
    fd1: Optional[Callable] = None
    g0: Optional[Callable] = None
    g: Optional[Sequence] = None
    gd1: Optional[Callable] = None
    support_radius: float = DEFAULT_SUPPORT_RADIUS
    sup_norms: dict = field(default=None, compare=False)
    label: str = field(default="", compare=False)
    mollification_level: Optional[float] = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("f", "g"):
            comps = getattr(self, name)
            if comps is not None:
                comps = tuple(comps)
                if len(comps) != self.spatial_dim:
                    raise ValueError(f"{name} needs {self.spatial_dim} matrix components, got {len(comps)}")
                object.__setattr__(self, name, comps)
        if self.sup_norms is None:
            object.__setattr__(self, "sup_norms", _estimate_sup_norms(self))

    def components(self):
        """``(name, kind, callable)`` for every non-zero component."""
        out = []
        for fam in ("f", "g"):
            c0 = getattr(self, fam + "0")
            if c0 is not None:
                out.append((fam + "0", _SCALAR, c0))
            mats = getattr(self, fam)
            if mats is not None:
                for k, ck in enumerate(mats):
                    if ck is not None:
                        out.append((f"{fam}{k + 1}", _MATRIX, ck))
            cv = getattr(self, fam + "d1")
            if cv is not None:
                out.append((fam + "d1", _VECTOR, cv))
        return out

    @property
    def is_zero(self) -> bool:
        return not self.components()

    @property
    def has_drift(self) -> bool:
        return any(n.startswith("f") for n, _, _ in self.components())

    @property
    def has_diffusion(self) -> bool:
        return any(n.startswith("g") for n, _, _ in self.components())

    @property
    def diffusion_depends_on_jet(self) -> bool:
        return self.g0 is not None or (self.g is not None and any(c is not None for c in self.g))


def _lattice_probe(n, R, count=4000, seed=12345):
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((count, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = np.linspace(0.0, R, count)[:, None]
    return d * r


def _estimate_sup_norms(cs: CoefficientSet) -> dict:
    norms = {}
    probe = None
    for name, kind, fn in cs.components():
        if isinstance(fn, RadialComponent):
            norms[name] = fn.sup_norm()
            continue
        if probe is None:
            probe = _lattice_probe(cs.ambient_dim, cs.support_radius)
        vals = np.asarray(fn(probe), dtype=float)
        flat = vals.reshape(len(probe), -1)
        norms[name] = float(np.max(np.linalg.norm(flat, axis=1)))
    for name in ("f0", "fd1", "g0", "gd1"):
        norms.setdefault(name, 0.0)
    return norms


def _apply(cs, fam, p, v, grad_u):
    p = np.asarray(p, dtype=float)
    out = np.zeros(np.broadcast_shapes(p.shape, np.shape(v)))
    c0 = getattr(cs, fam + "0")
    if c0 is not None:
        out = out + np.asarray(c0(p))[..., None] * v
    mats = getattr(cs, fam)
    if mats is not None:
        for k, ck in enumerate(mats):
            if ck is not None:
                out = out + np.einsum("...ab,...b->...a", ck(p), grad_u[k])
    cv = getattr(cs, fam + "d1")
    if cv is not None:
        out = out + cv(p)
    return out


def assemble_drift(cs: CoefficientSet, p, v, grad_u=None):
    """``f0(p) v + sum_k f_k(p) grad_u[k] + f_{d+1}(p)``; ``grad_u`` has shape ``(d, ..., n)``."""
    return _apply(cs, "f", p, v, grad_u)


def assemble_diffusion(cs: CoefficientSet, p, v, grad_u=None):
    """Diffusion vector ``g(p, v, grad u)``, same layout as :func:`assemble_drift`."""
    return _apply(cs, "g", p, v, grad_u)


# ----------------------------------------------------------------------------
# Mollifier
# ----------------------------------------------------------------------------


def _bump(r2):
    r2 = np.asarray(r2, dtype=float)
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


@dataclass(frozen=True)
class Mollifier:
    """``zeta_m(z) = m^n zeta(m z)`` with ``zeta ~ exp(-1/(1-|z|^2))`` on the unit ball.

    ``normalization`` is the continuous integral of the unnormalised bump
    (computed by adaptive quadrature).  The tensor Gauss-Legendre weights are
    renormalised to unit sum, so the discrete convolution is an exact convex
    average and cannot increase sup norms.
    """

    ambient_dim: int
    level: float
    order: int = 8
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)
    normalization: float = field(init=False)
    discrete_mass: float = field(init=False)

    def __post_init__(self):
        if not self.level >= 1:
            raise ValueError(f"mollification level must be >= 1, got {self.level}")
        n = self.ambient_dim
        radial, _ = integrate.quad(lambda r: r ** (n - 1) * np.exp(-1.0 / (1.0 - r * r)), 0.0, 1.0,
                                   epsabs=1e-14, epsrel=1e-12)
        sphere_area = 2.0 * np.pi ** (n / 2.0) / special.gamma(n / 2.0)
        norm = sphere_area * radial
        x, w = np.polynomial.legendre.leggauss(self.order)
        grids = np.meshgrid(*([x] * n), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=-1)
        wts = np.prod(np.stack(np.meshgrid(*([w] * n), indexing="ij"), axis=-1).reshape(-1, n), axis=1)
        dens = _bump(np.sum(pts ** 2, axis=1)) / norm
        weights = wts * dens
        keep = weights > 0
        pts, weights = pts[keep], weights[keep]
        object.__setattr__(self, "normalization", float(norm))
        object.__setattr__(self, "discrete_mass", float(weights.sum()))
        weights = weights / weights.sum()
        pts = pts / float(self.level)
        pts.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", pts)
        object.__setattr__(self, "weights", weights)

    @property
    def support_radius(self) -> float:
        return 1.0 / self.level

    def density(self, z):
        z = np.asarray(z, dtype=float)
        m, n = self.level, self.ambient_dim
        return m ** n * _bump(np.sum((m * z) ** 2, axis=-1)) / self.normalization

    def convolve(self, fn, y):
        """``sum_q w_q fn(y - z_q)``, the quadrature of ``(zeta_m * fn)(y)``."""
        y = np.asarray(y, dtype=float)
        shifted = y[..., None, :] - self.nodes
        vals = np.asarray(fn(shifted), dtype=float)
        extra = vals.ndim - shifted.ndim + 1
        w = self.weights.reshape(self.weights.shape + (1,) * extra)
        return np.sum(vals * w, axis=y.ndim - 1)


@dataclass(frozen=True)
class QuadratureMollified:
    """A component mollified on the fly by quadrature."""

    base: Callable
    mollifier: Mollifier

    def __call__(self, y):
        return self.mollifier.convolve(self.base, y)


class _RadialTable:
    """Radial profile tabulated on a fine lattice, linearly interpolated."""

    def __init__(self, comp: RadialComponent, moll: Mollifier, count: int = 4001):
        n = moll.ambient_dim
        rmax = comp.outer_radius + moll.support_radius
        r = np.linspace(0.0, rmax, count)
        pts = np.zeros((count, n))
        pts[:, 0] = r
        unit = RadialComponent(np.array(1.0), comp.profile, comp.outer_radius)
        self.r = r
        self.values = moll.convolve(unit, pts)

    def __call__(self, r):
        return np.interp(r, self.r, self.values, right=0.0)


def mollify(cs: CoefficientSet, m: float, order: int = 8) -> CoefficientSet:
    """Convolve every component with ``zeta_m``.

    Radial components are convolved along a ray and tabulated; others are
    convolved on evaluation.  Recorded sup norms are those of the inputs,
    which bound the outputs.
    """
    if not m >= 1:
        raise ValueError(f"mollification level must be >= 1, got {m}")
    moll = Mollifier(cs.ambient_dim, float(m), order)

    def smooth(fn):
        if fn is None:
            return None
        if isinstance(fn, RadialComponent):
            table = _RadialTable(fn, moll)
            return RadialComponent(fn.amplitude, table, fn.outer_radius + moll.support_radius)
        return QuadratureMollified(fn, moll)

    kw = {}
    for name in ("f0", "fd1", "g0", "gd1"):
        kw[name] = smooth(getattr(cs, name))
    for name in ("f", "g"):
        comps = getattr(cs, name)
        kw[name] = None if comps is None else tuple(smooth(c) for c in comps)
    return replace(cs, **kw, sup_norms=dict(cs.sup_norms), mollification_level=float(m),
                   label=(cs.label + f"|mollified:{m:g}").lstrip("|"))


# ----------------------------------------------------------------------------
# Extension and presets
# ----------------------------------------------------------------------------


def extend_from_sphere(fn: Callable, inner: float = 0.5, outer: float = 2.0, vanish: float = 3.0):
    """Extend ``fn`` defined on the unit sphere to ``R^n``.

    ``E(y) = fn(y / |y|) chi(|y|)`` where ``chi`` is 1 on ``[inner, outer]``,
    zero near the origin and beyond ``vanish``.  Sup norms are preserved.
    """
    def chi(r):
        up = smoothstep((r - inner / 2.0) / (inner / 2.0))
        return up * radial_cutoff(r, outer, vanish)

    def ext(y):
        y = np.asarray(y, dtype=float)
        r = np.linalg.norm(y, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        vals = np.asarray(fn(y / safe[..., None]), dtype=float)
        c = chi(r)
        return vals * c.reshape(c.shape + (1,) * (vals.ndim - c.ndim))

    ext.extension = "nearest-sphere-point x radial cutoff"
    return ext


def zero(n: int, d: int) -> CoefficientSet:
    return CoefficientSet(ambient_dim=n, spatial_dim=d, label="zero")


def constant_field(n: int, d: int, vector=None, noise_vector=None) -> CoefficientSet:
    """``f_{d+1}`` (and optionally ``g_{d+1}``) constant inside ``|y| <= 2``."""
    fv = None if vector is None else RadialComponent(np.asarray(vector, dtype=float))
    gv = None if noise_vector is None else RadialComponent(np.asarray(noise_vector, dtype=float))
    return CoefficientSet(ambient_dim=n, spatial_dim=d, fd1=fv, gd1=gv, label="constant_field")


def linear_damping(n: int, d: int, gamma: float = 1.0) -> CoefficientSet:
    """``f0 = -gamma`` inside ``|y| <= 2``."""
    return CoefficientSet(ambient_dim=n, spatial_dim=d, f0=RadialComponent(np.array(-float(gamma))),
                          label="linear_damping")


def multiplicative_noise(n: int, d: int, sigma: float = 1.0) -> CoefficientSet:
    """``g0 = sigma`` inside ``|y| <= 2``: noise proportional to the velocity."""
    return CoefficientSet(ambient_dim=n, spatial_dim=d, g0=RadialComponent(np.array(float(sigma))),
                          label="multiplicative_noise")


def combine(*sets: CoefficientSet) -> CoefficientSet:
    """Component-wise sum of coefficient sets."""
    if not sets:
        raise ValueError("nothing to combine")
    n, d = sets[0].ambient_dim, sets[0].spatial_dim
    kw = {k: None for k in ("f0", "fd1", "g0", "gd1")}
    mats = {"f": [None] * d, "g": [None] * d}
    for cs in sets:
        if (cs.ambient_dim, cs.spatial_dim) != (n, d):
            raise ValueError("coefficient sets have different dimensions")
        for k in kw:
            kw[k] = _sum_components(kw[k], getattr(cs, k))
        for fam in mats:
            if getattr(cs, fam) is not None:
                mats[fam] = [_sum_components(a, b) for a, b in zip(mats[fam], getattr(cs, fam))]
    for fam in mats:
        kw[fam] = None if all(c is None for c in mats[fam]) else tuple(mats[fam])
    return CoefficientSet(ambient_dim=n, spatial_dim=d, support_radius=max(s.support_radius for s in sets),
                          label="+".join(s.label for s in sets), **kw)


PRESETS = ("zero", "constant_field", "linear_damping", "multiplicative_noise")


def preset(name: str, n: int, d: int, **params) -> CoefficientSet:
    """Build a named preset; unknown parameters raise ``TypeError``."""
    if name == "zero":
        return zero(n, d, **params)
    if name == "constant_field":
        return constant_field(n, d, **params)
    if name == "linear_damping":
        return linear_damping(n, d, **params)
    if name == "multiplicative_noise":
        return multiplicative_noise(n, d, **params)
    raise ValueError(f"unknown coefficient preset {name!r}; choose from {PRESETS}")


def load_tabulated(path_or_doc, n: int, d: int, support_radius: float = DEFAULT_SUPPORT_RADIUS) -> CoefficientSet:
    """Coefficients tabulated on a regular lattice in ``R^n``.

    The JSON document maps component names (``f0``, ``f1``..., ``fd1``,
    ``g0``...) to ``{"lower": float, "upper": float, "values": nested}``, with
    ``values`` of shape ``(P,)*n + component_shape``.  Values are interpolated
    multilinearly and are zero outside the lattice.  Components must vanish
    beyond ``support_radius - 1`` so mollification keeps them inside
    ``support_radius``.
    """
    if isinstance(path_or_doc, (str, Path)):
        doc = json.loads(Path(path_or_doc).read_text())
    else:
        doc = path_or_doc
    kw: dict = {}
    mats = {"f": [None] * d, "g": [None] * d}
    for name, spec in doc.items():
        vals = np.asarray(spec["values"], dtype=float)
        P = vals.shape[0]
        axis = np.linspace(float(spec["lower"]), float(spec["upper"]), P)
        grids = np.meshgrid(*([axis] * n), indexing="ij")
        radius = np.sqrt(sum(g ** 2 for g in grids))
        far = radius > support_radius - 1.0
        tail = vals.reshape((P,) * n + (-1,))[far]
        if tail.size and np.max(np.abs(tail)) > 0:
            raise ValueError(f"tabulated component {name!r} is non-zero beyond radius {support_radius - 1.0}")
        interp = RegularGridInterpolator((axis,) * n, vals, method="linear", bounds_error=False, fill_value=0.0)
        if name in ("f0", "g0", "fd1", "gd1"):
            kw[name] = interp
        elif name[0] in "fg" and name[1:].isdigit() and 1 <= int(name[1:]) <= d:
            mats[name[0]][int(name[1:]) - 1] = interp
        else:
            raise ValueError(f"unknown coefficient component {name!r}")
    for fam in mats:
        kw[fam] = None if all(c is None for c in mats[fam]) else tuple(mats[fam])
    return CoefficientSet(ambient_dim=n, spatial_dim=d, support_radius=support_radius, label="tabulated", **kw)
