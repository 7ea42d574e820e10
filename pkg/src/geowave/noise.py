"""Spatially homogeneous Wiener increments from atomic spectral measures.

For a finite symmetric measure ``mu = sum_k c_k delta_{xi_k}`` the noise is
synthesised from the real trigonometric basis of its reproducing kernel
space: every mirror pair ``+-xi`` of total mass ``c`` contributes
``sqrt(c dt) (beta cos<xi,x> + gamma sin<xi,x>)`` and a zero frequency of
mass ``c0`` contributes ``sqrt(c0 dt) beta0``.  The spatial covariance of an
increment is then ``dt * Gamma(x - y)`` with ``Gamma(x) = int cos<xi,x> dmu``.

Random draws come from one counter-based Philox stream per
``(seed, member, step)`` so results do not depend on evaluation order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import Grid

__all__ = [
    "SpectralMeasure",
    "NoiseIncrement",
    "validate_measure",
    "mode_basis",
    "mode_count",
    "synthesize",
    "sample_increment",
    "philox_generator",
    "standard_draws",
    "covariance_kernel",
    "hs_multiplier_norm",
    "hs_multiplier_norm_sq",
    "measure_from_json",
    "measure_to_json",
    "load_measure",
    "preset_measure",
    "PRESET_MEASURES",
]


@dataclass(frozen=True)
class SpectralMeasure:
    """Finite symmetric atomic measure on ``R^d``.

    Attributes
    ----------
    frequencies : ndarray, shape (K, d)
        Atom locations, closed under ``xi -> -xi``.
    masses : ndarray, shape (K,)
        Positive atom masses, equal on mirror atoms.
    """

    frequencies: np.ndarray
    masses: np.ndarray

    @property
    def dim(self) -> int:
        return self.frequencies.shape[1]

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.masses))

    @property
    def atoms(self):
        return list(zip(map(tuple, self.frequencies), self.masses))

    def pairs(self):
        """Half-set representation ``(zero_mass, pair_freqs, pair_masses)``.

        ``pair_masses`` holds the combined mass of each mirror pair.
        """
        zero = np.all(self.frequencies == 0.0, axis=1)
        zero_mass = float(self.masses[zero].sum())
        rep = _is_representative(self.frequencies) & ~zero
        return zero_mass, self.frequencies[rep], 2.0 * self.masses[rep]


def _is_representative(xi):
    """True for the half of the atoms whose first nonzero coordinate is positive."""
    nz = xi != 0.0
    first = np.argmax(nz, axis=1)
    lead = xi[np.arange(len(xi)), first]
    return lead > 0.0


def validate_measure(atoms, dim: int | None = None) -> SpectralMeasure:
    """Symmetrise a list of ``(xi, mass)`` atoms.

    Each atom of mass ``c`` at ``xi != 0`` is split into ``c/2`` at ``xi`` and
    ``c/2`` at ``-xi``; coincident atoms are merged.

    Raises
    ------
    ValueError
        For an empty list, a non-finite or non-positive mass, or
        inconsistent frequency dimensions.
    """
    atoms = list(atoms)
    if not atoms:
        raise ValueError("spectral measure needs at least one atom")
    merged: dict = {}
    for xi, c in atoms:
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        c = float(c)
        if not np.isfinite(c):
            raise ValueError(f"non-finite atom mass {c}")
        if c <= 0.0:
            raise ValueError(f"atom masses must be positive, got {c}")
        if not np.all(np.isfinite(xi)):
            raise ValueError("non-finite frequency")
        if dim is None:
            dim = xi.size
        if xi.size != dim:
            raise ValueError(f"frequency {xi.tolist()} does not have dimension {dim}")
        xi = xi + 0.0  # normalise -0.0
        if np.all(xi == 0.0):
            key = tuple(xi)
            merged[key] = merged.get(key, 0.0) + c
        else:
            for s in (xi, -xi + 0.0):
                key = tuple(s)
                merged[key] = merged.get(key, 0.0) + 0.5 * c
    keys = sorted(merged)
    freqs = np.array(keys, dtype=float).reshape(len(keys), dim)
    masses = np.array([merged[k] for k in keys])
    freqs.setflags(write=False)
    masses.setflags(write=False)
    return SpectralMeasure(frequencies=freqs, masses=masses)


def mode_count(measure: SpectralMeasure) -> int:
    """Number of standard normal draws per increment."""
    zero_mass, pf, _ = measure.pairs()
    return 2 * len(pf) + (1 if zero_mass > 0 else 0)


def mode_basis(measure: SpectralMeasure, coords):
    """Orthonormal trigonometric basis ``e_l`` evaluated at ``coords``.

    Parameters
    ----------
    coords : ndarray, shape (..., d)

    Returns
    -------
    ndarray, shape (L, ...)
        Ordering: ``cos, sin`` for each pair, then the zero mode.  The sum of
        squares over ``l`` equals ``total_mass`` at every point.
    """
    coords = np.asarray(coords, dtype=float)
    zero_mass, pf, pm = measure.pairs()
    out = []
    for xi, c in zip(pf, pm):
        phase = coords @ xi
        amp = np.sqrt(c)
        out.append(amp * np.cos(phase))
        out.append(amp * np.sin(phase))
    if zero_mass > 0:
        out.append(np.full(coords.shape[:-1], np.sqrt(zero_mass)))
    return np.array(out)


def synthesize(measure: SpectralMeasure, coords, draws, dt: float):
    """``sqrt(dt) sum_l draws_l e_l(x)``; draws have shape ``(..., L)``."""
    basis = mode_basis(measure, coords)
    draws = np.asarray(draws, dtype=float)
    # explicit mode loop: BLAS summation order varies with batch size, which would
    # make a member's path depend on how the ensemble is chunked
    out = np.zeros(draws.shape[:-1] + basis.shape[1:])
    extra = (None,) * (basis.ndim - 1)
    for l in range(basis.shape[0]):
        out += draws[(..., l) + extra] * basis[l]
    return np.sqrt(dt) * out


def philox_generator(seed: int, member: int = 0, step: int = 0) -> np.random.Generator:
    """Counter-based generator for one ``(seed, member, step)`` cell."""
    key = np.random.SeedSequence([int(seed), int(member)]).generate_state(2, np.uint64)
    counter = np.array([0, int(step), 0, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def standard_draws(measure: SpectralMeasure, seed: int, step: int, members=(0,)):
    """Standard normal mode draws, shape ``(len(members), L)``."""
    L = mode_count(measure)
    return np.array([philox_generator(seed, mb, step).standard_normal(L) for mb in members])


@dataclass(frozen=True)
class NoiseIncrement:
    """A sampled increment ``Delta W`` on a grid.

    ``values`` has shape ``(members, *grid.shape)``; ``mode_draws`` shape
    ``(members, L)``.
    """

    grid: Grid
    values: np.ndarray
    dt: float
    mode_draws: np.ndarray
    step: int = 0


def sample_increment(measure: SpectralMeasure, grid: Grid, dt: float, rng=None, *, seed: int | None = None,
                     step: int = 0, members=(0,)) -> NoiseIncrement:
    """Draw one increment over a step of length ``dt``.

    Either pass a ``numpy`` generator ``rng`` (one member), or ``seed`` with
    ``step`` and ``members`` to use the counter-based streams.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if measure.dim != grid.dim:
        raise ValueError(f"measure dimension {measure.dim} does not match grid dimension {grid.dim}")
    if seed is not None:
        draws = standard_draws(measure, seed, step, members)
    else:
        rng = np.random.default_rng(rng)
        draws = rng.standard_normal((1, mode_count(measure)))
    values = synthesize(measure, grid.coords(), draws, dt)
    assert np.isrealobj(values)
    return NoiseIncrement(grid=grid, values=values, dt=float(dt), mode_draws=draws, step=step)


def covariance_kernel(measure: SpectralMeasure, x):
    """``Gamma(x) = sum_k c_k cos<xi_k, x>``; ``x`` has shape ``(..., d)``."""
    x = np.asarray(x, dtype=float)
    return np.cos(x @ measure.frequencies.T) @ measure.masses


def hs_multiplier_norm_sq(measure: SpectralMeasure, g, grid: Grid, region=None, check: bool = True) -> float:
    """Squared Hilbert-Schmidt norm of ``psi -> g psi`` from ``H_mu`` to ``L^2(region)``.

    Computed as ``sum_l ||g e_l||^2`` over the trigonometric basis and checked
    against the closed form ``total_mass * ||g||^2``.

    Parameters
    ----------
    g : ndarray
        Samples on the grid, shape ``grid.shape`` or ``(*grid.shape, n)``.
    region : bool ndarray, optional
        Mask of the grid cells making up the region; the whole grid by default.
    """
    g = np.asarray(g, dtype=float)
    if region is None:
        region = np.ones(grid.shape, dtype=bool)
    region = np.asarray(region, dtype=bool)
    if region.shape != grid.shape:
        raise ValueError("region mask must match the grid shape")
    if not region.any():
        raise ValueError("empty region")
    g2 = g ** 2 if g.shape == grid.shape else np.sum(g ** 2, axis=-1)
    basis = mode_basis(measure, grid.coords())
    cell = grid.cell_volume
    hs = float(sum(np.sum((g2 * e ** 2)[region]) for e in basis) * cell)
    closed = measure.total_mass * float(np.sum(g2[region]) * cell)
    if check and not np.isclose(hs, closed, rtol=1e-10, atol=1e-300):
        raise ArithmeticError(f"basis sum {hs!r} disagrees with total_mass * ||g||^2 = {closed!r}")
    return hs


def hs_multiplier_norm(measure: SpectralMeasure, g, grid: Grid, region=None) -> float:
    return float(np.sqrt(hs_multiplier_norm_sq(measure, g, grid, region)))


# ----------------------------------------------------------------------------
# Files and presets
# ----------------------------------------------------------------------------


def measure_from_json(doc) -> SpectralMeasure:
    """Parse ``[{"xi": [...], "mass": c}, ...]``."""
    if not isinstance(doc, list):
        raise ValueError("measure document must be a list of atoms")
    return validate_measure([(a["xi"], a["mass"]) for a in doc])


def measure_to_json(measure: SpectralMeasure) -> list:
    return [{"xi": xi.tolist(), "mass": float(c)} for xi, c in zip(measure.frequencies, measure.masses)]


def load_measure(path) -> SpectralMeasure:
    return measure_from_json(json.loads(Path(path).read_text()))


def preset_measure(name: str, dim: int = 1, wavenumber: float = 1.0, mass: float = 1.0) -> SpectralMeasure:
    """Built-in measures.

    ``zero_mode``
        all mass at the origin: noise constant in space.
    ``single_pair``
        mass split between ``+-k e_1``.
    ``ring8``
        eight atoms of equal mass on the circle of radius ``k`` (``dim >= 2``),
        or at ``+-k, +-2k, +-3k, +-4k`` on the line for ``dim = 1``.
    """
    k = float(wavenumber)
    e1 = np.zeros(dim)
    e1[0] = 1.0
    if name == "zero_mode":
        return validate_measure([(np.zeros(dim), mass)])
    if name == "single_pair":
        return validate_measure([(k * e1, mass)])
    if name == "ring8":
        atoms = []
        if dim == 1:
            for j in range(1, 5):
                atoms.append((np.array([j * k]), mass / 4.0))
        else:
            for j in range(4):
                a = np.pi * j / 4.0
                xi = np.zeros(dim)
                xi[0], xi[1] = k * np.cos(a), k * np.sin(a)
                atoms.append((xi, mass / 4.0))
        return validate_measure(atoms)
    raise ValueError(f"unknown measure preset {name!r}; choose from {PRESET_MEASURES}")


PRESET_MEASURES = ("zero_mode", "single_pair", "ring8")
