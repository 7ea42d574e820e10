"""Momentum densities ``<v, A^i u>`` and velocity reconstruction from them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import manifold as mf

__all__ = ["momentum_density", "MomentumSeries", "momentum_series", "reconstruct_velocity", "ReconstructionReport"]


def _check_index(spec, i):
    if not (isinstance(i, (int, np.integer)) and 0 <= i < spec.n_generators):
        raise IndexError(f"generator index {i!r} out of range 0..{spec.n_generators - 1}")


def momentum_density(state, spec: mf.ManifoldSpec, i: int):
    """Nodewise ``<V, A^i U>`` for the generator with (0-based) index ``i``."""
    _check_index(spec, i)
    A = spec.generators[i]
    return np.einsum("...a,ab,...b->...", state.V, A, state.U)


@dataclass
class MomentumSeries:
    index: int
    times: np.ndarray
    fields: np.ndarray
    totals: Optional[np.ndarray] = None


def momentum_series(trajectory, spec: mf.ManifoldSpec, i: int) -> MomentumSeries:
    _check_index(spec, i)
    A = spec.generators[i]
    fields = np.einsum("...a,ab,...b->...", trajectory.V, A, trajectory.U)
    totals = trajectory.params.grid.integrate(fields)
    return MomentumSeries(i, np.asarray(trajectory.times), fields, totals)


@dataclass
class ReconstructionReport:
    reconstruction_error: float
    tangency_violation: float
    all_tangent: bool


def reconstruct_velocity(state, spec: mf.ManifoldSpec, tol: float = mf.ON_MANIFOLD_TOL):
    """Rebuild ``V`` from its momenta: ``sum_ij h_ij(U) M^i A^j U``.

    Returns the reconstructed field and a report with the largest deviation
    from ``V`` and the largest violation of ``H'(U) w = w``.
    """
    U, V = state.U, state.V
    if np.max(mf.distance_to_manifold(spec, U)) > tol:
        raise mf.DomainError("state is off the manifold; velocity reconstruction needs U in M")
    W = mf.reconstruct_tangent(spec, U, mf.momenta(spec, U, V))
    err = float(np.max(np.linalg.norm(W - V, axis=-1), initial=0.0))
    HW = np.einsum("...ij,...j->...i", mf.retraction_derivative(spec, U), W)
    viol = float(np.max(np.linalg.norm(HW - W, axis=-1), initial=0.0))
    tangent = bool(np.all(mf.retraction_derivative_test(spec, U, W)))
    return W, ReconstructionReport(err, viol, tangent)
