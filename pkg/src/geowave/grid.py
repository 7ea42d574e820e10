"""Periodic grids and finite-difference stencils.

Vector fields are arrays of shape ``(..., *grid.shape, n)``: leading axes
index ensemble members, the last axis holds the ``R^n`` value.  Scalar
fields drop the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Grid", "laplacian", "forward_diff", "backward_diff", "centered_grad", "pairing"]


@dataclass(frozen=True)
class Grid:
    """Periodic torus ``[0, L)^d`` with ``P`` nodes per axis."""

    dim: int
    points: int
    length: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"spatial dimension must be 1, 2 or 3, got {self.dim}")
        if int(self.points) != self.points or self.points < 8:
            raise ValueError(f"need at least 8 points per axis, got {self.points}")
        if not self.length > 0:
            raise ValueError(f"box length must be positive, got {self.length}")

    @property
    def h(self) -> float:
        return self.length / self.points

    @property
    def shape(self) -> tuple:
        return (self.points,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    def axis_coords(self):
        return np.arange(self.points) * self.h

    def coords(self):
        """Node coordinates, shape ``(*shape, d)``."""
        ax = self.axis_coords()
        mesh = np.meshgrid(*([ax] * self.dim), indexing="ij")
        return np.stack(mesh, axis=-1)

    def periodic_distance(self, center):
        """Distance of every node to ``center`` on the torus."""
        diff = self.coords() - np.asarray(center, dtype=float)
        diff = (diff + 0.5 * self.length) % self.length - 0.5 * self.length
        return np.linalg.norm(diff, axis=-1)

    def integrate(self, f, mask=None):
        """Cell-sum quadrature over the trailing grid axes of a scalar field."""
        f = np.asarray(f)
        if mask is not None:
            f = np.where(mask, f, 0.0)
        axes = tuple(range(f.ndim - self.dim, f.ndim))
        return np.sum(f, axis=axes) * self.cell_volume


def _axis(grid, k, vector):
    return k - grid.dim - (1 if vector else 0)


def forward_diff(u, grid: Grid, k: int, vector: bool = True):
    ax = _axis(grid, k, vector)
    return (np.roll(u, -1, axis=ax) - u) / grid.h


def backward_diff(u, grid: Grid, k: int, vector: bool = True):
    ax = _axis(grid, k, vector)
    return (u - np.roll(u, 1, axis=ax)) / grid.h


def centered_grad(u, grid: Grid, vector: bool = True):
    """Centered differences along each axis; shape ``(d, *u.shape)``."""
    out = []
    for k in range(grid.dim):
        ax = _axis(grid, k, vector)
        out.append((np.roll(u, -1, axis=ax) - np.roll(u, 1, axis=ax)) / (2.0 * grid.h))
    return np.array(out)


def laplacian(u, grid: Grid, vector: bool = True):
    """Second-order ``2d+1``-point periodic Laplacian, componentwise."""
    u = np.asarray(u, dtype=float)
    out = -2.0 * grid.dim * u
    for k in range(grid.dim):
        ax = _axis(grid, k, vector)
        out = out + np.roll(u, 1, axis=ax) + np.roll(u, -1, axis=ax)
    return out / grid.h ** 2


def pairing(u, w, grid: Grid):
    """``L^2`` inner product ``<u, w>`` of vector fields over the grid."""
    return grid.integrate(np.sum(np.asarray(u) * np.asarray(w), axis=-1))
