"""Discrete weak-form and Ito-formula residuals of recorded trajectories.

All residuals compare the change of a pairing over the run with the
time-integrated right-hand side: drift terms by the trapezoid rule and
stochastic terms as left-point Ito sums rebuilt from the recorded mode
draws.  Spatial derivatives are moved onto the test function by exact
summation by parts on the periodic grid, so no discrete boundary terms
appear.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .. import manifold as mf
from ..coefficients import assemble_diffusion, assemble_drift
from ..grid import backward_diff, centered_grad, laplacian

__all__ = [
    "weak_form_residual",
    "ito_residual",
    "momentum_weak_residual",
    "linear_map",
    "gaussian_damped_map",
    "bump_test_function",
]


def bump_test_function(grid, center=None, radius: Optional[float] = None):
    """Smooth compactly supported scalar test function on the grid."""
    from ..solver import smooth_bump

    if center is None:
        center = np.full(grid.dim, 0.5 * grid.length)
    if radius is None:
        radius = 0.3 * grid.length
    return smooth_bump(grid.periodic_distance(center), radius)


def _require(traj, noisy_ok=True):
    if traj is None or traj.U is None or traj.V is None:
        raise ValueError("trajectory data missing: record with TrajectoryRecorder(stride=1)")
    if len(traj.times) < 1:
        raise ValueError("empty trajectory")
    steps = np.diff(traj.times)
    if steps.size and not np.allclose(steps, traj.params.dt, rtol=1e-9, atol=0):
        raise ValueError("trajectory must be recorded with stride 1")
    if traj.params.noisy and traj.n_steps > 0 and traj.draws is None:
        raise ValueError("noisy trajectory without recorded mode draws")


def _pair(a, b, grid):
    """``sum_x <a(x), b(x)> h^d`` over the grid axes; keeps leading axes."""
    return grid.integrate(np.sum(a * b, axis=-1))


def _vector_test(phi, n):
    phi = np.asarray(phi, dtype=float)
    return phi, phi[..., None] * np.ones(n)


def _drift(params, U, V):
    cs = params.coefficients
    if cs is None or not cs.has_drift:
        return None
    return assemble_drift(cs, U, V, centered_grad(U, params.grid))


def _diffusion(params, U, V):
    return assemble_diffusion(params.coefficients, U, V, centered_grad(U, params.grid))


def _trapezoid(values, dt):
    values = np.asarray(values)
    return dt * (0.5 * values[0] + values[1:-1].sum(axis=0) + 0.5 * values[-1]) if len(values) > 1 else 0.0 * values[0]


def weak_form_residual(trajectory, phi, t_index: Optional[int] = None, signed: bool = False):
    """Residuals of the weak position and velocity identities.

    ``<U(t), phi> - <U(0), phi> - int <V, phi>`` and
    ``<V(t), phi> - <V(0), phi> - int [<U, Lap phi> - m <grad F(U), phi> + <f, phi>] - sum <g dW, phi>``.

    ``phi`` is scalar (applied to every component) or vector valued.
    Returns ``(r_U, r_V)``, per ensemble member when batched.
    """
    _require(trajectory)
    params = trajectory.params
    grid = params.grid
    N = trajectory.n_steps if t_index is None else int(t_index)
    U, V = trajectory.U[: N + 1], trajectory.V[: N + 1]
    n = U.shape[-1]
    phi = np.asarray(phi, dtype=float)
    phiv = phi if phi.shape[-1:] == (n,) and phi.ndim == grid.dim + 1 else phi[..., None] * np.ones(n)
    dt = params.dt
    rU = _pair(U[N] - U[0], phiv, grid) - _trapezoid([_pair(V[k], phiv, grid) for k in range(N + 1)], dt)
    lap_phi = laplacian(phiv, grid)
    integrand = []
    for k in range(N + 1):
        val = _pair(U[k], lap_phi, grid)
        if params.penalty_strength > 0:
            val = val - params.penalty_strength * _pair(mf.penalty_grad(params.manifold, U[k]), phiv, grid)
        fk = _drift(params, U[k], V[k])
        if fk is not None:
            val = val + _pair(fk, phiv, grid)
        integrand.append(val)
    rV = _pair(V[N] - V[0], phiv, grid) - _trapezoid(integrand, dt)
    if params.noisy and N > 0:
        dW = trajectory.increments()[:N]
        for k in range(N):
            rV = rV - _pair(_diffusion(params, U[k], V[k]) * dW[k][..., None], phiv, grid)
    if signed:
        return rU, rV
    return np.abs(rU), np.abs(rV)


def linear_map(A):
    """``Y(y) = A y`` with ``Y'(y) w = A w``."""
    A = np.asarray(A, dtype=float)

    def Y(y):
        return np.einsum("ab,...b->...a", A, y)

    def dY(y, w):
        return np.einsum("ab,...b->...a", A, w)

    Y.derivative = dY
    Y.is_linear = True
    return Y


def gaussian_damped_map(scale: float = 1.0):
    """``Y(y) = y exp(-|y|^2 / scale^2)`` and its derivative."""
    s2 = float(scale) ** 2

    def Y(y):
        return y * np.exp(-np.sum(y * y, axis=-1, keepdims=True) / s2)

    def dY(y, w):
        e = np.exp(-np.sum(y * y, axis=-1, keepdims=True) / s2)
        return e * (w - 2.0 / s2 * np.sum(y * w, axis=-1, keepdims=True) * y)

    Y.derivative = dY
    return Y


def _ito_integrand(params, Uk, Vk, Y, dY, phi):
    grid = params.grid
    Yu = Y(Uk)
    val = 0.0
    for k in range(grid.dim):
        DU = backward_diff(Uk, grid, k)
        ax = k - grid.dim - 1
        Y_prev = np.roll(Yu, 1, axis=ax)
        Dphi = backward_diff(phi, grid, k, vector=False)
        # flux: -<D^-U, Y(U(x-h))> D^-phi ; chain rule: -phi <D^-U, D^-[Y(U)]>
        val = val - grid.integrate(np.sum(DU * Y_prev, axis=-1) * Dphi)
        val = val - grid.integrate(phi * np.sum(DU * (Yu - Y_prev), axis=-1) / grid.h)
    Yphi = Yu * phi[..., None]
    if params.penalty_strength > 0:
        val = val - params.penalty_strength * _pair(mf.penalty_grad(params.manifold, Uk), Yphi, grid)
    fk = _drift(params, Uk, Vk)
    if fk is not None:
        val = val + _pair(fk, Yphi, grid)
    val = val + _pair(Vk, dY(Uk, Vk) * phi[..., None], grid)
    return val


def ito_residual(trajectory, Y: Callable, phi, dY: Optional[Callable] = None, signed: bool = False):
    """Residual of the Ito formula for ``b(V, Y(U), phi) = int phi <V, Y(U)>``.

    Since ``U`` has finite variation there is no second-order correction::

        b(V_t, Y(U_t)) - b(V_0, Y(U_0))
            = int [ -sum_k <d_k U, Y(U)> d_k phi - phi <d_k U, Y'(U) d_k U>
                    - m <grad F(U), Y(U)> phi + <f, Y(U)> phi + phi <V, Y'(U) V> ] dt
              + int phi <g dW, Y(U)>.

    The two spatial terms use backward differences in the form that sums
    exactly to ``<Lap_h U, Y(U) phi>``.

    Raises
    ------
    ValueError
        If no derivative of ``Y`` is available, or data are missing.
    """
    _require(trajectory)
    dY = dY if dY is not None else getattr(Y, "derivative", None)
    if dY is None:
        raise ValueError("ito_residual needs the derivative of Y")
    params = trajectory.params
    grid = params.grid
    phi = np.asarray(phi, dtype=float)
    U, V = trajectory.U, trajectory.V
    N = trajectory.n_steps
    lhs = _pair(V[N], Y(U[N]) * phi[..., None], grid) - _pair(V[0], Y(U[0]) * phi[..., None], grid)
    integrand = [_ito_integrand(params, U[k], V[k], Y, dY, phi) for k in range(N + 1)]
    r = lhs - _trapezoid(integrand, params.dt)
    if params.noisy and N > 0:
        dW = trajectory.increments()
        for k in range(N):
            r = r - _pair(_diffusion(params, U[k], V[k]) * dW[k][..., None], Y(U[k]) * phi[..., None], grid)
    return r if signed else np.abs(r)


def momentum_weak_residual(trajectory, spec: mf.ManifoldSpec, i: int, phi, signed: bool = False):
    """Residual of the weak identity for the momentum density ``<V, A^i U>``.

    This is :func:`ito_residual` with ``Y = A^i``: the flux term pairs
    ``<d_k U, A^i U>`` with ``d_k phi``, and the chain-rule and velocity terms
    vanish by skew-symmetry.
    """
    if not 0 <= i < spec.n_generators:
        raise IndexError(f"generator index {i} out of range")
    return ito_residual(trajectory, linear_map(spec.generators[i]), phi, signed=signed)
