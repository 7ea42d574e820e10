"""Time stepping of the penalised stochastic wave equation.

The equation

    d_tt U = Lap U - m grad F(U) + f(U, d_t U, grad U) + g(U, d_t U, grad U) dW

is advanced on a periodic grid with a drift-kick-drift splitting: a half
step of free flight, a full velocity kick (drift force plus Ito noise, all
evaluated at the half-step position and the old velocity), then a second
half step with the new velocity.  Without noise this is the second-order
symplectic position-Verlet scheme; the noise term uses only quantities known
at the start of the step, so the stochastic part is an Ito sum.

The projected scheme runs the same step with ``m = 0`` and maps the result
back onto the sphere, transporting the velocity through its momenta.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import manifold as mf
from .coefficients import CoefficientSet, assemble_diffusion, assemble_drift
from .grid import Grid, centered_grad, forward_diff, laplacian
from .noise import SpectralMeasure, mode_count, standard_draws, synthesize

__all__ = [
    "State",
    "StepParams",
    "Trajectory",
    "NumericalError",
    "StiffnessError",
    "CFLError",
    "BlowUpError",
    "step",
    "step_projected",
    "advance",
    "simulate",
    "noise_field",
    "Recorder",
    "TrajectoryRecorder",
    "EnergyRecorder",
    "MomentumRecorder",
    "ConstraintRecorder",
    "FunctionRecorder",
    "discrete_energy",
    "great_circle",
    "standing_wave",
    "tangent_pulse",
    "random_tangent_field",
    "smooth_bump",
    "bump_pulse",
    "PROJECTED_STATE_TOL",
]

PROJECTED_STATE_TOL = 1e-9


class NumericalError(RuntimeError):
    """Base class for failures detected while time stepping."""


class StiffnessError(NumericalError, ValueError):
    pass


class CFLError(ValueError):
    pass


class BlowUpError(NumericalError):
    pass


@dataclass(frozen=True)
class State:
    """Position ``U`` and velocity ``V`` on the grid at time ``t``.

    Arrays have shape ``(*grid.shape, n)`` or ``(B, *grid.shape, n)`` for an
    ensemble of ``B`` members.
    """

    U: np.ndarray
    V: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        U = np.asarray(self.U, dtype=float)
        V = np.asarray(self.V, dtype=float)
        if U.shape != V.shape:
            raise ValueError(f"U and V shapes differ: {U.shape} vs {V.shape}")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.U)) and np.all(np.isfinite(self.V)))

    def manifold_violation(self):
        """``(max ||U| - 1|, max |<V, U>|)`` over all nodes."""
        r = np.linalg.norm(self.U, axis=-1)
        return float(np.max(np.abs(r - 1.0))), float(np.max(np.abs(np.sum(self.U * self.V, axis=-1))))

    def copy(self) -> "State":
        return State(self.U.copy(), self.V.copy(), self.t)


@dataclass(frozen=True)
class StepParams:
    """Everything a step needs besides the state and the noise.

    Parameters
    ----------
    grid : Grid
    dt : float
    penalty_strength : float
        ``m >= 0``.
    scheme : {"penalized", "projected"}
    coefficients : CoefficientSet, optional
        Used as given; mollify beforehand if required.
    measure : SpectralMeasure, optional
        Required when the coefficients have a diffusion part.
    manifold : ManifoldSpec, optional
        Required for the penalty and the projected scheme.
    seed : int
    projection : {"momentum", "tangent"}
        Velocity update of the projected scheme: transport through the
        momenta (default) or plain orthogonal projection.
    """

    grid: Grid
    dt: float
    penalty_strength: float = 0.0
    scheme: str = "penalized"
    coefficients: Optional[CoefficientSet] = None
    measure: Optional[SpectralMeasure] = None
    manifold: Optional[mf.ManifoldSpec] = None
    seed: int = 0
    projection: str = "momentum"
    check_stiffness: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise CFLError(f"dt must be positive, got {self.dt}")
        limit = 0.5 * self.grid.h / np.sqrt(self.grid.dim)
        if self.dt > limit * (1 + 1e-12):
            raise CFLError(f"dt = {self.dt:g} violates the CFL bound dt <= 0.5 h / sqrt(d) = {limit:g}")
        if self.penalty_strength < 0:
            raise ValueError("penalty strength must be non-negative")
        if self.scheme not in ("penalized", "projected"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.projection not in ("momentum", "tangent"):
            raise ValueError(f"unknown projection {self.projection!r}")
        if self.check_stiffness and self.dt * np.sqrt(8.0 * self.penalty_strength) > 1.0:
            raise StiffnessError(
                f"dt * sqrt(8 m) = {self.dt * np.sqrt(8 * self.penalty_strength):.3g} > 1; "
                f"use dt <= {1 / np.sqrt(8 * self.penalty_strength):.3g} for m = {self.penalty_strength:g}")
        if (self.penalty_strength > 0 or self.scheme == "projected") and self.manifold is None:
            raise ValueError("a manifold is required for the penalty or the projected scheme")
        if self.coefficients is not None and self.coefficients.has_diffusion and self.measure is None:
            raise ValueError("diffusion coefficients need a spectral measure")
        if self.measure is not None and self.measure.dim != self.grid.dim:
            raise ValueError("spectral measure dimension does not match the grid")

    @property
    def noisy(self) -> bool:
        return self.coefficients is not None and self.coefficients.has_diffusion and self.measure is not None

    def with_dt(self, dt: float) -> "StepParams":
        return replace(self, dt=dt)


# ----------------------------------------------------------------------------
# One step
# ----------------------------------------------------------------------------


def noise_field(params: StepParams, draws):
    """Increment ``Delta W`` on the grid from mode draws of shape ``(..., L)``."""
    return synthesize(params.measure, params.grid.coords(), draws, params.dt)


def _forces(U, V, params: StepParams, m: float):
    grid = params.grid
    acc = laplacian(U, grid)
    if m > 0:
        acc = acc - m * mf.penalty_grad(params.manifold, U)
    cs = params.coefficients
    grad = None
    if cs is not None and not cs.is_zero:
        grad = centered_grad(U, grid)
        if cs.has_drift:
            acc = acc + assemble_drift(cs, U, V, grad)
    return acc, grad


def _diffusion(U, V, grad, params: StepParams):
    return assemble_diffusion(params.coefficients, U, V, grad)


def _dkd(state: State, params: StepParams, dW, m: float):
    dt = params.dt
    U, V = state.U, state.V
    Uh = U + 0.5 * dt * V
    acc, grad = _forces(Uh, V, params, m)
    Vn = V + dt * acc
    if dW is not None and params.noisy:
        Vn = Vn + _diffusion(Uh, V, grad, params) * np.asarray(dW)[..., None]
    Un = Uh + 0.5 * dt * Vn
    return Un, Vn


def _as_field(dW):
    if dW is None:
        return None
    return getattr(dW, "values", dW)


def step(state: State, params: StepParams, dW=None) -> State:
    """One penalised step.

    ``dW`` is the scalar increment field (array broadcastable to the grid
    part of ``U`` or a :class:`~geowave.noise.NoiseIncrement`); ``None``
    means no noise.
    """
    dW = _as_field(dW)
    if dW is not None and dW.ndim == state.U.ndim:
        # (1, *grid) increments for a single-member state
        dW = dW.reshape(dW.shape[1:]) if dW.shape[0] == 1 else dW
    Un, Vn = _dkd(state, params, dW, params.penalty_strength)
    return State(Un, Vn, state.t + params.dt)


def _closest_point(spec, U):
    if spec.closest_point_fn is not None:
        return spec.closest_point_fn(U)
    return U / np.linalg.norm(U, axis=-1, keepdims=True)


def step_projected(state: State, params: StepParams, dW=None) -> State:
    """Free step followed by projection onto the sphere.

    ``U`` is renormalised nodewise.  With ``projection="momentum"`` the new
    velocity is rebuilt at the projected point from its momenta at the raw
    point, which keeps speed and momenta; ``"tangent"`` uses the orthogonal
    projection of the raw velocity instead.
    """
    spec = params.manifold
    dW = _as_field(dW)
    if dW is not None and dW.ndim == state.U.ndim and dW.shape[0] == 1:
        dW = dW.reshape(dW.shape[1:])
    Ur, Vr = _dkd(state, params, dW, 0.0)
    r = np.linalg.norm(Ur, axis=-1)
    if np.any(r < 0.5) or not np.all(np.isfinite(r)):
        raise BlowUpError(f"|U| dropped to {np.nanmin(r):.3g} < 0.5 before projection")
    Up = _closest_point(spec, Ur)
    if params.projection == "momentum":
        Vp = mf.reconstruct_tangent(spec, Up, mf.momenta(spec, Ur, Vr))
    else:
        Vp = mf._project_unchecked(spec, Up, Vr)
    return State(Up, Vp, state.t + params.dt)


def advance(state: State, params: StepParams, dW=None) -> State:
    if params.scheme == "projected":
        return step_projected(state, params, dW)
    return step(state, params, dW)


# ----------------------------------------------------------------------------
# Recorders
# ----------------------------------------------------------------------------


class Recorder:
    """Receives snapshots every ``stride`` steps (always including step 0)."""

    name = "recorder"

    def __init__(self, stride: int = 1):
        if stride < 1:
            raise ValueError("stride must be >= 1")
        self.stride = int(stride)
        self.steps: list = []
        self.times: list = []

    def wants(self, k: int) -> bool:
        return k % self.stride == 0

    def record(self, k: int, state: State, params: StepParams):
        self.steps.append(k)
        self.times.append(state.t)
        self.observe(state, params)

    def observe(self, state, params):  # pragma: no cover - interface
        raise NotImplementedError

    def columns(self) -> dict:
        return {"step": np.array(self.steps), "time": np.array(self.times)}


class FunctionRecorder(Recorder):
    """Records ``fn(state, params)`` (a scalar or a 1-D array per member)."""

    def __init__(self, fn, name: str = "value", stride: int = 1):
        super().__init__(stride)
        self.fn = fn
        self.name = name
        self.values: list = []

    def observe(self, state, params):
        self.values.append(np.asarray(self.fn(state, params)))

    def columns(self):
        cols = super().columns()
        vals = np.array(self.values)
        if vals.ndim == 1:
            cols[self.name] = vals
        else:
            for j in range(vals.shape[1]):
                cols[f"{self.name}_{j}"] = vals[:, j]
        return cols


def discrete_energy(state: State, params: StepParams, include_penalty: bool = True):
    """``int 1/2 |V|^2 + 1/2 |D^+ U|^2 + m F(U)`` per member."""
    grid = params.grid
    dens = 0.5 * np.sum(state.V ** 2, axis=-1)
    for k in range(grid.dim):
        dens = dens + 0.5 * np.sum(forward_diff(state.U, grid, k) ** 2, axis=-1)
    if include_penalty and params.penalty_strength > 0:
        dens = dens + params.penalty_strength * mf.penalty(params.manifold, state.U)
    return grid.integrate(dens)


def modified_energy(state: State, params: StepParams):
    """Quantity conserved exactly by the free drift-kick-drift step.

    For ``U'' = -K U`` the step preserves
    ``1/2 <V, (I - dt^2 K / 4) V> + 1/2 <U, K U>`` with ``K = -Lap_h``.
    """
    grid = params.grid
    KU = -laplacian(state.U, grid)
    KV = -laplacian(state.V, grid)
    dens = 0.5 * np.sum(state.V ** 2, axis=-1) - params.dt ** 2 / 8.0 * np.sum(state.V * KV, axis=-1) \
        + 0.5 * np.sum(state.U * KU, axis=-1)
    return grid.integrate(dens)


class EnergyRecorder(Recorder):
    name = "energy"

    def __init__(self, stride: int = 1):
        super().__init__(stride)
        self.energy: list = []
        self.modified: list = []

    def observe(self, state, params):
        self.energy.append(np.atleast_1d(discrete_energy(state, params)))
        self.modified.append(np.atleast_1d(modified_energy(state, params)))

    def columns(self):
        cols = super().columns()
        E, M = np.array(self.energy), np.array(self.modified)
        for j in range(E.shape[1]):
            suffix = "" if E.shape[1] == 1 else f"_{j}"
            cols["energy" + suffix] = E[:, j]
            cols["modified_energy" + suffix] = M[:, j]
        return cols


class MomentumRecorder(Recorder):
    """Total momenta ``int <V, A^i U> dx`` for every generator."""

    name = "momentum"

    def __init__(self, spec: mf.ManifoldSpec, stride: int = 1):
        super().__init__(stride)
        self.spec = spec
        self.totals: list = []

    def observe(self, state, params):
        dens = mf.momenta(self.spec, state.U, state.V)
        self.totals.append(params.grid.integrate(np.moveaxis(dens, -1, 0)))

    def columns(self):
        cols = super().columns()
        T = np.array(self.totals)  # (steps, N[, B])
        T = T.reshape(T.shape[0], T.shape[1], -1)
        for i in range(T.shape[1]):
            for j in range(T.shape[2]):
                suffix = "" if T.shape[2] == 1 else f"_{j}"
                cols[f"M{i + 1}{suffix}"] = T[:, i, j]
        return cols


class ConstraintRecorder(Recorder):
    """``L^2`` distance of ``U`` to the manifold and the penalty mass ``m int F(U)``."""

    name = "constraint"

    def __init__(self, spec: mf.ManifoldSpec, stride: int = 1):
        super().__init__(stride)
        self.spec = spec
        self.distance: list = []
        self.penalty_mass: list = []
        self.sup_distance: list = []

    def observe(self, state, params):
        grid = params.grid
        dist = mf.distance_to_manifold(self.spec, state.U)
        self.distance.append(np.atleast_1d(np.sqrt(grid.integrate(dist ** 2))))
        self.sup_distance.append(np.atleast_1d(np.max(dist.reshape(dist.shape[:dist.ndim - grid.dim] + (-1,)), axis=-1)))
        mass = params.penalty_strength * grid.integrate(mf.penalty(self.spec, state.U))
        self.penalty_mass.append(np.atleast_1d(mass))

    def columns(self):
        cols = super().columns()
        for key in ("distance", "sup_distance", "penalty_mass"):
            arr = np.array(getattr(self, key))
            for j in range(arr.shape[1]):
                cols[key + ("" if arr.shape[1] == 1 else f"_{j}")] = arr[:, j]
        return cols


@dataclass
class Trajectory:
    """Stride-one record of a run, with the noise draws of every step.

    Attributes
    ----------
    U, V : ndarray
        ``(steps + 1, [B,] *grid.shape, n)``.
    draws : ndarray or None
        ``(steps, [B,] L)`` standard normal mode draws, or ``None`` when the
        run was noise-free.
    """

    params: StepParams
    times: np.ndarray
    U: np.ndarray
    V: np.ndarray
    draws: Optional[np.ndarray] = None

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def state(self, k: int) -> State:
        return State(self.U[k], self.V[k], float(self.times[k]))

    def increments(self):
        """Noise fields rebuilt from the recorded draws, ``(steps, [B,] *grid)``."""
        if self.draws is None:
            return None
        return noise_field(self.params, self.draws)


class TrajectoryRecorder(Recorder):
    name = "trajectory"

    def __init__(self, stride: int = 1):
        super().__init__(stride)
        self.U: list = []
        self.V: list = []
        self.draws: list = []

    def observe(self, state, params):
        self.U.append(state.U.copy())
        self.V.append(state.V.copy())

    def add_draws(self, k, draws):
        if self.stride == 1 and draws is not None:
            self.draws.append(np.array(draws))

    def trajectory(self, params) -> Trajectory:
        draws = np.array(self.draws) if self.draws else None
        return Trajectory(params, np.array(self.times), np.array(self.U), np.array(self.V), draws)


# ----------------------------------------------------------------------------
# Driver
# ----------------------------------------------------------------------------


@dataclass
class RunResult:
    state: State
    recorders: Sequence
    steps_taken: int
    trajectory: Optional[Trajectory] = None
    info: dict = field(default_factory=dict)


def _members(state: State, params: StepParams, members):
    batched = state.U.ndim == params.grid.dim + 2
    if members is None:
        members = tuple(range(state.U.shape[0])) if batched else (0,)
    members = tuple(int(m) for m in members)
    if batched and len(members) != state.U.shape[0]:
        raise ValueError("number of member indices does not match the ensemble axis")
    return batched, members


def simulate(initial: State, params: StepParams, n_steps: int, recorders: Sequence = (), members=None,
             step_offset: int = 0) -> RunResult:
    """Advance ``n_steps`` steps, feeding the recorders.

    Noise for step ``k`` of ensemble member ``j`` comes from the Philox
    stream ``(params.seed, members[j], step_offset + k)``.

    Raises
    ------
    NumericalError
        When a non-finite value appears; the message names the step index.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    batched, members = _members(initial, params, members)
    state = initial
    recorders = list(recorders)
    for rec in recorders:
        if rec.wants(0):
            rec.record(0, state, params)
    L = mode_count(params.measure) if params.noisy else 0
    for k in range(n_steps):
        dW = None
        draws = None
        if params.noisy:
            draws = standard_draws(params.measure, params.seed, step_offset + k, members)
            if not batched:
                draws = draws[0]
            dW = noise_field(params, draws)
        for rec in recorders:
            if isinstance(rec, TrajectoryRecorder):
                rec.add_draws(k, draws)
        state = advance(state, params, dW)
        if not state.is_finite():
            raise NumericalError(f"non-finite values at step {k + 1} (t = {state.t:g})")
        for rec in recorders:
            if rec.wants(k + 1):
                rec.record(k + 1, state, params)
    traj = None
    for rec in recorders:
        if isinstance(rec, TrajectoryRecorder) and rec.stride == 1:
            traj = rec.trajectory(params)
    return RunResult(state=state, recorders=recorders, steps_taken=n_steps, trajectory=traj,
                     info={"modes": L, "members": members})


# ----------------------------------------------------------------------------
# Initial data
# ----------------------------------------------------------------------------


def smooth_bump(r, radius: float = 1.0):
    """``exp(1 - 1/(1 - (r/radius)^2))`` inside the ball, 0 outside; peak 1."""
    s = np.asarray(r, dtype=float) / radius
    out = np.zeros_like(s)
    inside = s < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


def great_circle(grid: Grid, omega: float = 1.0, n: int = 3) -> State:
    """Space-constant data ``U = e_1``, ``V = omega e_2`` on the sphere."""
    U = np.zeros(grid.shape + (n,))
    V = np.zeros(grid.shape + (n,))
    U[..., 0] = 1.0
    V[..., 1] = omega
    return State(U, V)


def standing_wave(grid: Grid, n: int = 1, mode: int = 1) -> State:
    """``U = cos(2 pi k x_1 / L) e_1``, ``V = 0``."""
    x = grid.coords()[..., 0]
    U = np.zeros(grid.shape + (n,))
    U[..., 0] = np.cos(2.0 * np.pi * mode * x / grid.length)
    return State(U, np.zeros_like(U))


def standing_wave_exact(grid: Grid, t: float, n: int = 1, mode: int = 1):
    k = 2.0 * np.pi * mode / grid.length
    x = grid.coords()[..., 0]
    U = np.zeros(grid.shape + (n,))
    U[..., 0] = np.cos(k * t) * np.cos(k * x)
    return U


def tangent_pulse(grid: Grid, amplitude: float = 1.0, width: float = None, center=None, n: int = 3,
                  twist: float = 0.0) -> State:
    """Sphere-valued data with a localised tangent velocity.

    ``U = (cos a, sin a, 0, ...)`` with ``a = twist * bump``, and ``V`` equal to
    ``amplitude * bump`` times the unit tangent ``(0, 0, 1)``-direction
    (``n >= 3``) or the rotation direction (``n = 2``).
    """
    if center is None:
        center = np.full(grid.dim, 0.5 * grid.length)
    if width is None:
        width = 0.25 * grid.length
    b = smooth_bump(grid.periodic_distance(center), width)
    a = twist * b
    U = np.zeros(grid.shape + (n,))
    U[..., 0] = np.cos(a)
    U[..., 1] = np.sin(a)
    V = np.zeros_like(U)
    if n >= 3:
        V[..., 2] = amplitude * b
    else:
        V[..., 0] = -amplitude * b * np.sin(a)
        V[..., 1] = amplitude * b * np.cos(a)
    return State(U, V)


def bump_pulse(grid: Grid, radius: float, center=None, n: int = 1, amplitude: float = 1.0) -> State:
    """Compactly supported displacement ``U = amplitude * bump e_1``, ``V = 0``."""
    if center is None:
        center = np.full(grid.dim, 0.5 * grid.length)
    U = np.zeros(grid.shape + (n,))
    U[..., 0] = amplitude * smooth_bump(grid.periodic_distance(center), radius)
    return State(U, np.zeros_like(U))


def _smooth_periodic(field_, grid: Grid, width: float):
    """Convolve with the bump of radius ``width`` on the periodic grid (FFT)."""
    dist = grid.periodic_distance(np.zeros(grid.dim))
    kern = smooth_bump(dist, width)
    kern /= kern.sum()
    K = np.fft.fftn(kern)
    axes = tuple(range(grid.dim))
    out = np.fft.ifftn(np.fft.fftn(field_, axes=axes) * K[(...,) + (None,) * (field_.ndim - grid.dim)], axes=axes)
    return out.real


def random_tangent_field(grid: Grid, rng, n: int = 3, width: float = None, speed: float = 1.0) -> State:
    """Smoothed random sphere-valued map with a smoothed random tangent velocity."""
    rng = np.random.default_rng(rng)
    if width is None:
        width = 4.0 * grid.h
    U = _smooth_periodic(rng.standard_normal(grid.shape + (n,)), grid, width)
    U /= np.linalg.norm(U, axis=-1, keepdims=True)
    W = _smooth_periodic(rng.standard_normal(grid.shape + (n,)), grid, width)
    V = W - np.sum(W * U, axis=-1, keepdims=True) * U
    V *= speed / max(np.sqrt(np.mean(np.sum(V ** 2, axis=-1))), 1e-300)
    return State(U, V)
