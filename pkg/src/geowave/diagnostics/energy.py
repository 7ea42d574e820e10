"""Local energies on shrinking balls and the Monte-Carlo energy inequality."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special

from .. import manifold as mf
from ..coefficients import CoefficientSet
from ..grid import Grid, forward_diff

__all__ = [
    "s_squared",
    "EnergyWindow",
    "local_energy",
    "local_energy_from_norms",
    "h_norm_sq",
    "ball_mask",
    "ball_volume",
    "LFunction",
    "L_identity",
    "L_sqrt",
    "L_power",
    "L_exp",
    "check_L_admissible",
    "EnergyInequalityReport",
    "energy_inequality_mc",
    "fit_constant",
    "MIN_MEMBERS",
]

MIN_MEMBERS = 32


def s_squared(cs: Optional[CoefficientSet]) -> float:
    """``max{|f_{d+1}|_inf, |f_{d+1}|_inf^2 + |g_{d+1}|_inf^2}`` from recorded sup norms."""
    if cs is None:
        return 0.0
    a = float(cs.sup_norms.get("fd1", 0.0))
    b = float(cs.sup_norms.get("gd1", 0.0))
    return max(a, a * a + b * b)


@dataclass(frozen=True)
class EnergyWindow:
    """Ball ``B(x, T - t)`` on which the local energy is integrated.

    ``penalty=True`` adds ``m F(u)`` to the density.
    """

    center: tuple
    horizon: float
    penalty: bool = False
    penalty_strength: float = 0.0

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))

    def radius(self, t: float) -> float:
        return self.horizon - t


def ball_mask(grid: Grid, center, radius: float):
    """Cells whose centre lies in the (periodic) ball."""
    return grid.periodic_distance(center) < radius


def ball_volume(d: int, radius: float) -> float:
    return float(np.pi ** (d / 2.0) / special.gamma(d / 2.0 + 1.0) * radius ** d)


def _mask_for(state_t, grid, window):
    if not state_t < window.horizon:
        raise ValueError(f"t = {state_t:g} is not below the horizon T = {window.horizon:g}")
    mask = ball_mask(grid, window.center, window.radius(state_t))
    if not mask.any():
        raise ValueError("the energy ball contains no grid cell")
    return mask


def local_energy(state, window: EnergyWindow, grid: Grid, s2: float = 0.0, spec: Optional[mf.ManifoldSpec] = None):
    """``int_{B(x, T-t)} 1/2 |u|^2 + 1/2 |grad u|^2 + 1/2 |v|^2 + s^2 [+ m F(u)]``.

    Gradients are forward differences; a cell counts when its centre lies in
    the ball.  Returns one value per ensemble member.
    """
    mask = _mask_for(state.t, grid, window)
    U, V = state.U, state.V
    dens = 0.5 * np.sum(U ** 2, axis=-1) + 0.5 * np.sum(V ** 2, axis=-1) + s2
    for k in range(grid.dim):
        dens = dens + 0.5 * np.sum(forward_diff(U, grid, k) ** 2, axis=-1)
    if window.penalty and window.penalty_strength > 0:
        if spec is None:
            raise ValueError("penalised energy needs the manifold spec")
        dens = dens + window.penalty_strength * mf.penalty(spec, U)
    return grid.integrate(dens, mask)


def h_norm_sq(state, grid: Grid, mask):
    """``||z||_H^2 = int |u|^2 + |grad u|^2 + |v|^2`` over the masked cells."""
    sel = mask.reshape(-1)
    lead = state.U.shape[: state.U.ndim - grid.dim - 1]
    n = state.U.shape[-1]
    parts = [state.U, state.V] + [forward_diff(state.U, grid, k) for k in range(grid.dim)]
    total = 0.0
    for a in parts:
        flat = a.reshape(lead + (-1, n))[..., sel, :]
        total = total + np.linalg.norm(flat.reshape(lead + (-1,)), axis=-1) ** 2
    return total * grid.cell_volume


def local_energy_from_norms(state, window: EnergyWindow, grid: Grid, s2: float = 0.0):
    """Independent evaluation as ``1/2 ||z||_H^2 + s^2 |B|``.

    Also returns the alternative constant ``(T/2) s^2`` for comparison.
    """
    mask = _mask_for(state.t, grid, window)
    covered = float(mask.sum()) * grid.cell_volume
    half_norm = 0.5 * h_norm_sq(state, grid, mask)
    return {
        "energy": half_norm + s2 * covered,
        "half_h_norm_sq": half_norm,
        "constant_volume_form": s2 * covered,
        "constant_half_horizon_form": 0.5 * window.horizon * s2,
        "covered_volume": covered,
        "ball_volume": ball_volume(grid.dim, window.radius(state.t)),
    }


# ----------------------------------------------------------------------------
# L functions
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class LFunction:
    """Nonnegative nondecreasing ``L`` with the first two derivatives."""

    L: Callable
    dL: Callable
    d2L: Callable
    c: float = 1.0
    name: str = ""

    def __call__(self, t):
        return self.L(np.asarray(t, dtype=float))


L_identity = LFunction(lambda t: t, lambda t: np.ones_like(t), lambda t: np.zeros_like(t), 1.0, "id")
L_sqrt = LFunction(np.sqrt, lambda t: 0.5 / np.sqrt(t), lambda t: -0.25 * t ** -1.5, 0.5, "sqrt")


def L_power(q: float) -> LFunction:
    """``t^q``; admissible with ``c = max(q, q + q(q-1))``."""
    return LFunction(lambda t: t ** q, lambda t: q * t ** (q - 1), lambda t: q * (q - 1) * t ** (q - 2),
                     max(q, q * q), f"power:{q:g}")


L_exp = LFunction(np.exp, np.exp, np.exp, 1.0, "exp")


def check_L_admissible(L: LFunction, c: Optional[float] = None, samples: int = 1000, rtol: float = 1e-12) -> bool:
    """``t L'(t) + max(0, t^2 L''(t)) <= c L(t)`` on log-spaced ``t`` in ``[1e-6, 1e6]``.

    Also requires ``L >= 0`` and ``L`` nondecreasing on the samples.
    """
    c = L.c if c is None else float(c)
    t = np.logspace(-6, 6, samples)
    with np.errstate(over="ignore", invalid="ignore"):
        val = np.asarray(L.L(t), dtype=float)
        lhs = t * np.asarray(L.dL(t), dtype=float) + np.maximum(0.0, t * t * np.asarray(L.d2L(t), dtype=float))
        rhs = c * val
        ok = np.all(np.isfinite(val)) and np.all(np.isfinite(lhs))
        ok = ok and np.all(val >= 0) and np.all(np.diff(val) >= 0)
        ok = ok and np.all(lhs <= rhs + rtol * np.abs(rhs))
    return bool(ok)


# ----------------------------------------------------------------------------
# Energy inequality
# ----------------------------------------------------------------------------


@dataclass
class EnergyInequalityReport:
    """Both sides of ``E[1_A sup_{s<=t} L(e(s))] <= 4 e^{Ct} E[1_A L(e(0))]``.

    Attributes
    ----------
    times : ndarray
    lhs : ndarray
        Left side at every recorded time.
    rhs0 : float
        ``E[1_A L(e(0))]``.
    fitted_C : float
        Smallest grid value of ``C`` that makes the inequality hold at all
        times.
    ci : (float, float)
        Bootstrap percentile interval of ``fitted_C``.
    """

    times: np.ndarray
    lhs: np.ndarray
    rhs0: float
    fitted_C: float
    ci: tuple
    members: int
    event_fraction: float
    L_name: str = ""
    factor: float = 4.0
    extra: dict = field(default_factory=dict)

    def rhs(self, C: Optional[float] = None):
        C = self.fitted_C if C is None else C
        return self.factor * np.exp(C * self.times) * self.rhs0

    def holds(self, C: Optional[float] = None, slack: float = 0.0) -> bool:
        return bool(np.all(self.lhs <= self.rhs(C) * (1.0 + slack) + 1e-300))

    def to_dict(self) -> dict:
        return {"L": self.L_name, "estimate": self.fitted_C, "CI": list(self.ci), "members": self.members,
                "event_fraction": self.event_fraction, "rhs0": self.rhs0, "lhs_max": float(np.max(self.lhs)),
                **self.extra}


DEFAULT_C_GRID = np.concatenate([[0.0], np.logspace(-4, 3, 1401)])


def fit_constant(times, lhs, rhs0, factor: float = 4.0, C_grid=DEFAULT_C_GRID) -> float:
    """Smallest ``C`` on ``C_grid`` with ``lhs(t) <= factor e^{Ct} rhs0`` for all ``t``."""
    times = np.asarray(times, dtype=float)
    lhs = np.asarray(lhs, dtype=float)
    if rhs0 <= 0:
        return 0.0 if np.all(lhs <= 0) else float("inf")
    with np.errstate(over="ignore"):
        bound = factor * rhs0 * np.exp(np.outer(C_grid, times))
    ok = np.all(lhs[None, :] <= bound * (1 + 1e-12), axis=1)
    idx = np.flatnonzero(ok)
    return float(C_grid[idx[0]]) if idx.size else float("inf")


def _sides(energies, L, event):
    with np.errstate(invalid="ignore"):
        vals = np.asarray(L(np.maximum(energies, 0.0)), dtype=float)
    running = np.maximum.accumulate(vals, axis=1)
    w = event.astype(float)
    lhs = (w[:, None] * running).mean(axis=0)
    rhs0 = float((w * vals[:, 0]).mean())
    return lhs, rhs0


def energy_inequality_mc(energies, times, L: LFunction, initial_h_norm=None, event_threshold: Optional[float] = None,
                         bootstrap: int = 400, seed: int = 0, factor: float = 4.0) -> EnergyInequalityReport:
    """Monte-Carlo estimate of both sides of the energy inequality.

    Parameters
    ----------
    energies : ndarray, shape (members, times)
        ``e_{x,T}(t)`` along each path.
    times : ndarray
    L : LFunction
    initial_h_norm : ndarray, shape (members,), optional
        ``||z(0)||_{H(B(x,T))}``; with ``event_threshold`` defines the event
        ``A = {||z(0)|| <= threshold}``.

    Raises
    ------
    ValueError
        With fewer than ``MIN_MEMBERS`` members.
    """
    energies = np.asarray(energies, dtype=float)
    if energies.ndim != 2:
        raise ValueError("energies must have shape (members, times)")
    M = energies.shape[0]
    if M < MIN_MEMBERS:
        raise ValueError(f"at least {MIN_MEMBERS} ensemble members are needed, got {M}")
    times = np.asarray(times, dtype=float)
    if event_threshold is None or initial_h_norm is None:
        event = np.ones(M, dtype=bool)
    else:
        event = np.asarray(initial_h_norm) <= event_threshold
    lhs, rhs0 = _sides(energies, L, event)
    C = fit_constant(times, lhs, rhs0, factor)
    rng = np.random.default_rng(seed)
    boot = []
    for _ in range(bootstrap):
        idx = rng.integers(0, M, M)
        bl, br = _sides(energies[idx], L, event[idx])
        boot.append(fit_constant(times, bl, br, factor))
    boot = np.array(boot)
    ci = (float(np.percentile(boot, 2.5)), float(np.percentile(boot, 97.5)))
    return EnergyInequalityReport(times=times, lhs=lhs, rhs0=rhs0, fitted_C=C, ci=ci, members=M,
                                  event_fraction=float(event.mean()), L_name=L.name, factor=factor)
