"""Convergence of penalised solutions to the manifold as the penalty grows."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .. import manifold as mf
from ..coefficients import CoefficientSet
from ..grid import Grid
from ..noise import SpectralMeasure
from ..solver import ConstraintRecorder, State, StepParams, simulate

__all__ = ["DecayConfig", "DecayReport", "penalty_decay_study", "loglog_slope", "is_geometric"]


def is_geometric(values, rtol: float = 1e-9) -> bool:
    v = np.asarray(values, dtype=float)
    if v.size < 2 or np.any(v <= 0):
        return False
    r = v[1:] / v[:-1]
    return bool(np.allclose(r, r[0], rtol=rtol) and not np.isclose(r[0], 1.0))


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``; NaN unless all ``y > 0``."""
    if np.any(np.asarray(y, float) <= 0):
        return float("nan")
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


@dataclass(frozen=True)
class DecayConfig:
    """A penalised experiment family indexed by ``m``.

    ``dt`` is shared by every ``m`` unless ``dt_rule(m)`` is given; it must
    satisfy the stiffness bound at the largest ``m``.
    """

    grid: Grid
    manifold: mf.ManifoldSpec
    initial: Callable[[], State]
    horizon: float
    dt: Optional[float] = None
    dt_rule: Optional[Callable[[float], float]] = None
    coefficients: Optional[CoefficientSet] = None
    measure: Optional[SpectralMeasure] = None
    seed: int = 0
    stride: int = 1


@dataclass
class DecayReport:
    m_list: np.ndarray
    sup_distance: np.ndarray
    sup_penalty_mass: np.ndarray
    slope: float
    mass_ratio: float
    ensemble_size: int
    extra: dict = field(default_factory=dict)

    @property
    def mass_bounded(self) -> bool:
        return bool(self.mass_ratio < 5.0)

    def to_dict(self):
        return {"m": self.m_list.tolist(), "sup_distance": self.sup_distance.tolist(),
                "sup_penalty_mass": self.sup_penalty_mass.tolist(), "slope": self.slope,
                "mass_ratio": self.mass_ratio, "ensemble_size": self.ensemble_size, **self.extra}


def penalty_decay_study(config: DecayConfig, m_list: Sequence[float], ensemble_size: int = 1) -> DecayReport:
    """Run the penalised scheme for every ``m`` and fit the decay rate.

    For each ``m`` records ``sup_t ||dist(U(t), M)||_{L^2}`` and
    ``sup_t m int F(U(t))``, averaged over the ensemble, and fits the log-log
    slope of the distance against ``m``.

    Raises
    ------
    ValueError
        If ``m_list`` is not geometric with at least four entries.
    StiffnessError, CFLError
        If the time step is too large for the largest ``m``.
    """
    m_list = np.asarray(m_list, dtype=float)
    if m_list.size < 4 or not is_geometric(m_list):
        raise ValueError("m_list must be a geometric sequence of length >= 4")
    params_by_m = []
    for m in m_list:
        dt = config.dt_rule(m) if config.dt_rule is not None else config.dt
        params_by_m.append(StepParams(grid=config.grid, dt=dt, penalty_strength=float(m), manifold=config.manifold,
                                      coefficients=config.coefficients, measure=config.measure, seed=config.seed))
    dist, mass = [], []
    for p in params_by_m:
        st = config.initial()
        if ensemble_size > 1:
            st = State(np.repeat(st.U[None], ensemble_size, 0), np.repeat(st.V[None], ensemble_size, 0), st.t)
        rec = ConstraintRecorder(config.manifold, stride=config.stride)
        simulate(st, p, int(round(config.horizon / p.dt)), [rec])
        dist.append(float(np.mean(np.max(np.array(rec.distance), axis=0))))
        mass.append(float(np.mean(np.max(np.array(rec.penalty_mass), axis=0))))
    dist, mass = np.array(dist), np.array(mass)
    slope = loglog_slope(m_list, dist)
    ratio = float(mass.max() / mass.min()) if mass.min() > 0 else float("inf")
    return DecayReport(m_list, dist, mass, slope, ratio, ensemble_size,
                       extra={"mass_slope": loglog_slope(m_list, mass) if mass.min() > 0 else float("nan")})
