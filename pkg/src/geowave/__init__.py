"""Simulation and verification tools for manifold-valued stochastic wave equations."""

from . import coefficients, diagnostics, grid, manifold, noise, solver
from .grid import Grid
from .manifold import ManifoldSpec, sphere
from .noise import SpectralMeasure, validate_measure
from .solver import State, StepParams, simulate

__version__ = "0.1.0"

__all__ = [
    "coefficients",
    "diagnostics",
    "grid",
    "manifold",
    "noise",
    "solver",
    "Grid",
    "ManifoldSpec",
    "sphere",
    "SpectralMeasure",
    "validate_measure",
    "State",
    "StepParams",
    "simulate",
]
