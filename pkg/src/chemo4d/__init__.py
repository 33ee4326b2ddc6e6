"""Radial simulator and functional diagnostics for a 4-D chemotaxis system
with indirect signal production."""
from ._backend import BACKEND
from .core import (C_HLS, C_S, Field, Params, RadialGrid, State, build_grid, gaussian_bump,
                   integrate, lp_norm, mass, threshold_constants)
from .evolution import StepperConfig, TimeSeries, blowup_indicator, run, step

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "C_HLS", "C_S", "Field", "Params", "RadialGrid", "State", "StepperConfig",
    "TimeSeries", "blowup_indicator", "build_grid", "gaussian_bump", "integrate", "lp_norm",
    "mass", "run", "step", "threshold_constants",
]
