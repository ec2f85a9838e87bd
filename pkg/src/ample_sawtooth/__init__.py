"""Ample sawtooth domains for drift operators L = -Laplacian + B . grad on the unit ball.

Submodules: geometry, dyadic, whitney, drift, sawtooth, measure, checks, cli.
"""

from .drift import DriftFieldSpec, cone_singular, custom_drift, uniform_small, zero_drift
from .dyadic import DyadicCube, DyadicGrid, build_grid, verify_grid_properties
from .errors import (AmpleSawtoothError, ConstructionError, DomainMembershipError, DriftBoundError,
                     GeometryError, GridRangeError, PreconditionError, QuadratureError, SchemeError,
                     UnsupportedError)
from .geometry import Ball, RemovedBoxDomain, UnitBall
from .measure import WalkerConfig, estimate_measure, fd_solve, poisson_measure, sample_exits
from .sawtooth import SawtoothDomain, build_ample_sawtooth
from .whitney import WhitneyBox, carleson_box, whitney_box

__version__ = "0.1.0"

__all__ = [
    "AmpleSawtoothError", "Ball", "ConstructionError", "DomainMembershipError", "DriftBoundError",
    "DriftFieldSpec", "DyadicCube", "DyadicGrid", "GeometryError", "GridRangeError", "PreconditionError",
    "QuadratureError", "RemovedBoxDomain", "SawtoothDomain", "SchemeError", "UnitBall", "UnsupportedError",
    "WalkerConfig", "WhitneyBox", "build_ample_sawtooth", "build_grid", "carleson_box", "cone_singular",
    "custom_drift", "estimate_measure", "fd_solve", "poisson_measure", "sample_exits", "uniform_small",
    "verify_grid_properties", "whitney_box", "zero_drift",
]
