"""2D TM finite-difference time-domain solver for the slot experiment."""

from .grid import (
    ECCOSORB_EPS,
    ECCOSORB_MU,
    Grid,
    GridError,
    MaterialRegion,
    SimulationParams,
    absorber_conductivity,
    build_grid,
    courant_limit,
)
from .io import dump_material_map, read_snapshot, write_snapshot
from .kappa import detector_probes, fdtd_layout, kappa_curve_fdtd, simulate_combination
from .solver import ConvergenceError, FieldSample, SteadyState, run_to_steady_state

__all__ = [
    "ECCOSORB_EPS",
    "ECCOSORB_MU",
    "ConvergenceError",
    "FieldSample",
    "Grid",
    "GridError",
    "MaterialRegion",
    "SimulationParams",
    "SteadyState",
    "absorber_conductivity",
    "build_grid",
    "courant_limit",
    "detector_probes",
    "dump_material_map",
    "fdtd_layout",
    "kappa_curve_fdtd",
    "read_snapshot",
    "run_to_steady_state",
    "simulate_combination",
    "write_snapshot",
]
