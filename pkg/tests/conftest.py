"""Shared FDTD runs: the full-box λ/20 solves are slow, so do them once."""

import time
from dataclasses import dataclass

import numpy as np
import pytest

from kappasim.curve import KappaCurve
from kappasim.fdtd import (
    SimulationParams,
    SteadyState,
    build_grid,
    fdtd_layout,
    kappa_curve_fdtd,
    run_to_steady_state,
    simulate_combination,
)
from kappasim.geometry import Combination, DetectorLine, build_plane, enumerate_combinations
from kappasim.pathintegral import kappa_curve_pathintegral


@dataclass
class FdtdComparison:
    fdtd: KappaCurve
    pathintegral: KappaCurve
    runs: dict[Combination, SteadyState]
    line: DetectorLine
    seconds: float


@dataclass
class VacuumRun:
    state: SteadyState
    radii: np.ndarray
    seconds: float


@pytest.fixture(scope="session")
def fdtd_comparison() -> FdtdComparison:
    params = SimulationParams()
    layout = fdtd_layout(build_plane(), 1.0)
    line = DetectorLine.linspace(-0.6, 0.6, 25, 1.0)
    t0 = time.perf_counter()
    runs = {c: simulate_combination(params, layout, line, c) for c in enumerate_combinations()}
    curve = kappa_curve_fdtd(params, layout, line, runs=runs)
    seconds = time.perf_counter() - t0
    return FdtdComparison(curve, kappa_curve_pathintegral(layout, line), runs, line, seconds)


@pytest.fixture(scope="session")
def vacuum_run() -> VacuumRun:
    params = SimulationParams()
    grid = build_grid(params, None)
    xs, zs = grid.source_point
    axis = [(xs, zs + r) for r in np.linspace(0.25, 2.0, 15)]
    oblique = [(xs + 0.6 * r, zs + 0.8 * r) for r in (0.5, 1.0, 1.5)]
    probes = axis + oblique
    t0 = time.perf_counter()
    state = run_to_steady_state(grid, probes)
    seconds = time.perf_counter() - t0
    radii = np.array([np.hypot(s.position[0] - xs, s.position[1] - zs) for s in state.samples])
    return VacuumRun(state, radii, seconds)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture()
def criterion(request):
    """Call with (number, passed, detail); the line is printed now and in the summary."""
    log = request.config.stash[_ACCEPTANCE_KEY]

    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        log.append((number, line))
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_ACCEPTANCE_KEY, [])
    if log:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(log):
            terminalreporter.write_line(line)
