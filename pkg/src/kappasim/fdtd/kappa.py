"""κ curves from eight FDTD runs."""

from __future__ import annotations

from dataclasses import asdict, replace

import numpy as np

from ..curve import KappaCurve, params_hash
from ..geometry import Combination, DetectorLine, PlaneLayout, enumerate_combinations
from ..sorkin import PowerSet, kappa_pointwise
from .grid import GridError, SimulationParams, build_grid
from .solver import SteadyState, run_to_steady_state


def detector_probes(grid, layout: PlaneLayout | None, line: DetectorLine) -> list[tuple[float, float]]:
    d2 = layout.plane_to_detector if layout is not None else line.plane_to_detector
    z = grid.plane_z + d2
    half = grid.params.box_x / 2
    if np.any(np.abs(line.array) >= half):
        raise GridError("detector line reaches the boundary layer")
    if z >= grid.ze[-1 - grid.n_pml]:
        raise GridError("detector line lies beyond the box")
    return [(float(x), z) for x in line.array]


def simulate_combination(
    params: SimulationParams,
    layout: PlaneLayout,
    line: DetectorLine,
    combination: Combination,
    vacuum: bool = False,
) -> SteadyState:
    lay = layout.with_combination(combination)
    grid = build_grid(params, lay, slots=() if vacuum else None)
    return run_to_steady_state(grid, detector_probes(grid, lay, line))


def kappa_curve_fdtd(
    params: SimulationParams,
    layout: PlaneLayout,
    line: DetectorLine,
    *,
    vacuum: bool = False,
    runs: dict[Combination, SteadyState] | None = None,
) -> KappaCurve:
    """Run every combination and form κ from the Poynting magnitudes.

    ``vacuum=True`` leaves all materials out so every combination is the
    same empty box (a bookkeeping check).  Completed runs can be passed in
    through ``runs`` to avoid repeating them.
    """
    runs = dict(runs or {})
    for c in enumerate_combinations():
        if c not in runs:
            runs[c] = simulate_combination(params, layout, line, c, vacuum)
    powers = {c: runs[c].poynting for c in runs}
    bg = powers[Combination()]
    norm = float(bg.max())
    kap = np.array([
        kappa_pointwise(PowerSet({c: float(v[n]) for c, v in powers.items()}, norm))
        for n in range(len(line))
    ])
    desc = {"params": asdict(params), "layout": layout.to_config(params.wavelength), "vacuum": vacuum}
    return KappaCurve(
        line.array,
        kap,
        norm,
        engine="fdtd",
        plane_to_detector=layout.plane_to_detector,
        params_hash=params_hash(desc),
        metadata={
            "powers": {c.label: v for c, v in powers.items()},
            "residuals": {c.label: runs[c].residual for c in runs},
            "periods": {c.label: runs[c].periods for c in runs},
        },
    )


def fdtd_layout(layout: PlaneLayout, distance: float = 1.0) -> PlaneLayout:
    """The comparison geometry: both distances set to ``distance``."""
    return replace(layout, source_to_plane=distance, plane_to_detector=distance)
