"""Yee grid, materials and boundary layers for the 2D TM solver.

Field layout (x along the slot plane, z along propagation):

* ``Ey[i, j]`` at ``(x_i, zc_j)``: x nodes, z cell centres
* ``Hx[i, j]`` at ``(x_i, ze_j)``: x nodes, z cell edges (``Nz + 1`` of them)
* ``Hz[i, j]`` at ``(x_i + Δx/2, zc_j)``

The z spacing is non-uniform.  Cells across the laminate are sized so each
layer is a whole number of cells, then grow geometrically back to Δ.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.constants import c as C0, epsilon_0 as EPS0, mu_0 as MU0
from scipy.optimize import brentq

from ..geometry import GeometryError, PlaneLayout

ETA0 = float(np.sqrt(MU0 / EPS0))

ECCOSORB_EPS = 11.107
ECCOSORB_MU = 1.912
ECCOSORB_THICKNESS = 2.2e-3
ALUMINIUM_THICKNESS = 3.0e-3


class GridError(ValueError):
    pass


def absorber_conductivity(
    frequency: float = 6e9,
    thickness: float = ECCOSORB_THICKNESS,
    attenuation_db: float = 20.0,
    eps_r: float = ECCOSORB_EPS,
    mu_r: float = ECCOSORB_MU,
) -> float:
    """Conductivity giving ``attenuation_db`` of field decay in one pass.

    Uses the plane-wave attenuation constant of a lossy medium,
    ``α = ω sqrt(με/2) sqrt(sqrt(1 + (σ/ωε)²) - 1)``.
    """
    w = 2 * np.pi * frequency
    eps, mu = eps_r * EPS0, mu_r * MU0
    target = attenuation_db / 20.0 * np.log(10.0) / thickness

    def alpha(sigma: float) -> float:
        return w * np.sqrt(mu * eps / 2) * np.sqrt(np.sqrt(1 + (sigma / (w * eps)) ** 2) - 1) - target

    return float(brentq(alpha, 1e-6, 1e5, xtol=1e-10))


@dataclass(frozen=True)
class MaterialRegion:
    x0: float
    x1: float
    z0: float
    z1: float
    eps_r: float = 1.0
    mu_r: float = 1.0
    sigma: float = 0.0
    kind: str = "vacuum"  # "vacuum" | "absorber" | "metal"

    def __post_init__(self) -> None:
        if self.x1 <= self.x0 or self.z1 <= self.z0:
            raise GridError("empty material rectangle")
        if self.eps_r < 1 or self.mu_r < 1 or self.sigma < 0:
            raise GridError("need eps_r >= 1, mu_r >= 1, sigma >= 0")
        if self.kind not in ("vacuum", "absorber", "metal"):
            raise GridError(f"unknown material kind {self.kind!r}")

    @property
    def thickness(self) -> float:
        return self.z1 - self.z0


@dataclass(frozen=True)
class SimulationParams:
    # nominally 6 GHz; pinned so that λ is exactly 5 cm and slot edges fall on nodes
    frequency: float = C0 / 0.05
    cells_per_wavelength: int = 20
    box_x: float = 2.0
    box_z: float = 2.5
    pml_cells: int = 10
    pml_order: int = 4
    pml_reflection: float = 1e-6
    courant: float = 0.95
    source_margin: float = 0.25  # source distance from the back edge of the box
    ramp_periods: float = 3.0
    average_periods: int = 8
    settle_periods: int = 10  # residual may not rise above tol over this many periods
    max_periods: int = 200
    residual_tol: float = 1e-4
    absorber_attenuation_db: float = 20.0
    grading_ratio: float = 1.2
    time_step: float | None = None  # None: largest integer fraction of a period under the bound

    def __post_init__(self) -> None:
        if self.cells_per_wavelength < 20:
            raise GridError("need at least 20 cells per wavelength")
        if self.pml_cells < 1:
            raise GridError("need a boundary layer")
        if not 0 < self.courant <= 1:
            raise GridError("courant factor must lie in (0, 1]")
        if (self.average_periods < 1 or self.settle_periods < 2
                or self.max_periods <= max(self.average_periods, self.settle_periods)):
            raise GridError("bad period counts")

    @property
    def wavelength(self) -> float:
        return C0 / self.frequency

    @property
    def omega(self) -> float:
        return 2 * np.pi * self.frequency

    @property
    def period(self) -> float:
        return 1.0 / self.frequency

    @property
    def cell(self) -> float:
        return self.wavelength / self.cells_per_wavelength

    @property
    def absorber_sigma(self) -> float:
        return absorber_conductivity(self.frequency, attenuation_db=self.absorber_attenuation_db)


def laminate_regions(layout: PlaneLayout, plane_z: float, sigma: float,
                     slots: tuple[str, ...] | None = None) -> list[MaterialRegion]:
    """Absorber / aluminium / absorber bars for each slot present."""
    half = ALUMINIUM_THICKNESS / 2
    out = []
    for bar in layout.absorbers():
        if slots is not None and bar.label not in slots:
            continue
        out += [
            MaterialRegion(bar.lo, bar.hi, plane_z - half - ECCOSORB_THICKNESS, plane_z - half,
                           ECCOSORB_EPS, ECCOSORB_MU, sigma, "absorber"),
            MaterialRegion(bar.lo, bar.hi, plane_z - half, plane_z + half, kind="metal"),
            MaterialRegion(bar.lo, bar.hi, plane_z + half, plane_z + half + ECCOSORB_THICKNESS,
                           ECCOSORB_EPS, ECCOSORB_MU, sigma, "absorber"),
        ]
    return out


def graded_axis(length: float, cell: float, layers: list[tuple[float, float, float]], ratio: float,
                min_cells_per_layer: int = 2) -> np.ndarray:
    """Cell edges on ``[0, length]`` resolving each ``(z0, z1, max_cell)`` layer.

    ``layers`` is a sorted, contiguous stack of refined intervals.  Each one
    gets a whole number of equal cells no larger than its ``max_cell``;
    outside, cells grow by ``ratio`` until they reach ``cell``.
    """
    if not layers:
        n = max(1, int(np.ceil(length / cell - 1e-9)))
        return np.linspace(0.0, length, n + 1)
    stack = []
    for z0, z1, hmax in layers:
        n = max(min_cells_per_layer, int(np.ceil((z1 - z0) / hmax - 1e-9)))
        stack.append(np.linspace(z0, z1, n + 1))
    core = np.unique(np.concatenate(stack))
    if core[0] <= 0 or core[-1] >= length:
        raise GridError("refined layers must sit strictly inside the axis")

    def grow(start_h: float, span: float) -> list[float]:
        steps, h, used = [], start_h, 0.0
        while True:
            h = min(h * ratio, cell)
            if h >= cell or used + h > span - cell:
                break
            steps.append(h)
            used += h
        rest = span - used
        n = max(1, int(np.ceil(rest / cell - 1e-9)))
        return steps + [rest / n] * n

    left = grow(core[1] - core[0], core[0])
    right = grow(core[-1] - core[-2], length - core[-1])
    lo = core[0] - np.cumsum(left)[::-1]
    hi = core[-1] + np.cumsum(right)
    edges = np.concatenate([lo, core, hi])
    edges[0] = 0.0
    edges[-1] = length
    return np.unique(np.round(edges, 15))


def _overlap(a0, a1, b0, b1):
    return np.clip(np.minimum(a1, b1) - np.maximum(a0, b0), 0.0, None)


@dataclass
class Grid:
    params: SimulationParams
    x: np.ndarray  # Ey / Hx x positions (nodes), PML included
    ze: np.ndarray  # z cell edges, PML included
    dt: float
    steps_per_period: int
    eps: np.ndarray  # relative, at Ey
    sigma: np.ndarray  # S/m, at Ey
    metal: np.ndarray  # bool, at Ey
    mu_hx: np.ndarray
    mu_hz: np.ndarray
    regions: list[MaterialRegion]
    source_index: tuple[int, int]
    plane_z: float
    n_pml: int
    kinds: np.ndarray = field(repr=False, default=None)  # material code at Ey: 0 vac, 1 abs, 2 metal

    @property
    def zc(self) -> np.ndarray:
        return 0.5 * (self.ze[:-1] + self.ze[1:])

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def dz(self) -> np.ndarray:
        return np.diff(self.ze)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.x), len(self.ze) - 1

    @property
    def source_point(self) -> tuple[float, float]:
        i, j = self.source_index
        return float(self.x[i]), float(self.zc[j])

    def nearest(self, x: float, z: float) -> tuple[int, int]:
        i = int(np.argmin(np.abs(self.x - x)))
        j = int(np.argmin(np.abs(self.zc - z)))
        return i, j

    def interior(self) -> tuple[slice, slice]:
        n = self.n_pml
        return slice(n, len(self.x) - n), slice(n, len(self.ze) - 1 - n)

    def material_map(self) -> np.ndarray:
        return self.kinds


def courant_limit(dx: float, dz_min: float) -> float:
    return 1.0 / (C0 * np.sqrt(1.0 / dx**2 + 1.0 / dz_min**2))


def build_grid(
    params: SimulationParams,
    layout: PlaneLayout | None,
    *,
    slots: tuple[str, ...] | None = None,
    extra_regions: list[MaterialRegion] | None = None,
    source: tuple[float, float] | None = None,
) -> Grid:
    """Discretise the box around ``layout``.

    Only slots named in ``layout.combination`` are built (``slots``
    overrides that).  ``layout=None`` gives an empty box whose plane sits at
    ``source_margin + 1 m``.  ``source`` is in box coordinates (x, z), z
    measured from the back edge; by default it sits on the axis
    ``source_margin`` in from the back.
    """
    p = params
    h = p.cell
    d1 = layout.source_to_plane if layout is not None else 1.0
    plane_z = p.source_margin + d1
    box_z = p.box_z
    if layout is not None:
        box_z = max(box_z, plane_z + layout.plane_to_detector + p.source_margin)
    sigma = p.absorber_sigma
    regions: list[MaterialRegion] = []
    if layout is not None:
        if slots is None:
            slots = tuple(s for s in "ABC" if s in layout.combination)
        regions += laminate_regions(layout, plane_z, sigma, slots)
    regions += list(extra_regions or [])
    for r in regions:
        if r.z0 <= 0 or r.z1 >= box_z:
            raise GeometryError("material region leaves the box")

    # z: refine every material layer that is thinner than a few cells
    layers = []
    for r in sorted(regions, key=lambda r: r.z0):
        if r.thickness < 4 * h:
            hmax = r.thickness / 2
            if r.kind == "absorber":
                inner = p.wavelength / np.sqrt(r.eps_r * r.mu_r)
                hmax = min(hmax, inner / p.cells_per_wavelength)
            layers.append((r.z0, r.z1, hmax))
    merged: list[tuple[float, float, float]] = []
    for z0, z1, hm in layers:
        if merged and abs(merged[-1][0] - z0) < 1e-12 and abs(merged[-1][1] - z1) < 1e-12:
            merged[-1] = (z0, z1, min(hm, merged[-1][2]))
        elif merged and z0 < merged[-1][1] - 1e-12:
            raise GridError("overlapping thin layers are not supported")
        else:
            merged.append((z0, z1, hm))
    ze_box = graded_axis(box_z, h, merged, p.grading_ratio)
    dz = np.diff(ze_box)
    if dz.min() < 1e-6:
        raise GridError("laminate thinner than the minimum refinable cell")
    n = p.pml_cells
    ze = np.concatenate([-h * np.arange(n, 0, -1), ze_box, box_z + h * np.arange(1, n + 1)])

    nx_half = int(round(p.box_x / 2 / h))
    if abs(nx_half * h - p.box_x / 2) > 1e-9:
        raise GridError("box width must be a whole number of cells")
    x = h * np.arange(-nx_half - n, nx_half + n + 1)

    dt_max = courant_limit(h, float(np.diff(ze).min()))
    if p.time_step is not None:
        if p.time_step > dt_max:
            raise GridError(f"time step {p.time_step:.3e} s exceeds the Courant bound {dt_max:.3e} s")
        dt = p.time_step
        spp = p.period / dt
        if abs(spp - round(spp)) > 1e-6:
            raise GridError("time step must divide the period")
        spp = int(round(spp))
    else:
        spp = int(np.ceil(p.period / (p.courant * dt_max)))
        dt = p.period / spp

    nx, nz = len(x), len(ze) - 1
    zc = 0.5 * (ze[:-1] + ze[1:])
    eps = np.ones((nx, nz))
    sig = np.zeros((nx, nz))
    metal = np.zeros((nx, nz), dtype=bool)
    kinds = np.zeros((nx, nz), dtype=np.int8)
    mu_hx = np.ones((nx, nz + 1))
    mu_hz = np.ones((nx - 1, nz))
    # dual areas for averaging
    ex0, ex1 = x - h / 2, x + h / 2
    hz_x0, hz_x1 = x[:-1], x[1:]
    hx_z0 = np.concatenate([[ze[0]], zc])
    hx_z1 = np.concatenate([zc, [ze[-1]]])
    area_e = h * np.diff(ze)[None, :]
    for r in regions:
        fx = _overlap(ex0, ex1, r.x0, r.x1)[:, None]
        fz = _overlap(ze[:-1], ze[1:], r.z0, r.z1)[None, :]
        frac = fx * fz / area_e
        if r.kind == "metal":
            inside_x = (x >= r.x0 - 1e-12) & (x <= r.x1 + 1e-12)
            inside_z = (zc > r.z0) & (zc < r.z1)
            m = inside_x[:, None] & inside_z[None, :]
            metal |= m
            kinds[m] = 2
            continue
        eps += frac * (r.eps_r - 1.0)
        sig += frac * r.sigma
        kinds[(frac > 0.5) & (kinds == 0)] = 1 if r.kind == "absorber" else 0
        fxh = _overlap(ex0, ex1, r.x0, r.x1)[:, None] / h
        fzh = _overlap(hx_z0, hx_z1, r.z0, r.z1)[None, :] / (hx_z1 - hx_z0)[None, :]
        mu_hx += fxh * fzh * (r.mu_r - 1.0)
        fxz = _overlap(hz_x0, hz_x1, r.x0, r.x1)[:, None] / h
        mu_hz += fxz * (fz / np.diff(ze)[None, :]) * (r.mu_r - 1.0)

    if source is None:
        source = (0.0, p.source_margin)
    i_s = int(np.argmin(np.abs(x - source[0])))
    j_s = int(np.argmin(np.abs(zc - source[1])))
    if metal[i_s, j_s] or kinds[i_s, j_s] != 0:
        raise GeometryError("source sits inside a material")
    return Grid(p, x, ze, dt, spp, eps, sig, metal, mu_hx, mu_hz, regions, (i_s, j_s), plane_z, n, kinds)
