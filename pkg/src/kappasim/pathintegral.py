"""Scalar path-integral engine for slot interference.

Amplitudes are built from the 2D free kernel ``exp(ikr)/sqrt(r)``.  Each
time a path touches the slot plane it picks up the measure ``1/sqrt(iλ)``,
which makes the single-crossing integral over an unobstructed plane
reproduce the direct kernel (the composition property), so raw powers are in
consistent, if arbitrary, units.

Slots are absorbing bars in free space.  Their effect is written through
complementarity::

    ψ_S = ψ_free − Σ_{i∈S} a_i − Σ_{i≠j∈S} h_ij

where ``a_i`` is the single-crossing amplitude through the (effective) width
of slot ``i`` and ``h_ij`` is the hop term: a path that touches the plane in
slot ``i``, runs along it to slot ``j`` and leaves for the detector.  With the
hop terms removed the powers are a quadratic form in slot indicators and κ
vanishes identically.
"""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy.special import fresnel

from .curve import KappaCurve, params_hash
from .geometry import (
    SLOT_NAMES,
    Combination,
    DetectorLine,
    GeometryError,
    PlaneLayout,
    enumerate_combinations,
)
from .sorkin import PowerSet, kappa_pointwise, slot_numerator

BAFFLE_MODELS = ("shadow", "reroute", "block")


class QuadratureError(ValueError):
    pass


@dataclass(frozen=True)
class PropagationParams:
    wavelength: float = 0.05
    effective_slot_width: float = 0.07
    points_per_wavelength: int = 16
    # half-width of the integration domain on the plane; None -> outermost
    # slot edge + 25 wavelengths
    integration_window: float | None = None
    # ordered (from, to) slot pairs allowed to hop; None -> all six
    hop_pairs: tuple[tuple[str, str], ...] | None = None
    kernel_dim: int = 2
    baffle_model: str = "shadow"
    hop_side: str = "detector"
    obliquity: bool = False

    def __post_init__(self) -> None:
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        if not self.effective_slot_width > 0:
            raise ValueError("effective slot width must be positive")
        if self.points_per_wavelength < 8:
            raise QuadratureError("need at least 8 quadrature points per wavelength")
        if self.kernel_dim not in (2, 3):
            raise ValueError("kernel_dim must be 2 or 3")
        if self.baffle_model not in BAFFLE_MODELS:
            raise ValueError(f"baffle_model must be one of {BAFFLE_MODELS}")
        if self.hop_pairs is not None:
            pairs = tuple((str(a), str(b)) for a, b in self.hop_pairs)
            for a, b in pairs:
                if a == b or a not in SLOT_NAMES or b not in SLOT_NAMES:
                    raise ValueError(f"bad hop pair {(a, b)}")
            object.__setattr__(self, "hop_pairs", pairs)

    @property
    def k(self) -> float:
        return 2.0 * np.pi / self.wavelength

    @property
    def measure(self) -> complex:
        """Per-touch weight 1/sqrt(iλ)."""
        return 1.0 / np.sqrt(1j * self.wavelength)

    def window(self, layout: PlaneLayout) -> float:
        edge = max(abs(c) for c in layout.slot_centers) + layout.slot_width / 2
        if self.integration_window is None:
            return edge + 25.0 * self.wavelength
        if self.integration_window <= edge:
            raise QuadratureError(
                f"integration window {self.integration_window} m does not clear the slot edge {edge} m"
            )
        return self.integration_window

    def enabled_pairs(self) -> list[tuple[int, int]]:
        names = self.hop_pairs
        if names is None:
            return list(itertools.permutations(range(3), 2))
        return [(SLOT_NAMES.index(a), SLOT_NAMES.index(b)) for a, b in names]

    def check_layout(self, layout: PlaneLayout) -> None:
        if self.effective_slot_width > layout.slot_width + 1e-12:
            raise GeometryError("effective slot width exceeds the physical width")


DEFAULT_PARAMS = PropagationParams()


def kernel_r(r, k: float, dim: int = 2):
    r = np.asarray(r, dtype=float)
    if dim == 2:
        return np.exp(1j * k * r) / np.sqrt(r)
    return np.exp(1j * k * r) / r


def kernel(a, b, k: float, dim: int = 2):
    """Free propagator between points ``a`` and ``b`` (arrays of (x, z))."""
    r = np.hypot(*(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)).T)
    if np.any(r == 0):
        raise ValueError("kernel is singular for coincident points")
    return kernel_r(r, k, dim)


@lru_cache(maxsize=64)
def _gauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def quadrature(lo: float, hi: float, wavelength: float, ppw: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre on panels no longer than one wavelength."""
    if ppw < 8:
        raise QuadratureError("need at least 8 quadrature points per wavelength")
    if hi <= lo:
        return np.empty(0), np.empty(0)
    n_panels = max(1, int(np.ceil((hi - lo) / wavelength - 1e-9)))
    x0, w0 = _gauss(ppw)
    edges = np.linspace(lo, hi, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    x = (mid[:, None] + half[:, None] * x0[None, :]).ravel()
    w = (half[:, None] * w0[None, :]).ravel()
    return x, w


def shadow_factor(v):
    """Field magnitude behind a knife edge, normalised to 1 at grazing (v = 0).

    Equal to sqrt(2) |(1/2 - C(v)) + i (1/2 - S(v))| with the Fresnel
    integrals C, S; decreases monotonically for v >= 0.
    """
    s, c = fresnel(np.asarray(v, dtype=float))
    return np.sqrt(2.0) * np.hypot(0.5 - c, 0.5 - s)


@dataclass
class AmplitudeBreakdown:
    classical: dict[Combination, np.ndarray]
    nonclassical: dict[Combination, np.ndarray]

    @property
    def total(self) -> dict[Combination, np.ndarray]:
        return {c: self.classical[c] + self.nonclassical[c] for c in self.classical}


class _Plane:
    """Quadrature nodes and per-detector amplitudes for one layout geometry."""

    def __init__(
        self,
        source: tuple[float, float],
        detectors: np.ndarray,
        layout: PlaneLayout,
        params: PropagationParams,
    ) -> None:
        params.check_layout(layout)
        self.p = params
        self.layout = layout
        self.zp = layout.source_to_plane
        self.src = np.asarray(source, dtype=float)
        self.det = np.atleast_2d(np.asarray(detectors, dtype=float))
        if not np.all((self.src[1] - self.zp) * (self.det[:, 1] - self.zp) < 0):
            raise GeometryError("source and detector must lie on opposite sides of the plane")
        k, dim = params.k, params.kernel_dim
        w_eff = params.effective_slot_width
        self.nodes = []
        for name in SLOT_NAMES:
            iv = layout.slot_interval(name, w_eff)
            y, w = quadrature(iv.lo, iv.hi, params.wavelength, params.points_per_wavelength)
            r_in = np.hypot(y - self.src[0], self.zp - self.src[1])
            r_out = np.hypot(self.det[:, :1] - y[None, :], self.det[:, 1:] - self.zp)
            self.nodes.append(
                dict(
                    y=y,
                    w=w,
                    k_in=kernel_r(r_in, k, dim),
                    k_out=kernel_r(r_out, k, dim),
                    cos_in=np.abs(self.zp - self.src[1]) / r_in,
                    cos_out=np.abs(self.det[:, 1:] - self.zp) / r_out,
                )
            )

    # single touch through slot i, one value per detector
    def aperture(self, i: int) -> np.ndarray:
        n = self.nodes[i]
        f = n["w"] * n["k_in"]
        if self.p.obliquity:
            return self.p.measure * np.sum(
                f[None, :] * n["k_out"] * 0.5 * (n["cos_in"][None, :] + n["cos_out"]), axis=1
            )
        return self.p.measure * (n["k_out"] @ f)

    def _hop_weight(self, i: int, j: int, y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
        """Kernel along the plane from y1 (slot i) to y2 (slot j), baffles included."""
        p, lay = self.p, self.layout
        k, dim = p.k, p.kernel_dim
        chord = np.abs(y2[None, :] - y1[:, None])
        lo, hi = sorted((lay.slot_centers[i], lay.slot_centers[j]))
        crossing = [b for b in lay.baffles if lo < b.x < hi and b.covers(p.hop_side)]
        if not crossing:
            return kernel_r(chord, k, dim)
        if p.baffle_model == "block":
            return np.zeros_like(chord, dtype=complex)
        if p.baffle_model == "reroute":
            # y1 -> tip -> (tip ->) y2, tips ordered along the direction of travel
            xs = sorted((b.x for b in crossing), reverse=bool(y1.mean() > y2.mean()))
            length = np.zeros_like(chord)
            prev_x = np.broadcast_to(y1[:, None], chord.shape)
            prev_z = 0.0
            for x_tip in xs:
                tip_len = crossing[0].length
                length = length + np.hypot(x_tip - prev_x, tip_len - prev_z)
                prev_x, prev_z = np.full_like(chord, x_tip), tip_len
            length = length + np.hypot(y2[None, :] - prev_x, prev_z)
            return kernel_r(length, k, dim)
        # shadow: knife-edge attenuation of each crossing, chord phase kept
        t = np.ones_like(chord)
        for b in crossing:
            u1 = np.abs(y1[:, None] - b.x)
            u2 = np.abs(y2[None, :] - b.x)
            v = b.length * np.sqrt(k * (1.0 / u1 + 1.0 / u2) / np.pi)
            t = t * shadow_factor(v)
        return kernel_r(chord, k, dim) * t

    def hop(self, i: int, j: int) -> np.ndarray:
        """Two-touch amplitude entering at slot i and leaving from slot j."""
        a, b = self.nodes[i], self.nodes[j]
        g = self._hop_weight(i, j, a["y"], b["y"])
        f_in = a["w"] * a["k_in"]
        if self.p.obliquity:
            f_in = f_in * 0.5 * a["cos_in"]
        inner = (f_in @ g) * b["w"]  # over y1, leaves y2
        k_out = b["k_out"] * (0.5 * b["cos_out"] if self.p.obliquity else 1.0)
        return self.p.measure**2 * (k_out @ inner)

    def free(self) -> np.ndarray:
        k, dim = self.p.k, self.p.kernel_dim
        r = np.hypot(self.det[:, 0] - self.src[0], self.det[:, 1] - self.src[1])
        if dim == 2:
            return kernel_r(r, k, 2)
        return open_region_amplitude(self.src, self.det, _empty(self.layout), self.p)

    def breakdown(self, include_nonclassical: bool = True) -> AmplitudeBreakdown:
        free = self.free()
        a = [self.aperture(i) for i in range(3)]
        pairs = self.p.enabled_pairs() if include_nonclassical else []
        h = {pq: self.hop(*pq) for pq in pairs}
        zero = np.zeros_like(free)
        classical, nonclassical = {}, {}
        for c in enumerate_combinations():
            idx = c.indices
            classical[c] = free - sum((a[i] for i in idx), zero)
            nonclassical[c] = -sum((h[pq] for pq in h if pq[0] in idx and pq[1] in idx), zero)
        return AmplitudeBreakdown(classical, nonclassical)


def _empty(layout: PlaneLayout) -> PlaneLayout:
    return replace(layout, combination=Combination())


def _points(detector) -> np.ndarray:
    return np.atleast_2d(np.asarray(detector, dtype=float))


def open_region_amplitude(source, detector, layout: PlaneLayout, params: PropagationParams) -> np.ndarray:
    """Direct single-touch integral over the open part of the truncated plane."""
    src = np.asarray(source, dtype=float)
    det = _points(detector)
    zp = layout.source_to_plane
    if not np.all((src[1] - zp) * (det[:, 1] - zp) < 0):
        raise GeometryError("source and detector must lie on opposite sides of the plane")
    half = params.window(layout)
    edges = [-half]
    for bar in layout.absorbers(params.effective_slot_width):
        edges += [bar.lo, bar.hi]
    edges.append(half)
    k, dim = params.k, params.kernel_dim
    total = np.zeros(len(det), dtype=complex)
    for lo, hi in zip(edges[::2], edges[1::2]):
        y, w = quadrature(lo, hi, params.wavelength, params.points_per_wavelength)
        r_in = np.hypot(y - src[0], zp - src[1])
        r_out = np.hypot(det[:, :1] - y[None, :], det[:, 1:] - zp)
        total += kernel_r(r_out, k, dim) @ (w * kernel_r(r_in, k, dim))
    return params.measure * total


def window_truncation_estimate(source, detector, layout: PlaneLayout, params: PropagationParams) -> np.ndarray:
    """Leading endpoint term of the truncated plane integral (stationary phase)."""
    src = np.asarray(source, dtype=float)
    det = _points(detector)
    zp = layout.source_to_plane
    half = params.window(layout)
    k = params.k
    est = np.zeros(len(det))
    for y in (-half, half):
        r1 = np.hypot(y - src[0], zp - src[1])
        r2 = np.hypot(det[:, 0] - y, det[:, 1] - zp)
        dphase = k * np.abs((y - src[0]) / r1 + (y - det[:, 0]) / r2)
        est += np.abs(params.measure) / np.sqrt(r1 * r2) / dphase
    return est


def classical_amplitude(source, detector, layout: PlaneLayout, params: PropagationParams = DEFAULT_PARAMS):
    """Single-touch amplitude integrated over the open part of the plane.

    Open regions are cut at ``params.window(layout)``; see
    :func:`window_truncation_estimate` for the size of the error that
    introduces.  :func:`combination_powers` uses the untruncated
    complementary form instead.
    """
    out = open_region_amplitude(source, detector, layout, params)
    return out if np.ndim(detector) > 1 else complex(out[0])


def complementary_amplitude(source, detector, layout: PlaneLayout, params: PropagationParams = DEFAULT_PARAMS):
    """Single-touch amplitude as ψ_free minus the blocked slot apertures."""
    plane = _Plane(source, _points(detector), layout, params)
    out = plane.breakdown(include_nonclassical=False).classical[layout.combination]
    return out if np.ndim(detector) > 1 else complex(out[0])


def nonclassical_amplitude(source, detector, layout: PlaneLayout, params: PropagationParams = DEFAULT_PARAMS):
    """Sum of hop terms between the slots present in ``layout.combination``.

    Returned with the sign it enters ψ with (hops remove amplitude just as
    the single-touch slot terms do).
    """
    plane = _Plane(source, _points(detector), layout, params)
    out = plane.breakdown(include_nonclassical=True).nonclassical[layout.combination]
    return out if np.ndim(detector) > 1 else complex(out[0])


def hop_amplitude(source, detector, layout: PlaneLayout, params: PropagationParams, pair: tuple[str, str]):
    plane = _Plane(source, _points(detector), layout, params)
    out = plane.hop(SLOT_NAMES.index(pair[0]), SLOT_NAMES.index(pair[1]))
    return out if np.ndim(detector) > 1 else complex(out[0])


def amplitude_breakdown(source, detectors, layout: PlaneLayout, params: PropagationParams = DEFAULT_PARAMS,
                        include_nonclassical: bool = True) -> AmplitudeBreakdown:
    return _Plane(source, _points(detectors), layout, params).breakdown(include_nonclassical)


def combination_powers(
    source,
    detectors,
    layout: PlaneLayout,
    params: PropagationParams = DEFAULT_PARAMS,
    include_nonclassical: bool = True,
) -> dict[Combination, np.ndarray]:
    """|ψ|² for all eight combinations at every detector point."""
    bd = amplitude_breakdown(source, detectors, layout, params, include_nonclassical)
    return {c: np.abs(v) ** 2 for c, v in bd.total.items()}


def combination_power(source, detector, layout: PlaneLayout, params: PropagationParams = DEFAULT_PARAMS,
                      include_nonclassical: bool = True) -> float:
    p = combination_powers(source, _points(detector), layout, params, include_nonclassical)
    return float(p[layout.combination][0])


def _detector_points(layout: PlaneLayout, line: DetectorLine) -> np.ndarray:
    z = layout.source_to_plane + layout.plane_to_detector
    x = line.array
    return np.column_stack([x, np.full_like(x, z)])


def power_sets(
    layout: PlaneLayout,
    line: DetectorLine,
    params: PropagationParams = DEFAULT_PARAMS,
    include_nonclassical: bool = True,
    source: tuple[float, float] = (0.0, 0.0),
) -> list[PowerSet]:
    p = combination_powers(source, _detector_points(layout, line), layout, params, include_nonclassical)
    bg = p[Combination()]
    norm = float(bg.max())
    return [PowerSet({c: float(v[n]) for c, v in p.items()}, norm) for n in range(len(line))]


def kappa_curve_pathintegral(
    layout: PlaneLayout,
    line: DetectorLine,
    params: PropagationParams = DEFAULT_PARAMS,
    include_nonclassical: bool = True,
    baffle_length: float | None = None,
    source: tuple[float, float] = (0.0, 0.0),
) -> KappaCurve:
    """κ at every detector position, normalised by the largest background."""
    if baffle_length is not None:
        layout = _with_baffles(layout, baffle_length)
    sets = power_sets(layout, line, params, include_nonclassical, source)
    kap = np.array([kappa_pointwise(ps) for ps in sets])
    meta = {
        "include_nonclassical": include_nonclassical,
        "powers": {c.label: np.array([ps.p[c] for ps in sets]) for c in enumerate_combinations()},
    }
    desc = {
        "params": asdict(params),
        "layout": layout.to_config(params.wavelength),
        "nonclassical": include_nonclassical,
        "source": list(source),
    }
    return KappaCurve(
        line.array,
        kap,
        sets[0].max_bg,
        engine="pathintegral" if include_nonclassical else "pathintegral-classical",
        plane_to_detector=layout.plane_to_detector,
        params_hash=params_hash(desc),
        metadata=meta,
    )


def _with_baffles(layout: PlaneLayout, length: float) -> PlaneLayout:
    if length < 0:
        raise GeometryError("negative baffle length")
    d = layout.pitch
    c = layout.slot_centers[1]
    positions = (c - d / 2, c + d / 2) if length > 0 else ()
    return replace(layout, baffle_length=length, baffle_positions=positions)


def kappa_at(
    layout: PlaneLayout,
    position: float,
    params: PropagationParams = DEFAULT_PARAMS,
    include_nonclassical: bool = True,
    source: tuple[float, float] = (0.0, 0.0),
    normalization: str = "local",
) -> float:
    """κ at one detector position.

    ``normalization="local"`` divides by p_BG at that position, which at the
    centre of a symmetric set-up is also the maximum over the line.
    """
    z = layout.source_to_plane + layout.plane_to_detector
    p = combination_powers(source, np.array([[position, z]]), layout, params, include_nonclassical)
    pv = {c: float(v[0]) for c, v in p.items()}
    if normalization != "local":
        raise ValueError("only local normalization is supported for single points")
    return (pv[Combination()] - slot_numerator(pv)) / pv[Combination()]


def baffle_sweep(
    layout: PlaneLayout,
    lengths: Sequence[float],
    params: PropagationParams = DEFAULT_PARAMS,
    position: float = 0.0,
    include_nonclassical: bool = True,
) -> list[tuple[float, float]]:
    """(L_b, |κ|) at ``position``; p_BG there is the normalisation."""
    lengths = [float(v) for v in lengths]
    if any(v < 0 for v in lengths):
        raise GeometryError("baffle lengths must be non-negative")
    if any(b <= a for a, b in zip(lengths, lengths[1:])):
        raise GeometryError("baffle lengths must be increasing")
    out = []
    for lb in lengths:
        kap = kappa_at(_with_baffles(layout, lb), position, params, include_nonclassical)
        out.append((lb, abs(kap)))
    return out


def distance_sweep(
    layout: PlaneLayout,
    distances: Iterable[float],
    params: PropagationParams = DEFAULT_PARAMS,
    position: float = 0.0,
) -> list[tuple[float, float]]:
    """(source-to-plane distance, κ at ``position``)."""
    return [(d, kappa_at(replace(layout, source_to_plane=d), position, params)) for d in distances]


# -- antenna arrays ----------------------------------------------------------


def array_factor(n_elements: int, spacing: float, k: float, angle):
    """Uniform-excitation array factor Σ_m exp(i m k d sinθ)."""
    if n_elements < 1:
        raise ValueError("need at least one element")
    angle = np.asarray(angle, dtype=float)
    m = np.arange(n_elements).reshape((-1,) + (1,) * angle.ndim)
    return np.sum(np.exp(1j * m * k * spacing * np.sin(angle)), axis=0)


@dataclass(frozen=True)
class DipoleArray:
    """Inline array of vertical half-wave wires seen in the horizontal plane.

    In the 2D picture each element is a point radiator; the wire diameter is
    the patch of plane a hop can land on when it reaches a neighbour.
    """

    n_elements: int = 3
    spacing: float = 0.025
    wire_radius: float = 0.0005
    element_length: float = 0.025

    @classmethod
    def for_wavelength(cls, wavelength: float, spacing_wavelengths: float = 0.5) -> "DipoleArray":
        return cls(3, spacing_wavelengths * wavelength, wavelength / 100.0, wavelength / 2.0)

    @property
    def positions(self) -> np.ndarray:
        n = self.n_elements
        return (np.arange(n) - (n - 1) / 2.0) * self.spacing

    @property
    def extent(self) -> float:
        return (self.n_elements - 1) * self.spacing + 2 * self.wire_radius


@dataclass
class _ArrayAmplitudes:
    direct: list[np.ndarray]
    hops: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)


def _array_amplitudes(arr: DipoleArray, obs: np.ndarray, params: PropagationParams,
                      include_nonclassical: bool, mode: str) -> _ArrayAmplitudes:
    k, dim = params.k, params.kernel_dim
    ex = arr.positions
    n_wire = max(8, params.points_per_wavelength // 2)
    xg, wg = _gauss(n_wire)
    out = _ArrayAmplitudes([])
    for i in range(3):
        out.direct.append(kernel_r(np.hypot(obs[:, 0] - ex[i], obs[:, 1]), k, dim))
    if not include_nonclassical:
        return out
    for i, j in params.enabled_pairs():
        y = ex[j] + arr.wire_radius * xg
        w = arr.wire_radius * wg
        if mode == "source":
            # element i radiates, the path touches wire j, then leaves for obs
            leg1 = kernel_r(np.abs(y - ex[i]), k, dim) * w
            leg2 = kernel_r(np.hypot(obs[:, :1] - y[None, :], obs[:, 1:]), k, dim)
            out.hops[(i, j)] = params.measure * (leg2 @ leg1)
        else:
            # a source at obs, path touches wire j, ends on element i
            legs = kernel_r(np.hypot(y[None, :] - obs[:, :1], obs[:, 1:]), k, dim) * w[None, :]
            out.hops[(i, j)] = params.measure * np.sum(legs * kernel_r(np.abs(ex[i] - y), k, dim)[None, :], axis=1)
    return out


def array_combination_powers(
    arr: DipoleArray,
    observation_x: np.ndarray,
    distance: float,
    params: PropagationParams = DEFAULT_PARAMS,
    include_nonclassical: bool = True,
    mode: str = "source",
) -> dict[Combination, np.ndarray]:
    if arr.n_elements != 3:
        raise ValueError("κ needs exactly three elements")
    if mode not in ("source", "receive"):
        raise ValueError("mode must be 'source' or 'receive'")
    fraunhofer = 2.0 * arr.extent**2 / params.wavelength
    if distance < max(10.0 * params.wavelength, fraunhofer, 10.0 * arr.extent):
        raise GeometryError(f"observation distance {distance} m is in the near field")
    obs = np.column_stack([observation_x, np.full(len(observation_x), distance)])
    amp = _array_amplitudes(arr, obs, params, include_nonclassical, mode)
    out = {}
    for c in enumerate_combinations():
        idx = c.indices
        psi = np.zeros(len(obs), dtype=complex)
        for i in idx:
            psi = psi + amp.direct[i]
        for (i, j), h in amp.hops.items():
            if i in idx and j in idx:
                psi = psi + h
        out[c] = np.abs(psi) ** 2
    return out


def kappa_dipole_array(
    arr: DipoleArray | None = None,
    params: PropagationParams = DEFAULT_PARAMS,
    distance: float | None = None,
    angles_deg: np.ndarray | None = None,
    include_nonclassical: bool = True,
    mode: str = "source",
) -> KappaCurve:
    """Sorkin κ of three radiating elements observed on a far line.

    Elements radiate (or receive, ``mode="receive"``); there is no
    background, so κ is the slit-form third difference normalised by the
    largest all-elements power on the line.
    """
    arr = arr or DipoleArray.for_wavelength(params.wavelength)
    distance = 1e3 * params.wavelength if distance is None else distance
    angles_deg = np.linspace(-60, 60, 121) if angles_deg is None else np.asarray(angles_deg, dtype=float)
    x = distance * np.tan(np.radians(angles_deg))
    p = array_combination_powers(arr, x, distance, params, include_nonclassical, mode)
    full = p[Combination(frozenset("ABC"))]
    third = slot_numerator(p)  # p_∅ is identically zero here
    norm = float(full.max())
    desc = {"array": asdict(arr), "params": asdict(params), "distance": distance, "mode": mode}
    return KappaCurve(
        x,
        third / norm,
        norm,
        engine=f"array-{mode}" + ("" if include_nonclassical else "-classical"),
        plane_to_detector=distance,
        params_hash=params_hash(desc),
        metadata={"angles_deg": angles_deg},
    )
