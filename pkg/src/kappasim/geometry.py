"""Slot-plane layouts, slot combinations, detector lines and ground bounce.

Coordinates: the slot plane lies along ``x``; waves propagate along ``z``
with the source at ``z = 0`` and the plane at ``z = source_to_plane``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

SLOT_NAMES = ("A", "B", "C")

# canonical order used everywhere a combination list is materialised
_CANONICAL = ("", "A", "B", "C", "AB", "BC", "CA", "ABC")


class GeometryError(ValueError):
    """Raised for physically impossible layouts."""


@dataclass(frozen=True)
class Combination:
    """A subset of the slots {A, B, C}; the empty subset is the background."""

    members: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        extra = set(self.members) - set(SLOT_NAMES)
        if extra:
            raise GeometryError(f"unknown slot name(s): {sorted(extra)}")
        object.__setattr__(self, "members", frozenset(self.members))

    @classmethod
    def from_label(cls, label: str) -> "Combination":
        label = label.strip().upper()
        if label in ("", "BG", "NONE", "∅"):
            return cls(frozenset())
        if len(set(label)) != len(label):
            raise GeometryError(f"repeated slot in label {label!r}")
        return cls(frozenset(label))

    @property
    def label(self) -> str:
        """Canonical label: ``BG`` for the empty set, else e.g. ``AB``, ``CA``."""
        if not self.members:
            return "BG"
        for name in _CANONICAL:
            if frozenset(name) == self.members:
                return name
        raise AssertionError("unreachable")

    @property
    def is_background(self) -> bool:
        return not self.members

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(i for i, s in enumerate(SLOT_NAMES) if s in self.members)

    def mirrored(self) -> "Combination":
        """Image under x -> -x (A <-> C)."""
        swap = {"A": "C", "B": "B", "C": "A"}
        return Combination(frozenset(swap[m] for m in self.members))

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, item: object) -> bool:
        return item in self.members

    def __str__(self) -> str:
        return self.label

    def __repr__(self) -> str:
        return f"Combination({self.label})"

    def sort_key(self) -> int:
        return _CANONICAL.index("" if self.is_background else self.label)


def enumerate_combinations() -> list[Combination]:
    """All eight combinations in the order ∅, A, B, C, AB, BC, CA, ABC."""
    return [Combination(frozenset(name)) for name in _CANONICAL]


BACKGROUND = Combination()
FULL = Combination(frozenset(SLOT_NAMES))


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    kind: str = "open"  # "open" | "absorber"
    label: str = ""

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class Baffle:
    """Absorber perpendicular to the plane at ``x``, extending ``length`` along z."""

    x: float
    length: float
    side: str = "detector"  # "detector" | "source" | "both"

    def covers(self, side: str) -> bool:
        return self.side == "both" or self.side == side


@dataclass(frozen=True)
class PlaneLayout:
    slot_width: float = 0.10
    slot_centers: tuple[float, float, float] = (-0.13, 0.0, 0.13)
    slot_height: float = 0.30  # carried for the record; 2D engines ignore it
    combination: Combination = FULL
    baffle_length: float = 0.0
    baffle_positions: tuple[float, ...] = ()
    baffle_side: str = "detector"
    source_to_plane: float = 1.25
    plane_to_detector: float = 1.25

    @property
    def pitch(self) -> float:
        return self.slot_centers[1] - self.slot_centers[0]

    def slot_interval(self, name: str, width: float | None = None) -> Interval:
        w = self.slot_width if width is None else width
        c = self.slot_centers[SLOT_NAMES.index(name)]
        return Interval(c - w / 2, c + w / 2, "absorber", name)

    def absorbers(self, width: float | None = None) -> list[Interval]:
        """Absorber intervals of the slots present, sorted along x."""
        names = [s for s in SLOT_NAMES if s in self.combination]
        return sorted((self.slot_interval(s, width) for s in names), key=lambda iv: iv.lo)

    @property
    def baffles(self) -> list[Baffle]:
        if self.baffle_length <= 0:
            return []
        return [Baffle(x, self.baffle_length, self.baffle_side) for x in self.baffle_positions]

    def with_combination(self, combination: Combination) -> "PlaneLayout":
        return replace(self, combination=combination)

    def mirrored(self) -> "PlaneLayout":
        centers = tuple(sorted(-c for c in self.slot_centers))
        return replace(
            self,
            slot_centers=centers,  # type: ignore[arg-type]
            combination=self.combination.mirrored(),
            baffle_positions=tuple(sorted(-b for b in self.baffle_positions)),
        )

    def to_config(self, wavelength: float = 0.05) -> dict[str, object]:
        """Flat key/value form (see :func:`layout_from_config`)."""
        return {
            "wavelength_m": wavelength,
            "slot_width_m": self.slot_width,
            "slot_pitch_m": self.pitch,
            "src_to_plane_m": self.source_to_plane,
            "plane_to_det_m": self.plane_to_detector,
            "baffle_len_m": self.baffle_length,
            "combination": self.combination.label,
        }


def build_plane(
    w: float = 0.10,
    d: float = 0.13,
    combination: Combination = FULL,
    baffle_length: float = 0.0,
    *,
    source_to_plane: float = 1.25,
    plane_to_detector: float = 1.25,
    baffle_side: str = "detector",
    slot_height: float = 0.30,
) -> PlaneLayout:
    """Three slots of width ``w`` at centres ``-d, 0, d``.

    Baffles sit at the midpoints between adjacent slot centres and exist only
    when ``baffle_length > 0``.  They are assumed flush with the plane.
    """
    if w <= 0:
        raise GeometryError(f"slot width must be positive, got {w}")
    if d <= w:
        raise GeometryError(f"slots overlap: pitch {d} <= width {w}")
    if baffle_length < 0:
        raise GeometryError(f"negative baffle length {baffle_length}")
    if source_to_plane <= 0 or plane_to_detector <= 0:
        raise GeometryError("distances to the plane must be positive")
    if slot_height < 0:
        raise GeometryError("negative slot height")
    if baffle_side not in ("detector", "source", "both"):
        raise GeometryError(f"bad baffle side {baffle_side!r}")
    centers = (-d, 0.0, d)
    baffles = (-d / 2, d / 2) if baffle_length > 0 else ()
    return PlaneLayout(
        slot_width=w,
        slot_centers=centers,
        slot_height=slot_height,
        combination=combination,
        baffle_length=baffle_length,
        baffle_positions=baffles,
        baffle_side=baffle_side,
        source_to_plane=source_to_plane,
        plane_to_detector=plane_to_detector,
    )


def layout_from_config(cfg: dict[str, object]) -> PlaneLayout:
    return build_plane(
        float(cfg.get("slot_width_m", 0.10)),  # type: ignore[arg-type]
        float(cfg.get("slot_pitch_m", 0.13)),  # type: ignore[arg-type]
        Combination.from_label(str(cfg.get("combination", "ABC"))),
        float(cfg.get("baffle_len_m", 0.0)),  # type: ignore[arg-type]
        source_to_plane=float(cfg.get("src_to_plane_m", 1.25)),  # type: ignore[arg-type]
        plane_to_detector=float(cfg.get("plane_to_det_m", 1.25)),  # type: ignore[arg-type]
    )


def region_decomposition(layout: PlaneLayout, width: float | None = None) -> list[Interval]:
    """Partition the x axis into alternating open / absorber intervals.

    With three slots this yields seven regions numbered 1..7 from -x to +x;
    regions 2, 4, 6 are the absorbers and the outer two are half-infinite.
    """
    bars = layout.absorbers(width)
    if not bars:
        raise GeometryError("layout has no slots to decompose around")
    edges = [-math.inf]
    for bar in bars:
        edges += [bar.lo, bar.hi]
    edges.append(math.inf)
    out = []
    for k in range(len(edges) - 1):
        kind = "absorber" if k % 2 == 1 else "open"
        label = bars[k // 2].label if kind == "absorber" else f"open{k // 2 + 1}"
        out.append(Interval(edges[k], edges[k + 1], kind, label))
    return out


def seven_regions(layout: PlaneLayout) -> list[Interval]:
    if len(layout.combination) != 3:
        raise GeometryError("the seven-region split needs all three slots")
    return region_decomposition(layout)


@dataclass(frozen=True)
class DetectorLine:
    positions: tuple[float, ...]
    plane_to_detector: float = 1.25

    def __post_init__(self) -> None:
        p = np.asarray(self.positions, dtype=float)
        if p.size == 0:
            raise GeometryError("detector line is empty")
        if np.any(np.diff(p) <= 0):
            raise GeometryError("detector positions must be strictly increasing")
        object.__setattr__(self, "positions", tuple(float(v) for v in p))

    @classmethod
    def linspace(cls, lo: float, hi: float, n: int, plane_to_detector: float = 1.25) -> "DetectorLine":
        return cls(tuple(np.linspace(lo, hi, n)), plane_to_detector)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.positions)

    @property
    def angular_positions(self) -> np.ndarray:
        """Degrees, as seen from the centre of the slot plane."""
        return np.degrees(np.arctan(self.array / self.plane_to_detector))

    def __len__(self) -> int:
        return len(self.positions)


# -- ground reflection -------------------------------------------------------


@dataclass(frozen=True)
class GroundBounce:
    angle_deg: float
    path_direct: float
    path_reflected: float
    gain: float
    relative_power: float


def gaussian_beam_gain(hpbw_deg: float = 55.0) -> Callable[[float], float]:
    """Relative power gain of a horn main lobe, G_dB = -12 (theta/HPBW)^2.

    The default half-power beam width of 55 degrees is that of a low-gain
    (about 11 dBi) standard horn at 6 GHz.
    """

    def gain(theta_deg: float) -> float:
        return 10.0 ** (-1.2 * (theta_deg / hpbw_deg) ** 2)

    return gain


def ground_reflection_budget(
    antenna_height: float,
    half_separation: float,
    gain_pattern: Callable[[float], float] | None = None,
    reflection_coeff: float = 0.10,
) -> GroundBounce:
    """Power carried by the specular ground bounce relative to the direct beam.

    The ray leaves the source at ``arctan(h / half_separation)`` below the
    line of sight, so both antennas weight it by ``gain_pattern(angle)``.
    ``reflection_coeff`` is the power reflectance of the ground; the extra
    path length enters as the inverse-square spreading ratio.
    """
    if antenna_height <= 0 or half_separation <= 0:
        raise GeometryError("height and separation must be positive")
    if not 0.0 <= reflection_coeff <= 1.0:
        raise GeometryError("reflection coefficient must lie in [0, 1]")
    gain_pattern = gain_pattern or gaussian_beam_gain()
    angle = math.degrees(math.atan2(antenna_height, half_separation))
    direct = 2.0 * half_separation
    reflected = 2.0 * math.hypot(antenna_height, half_separation)
    g = float(gain_pattern(angle))
    rel = reflection_coeff * g * g * (direct / reflected) ** 2
    return GroundBounce(angle, direct, reflected, g, rel)


__all__ = [
    "BACKGROUND",
    "FULL",
    "SLOT_NAMES",
    "Baffle",
    "Combination",
    "DetectorLine",
    "GeometryError",
    "GroundBounce",
    "Interval",
    "PlaneLayout",
    "build_plane",
    "enumerate_combinations",
    "gaussian_beam_gain",
    "ground_reflection_budget",
    "layout_from_config",
    "region_decomposition",
    "seven_regions",
]
