"""κ algebra for slot experiments, error propagation and detector nonlinearity.

κ for slots is::

    κ = (p_BG - (p_ABC - p_AB - p_BC - p_CA + p_A + p_B + p_C)) / max(p_BG)

and the background-referenced form used on measured data is::

    κ = γ (P_ABC - P_AB - P_BC - P_CA + P_A + P_B + P_C),
    P_α = (p_BGα - p_α) / p_BGα,   γ = p_BG(x_D) / max(p_BG)
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .curve import KappaCurve
from .geometry import BACKGROUND, Combination, enumerate_combinations

# sign of each slot combination inside the numerator bracket
SIGNS: dict[str, int] = {"ABC": 1, "AB": -1, "BC": -1, "CA": -1, "A": 1, "B": 1, "C": 1}
SLOT_COMBINATIONS = [c for c in enumerate_combinations() if not c.is_background]


class KappaError(ValueError):
    pass


class NonlinearityError(ValueError):
    pass


class ExtrapolationWarning(UserWarning):
    pass


def _as_combination(key: Combination | str) -> Combination:
    return key if isinstance(key, Combination) else Combination.from_label(key)


@dataclass
class PowerSet:
    """Detector power for every combination at one position."""

    p: dict[Combination, float]
    max_bg: float

    def __post_init__(self) -> None:
        self.p = {_as_combination(k): float(v) for k, v in self.p.items()}
        missing = [c.label for c in enumerate_combinations() if c not in self.p]
        if missing:
            raise KappaError(f"missing combination(s): {missing}")
        if not self.max_bg > 0:
            raise KappaError(f"max background must be positive, got {self.max_bg}")
        if any(v < 0 for v in self.p.values()):
            raise KappaError("negative power")

    @classmethod
    def from_labels(cls, powers: Mapping[str, float], max_bg: float | None = None) -> "PowerSet":
        p = {Combination.from_label(k): v for k, v in powers.items()}
        if max_bg is None:
            max_bg = p[BACKGROUND]
        return cls(p, max_bg)

    def __getitem__(self, label: Combination | str) -> float:
        return self.p[_as_combination(label)]

    @property
    def background(self) -> float:
        return self.p[BACKGROUND]

    def scaled(self, c: float) -> "PowerSet":
        return PowerSet({k: c * v for k, v in self.p.items()}, c * self.max_bg)

    def mapped(self, fn: Callable[[np.ndarray], np.ndarray], max_bg: float) -> "PowerSet":
        keys = list(self.p)
        vals = np.asarray(fn(np.array([self.p[k] for k in keys])), dtype=float)
        return PowerSet(dict(zip(keys, vals)), max_bg)


def slot_numerator(p: Mapping[Combination, float]) -> float:
    """p_ABC − p_AB − p_BC − p_CA + p_A + p_B + p_C."""
    return sum(SIGNS[c.label] * p[c] for c in SLOT_COMBINATIONS)


def kappa_pointwise(powers: PowerSet) -> float:
    if not powers.max_bg > 0:
        raise KappaError("zero normalization")
    return (powers.background - slot_numerator(powers.p)) / powers.max_bg


# -- background-referenced form ----------------------------------------------


@dataclass
class NormalizedContributionSet:
    P: dict[Combination, float]
    gamma: float
    backgrounds: dict[Combination, float] = field(default_factory=dict)

    @classmethod
    def from_powers(
        cls,
        p: Mapping[Combination | str, float],
        p_bg: Mapping[Combination | str, float],
        background_here: float,
        max_bg: float,
    ) -> "NormalizedContributionSet":
        p = {_as_combination(k): v for k, v in p.items()}
        p_bg = {_as_combination(k): v for k, v in p_bg.items()}
        P = {}
        for c in SLOT_COMBINATIONS:
            if not p_bg[c] > 0:
                raise KappaError(f"zero background for {c.label}")
            P[c] = (p_bg[c] - p[c]) / p_bg[c]
        if not max_bg > 0:
            raise KappaError("zero normalization")
        return cls(P, background_here / max_bg, {c: p_bg[c] for c in SLOT_COMBINATIONS})


def kappa_background_referenced(contribs: NormalizedContributionSet) -> float:
    if any(b <= 0 for b in contribs.backgrounds.values()):
        raise KappaError("zero background")
    return contribs.gamma * sum(SIGNS[c.label] * contribs.P[c] for c in SLOT_COMBINATIONS)


# -- seven-region slot identity ----------------------------------------------

# region index (0-based) blocked by each slot: regions 2, 4, 6 in 1-based numbering
_SLOT_REGION = {"A": 1, "B": 3, "C": 5}


def region_powers(E: Sequence[complex], H: Sequence[complex] | None = None) -> dict[Combination, float]:
    """Poynting-like products of summed region fields for each combination."""
    E = np.asarray(E, dtype=complex)
    if E.shape != (7,):
        raise KappaError("need exactly seven region values")
    H = E if H is None else np.asarray(H, dtype=complex)
    out = {}
    for c in enumerate_combinations():
        keep = np.ones(7, dtype=bool)
        for s in c.members:
            keep[_SLOT_REGION[s]] = False
        out[c] = float(np.real(E[keep].sum() * np.conj(H[keep].sum())))
    return out


def slot_identity_residual(
    E: Sequence[complex], H: Sequence[complex] | None = None, *, relative: bool = False
) -> float:
    """p_BG − (p_A + p_B + p_C − p_AB − p_BC − p_CA + p_ABC) for naive region sums.

    With ``relative=True`` the residual is divided by the largest term.
    """
    p = region_powers(E, H)
    res = p[BACKGROUND] - slot_numerator(p)
    if relative:
        scale = max(abs(v) for v in p.values())
        return abs(res) / scale if scale > 0 else 0.0
    return res


# -- error propagation -------------------------------------------------------


@dataclass(frozen=True)
class CombinationMeasurement:
    p_bg: float
    sigma_bg: float
    p: float
    sigma: float


@dataclass
class ErrorBudget:
    delta_P: dict[Combination, float]
    sigma_kappa: float


def delta_P(p_bg: float, sigma_bg: float, p: float, sigma: float) -> float:
    """First-order error of (p_bg - p)/p_bg with independent inputs."""
    if not p_bg > 0:
        raise KappaError("zero background")
    if sigma_bg < 0 or sigma < 0:
        raise KappaError("negative standard deviation")
    return float(np.hypot(p / p_bg**2 * sigma_bg, sigma / p_bg))


def propagate_errors(meas: Mapping[Combination | str, CombinationMeasurement]) -> ErrorBudget:
    dP = {}
    for key, m in meas.items():
        dP[_as_combination(key)] = delta_P(m.p_bg, m.sigma_bg, m.p, m.sigma)
    return ErrorBudget(dP, float(np.sqrt(sum(v * v for v in dP.values()))))


# -- detector nonlinearity ---------------------------------------------------


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(w):
    return 10.0 * np.log10(np.asarray(w, dtype=float)) + 30.0


@dataclass
class NonlinearityModel:
    """Fitted detector response ``m``: true power (W) -> reported power (W).

    Fits are done in the dBm domain by default, where the response of a
    power probe is close to the identity.
    """

    kind: str
    inputs_w: np.ndarray
    measured_w: np.ndarray
    degree: int | None = None
    domain: str = "db"
    coefficients: np.ndarray | None = None
    _fn: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        if self.domain == "db":
            return dbm_to_watts(self._fn(watts_to_dbm(p)))
        return self._fn(p)

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], lo_w: float, hi_w: float,
                      kind: str = "analytic") -> "NonlinearityModel":
        """Wrap a known response acting on linear watts."""
        x = np.geomspace(lo_w, hi_w, 8)
        return cls(kind, x, np.asarray(fn(x), dtype=float), None, "linear", None, fn)

    @property
    def range_w(self) -> tuple[float, float]:
        return float(self.inputs_w[0]), float(self.inputs_w[-1])

    def in_range(self, p) -> np.ndarray:
        lo, hi = self.range_w
        p = np.asarray(p, dtype=float)
        tol = 1e-12 * hi
        return (p >= lo - tol) & (p <= hi + tol)


def fit_nonlinearity(
    points: Iterable[tuple[float, float]],
    kind: str = "polynomial",
    degree: int = 3,
    domain: str = "db",
) -> NonlinearityModel:
    """Fit a calibration curve of (input W, measured W) pairs.

    ``kind`` is ``"spline"`` (natural cubic interpolant) or ``"polynomial"``
    (least squares of the given degree).
    """
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 4:
        raise NonlinearityError("need at least four calibration points")
    x_w, y_w = pts[:, 0], pts[:, 1]
    if np.any(np.diff(x_w) <= 0):
        raise NonlinearityError("calibration inputs must be strictly increasing")
    if np.any(np.diff(y_w) <= 0):
        raise NonlinearityError("calibration response is not monotone")
    if domain not in ("db", "linear"):
        raise NonlinearityError(f"unknown domain {domain!r}")
    if domain == "db":
        if np.any(x_w <= 0) or np.any(y_w <= 0):
            raise NonlinearityError("dB-domain fit needs positive powers")
        x, y = watts_to_dbm(x_w), watts_to_dbm(y_w)
    else:
        x, y = x_w, y_w

    coeffs = None
    if kind == "spline":
        fn = CubicSpline(x, y, bc_type="natural")
        deg = None
    elif kind == "polynomial":
        if degree >= len(x):
            raise NonlinearityError(f"degree {degree} needs more than {len(x)} points")
        # centre and scale for conditioning, keep coefficients in the raw variable
        poly = np.polynomial.Polynomial.fit(x, y, degree)
        coeffs = poly.convert().coef
        fn = poly
        deg = degree
    else:
        raise NonlinearityError(f"unknown kind {kind!r}")

    model = NonlinearityModel(kind, x_w, y_w, deg, domain, coeffs, fn)
    grid = np.linspace(x[0], x[-1], 2001)
    if np.any(np.diff(fn(grid)) <= 0):
        raise NonlinearityError("fitted response is not monotone over the calibration range")
    return model


def identity_model(lo_w: float = 1e-9, hi_w: float = 1e-3) -> NonlinearityModel:
    x = np.geomspace(lo_w, hi_w, 8)
    return fit_nonlinearity(zip(x, x), kind="polynomial", degree=1)


def load_calibration(path: str | Path) -> list[tuple[float, float]]:
    """Read ``input_dbm,measured_dbm`` rows and convert to watts."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise NonlinearityError(f"{path}: empty calibration file")
    x = dbm_to_watts([float(r["input_dbm"]) for r in rows])
    y = dbm_to_watts([float(r["measured_dbm"]) for r in rows])
    return list(zip(x.tolist(), y.tolist()))


def synthetic_calibration(
    lo_dbm: float = -40.0,
    hi_dbm: float = 0.0,
    n: int = 21,
    bow: float = 0.03,
    noise_db: float = 0.0,
    rng: np.random.Generator | None = None,
) -> list[tuple[float, float]]:
    """Calibration points with a smooth gain bow peaking at ``bow`` mid-range."""
    x_dbm = np.linspace(lo_dbm, hi_dbm, n)
    t = (x_dbm - lo_dbm) / (hi_dbm - lo_dbm)
    y_dbm = x_dbm + 10.0 * np.log10(1.0 + 4.0 * bow * t * (1.0 - t))
    if noise_db:
        rng = rng or np.random.default_rng(0)
        y_dbm = y_dbm + rng.normal(0.0, noise_db, n)
    return list(zip(dbm_to_watts(x_dbm).tolist(), dbm_to_watts(y_dbm).tolist()))


def error_kappa(
    model: NonlinearityModel,
    powers: Sequence[PowerSet],
    positions: Sequence[float],
    *,
    reference_power_w: float | None = None,
    plane_to_detector: float = 1.25,
) -> KappaCurve:
    """κ produced by passing ideal (κ ≈ 0) powers through the detector response.

    Engine powers are in arbitrary units.  By default they are scaled so the
    span of all powers sits centred (in dB) inside the calibrated range;
    ``reference_power_w`` instead pins the brightest background to that
    value.
    """
    if len(powers) != len(positions):
        raise KappaError("one PowerSet per position required")
    max_bg = max(ps.max_bg for ps in powers)
    everything = np.array([v for ps in powers for v in ps.p.values()])
    if reference_power_w is None:
        lo, hi = model.range_w
        positive = everything[everything > 0]
        data_mid = np.sqrt(positive.min() * positive.max())
        scale = float(np.sqrt(lo * hi) / data_mid)
    else:
        scale = reference_power_w / max_bg
    scaled = [ps.scaled(scale) for ps in powers]
    extrapolated = bool(not np.all(model.in_range(everything * scale)))
    if extrapolated:
        warnings.warn("powers fall outside the calibrated range", ExtrapolationWarning, stacklevel=2)
    new_max = float(max(model(ps.background) for ps in scaled))
    kap = [kappa_pointwise(ps.mapped(model, new_max)) for ps in scaled]
    return KappaCurve(
        np.asarray(positions, dtype=float),
        np.asarray(kap),
        new_max,
        engine=f"error-kappa/{model.kind}",
        plane_to_detector=plane_to_detector,
        metadata={"extrapolated": extrapolated, "scale": scale},
    )
