"""Measurement runs: ingestion, box statistics, background referencing and κ.

A run at one detector position is fifteen reading series, backgrounds and
slot combinations interleaved as ``BG0, C1, BG1, C2, ..., C7, BG7``.  The
combination order within a run may be shuffled; each combination is
referenced to the mean of the medians of the backgrounds on either side.

Quartiles use linear interpolation between order statistics (numpy's
default).  Outlier fences follow Tukey: a value strictly beyond 1.5 IQR from
the box is a near outlier unless it is also strictly beyond 3 IQR, in which
case it is a far outlier.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geometry import Combination, enumerate_combinations
from .sorkin import (
    SLOT_COMBINATIONS,
    CombinationMeasurement,
    ErrorBudget,
    KappaError,
    NormalizedContributionSet,
    PowerSet,
    kappa_background_referenced,
    propagate_errors,
)

N_SERIES = 15
BG_LABELS = tuple(f"BG{k}" for k in range(8))
COMBO_LABELS = tuple(c.label for c in SLOT_COMBINATIONS)
RUN_HEADER = ("series_index", "label", "reading_index", "timestamp_s", "power_w")
KAPPA_HEADER = ("position_m", "kappa_median", "iqr_lo", "iqr_hi", "sigma_kappa", "n_runs")


class RunFormatError(ValueError):
    pass


@dataclass
class Series:
    label: str
    timestamps: np.ndarray
    powers: np.ndarray

    def __post_init__(self) -> None:
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        self.powers = np.asarray(self.powers, dtype=float)
        if self.powers.size == 0:
            raise RunFormatError(f"series {self.label} is empty")
        if self.timestamps.shape != self.powers.shape:
            raise RunFormatError(f"series {self.label}: timestamps and powers differ in length")
        if np.any(self.powers < 0):
            raise RunFormatError(f"series {self.label} has negative powers")
        if np.any(np.diff(self.timestamps) <= 0):
            raise RunFormatError(f"series {self.label}: timestamps not increasing")

    @property
    def is_background(self) -> bool:
        return self.label.startswith("BG")

    @property
    def median(self) -> float:
        return float(np.median(self.powers))


@dataclass
class MeasurementRun:
    position: float
    series: list[Series]

    def __post_init__(self) -> None:
        if len(self.series) != N_SERIES:
            raise RunFormatError(f"expected {N_SERIES} series, got {len(self.series)}")
        for k, s in enumerate(self.series):
            if k % 2 == 0 and s.label != f"BG{k // 2}":
                raise RunFormatError(f"series {k} should be BG{k // 2}, got {s.label}")
            if k % 2 == 1 and s.label not in COMBO_LABELS:
                raise RunFormatError(f"series {k} should be a slot combination, got {s.label}")
        combos = [s.label for s in self.series[1::2]]
        if sorted(combos) != sorted(COMBO_LABELS):
            raise RunFormatError(f"each combination must appear once, got {combos}")
        for a, b in zip(self.series, self.series[1:]):
            if b.timestamps[0] <= a.timestamps[-1]:
                raise RunFormatError(f"series {b.label} starts before {a.label} ends")

    def index_of(self, combination: Combination | str) -> int:
        label = combination.label if isinstance(combination, Combination) else combination
        for k, s in enumerate(self.series):
            if s.label == label and k % 2 == 1:
                return k
        raise KeyError(f"combination {label} not in run")

    def combination_series(self, combination: Combination | str) -> Series:
        return self.series[self.index_of(combination)]

    @property
    def backgrounds(self) -> list[Series]:
        return self.series[0::2]

    def scaled(self, c: float) -> "MeasurementRun":
        return MeasurementRun(self.position, [Series(s.label, s.timestamps, c * s.powers) for s in self.series])


# -- file format --------------------------------------------------------------


def write_run(run: MeasurementRun, path: str | Path | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["position_m", f"{run.position:.6f}"])
    w.writerow(RUN_HEADER)
    for k, s in enumerate(run.series):
        for n, (t, p) in enumerate(zip(s.timestamps, s.powers)):
            w.writerow([k, s.label, n, f"{t:.6f}", f"{p:.9e}"])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def ingest_run(source: str | Path | io.TextIOBase) -> MeasurementRun:
    """Parse and validate a raw-run CSV (path or open text stream)."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text()
    else:
        text = source.read()
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r]
    if not rows:
        raise RunFormatError("empty file")
    head = rows[0]
    if len(head) != 2 or head[0] != "position_m":
        raise RunFormatError("first line must be 'position_m,<value>'")
    try:
        position = float(head[1])
    except ValueError as exc:
        raise RunFormatError(f"bad position {head[1]!r}") from exc
    if len(rows) < 2 or tuple(rows[1]) != RUN_HEADER:
        raise RunFormatError(f"second line must be the header {','.join(RUN_HEADER)}")
    data: dict[int, dict] = {}
    last_t = -np.inf
    for line_no, r in enumerate(rows[2:], start=3):
        if len(r) != 5:
            raise RunFormatError(f"line {line_no}: expected 5 fields")
        try:
            k, n, t, p = int(r[0]), int(r[2]), float(r[3]), float(r[4])
        except ValueError as exc:
            raise RunFormatError(f"line {line_no}: {exc}") from exc
        if t <= last_t:
            raise RunFormatError(f"line {line_no}: timestamps must increase")
        last_t = t
        if p < 0:
            raise RunFormatError(f"line {line_no}: negative power")
        entry = data.setdefault(k, {"label": r[1], "t": [], "p": [], "n": []})
        if entry["label"] != r[1]:
            raise RunFormatError(f"line {line_no}: label changes within series {k}")
        entry["t"].append(t)
        entry["p"].append(p)
        entry["n"].append(n)
    if sorted(data) != list(range(len(data))):
        raise RunFormatError("series indices must be contiguous from 0")
    series = []
    for k in sorted(data):
        e = data[k]
        if e["n"] != list(range(len(e["n"]))):
            raise RunFormatError(f"series {k}: reading indices must run 0, 1, 2, ...")
        series.append(Series(e["label"], e["t"], e["p"]))
    return MeasurementRun(position, series)


# -- box statistics -----------------------------------------------------------


@dataclass
class BoxStats:
    median: float
    q1: float
    q3: float
    near_outliers: np.ndarray = field(default_factory=lambda: np.empty(0))
    far_outliers: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1

    def fences(self, factor: float) -> tuple[float, float]:
        return self.q1 - factor * self.iqr, self.q3 + factor * self.iqr


def summarize(readings: Iterable[float]) -> BoxStats:
    x = np.asarray(list(readings) if not isinstance(readings, np.ndarray) else readings, dtype=float)
    if x.size == 0:
        raise ValueError("need at least one reading")
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    iqr = q3 - q1
    far = (x < q1 - 3 * iqr) | (x > q3 + 3 * iqr)
    near = ((x < q1 - 1.5 * iqr) | (x > q3 + 1.5 * iqr)) & ~far
    return BoxStats(float(med), float(q1), float(q3), np.sort(x[near]), np.sort(x[far]))


# -- κ from one run -----------------------------------------------------------


@dataclass(frozen=True)
class Background:
    power: float
    sigma: float


def background_for(run: MeasurementRun, combination: Combination | str) -> Background:
    """Mean of the adjacent background medians; σ over the pooled readings."""
    k = run.index_of(combination)
    before, after = run.series[k - 1], run.series[k + 1] if k + 1 < N_SERIES else None
    if after is None or not before.is_background or not after.is_background:
        raise RunFormatError(f"combination at series {k} lacks an adjacent background")
    pooled = np.concatenate([before.powers, after.powers])
    sigma = float(np.std(pooled, ddof=1)) if pooled.size > 1 else 0.0
    return Background(0.5 * (before.median + after.median), sigma)


def run_background(run: MeasurementRun) -> float:
    """Background at this position: median of all background readings."""
    return float(np.median(np.concatenate([s.powers for s in run.backgrounds])))


@dataclass
class RunKappa:
    kappa: float
    sigma: float
    budget: ErrorBudget
    contributions: NormalizedContributionSet


def kappa_from_run(run: MeasurementRun, max_background: float | None = None) -> RunKappa:
    """Background-referenced κ and its first-order error for one run.

    ``max_background`` is the largest background over the detector line;
    without it γ is taken as 1.
    """
    p, p_bg, meas = {}, {}, {}
    for c in SLOT_COMBINATIONS:
        s = run.combination_series(c)
        bg = background_for(run, c)
        if not bg.power > 0:
            raise KappaError(f"zero background next to {c.label}")
        p[c], p_bg[c] = s.median, bg.power
        sd = float(np.std(s.powers, ddof=1)) if s.powers.size > 1 else 0.0
        meas[c] = CombinationMeasurement(bg.power, bg.sigma, s.median, sd)
    here = run_background(run)
    top = here if max_background is None else max_background
    contribs = NormalizedContributionSet.from_powers(p, p_bg, here, top)
    budget = propagate_errors(meas)
    return RunKappa(kappa_background_referenced(contribs), budget.sigma_kappa, budget, contribs)


# -- repeats and convergence ----------------------------------------------------


@dataclass
class KappaEstimate:
    median: float
    q1: float
    q3: float
    sigma_kappa: float
    n_runs: int
    box: BoxStats
    position: float = 0.0

    def __post_init__(self) -> None:
        if self.n_runs < 1:
            raise ValueError("need at least one run")

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1

    @property
    def outliers(self) -> np.ndarray:
        return np.sort(np.concatenate([self.box.near_outliers, self.box.far_outliers]))


def repeat_statistics(kappas: Sequence[float], sigmas: Sequence[float] | None = None,
                      position: float = 0.0) -> KappaEstimate:
    """Median, quartiles and outliers of repeated κ; σ_κ is the median per-run error."""
    k = np.asarray(kappas, dtype=float)
    if k.size < 1:
        raise ValueError("need at least one κ value")
    box = summarize(k)
    sig = float(np.median(sigmas)) if sigmas is not None and len(sigmas) else 0.0
    return KappaEstimate(box.median, box.q1, box.q3, sig, int(k.size), box, position)


def write_kappa_table(estimates: Sequence[KappaEstimate], path: str | Path | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(KAPPA_HEADER)
    for e in estimates:
        w.writerow([f"{e.position:.6f}", f"{e.median:.9e}", f"{e.q1:.9e}", f"{e.q3:.9e}",
                    f"{e.sigma_kappa:.9e}", e.n_runs])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


@dataclass
class ConvergenceCurve:
    sizes: np.ndarray
    std: np.ndarray
    propagated_error: float | None = None

    def crossing(self) -> int | None:
        """Smallest subsample size whose median scatter is below the propagated error."""
        if self.propagated_error is None:
            return None
        below = np.nonzero(self.std < self.propagated_error)[0]
        return int(self.sizes[below[0]]) if below.size else None


def convergence_check(
    pool: Sequence[float],
    sizes: Sequence[int],
    *,
    draws: int = 200,
    seed: int = 0,
    propagated_error: float | None = None,
) -> ConvergenceCurve:
    """Scatter of medians of random subsets (no repeats within a subset)."""
    pool = np.asarray(pool, dtype=float)
    sizes = np.asarray(sizes, dtype=int)
    if np.any(sizes < 1) or np.any(sizes > pool.size):
        raise ValueError(f"subsample sizes must lie in [1, {pool.size}]")
    rng = np.random.default_rng(seed)
    out = []
    for n in sizes:
        meds = [np.median(rng.choice(pool, size=n, replace=False)) for _ in range(draws)]
        out.append(float(np.std(meds)))
    return ConvergenceCurve(sizes, np.array(out), propagated_error)


# -- synthetic data -----------------------------------------------------------


def synthesize_run(
    powers: PowerSet | Mapping[str, float],
    position: float = 0.0,
    *,
    n_readings: int = 3000,
    rel_noise: float = 0.003,
    series_jitter: float = 0.0,
    rng: np.random.Generator | int | None = None,
    shuffle: bool = False,
    dwell_s: float = 45.0,
) -> MeasurementRun:
    """Readings scattered around ideal powers.

    ``rel_noise`` is the per-reading relative fluctuation; ``series_jitter``
    moves the level of each whole series (source drift between sets).
    ``shuffle`` randomises the combination order.
    """
    if isinstance(powers, PowerSet):
        levels = {c.label: powers.p[c] for c in powers.p}
    else:
        levels = {Combination.from_label(k).label: float(v) for k, v in powers.items()}
    rng = np.random.default_rng(rng)
    order = list(COMBO_LABELS)
    if shuffle:
        order = [order[i] for i in rng.permutation(len(order))]
    labels = []
    for k in range(8):
        labels.append(("BG", f"BG{k}"))
        if k < 7:
            labels.append((order[k], order[k]))
    series = []
    t0 = 0.0
    dt = dwell_s / n_readings
    for key, label in labels:
        level = levels[key] * (1.0 + series_jitter * rng.standard_normal())
        p = level * (1.0 + rel_noise * rng.standard_normal(n_readings))
        t = t0 + dt * np.arange(n_readings)
        series.append(Series(label, t, np.clip(p, 0.0, None)))
        t0 = t[-1] + 5.0
    return MeasurementRun(position, series)


def naive_powers(slot_power: Mapping[str, float], background: float = 1.0) -> dict[str, float]:
    """Powers where each slot removes a fixed share and shares add (κ = 0)."""
    out = {"BG": background}
    for c in enumerate_combinations()[1:]:
        out[c.label] = background - sum(slot_power[m] for m in c.members)
    if min(out.values()) < 0:
        raise ValueError("slot shares exceed the background")
    return out
