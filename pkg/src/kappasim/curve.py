"""The κ-versus-position result shared by every engine."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CSV_COLUMNS = ("position_m", "angle_deg", "kappa", "engine", "params_hash")


def params_hash(params: dict) -> str:
    """Short stable digest of a JSON-serialisable parameter dict."""
    blob = json.dumps(params, sort_keys=True, default=repr).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class KappaCurve:
    positions: np.ndarray
    kappa: np.ndarray
    normalization: float
    engine: str
    plane_to_detector: float = 1.25
    params_hash: str = ""
    sigma: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.positions = np.asarray(self.positions, dtype=float)
        self.kappa = np.asarray(self.kappa, dtype=float)
        if self.positions.shape != self.kappa.shape:
            raise ValueError("positions and kappa differ in length")
        if not self.normalization > 0:
            raise ValueError(f"normalization must be positive, got {self.normalization}")
        if not np.all(np.isfinite(self.kappa)):
            raise ValueError("non-finite kappa")

    @property
    def angles_deg(self) -> np.ndarray:
        return np.degrees(np.arctan(self.positions / self.plane_to_detector))

    def at(self, position: float) -> float:
        """Value at the sample closest to ``position``."""
        return float(self.kappa[np.argmin(np.abs(self.positions - position))])

    @property
    def center(self) -> float:
        return self.at(0.0)

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.kappa)))

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for x, a, k in zip(self.positions, self.angles_deg, self.kappa):
            w.writerow([f"{x:.6f}", f"{a:.6f}", f"{k:.12e}", self.engine, self.params_hash])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path: str | Path, plane_to_detector: float = 1.25) -> "KappaCurve":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: no rows")
        return cls(
            positions=np.array([float(r["position_m"]) for r in rows]),
            kappa=np.array([float(r["kappa"]) for r in rows]),
            normalization=1.0,
            engine=rows[0]["engine"],
            plane_to_detector=plane_to_detector,
            params_hash=rows[0]["params_hash"],
        )
