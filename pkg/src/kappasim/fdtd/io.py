"""Material-map dumps and binary field snapshots."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .grid import Grid

KIND_NAMES = {0: "vacuum", 1: "absorber", 2: "metal"}
MAGIC = "KSNAP1"


def dump_material_map(grid: Grid, path: str | Path, *, skip_vacuum: bool = True) -> int:
    """CSV of ``i,j,x_m,z_m,kind`` per Ey cell; returns the row count."""
    kinds = grid.kinds
    rows = 0
    with open(path, "w") as fh:
        fh.write("i,j,x_m,z_m,kind\n")
        zc = grid.zc
        for i, j in zip(*np.nonzero(kinds != 0 if skip_vacuum else np.ones_like(kinds, dtype=bool))):
            fh.write(f"{i},{j},{grid.x[i]:.6f},{zc[j]:.6f},{KIND_NAMES[int(kinds[i, j])]}\n")
            rows += 1
    return rows


def write_snapshot(path: str | Path, field: np.ndarray, cell: float, step: int) -> None:
    """Raster as a one-line text header followed by little-endian float32 data."""
    field = np.ascontiguousarray(field, dtype="<f4")
    nx, nz = field.shape
    header = f"{MAGIC} nx={nx} nz={nz} cell_m={cell:.9e} step={step}\n".encode()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(field.tobytes())


def read_snapshot(path: str | Path) -> tuple[np.ndarray, dict]:
    with open(path, "rb") as fh:
        header = fh.readline().decode().split()
        if not header or header[0] != MAGIC:
            raise ValueError(f"{path}: not a snapshot file")
        meta = dict(kv.split("=") for kv in header[1:])
        nx, nz = int(meta["nx"]), int(meta["nz"])
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != nx * nz:
        raise ValueError(f"{path}: truncated raster")
    info = {"nx": nx, "nz": nz, "cell_m": float(meta["cell_m"]), "step": int(meta["step"])}
    return data.reshape(nx, nz).copy(), info
