"""Command-line front end.

Subcommands::

    kappasim simulate         --config run.toml --out out/
    kappasim analyze          --config run.toml --out out/
    kappasim figure <id>      --config run.toml --out out/
    kappasim validate-config  --config run.toml

Exit codes: 0 success, 2 configuration error, 3 engine error.  Errors are
also written to stderr as a one-line JSON object.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import platform
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .curve import KappaCurve
from .geometry import FULL, DetectorLine, GeometryError, PlaneLayout, build_plane
from .sorkin import KappaError, NonlinearityError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

FIGURES = ("kappa-curve", "distance-sweep", "baffle-sweep", "error-kappa", "array", "fdtd-compare", "convergence")
ENGINES = ("pathintegral", "fdtd", "both")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CampaignConfig:
    engine: str = "pathintegral"
    wavelength_m: float = 0.05
    slot_width_m: float = 0.10
    slot_pitch_m: float = 0.13
    src_to_plane_m: float = 1.25
    plane_to_det_m: float = 1.25
    baffle_len_m: float = 0.0
    baffle_side: str = "detector"
    baffle_model: str = "shadow"
    combination: str = "ABC"
    effective_width_m: float = 0.07
    points_per_wavelength: int = 16
    kernel_dim: int = 2
    detector_min_m: float = -0.5
    detector_max_m: float = 0.5
    detector_points: int = 41
    classical_only: bool = False
    source_distances_m: tuple[float, ...] = (1.25, 2.0, 3.0)
    baffle_lengths_m: tuple[float, ...] = (0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0)
    array_spacing_wavelengths: float = 0.5
    array_distance_wavelengths: float = 1000.0
    fdtd_cells_per_wavelength: int = 20
    fdtd_distance_m: float = 1.0
    fdtd_detector_points: int = 25
    calibration_file: str = ""
    calibration_bow: float = 0.03
    fit_degree: int = 3
    runs_dir: str = ""
    repeats: int = 10
    pool_runs: int = 40
    rel_noise: float = 0.003
    series_jitter: float = 0.0
    readings_per_series: int = 3000
    output_dir: str = "out"
    seed: int = 0

    def layout(self) -> PlaneLayout:
        return build_plane(
            self.slot_width_m,
            self.slot_pitch_m,
            FULL,
            self.baffle_len_m,
            source_to_plane=self.src_to_plane_m,
            plane_to_detector=self.plane_to_det_m,
            baffle_side=self.baffle_side,
        )

    def detector_line(self, plane_to_detector: float | None = None) -> DetectorLine:
        d = self.plane_to_det_m if plane_to_detector is None else plane_to_detector
        return DetectorLine.linspace(self.detector_min_m, self.detector_max_m, self.detector_points, d)

    def propagation(self):
        from .pathintegral import PropagationParams

        return PropagationParams(
            wavelength=self.wavelength_m,
            effective_slot_width=self.effective_width_m,
            points_per_wavelength=self.points_per_wavelength,
            kernel_dim=self.kernel_dim,
            baffle_model=self.baffle_model,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @property
    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


_FIELDS = {f.name: f for f in fields(CampaignConfig)}
_REQUIRED = ("engine",)


def _coerce(name: str, value):
    default = getattr(CampaignConfig, name)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true/false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{name}: expected a list of numbers")
        return tuple(float(v) for v in value)
    if not isinstance(value, str):
        raise ConfigError(f"{name}: expected a string")
    return value


def _validate(cfg: CampaignConfig, base: Path | None) -> None:
    positive = ("wavelength_m", "slot_width_m", "slot_pitch_m", "src_to_plane_m", "plane_to_det_m",
                "effective_width_m", "array_spacing_wavelengths", "array_distance_wavelengths", "fdtd_distance_m")
    for k in positive:
        if not getattr(cfg, k) > 0:
            raise ConfigError(f"{k} must be positive, got {getattr(cfg, k)}")
    if cfg.engine not in ENGINES:
        raise ConfigError(f"engine must be one of {ENGINES}, got {cfg.engine!r}")
    if cfg.baffle_len_m < 0:
        raise ConfigError("baffle_len_m must be non-negative")
    if cfg.slot_pitch_m <= cfg.slot_width_m:
        raise ConfigError("slot_pitch_m must exceed slot_width_m")
    if cfg.effective_width_m > cfg.slot_width_m:
        raise ConfigError("effective_width_m cannot exceed slot_width_m")
    if cfg.detector_points < 1 or cfg.fdtd_detector_points < 1:
        raise ConfigError("detector point counts must be at least 1")
    if cfg.detector_points > 1 and cfg.detector_max_m <= cfg.detector_min_m:
        raise ConfigError("detector_max_m must exceed detector_min_m")
    if cfg.points_per_wavelength < 8:
        raise ConfigError("points_per_wavelength must be at least 8")
    if cfg.fdtd_cells_per_wavelength < 20:
        raise ConfigError("fdtd_cells_per_wavelength must be at least 20")
    if cfg.kernel_dim not in (2, 3):
        raise ConfigError("kernel_dim must be 2 or 3")
    if cfg.baffle_side not in ("detector", "source", "both"):
        raise ConfigError(f"bad baffle_side {cfg.baffle_side!r}")
    if cfg.baffle_model not in ("shadow", "reroute", "block"):
        raise ConfigError(f"bad baffle_model {cfg.baffle_model!r}")
    if cfg.repeats < 1 or cfg.pool_runs < cfg.repeats:
        raise ConfigError("need 1 <= repeats <= pool_runs")
    if cfg.readings_per_series < 2:
        raise ConfigError("readings_per_series must be at least 2")
    if not 0 <= cfg.rel_noise < 0.5 or not 0 <= cfg.series_jitter < 0.5:
        raise ConfigError("noise levels must lie in [0, 0.5)")
    if cfg.seed < 0 or cfg.seed >= 2**64:
        raise ConfigError("seed must fit in an unsigned 64-bit integer")
    if any(v < 0 for v in cfg.baffle_lengths_m) or list(cfg.baffle_lengths_m) != sorted(set(cfg.baffle_lengths_m)):
        raise ConfigError("baffle_lengths_m must be non-negative and increasing")
    if not cfg.source_distances_m or any(v <= 0 for v in cfg.source_distances_m):
        raise ConfigError("source_distances_m must be positive")
    for key in ("calibration_file", "runs_dir"):
        val = getattr(cfg, key)
        if val and not _resolve(val, base).exists():
            raise ConfigError(f"{key}: {val} does not exist")
    try:
        cfg.layout()
    except GeometryError as exc:
        raise ConfigError(str(exc)) from exc


def _resolve(path: str, base: Path | None) -> Path:
    p = Path(path)
    return p if p.is_absolute() or base is None else base / p


def config_from_mapping(data: dict, base: Path | None = None) -> CampaignConfig:
    unknown = sorted(set(data) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}")
    missing = [k for k in _REQUIRED if k not in data]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    values = {k: _coerce(k, v) for k, v in data.items()}
    for key in ("calibration_file", "runs_dir"):
        if values.get(key):
            values[key] = str(_resolve(values[key], base))
    cfg = CampaignConfig(**values)
    _validate(cfg, None)
    return cfg


def parse_config(path: str | Path) -> CampaignConfig:
    """Read a flat TOML campaign file; unknown keys are errors."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"tables are not allowed (found {', '.join(nested)})")
    return config_from_mapping(data, path.parent)


# -- outputs ------------------------------------------------------------------


class Outputs:
    """Collects written files so the manifest can hash them."""

    def __init__(self, out_dir: Path) -> None:
        self.dir = out_dir
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: dict[str, str] = {}

    def text(self, name: str, text: str) -> Path:
        path = self.dir / name
        path.write_text(text)
        self.files[name] = hashlib.sha256(text.encode()).hexdigest()
        return path

    def curve(self, name: str, curve: KappaCurve) -> Path:
        return self.text(name, curve.to_csv())

    def table(self, name: str, header: Sequence[str], rows: Sequence[Sequence[float]], fmt: str = "{:.9e}") -> Path:
        lines = [",".join(header)]
        for r in rows:
            lines.append(",".join(fmt.format(v) if isinstance(v, float) else str(v) for v in r))
        return self.text(name, "\n".join(lines) + "\n")

    def svg(self, name: str, draw: Callable) -> Path:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        with matplotlib.rc_context({"svg.hashsalt": "kappasim", "svg.fonttype": "none"}):
            fig, ax = plt.subplots(figsize=(6, 4))
            draw(ax)
            fig.tight_layout()
            buf = io.StringIO()
            fig.savefig(buf, format="svg", metadata={"Date": None})
            plt.close(fig)
        return self.text(name, buf.getvalue())

    def manifest(self, command: str, cfg: CampaignConfig, extra: dict | None = None) -> Path:
        import numba
        import scipy

        doc = {
            "command": command,
            "config": cfg.to_dict(),
            "config_sha256": cfg.digest,
            "seed": cfg.seed,
            "versions": {
                "kappasim": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "numba": numba.__version__,
            },
            "outputs": dict(sorted(self.files.items())),
        }
        if extra:
            doc["results"] = extra
        text = json.dumps(doc, indent=2, sort_keys=True, default=float) + "\n"
        path = self.dir / "manifest.json"
        path.write_text(text)
        return path


def _plot_curves(curves: Sequence[tuple[str, KappaCurve]], ylabel: str = "κ"):
    def draw(ax):
        for label, c in curves:
            ax.plot(c.angles_deg, c.kappa, marker=".", label=label)
        ax.set_xlabel("detector angle (deg)")
        ax.set_ylabel(ylabel)
        ax.legend()

    return draw


# -- figure runners -------------------------------------------------------------


def _fig_kappa_curve(cfg: CampaignConfig, out: Outputs) -> dict:
    from .pathintegral import kappa_curve_pathintegral

    curve = kappa_curve_pathintegral(cfg.layout(), cfg.detector_line(), cfg.propagation(),
                                     include_nonclassical=not cfg.classical_only)
    out.curve("kappa_curve.csv", curve)
    out.svg("kappa_curve.svg", _plot_curves([(curve.engine, curve)]))
    return {"kappa_center": curve.center, "max_abs_kappa": curve.max_abs}


def _fig_distance_sweep(cfg: CampaignConfig, out: Outputs) -> dict:
    from .pathintegral import kappa_curve_pathintegral

    rows, curves = [], []
    for d in cfg.source_distances_m:
        lay = replace(cfg.layout(), source_to_plane=d)
        c = kappa_curve_pathintegral(lay, cfg.detector_line(), cfg.propagation(),
                                     include_nonclassical=not cfg.classical_only)
        out.curve(f"kappa_curve_src{d:.2f}m.csv", c)
        rows.append((f"{d:.6f}", c.center))
        curves.append((f"source {d:g} m", c))
    out.table("distance_sweep.csv", ("src_to_plane_m", "kappa_center"), rows)
    out.svg("distance_sweep.svg", _plot_curves(curves))
    return {"kappa_center": {r[0]: r[1] for r in rows}}


def _fig_baffle_sweep(cfg: CampaignConfig, out: Outputs) -> dict:
    from .pathintegral import baffle_sweep

    sweep = baffle_sweep(cfg.layout(), cfg.baffle_lengths_m, cfg.propagation(),
                         include_nonclassical=not cfg.classical_only)
    out.table("baffle_sweep.csv", ("baffle_len_m", "abs_kappa"), [(f"{lb:.6f}", k) for lb, k in sweep])

    def draw(ax):
        lb = [max(v[0], 1e-3) for v in sweep]
        ax.loglog(lb, [max(v[1], 1e-18) for v in sweep], marker="o")
        ax.set_xlabel("baffle length (m)")
        ax.set_ylabel("|κ| at centre")

    out.svg("baffle_sweep.svg", draw)
    return {"abs_kappa": [k for _, k in sweep]}


def _fig_error_kappa(cfg: CampaignConfig, out: Outputs) -> dict:
    from .pathintegral import kappa_curve_pathintegral, power_sets
    from .sorkin import error_kappa, fit_nonlinearity, load_calibration, synthetic_calibration

    lay, line, prm = cfg.layout(), cfg.detector_line(), cfg.propagation()
    ideal = power_sets(lay, line, prm, include_nonclassical=False)
    if cfg.calibration_file:
        points = load_calibration(cfg.calibration_file)
    else:
        points = synthetic_calibration(bow=cfg.calibration_bow, rng=np.random.default_rng(cfg.seed))
    full = kappa_curve_pathintegral(lay, line, prm)
    results = {"max_abs_kappa_full": full.max_abs}
    curves = [("path integral", full)]
    for kind in ("polynomial", "spline"):
        model = fit_nonlinearity(points, kind=kind, degree=cfg.fit_degree)
        ek = error_kappa(model, ideal, line.array, plane_to_detector=line.plane_to_detector)
        out.curve(f"error_kappa_{kind}.csv", ek)
        curves.append((f"error κ ({kind})", ek))
        results[f"max_abs_error_kappa_{kind}"] = ek.max_abs
    out.curve("kappa_curve.csv", full)
    out.svg("error_kappa.svg", _plot_curves(curves))
    return results


def _fig_array(cfg: CampaignConfig, out: Outputs) -> dict:
    from .pathintegral import DipoleArray, kappa_dipole_array

    prm = cfg.propagation()
    arr = DipoleArray.for_wavelength(cfg.wavelength_m, cfg.array_spacing_wavelengths)
    z = cfg.array_distance_wavelengths * cfg.wavelength_m
    res = {}
    curves = []
    for mode in ("source", "receive"):
        c = kappa_dipole_array(arr, prm, z, include_nonclassical=not cfg.classical_only, mode=mode)
        out.curve(f"array_{mode}.csv", c)
        curves.append((mode, c))
        res[f"max_abs_kappa_{mode}"] = c.max_abs
    out.svg("array.svg", _plot_curves(curves))
    return res


def _fig_fdtd_compare(cfg: CampaignConfig, out: Outputs) -> dict:
    from .fdtd import SimulationParams, fdtd_layout, kappa_curve_fdtd
    from .pathintegral import kappa_curve_pathintegral

    lay = fdtd_layout(cfg.layout(), cfg.fdtd_distance_m)
    line = DetectorLine.linspace(cfg.detector_min_m, cfg.detector_max_m, cfg.fdtd_detector_points,
                                 cfg.fdtd_distance_m)
    prm = SimulationParams(cells_per_wavelength=cfg.fdtd_cells_per_wavelength)
    fd = kappa_curve_fdtd(prm, lay, line)
    pi = kappa_curve_pathintegral(lay, line, cfg.propagation())
    out.curve("kappa_fdtd.csv", fd)
    out.curve("kappa_pathintegral.csv", pi)
    out.svg("fdtd_compare.svg", _plot_curves([("FDTD", fd), ("path integral", pi)]))
    return {"kappa_center_fdtd": fd.center, "kappa_center_pathintegral": pi.center}


def _fig_convergence(cfg: CampaignConfig, out: Outputs) -> dict:
    from .pathintegral import power_sets
    from .stats import convergence_check, kappa_from_run, synthesize_run

    lay = cfg.layout()
    ps = power_sets(lay, DetectorLine((0.0,), cfg.plane_to_det_m), cfg.propagation(),
                    include_nonclassical=not cfg.classical_only)[0]
    rng = np.random.default_rng(cfg.seed)
    kap, sig = [], []
    for _ in range(cfg.pool_runs):
        run = synthesize_run(ps, 0.0, n_readings=cfg.readings_per_series, rel_noise=cfg.rel_noise,
                             series_jitter=cfg.series_jitter, rng=rng)
        r = kappa_from_run(run)
        kap.append(r.kappa)
        sig.append(r.sigma)
    err = float(np.median(sig))
    sizes = list(range(1, cfg.pool_runs + 1))
    cc = convergence_check(kap, sizes, seed=cfg.seed, propagated_error=err)
    out.table("convergence.csv", ("n", "std_median", "sigma_kappa"),
              [(n, float(s), err) for n, s in zip(cc.sizes, cc.std)])
    out.table("kappa_pool.csv", ("run", "kappa", "sigma_kappa"), [(i, k, s) for i, (k, s) in enumerate(zip(kap, sig))])

    def draw(ax):
        ax.plot(cc.sizes, cc.std, marker=".", label="std of subsample medians")
        ax.axhline(err, color="k", ls="--", label="propagated σ_κ")
        ax.set_xlabel("number of κ values")
        ax.set_ylabel("standard deviation")
        ax.legend()

    out.svg("convergence.svg", draw)
    return {"sigma_kappa": err, "crossing_n": cc.crossing()}


FIGURE_RUNNERS: dict[str, Callable[[CampaignConfig, Outputs], dict]] = {
    "kappa-curve": _fig_kappa_curve,
    "distance-sweep": _fig_distance_sweep,
    "baffle-sweep": _fig_baffle_sweep,
    "error-kappa": _fig_error_kappa,
    "array": _fig_array,
    "fdtd-compare": _fig_fdtd_compare,
    "convergence": _fig_convergence,
}


def run_figure(figure: str, cfg: CampaignConfig, out_dir: str | Path | None = None) -> dict:
    """Write the CSVs, SVG and manifest for one figure id; return its summary."""
    if figure not in FIGURE_RUNNERS:
        raise ConfigError(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}")
    out = Outputs(Path(out_dir or cfg.output_dir))
    res = FIGURE_RUNNERS[figure](cfg, out)
    out.manifest(f"figure {figure}", cfg, res)
    return res


def simulate(cfg: CampaignConfig, out_dir: str | Path | None = None) -> dict:
    out = Outputs(Path(out_dir or cfg.output_dir))
    res: dict = {}
    curves = []
    if cfg.engine in ("pathintegral", "both"):
        from .pathintegral import kappa_curve_pathintegral

        c = kappa_curve_pathintegral(cfg.layout(), cfg.detector_line(), cfg.propagation(),
                                     include_nonclassical=not cfg.classical_only)
        out.curve("kappa_pathintegral.csv", c)
        curves.append(("path integral", c))
        res["kappa_center_pathintegral"] = c.center
    if cfg.engine in ("fdtd", "both"):
        from .fdtd import SimulationParams, kappa_curve_fdtd

        prm = SimulationParams(cells_per_wavelength=cfg.fdtd_cells_per_wavelength)
        c = kappa_curve_fdtd(prm, cfg.layout(), cfg.detector_line())
        out.curve("kappa_fdtd.csv", c)
        curves.append(("FDTD", c))
        res["kappa_center_fdtd"] = c.center
    out.svg("kappa.svg", _plot_curves(curves))
    out.manifest("simulate", cfg, res)
    return res


def analyze(cfg: CampaignConfig, out_dir: str | Path | None = None) -> dict:
    """κ per position from raw-run CSVs in ``runs_dir``."""
    from .stats import ingest_run, kappa_from_run, repeat_statistics, run_background, write_kappa_table

    if not cfg.runs_dir:
        raise ConfigError("analyze needs runs_dir")
    files = sorted(Path(cfg.runs_dir).glob("*.csv"))
    if not files:
        raise ConfigError(f"no run files in {cfg.runs_dir}")
    runs = [ingest_run(f) for f in files]
    top = max(run_background(r) for r in runs)
    by_pos: dict[float, list] = {}
    for r in runs:
        by_pos.setdefault(round(r.position, 9), []).append(kappa_from_run(r, top))
    estimates = [
        repeat_statistics([k.kappa for k in ks], [k.sigma for k in ks], position=pos)
        for pos, ks in sorted(by_pos.items())
    ]
    out = Outputs(Path(out_dir or cfg.output_dir))
    out.text("kappa_runs.csv", write_kappa_table(estimates))
    res = {"positions": len(estimates), "runs": len(runs)}
    out.manifest("analyze", cfg, res)
    return res


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat TOML campaign file")
    common.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="random seed (overrides seed)")
    common.add_argument("--engine", choices=ENGINES, help="engine (overrides engine)")
    common.add_argument("--classical-only", action="store_true", help="drop the non-classical paths")
    parser = argparse.ArgumentParser(prog="kappasim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="κ curve with the configured engine(s)")
    sub.add_parser("analyze", parents=[common], help="κ statistics from raw measurement runs")
    fig = sub.add_parser("figure", parents=[common], help="data and plot for one figure")
    fig.add_argument("figure_id", choices=FIGURES)
    sub.add_parser("validate-config", parents=[common], help="check a config file and print it")
    return parser


def _load(args: argparse.Namespace) -> CampaignConfig:
    if args.config is not None:
        cfg = parse_config(args.config)
    else:
        cfg = config_from_mapping({"engine": args.engine or "pathintegral"})
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.engine is not None:
        over["engine"] = args.engine
    if args.classical_only:
        over["classical_only"] = True
    if args.out is not None:
        over["output_dir"] = str(args.out)
    if over:
        cfg = replace(cfg, **over)
        _validate(cfg, None)
    return cfg


def _fail(kind: str, exc: BaseException, code: int) -> int:
    print(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except ConfigError as exc:
        return _fail("config", exc, 2)
    from .fdtd import ConvergenceError, GridError
    from .pathintegral import QuadratureError

    engine_errors = (ConvergenceError, GridError, QuadratureError, GeometryError, KappaError,
                     NonlinearityError, FloatingPointError)
    try:
        if args.command == "validate-config":
            print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
            res = None
        elif args.command == "simulate":
            res = simulate(cfg)
        elif args.command == "analyze":
            res = analyze(cfg)
        else:
            res = run_figure(args.figure_id, cfg)
    except ConfigError as exc:
        return _fail("config", exc, 2)
    except engine_errors as exc:
        return _fail("engine", exc, 3)
    if res is not None:
        print(json.dumps(res, sort_keys=True, default=float))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
