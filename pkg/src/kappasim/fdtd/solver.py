"""Time stepping, steady-state phasor extraction and Poynting sampling."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np
from scipy.constants import epsilon_0 as EPS0, mu_0 as MU0

from .grid import ETA0, Grid


class ConvergenceError(RuntimeError):
    pass


@dataclass
class Coefficients:
    ca_x: np.ndarray
    cb_x: np.ndarray
    ca_z: np.ndarray
    cb_z: np.ndarray
    da_x: np.ndarray  # Hx
    db_x: np.ndarray
    da_z: np.ndarray  # Hz
    db_z: np.ndarray


def pml_profile(depth: np.ndarray, thickness: float, order: int, reflection: float) -> np.ndarray:
    """Polynomial conductivity grading; ``depth`` <= 0 means outside the layer."""
    smax = -(order + 1) * np.log(reflection) / (2 * ETA0 * thickness)
    d = np.clip(depth / thickness, 0.0, 1.0)
    return smax * d**order


def coefficients(grid: Grid) -> Coefficients:
    p = grid.params
    h, dt, n = grid.dx, grid.dt, grid.n_pml
    thick = n * h
    x, ze, zc = grid.x, grid.ze, grid.zc
    x_in0, x_in1 = x[n], x[-1 - n]
    z_in0, z_in1 = ze[n], ze[-1 - n]

    def depth(pos, lo, hi):
        return np.maximum(lo - pos, pos - hi)

    args = (thick, p.pml_order, p.pml_reflection)
    sx_e = pml_profile(depth(x, x_in0, x_in1), *args)
    sx_h = pml_profile(depth(0.5 * (x[:-1] + x[1:]), x_in0, x_in1), *args)
    sz_e = pml_profile(depth(zc, z_in0, z_in1), *args)
    sz_h = pml_profile(depth(ze, z_in0, z_in1), *args)

    eps = EPS0 * grid.eps
    sig = grid.sigma
    s_x = (sig + sx_e[:, None]) * dt / (2 * eps)
    s_z = (sig + sz_e[None, :]) * dt / (2 * eps)
    ca_x, cb_x = (1 - s_x) / (1 + s_x), dt / eps / (1 + s_x)
    ca_z, cb_z = (1 - s_z) / (1 + s_z), dt / eps / (1 + s_z)
    for a in (ca_x, cb_x, ca_z, cb_z):
        a[grid.metal] = 0.0
        # outer walls are perfect conductors behind the layer
        a[0, :] = a[-1, :] = 0.0
        a[:, 0] = a[:, -1] = 0.0

    mux = MU0 * grid.mu_hx
    muz = MU0 * grid.mu_hz
    # matched magnetic loss: sigma_m / mu0 = sigma / eps0
    m_x = sz_h[None, :] * MU0 / EPS0 * dt / (2 * mux)
    m_z = sx_h[:, None] * MU0 / EPS0 * dt / (2 * muz)
    da_x, db_x = (1 - m_x) / (1 + m_x), dt / mux / (1 + m_x)
    da_z, db_z = (1 - m_z) / (1 + m_z), dt / muz / (1 + m_z)
    return Coefficients(ca_x, cb_x, ca_z, cb_z, da_x, db_x, da_z, db_z)


@numba.njit(cache=True, fastmath=False)
def _step_h(eyx, eyz, hx, hz, da_x, db_x, da_z, db_z, dx, dzc):
    nx, nz = eyx.shape
    for i in range(nx):
        for j in range(1, nz):
            dey = (eyx[i, j] + eyz[i, j]) - (eyx[i, j - 1] + eyz[i, j - 1])
            hx[i, j] = da_x[i, j] * hx[i, j] + db_x[i, j] * dey / dzc[j - 1]
    for i in range(nx - 1):
        for j in range(nz):
            dey = (eyx[i + 1, j] + eyz[i + 1, j]) - (eyx[i, j] + eyz[i, j])
            hz[i, j] = da_z[i, j] * hz[i, j] - db_z[i, j] * dey / dx


@numba.njit(cache=True, fastmath=False)
def _step_e(eyx, eyz, hx, hz, ca_x, cb_x, ca_z, cb_z, dx, dz):
    nx, nz = eyx.shape
    for i in range(1, nx - 1):
        for j in range(1, nz - 1):
            eyx[i, j] = ca_x[i, j] * eyx[i, j] - cb_x[i, j] * (hz[i, j] - hz[i - 1, j]) / dx
            eyz[i, j] = ca_z[i, j] * eyz[i, j] + cb_z[i, j] * (hx[i, j + 1] - hx[i, j]) / dz[j]


@numba.njit(cache=True)
def _advance(n_steps, n0, dt, omega, ramp_t, amp,
             eyx, eyz, hx, hz, ca_x, cb_x, ca_z, cb_z, da_x, db_x, da_z, db_z, dx, dz, dzc,
             si, sj, pi, pj, acc_e, acc_hx, acc_hz):
    """Advance ``n_steps`` from step ``n0`` and accumulate demodulation sums."""
    for s in range(n_steps):
        n = n0 + s
        _step_h(eyx, eyz, hx, hz, da_x, db_x, da_z, db_z, dx, dzc)
        th = (n + 0.5) * dt
        rot_h = np.exp(-1j * omega * th)
        for q in range(pi.size):
            i, j = pi[q], pj[q]
            acc_hx[q] += 0.5 * (hx[i, j] + hx[i, j + 1]) * rot_h
            acc_hz[q] += 0.5 * (hz[i - 1, j] + hz[i, j]) * rot_h
        _step_e(eyx, eyz, hx, hz, ca_x, cb_x, ca_z, cb_z, dx, dz)
        t = (n + 1) * dt
        # soft current source; its value is centred at t - dt/2
        ts = t - 0.5 * dt
        r = 1.0
        if ts < ramp_t:
            r = 0.5 * (1.0 - np.cos(np.pi * ts / ramp_t))
        j_src = amp * r * np.sin(omega * ts)
        inj = 0.5 * j_src / (dx * dz[sj])
        eyx[si, sj] -= cb_x[si, sj] * inj
        eyz[si, sj] -= cb_z[si, sj] * inj
        rot_e = np.exp(-1j * omega * t)
        for q in range(pi.size):
            i, j = pi[q], pj[q]
            acc_e[q] += (eyx[i, j] + eyz[i, j]) * rot_e


@numba.njit(cache=True)
def _energy(eyx, eyz, hx, hz, eps, mu_hx, mu_hz, dx, dz, i0, i1, j0, j1):
    w = 0.0
    for i in range(i0, i1):
        for j in range(j0, j1):
            e = eyx[i, j] + eyz[i, j]
            hxa = 0.5 * (hx[i, j] + hx[i, j + 1])
            hza = 0.5 * (hz[i - 1, j] + hz[i, j])
            w += 0.5 * (eps[i, j] * e * e * 8.8541878128e-12
                        + 1.25663706212e-6 * (mu_hx[i, j] * hxa * hxa + mu_hz[i, j] * hza * hza)) * dx * dz[j]
    return w


@dataclass
class FieldSample:
    position: tuple[float, float]
    E: complex
    Hx: complex
    Hz: complex

    @property
    def poynting(self) -> float:
        """|½ Re(E × H*)| for E along y and H in the x-z plane."""
        sx = 0.5 * np.real(self.E * np.conj(self.Hz))
        sz = -0.5 * np.real(self.E * np.conj(self.Hx))
        return float(np.hypot(sx, sz))

    @property
    def H(self) -> complex:
        return complex(np.hypot(abs(self.Hx), abs(self.Hz)))


@dataclass
class SteadyState:
    samples: list[FieldSample]
    residuals: list[float]
    energy: list[float]
    periods: int
    converged: bool
    grid: Grid = field(repr=False)

    @property
    def poynting(self) -> np.ndarray:
        return np.array([s.poynting for s in self.samples])

    @property
    def E(self) -> np.ndarray:
        return np.array([s.E for s in self.samples])

    @property
    def residual(self) -> float:
        return self.residuals[-1]


def _settled(residuals: list[float], p) -> bool:
    if len(residuals) < max(p.average_periods, p.settle_periods):
        return False
    if max(residuals[-p.average_periods:]) >= p.residual_tol:
        return False
    tail = residuals[-p.settle_periods:]
    return all(b <= max(a, p.residual_tol) for a, b in zip(tail, tail[1:]))


def run_to_steady_state(
    grid: Grid,
    probes: Sequence[tuple[float, float]],
    *,
    amplitude: float = 1.0,
    min_periods: int | None = None,
    raise_on_failure: bool = True,
    snapshot: Callable[[int, np.ndarray], None] | None = None,
    snapshot_every: int = 0,
    drive_periods: int | None = None,
) -> SteadyState:
    """Drive the source with a ramped sinusoid until the probe phasors settle.

    Per-period phasors come from two-quadrature demodulation at every probe.
    The residual after each period is the largest change of any probe
    phasor since the previous period, relative to the largest phasor.  Once
    the last ``average_periods`` residuals are below ``residual_tol`` and
    none of the last ``settle_periods`` rose above ``max(previous, tol)``,
    the last ``average_periods`` phasors are averaged.

    ``drive_periods`` switches the source off after that many periods; the
    run then goes on to ``max_periods`` without a convergence check (used to
    watch the field decay).
    """
    p = grid.params
    co = coefficients(grid)
    nx, nz = grid.shape
    eyx = np.zeros((nx, nz))
    eyz = np.zeros((nx, nz))
    hx = np.zeros((nx, nz + 1))
    hz = np.zeros((nx - 1, nz))
    dz = grid.dz
    dzc = np.diff(grid.zc)
    idx = [grid.nearest(x, z) for x, z in probes]
    pi = np.array([i for i, _ in idx], dtype=np.int64)
    pj = np.array([j for _, j in idx], dtype=np.int64)
    if np.any(pi < 1) or np.any(pi > nx - 2):
        raise ValueError("probe outside the grid")
    si, sj = grid.source_index
    spp = grid.steps_per_period
    ramp_t = p.ramp_periods * p.period
    if min_periods is None:
        xs, zs = grid.source_point
        reach = max(np.hypot(x - xs, z - zs) for x, z in probes) / p.wavelength
        min_periods = int(np.ceil(p.ramp_periods + reach)) + p.average_periods + 2
    n_av = p.average_periods
    isl, jsl = grid.interior()

    history_e, history_hx, history_hz = [], [], []
    residuals, energy = [], []
    converged = False
    period = 0
    while period < p.max_periods:
        acc_e = np.zeros(len(idx), dtype=np.complex128)
        acc_hx = np.zeros_like(acc_e)
        acc_hz = np.zeros_like(acc_e)
        amp = amplitude if drive_periods is None or period < drive_periods else 0.0
        _advance(spp, period * spp, grid.dt, p.omega, ramp_t, amp,
                 eyx, eyz, hx, hz, co.ca_x, co.cb_x, co.ca_z, co.cb_z,
                 co.da_x, co.db_x, co.da_z, co.db_z, grid.dx, dz, dzc,
                 si, sj, pi, pj, acc_e, acc_hx, acc_hz)
        period += 1
        history_e.append(acc_e * (2.0 / spp))
        history_hx.append(acc_hx * (2.0 / spp))
        history_hz.append(acc_hz * (2.0 / spp))
        energy.append(_energy(eyx, eyz, hx, hz, grid.eps, grid.mu_hx, grid.mu_hz, grid.dx, dz,
                              isl.start, isl.stop, jsl.start, jsl.stop))
        if not np.isfinite(energy[-1]):
            raise ConvergenceError(f"field blew up after {period} periods")
        if snapshot is not None and snapshot_every and period % snapshot_every == 0:
            snapshot(period * spp, eyx + eyz)
        if len(history_e) >= 2:
            cur, prev = history_e[-1], history_e[-2]
            scale = np.max(np.abs(cur))
            residuals.append(float(np.max(np.abs(cur - prev)) / scale) if scale > 0 else np.inf)
        else:
            residuals.append(np.inf)
        if drive_periods is None and period >= min_periods and _settled(residuals, p):
            converged = True
            break
    if not converged and raise_on_failure:
        raise ConvergenceError(
            f"residual {residuals[-1]:.2e} above {p.residual_tol:.0e} after {period} periods"
        )
    e = np.mean(history_e[-n_av:], axis=0)
    hxm = np.mean(history_hx[-n_av:], axis=0)
    hzm = np.mean(history_hz[-n_av:], axis=0)
    samples = [
        FieldSample((float(grid.x[i]), float(grid.zc[j])), complex(e[q]), complex(hxm[q]), complex(hzm[q]))
        for q, (i, j) in enumerate(idx)
    ]
    return SteadyState(samples, residuals, energy, period, converged, grid)
