import cmath
import math

import numpy as np
import pytest
from scipy.integrate import quad

from kappasim.geometry import Combination, DetectorLine, GeometryError, build_plane
from kappasim.pathintegral import (
    AmplitudeBreakdown,
    DipoleArray,
    PropagationParams,
    QuadratureError,
    amplitude_breakdown,
    array_factor,
    baffle_sweep,
    classical_amplitude,
    combination_power,
    combination_powers,
    complementary_amplitude,
    distance_sweep,
    hop_amplitude,
    kappa_at,
    kappa_curve_pathintegral,
    kappa_dipole_array,
    kernel,
    nonclassical_amplitude,
    window_truncation_estimate,
)

LAM = 0.05
K = 2 * math.pi / LAM
DEFAULTS = PropagationParams()
LAYOUT = build_plane()
SRC = (0.0, 0.0)
DET_Z = 2.5

# value from an independent prototype implementation of the same model
# (separate code path, 64 Gauss points per wavelength)
KAPPA_CENTER_ORACLE = 0.032393


@pytest.fixture(scope="module")
def line41():
    return DetectorLine.linspace(-0.5, 0.5, 41)


@pytest.fixture(scope="module")
def full_curve(line41):
    return kappa_curve_pathintegral(LAYOUT, line41, DEFAULTS)


def test_kernel_phase_and_decay():
    a = np.array([0.0, 0.0])
    assert kernel(a, np.array([LAM, 0.0]), K) == pytest.approx(LAM**-0.5, rel=1e-12)
    assert kernel(a, np.array([0.0, LAM / 2]), K) == pytest.approx(-(LAM / 2) ** -0.5, rel=1e-12)
    r1 = abs(kernel(a, np.array([0.3, 0.4]), K))
    r2 = abs(kernel(a, np.array([0.6, 0.8]), K))
    assert r2 / r1 == pytest.approx(2**-0.5, rel=1e-12)
    with pytest.raises(ValueError):
        kernel(a, a, K)


def test_params_validation():
    with pytest.raises(QuadratureError):
        PropagationParams(points_per_wavelength=7)
    with pytest.raises(ValueError):
        PropagationParams(wavelength=-1.0)
    with pytest.raises(ValueError):
        PropagationParams(hop_pairs=(("A", "A"),))
    with pytest.raises(GeometryError):
        PropagationParams(effective_slot_width=0.12).check_layout(LAYOUT)
    with pytest.raises(QuadratureError):
        classical_amplitude(SRC, (0.0, DET_Z), LAYOUT, PropagationParams(integration_window=0.1))


def test_same_side_rejected():
    with pytest.raises(GeometryError):
        classical_amplitude(SRC, (0.0, 0.5), LAYOUT, DEFAULTS)
    with pytest.raises(GeometryError):
        combination_powers(SRC, np.array([[0.0, 1.0]]), LAYOUT, DEFAULTS)


def _adaptive_open_integral(src, det, layout, params):
    """scipy.integrate.quad over every open interval, one wavelength at a time."""
    zp = layout.source_to_plane
    c = params.measure
    half = params.window(layout)
    edges = [-half]
    for bar in layout.absorbers(params.effective_slot_width):
        edges += [bar.lo, bar.hi]
    edges.append(half)

    def f(y):
        r1 = math.hypot(y - src[0], zp - src[1])
        r2 = math.hypot(det[0] - y, det[1] - zp)
        return cmath.exp(1j * K * (r1 + r2)) / math.sqrt(r1 * r2)

    total = 0j
    for lo, hi in zip(edges[::2], edges[1::2]):
        cuts = np.append(np.arange(lo, hi, LAM / 2), hi)
        for a, b in zip(cuts[:-1], cuts[1:]):
            if b - a < 1e-15:
                continue
            re = quad(lambda y: f(y).real, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
            im = quad(lambda y: f(y).imag, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
            total += re + 1j * im
    return c * total


@pytest.mark.parametrize("label,x", [("ABC", 0.0), ("AB", 0.13), ("", -0.2), ("C", 0.31)])
def test_classical_amplitude_matches_adaptive_quadrature(label, x):
    lay = LAYOUT.with_combination(Combination.from_label(label))
    prm = PropagationParams(integration_window=2.0)
    got = classical_amplitude(SRC, (x, DET_Z), lay, prm)
    ref = _adaptive_open_integral(SRC, (x, DET_Z), lay, prm)
    assert abs(got - ref) / abs(ref) < 1e-6


def test_classical_amplitude_is_mirror_symmetric():
    a = classical_amplitude(SRC, (0.21, DET_Z), LAYOUT, DEFAULTS)
    b = classical_amplitude(SRC, (-0.21, DET_Z), LAYOUT, DEFAULTS)
    assert abs(a) == pytest.approx(abs(b), rel=1e-12)


@pytest.mark.parametrize("window", [2.0, 5.0, 10.0, 20.0])
def test_free_space_limit_within_truncation_estimate(window):
    lay = LAYOUT.with_combination(Combination())
    prm = PropagationParams(integration_window=window)
    det = (0.1, DET_Z)
    got = classical_amplitude(SRC, det, lay, prm)
    direct = complex(kernel(np.array(SRC), np.array(det), K))
    est = window_truncation_estimate(SRC, det, lay, prm)[0]
    assert abs(got - direct) <= 1.5 * est
    assert est / abs(direct) < 0.2 / math.sqrt(window)


def test_complementarity_equals_open_integral_up_to_truncation():
    prm = PropagationParams(integration_window=10.0)
    for label in ("A", "AB", "ABC"):
        lay = LAYOUT.with_combination(Combination.from_label(label))
        a = classical_amplitude(SRC, (0.05, DET_Z), lay, prm)
        b = complementary_amplitude(SRC, (0.05, DET_Z), lay, prm)
        est = window_truncation_estimate(SRC, (0.05, DET_Z), lay, prm)[0]
        assert abs(a - b) <= 1.5 * est


def _dense_hop(i, j, det, n=600):
    """Tensor trapezoid double integral over the two effective apertures."""
    c = DEFAULTS.measure
    zp = LAYOUT.source_to_plane
    w = DEFAULTS.effective_slot_width
    ci, cj = LAYOUT.slot_centers[i], LAYOUT.slot_centers[j]
    y1 = np.linspace(ci - w / 2, ci + w / 2, n)
    y2 = np.linspace(cj - w / 2, cj + w / 2, n)
    w1 = np.full(n, y1[1] - y1[0])
    w1[[0, -1]] /= 2
    w2 = np.full(n, y2[1] - y2[0])
    w2[[0, -1]] /= 2
    r1 = np.hypot(y1, zp)
    r3 = np.hypot(det[0] - y2, det[1] - zp)
    g = np.abs(y1[:, None] - y2[None, :])
    integrand = (np.exp(1j * K * r1) / np.sqrt(r1))[:, None] * np.exp(1j * K * g) / np.sqrt(g) \
        * (np.exp(1j * K * r3) / np.sqrt(r3))[None, :]
    return c * c * (w1 @ integrand @ w2)


@pytest.mark.parametrize("pair", [("A", "B"), ("A", "C"), ("C", "B")])
def test_hop_matches_dense_double_quadrature(pair):
    det = (0.0, DET_Z)
    got = hop_amplitude(SRC, det, LAYOUT, DEFAULTS, pair)
    ref = _dense_hop("ABC".index(pair[0]), "ABC".index(pair[1]), det)
    assert abs(got - ref) / abs(ref) < 1e-4


def test_nonclassical_is_subleading():
    det = (0.0, DET_Z)
    nc = nonclassical_amplitude(SRC, det, LAYOUT, DEFAULTS)
    ref = -sum(_dense_hop(i, j, det) for i in range(3) for j in range(3) if i != j)
    assert abs(nc - ref) / abs(ref) < 1e-4
    cl = complementary_amplitude(SRC, det, LAYOUT, DEFAULTS)
    assert abs(nc) / abs(cl) < 0.2


def test_hop_pair_symmetry_at_centre():
    det = (0.0, DET_Z)
    ac = hop_amplitude(SRC, det, LAYOUT, DEFAULTS, ("A", "C"))
    ca = hop_amplitude(SRC, det, LAYOUT, DEFAULTS, ("C", "A"))
    assert abs(ac - ca) <= 1e-12 * abs(ac)


def test_hop_pair_additivity():
    det = np.array([[0.0, DET_Z], [0.17, DET_Z]])
    pairs = [("A", "B"), ("B", "A"), ("B", "C"), ("C", "B"), ("A", "C"), ("C", "A")]
    one_by_one = sum(
        nonclassical_amplitude(SRC, det, LAYOUT, PropagationParams(hop_pairs=(p,))) for p in pairs
    )
    assert np.allclose(one_by_one, nonclassical_amplitude(SRC, det, LAYOUT, DEFAULTS), rtol=1e-13)


def test_breakdown_total_is_classical_when_disabled():
    det = np.array([[0.0, DET_Z], [0.3, DET_Z]])
    bd = amplitude_breakdown(SRC, det, LAYOUT, DEFAULTS, include_nonclassical=False)
    assert isinstance(bd, AmplitudeBreakdown)
    for c in bd.total:
        assert np.array_equal(bd.total[c], bd.classical[c])


def test_background_power_is_free_space():
    p = combination_power(SRC, (0.0, DET_Z), LAYOUT.with_combination(Combination()), DEFAULTS)
    assert p == pytest.approx(1.0 / DET_Z, rel=1e-12)


def test_slots_remove_power_at_centre():
    p = combination_powers(SRC, np.array([[0.0, DET_Z]]), LAYOUT, DEFAULTS)
    assert p[Combination.from_label("ABC")][0] < p[Combination()][0]


def test_classical_only_null(line41):
    curve = kappa_curve_pathintegral(LAYOUT, line41, DEFAULTS, include_nonclassical=False)
    assert curve.max_abs <= 1e-10
    assert curve.engine == "pathintegral-classical"


@pytest.mark.parametrize("d1,d2", [(1.0, 1.0), (3.0, 0.7), (1.25, 4.0)])
def test_classical_only_null_other_geometries(d1, d2):
    lay = build_plane(0.08, 0.17, source_to_plane=d1, plane_to_detector=d2)
    line = DetectorLine.linspace(-0.6, 0.6, 13, d2)
    curve = kappa_curve_pathintegral(lay, line, PropagationParams(effective_slot_width=0.06),
                                     include_nonclassical=False)
    assert curve.max_abs <= 1e-10


def test_full_kappa_at_reference_setup(full_curve):
    k = full_curve.center
    assert 5e-3 <= abs(k) <= 0.2
    assert k == pytest.approx(KAPPA_CENTER_ORACLE, rel=1e-3)
    assert full_curve.normalization == pytest.approx(1.0 / DET_Z, rel=1e-12)


def test_kappa_curve_is_mirror_symmetric(full_curve):
    assert np.allclose(full_curve.kappa, full_curve.kappa[::-1], atol=1e-12)


def test_doubling_quadrature_density_changes_little(line41):
    coarse = kappa_curve_pathintegral(LAYOUT, line41, DEFAULTS)
    fine = kappa_curve_pathintegral(LAYOUT, line41, PropagationParams(points_per_wavelength=32))
    rel = np.abs(fine.kappa - coarse.kappa) / np.max(np.abs(fine.kappa))
    assert rel.max() < 0.01


def test_distance_monotone():
    vals = [abs(k) for _, k in distance_sweep(LAYOUT, [1.25, 2.0, 3.0], DEFAULTS)]
    assert vals[0] > vals[1] > vals[2]


LENGTHS = [0.0, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 3.0]


def test_baffle_sweep_monotone(full_curve):
    sweep = baffle_sweep(LAYOUT, LENGTHS, DEFAULTS)
    ks = [k for _, k in sweep]
    assert ks[0] == pytest.approx(abs(full_curve.center), rel=1e-12)
    assert all(b <= a * (1 + 1e-9) for a, b in zip(ks, ks[1:]))
    assert ks[-1] < 0.01 * ks[0]


def test_baffle_sweep_rejects_bad_lengths():
    with pytest.raises(GeometryError):
        baffle_sweep(LAYOUT, [0.0, -0.1])
    with pytest.raises(GeometryError):
        baffle_sweep(LAYOUT, [0.2, 0.1])


def test_block_mode_kills_every_hop():
    k = kappa_at(build_plane(baffle_length=0.01), 0.0, PropagationParams(baffle_model="block"))
    assert abs(k) < 1e-10


def test_source_side_baffles_leave_hops_alone():
    base = kappa_at(LAYOUT, 0.0, DEFAULTS)
    src_side = kappa_at(build_plane(baffle_length=0.5, baffle_side="source"), 0.0, DEFAULTS)
    assert src_side == pytest.approx(base, rel=1e-12)


def test_reroute_mode_runs():
    k = kappa_at(build_plane(baffle_length=0.05), 0.0, PropagationParams(baffle_model="reroute"))
    assert math.isfinite(k) and k != pytest.approx(kappa_at(LAYOUT, 0.0, DEFAULTS))


def test_three_dimensional_kernel_switch():
    prm = PropagationParams(kernel_dim=3)
    line = DetectorLine.linspace(-0.2, 0.2, 5)
    assert kappa_curve_pathintegral(LAYOUT, line, prm, include_nonclassical=False).max_abs < 1e-10
    assert kappa_curve_pathintegral(LAYOUT, line, prm).max_abs > 1e-4


def test_curve_csv_round_trip(tmp_path, full_curve):
    path = tmp_path / "k.csv"
    text = full_curve.to_csv(path)
    assert text.splitlines()[0] == "position_m,angle_deg,kappa,engine,params_hash"
    back = type(full_curve).from_csv(path)
    assert np.allclose(back.kappa, full_curve.kappa, rtol=1e-11)
    assert back.params_hash == full_curve.params_hash


# -- arrays -------------------------------------------------------------------


def test_array_factor_examples():
    assert abs(array_factor(3, LAM / 2, K, 0.0)) == pytest.approx(3.0)
    theta = math.asin((LAM / 3) / (LAM / 2))
    assert abs(array_factor(3, LAM / 2, K, theta)) < 1e-12
    with pytest.raises(ValueError):
        array_factor(0, LAM, K, 0.0)


def test_array_factor_matches_phasor_sum():
    angles = np.linspace(-1.5, 1.5, 301)
    for n, d in [(1, 0.01), (3, 0.025), (7, 0.04)]:
        ref = np.array([sum(cmath.exp(1j * m * K * d * math.sin(a)) for m in range(n)) for a in angles])
        assert np.max(np.abs(array_factor(n, d, K, angles) - ref)) < 1e-12


def test_array_classical_null_and_scale():
    full = kappa_dipole_array()
    classical = kappa_dipole_array(include_nonclassical=False)
    assert classical.max_abs <= 1e-10
    assert 1e-3 <= full.max_abs <= 1e-1


def test_array_reciprocity():
    a = kappa_dipole_array(mode="source")
    b = kappa_dipole_array(mode="receive")
    assert np.max(np.abs(a.kappa - b.kappa)) <= 1e-6


def test_array_geometry_checks():
    arr = DipoleArray.for_wavelength(LAM)
    assert arr.wire_radius == pytest.approx(LAM / 100)
    assert arr.element_length == pytest.approx(LAM / 2)
    assert np.allclose(arr.positions, [-LAM / 2, 0.0, LAM / 2])
    with pytest.raises(GeometryError):
        kappa_dipole_array(arr, distance=0.1)
    with pytest.raises(ValueError):
        kappa_dipole_array(DipoleArray(4, 0.025))
