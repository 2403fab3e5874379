import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kappasim.geometry import Combination, enumerate_combinations
from kappasim.sorkin import (
    SLOT_COMBINATIONS,
    CombinationMeasurement,
    ExtrapolationWarning,
    KappaError,
    NonlinearityError,
    NonlinearityModel,
    NormalizedContributionSet,
    PowerSet,
    dbm_to_watts,
    delta_P,
    error_kappa,
    fit_nonlinearity,
    identity_model,
    kappa_background_referenced,
    kappa_pointwise,
    load_calibration,
    propagate_errors,
    slot_identity_residual,
    synthetic_calibration,
    watts_to_dbm,
)

EXAMPLE = dict(BG=1.0, ABC=0.5, AB=0.2, BC=0.25, CA=0.3, A=0.05, B=0.06, C=0.07)

powers_st = st.lists(st.floats(1e-6, 10.0), min_size=8, max_size=8)


def _set(values, max_bg=1.0):
    return PowerSet({c: v for c, v in zip(enumerate_combinations(), values)}, max_bg)


def test_direct_substitution():
    assert kappa_pointwise(PowerSet.from_labels(EXAMPLE, 1.0)) == pytest.approx(1.07, abs=1e-14)


def test_naive_set_gives_zero():
    a, b, c, bg = 0.1, 0.2, 0.15, 1.0
    p = {"BG": bg, "A": bg - a, "B": bg - b, "C": bg - c, "AB": bg - a - b, "BC": bg - b - c,
         "CA": bg - c - a, "ABC": bg - a - b - c}
    assert kappa_pointwise(PowerSet.from_labels(p, 1.0)) == pytest.approx(0.0, abs=1e-15)


def test_all_equal_is_zero():
    assert kappa_pointwise(_set([0.3] * 8, 1.0)) == pytest.approx(0.0, abs=1e-15)


def test_missing_combination_and_bad_norm():
    with pytest.raises(KappaError):
        PowerSet({Combination(): 1.0}, 1.0)
    with pytest.raises(KappaError):
        PowerSet.from_labels(EXAMPLE, 0.0)
    with pytest.raises(KappaError):
        PowerSet.from_labels({**EXAMPLE, "A": -1.0}, 1.0)


@given(powers_st, st.floats(1e-3, 1e3))
def test_scale_invariance(values, c):
    ps = _set(values, max(values))
    assert kappa_pointwise(ps.scaled(c)) == pytest.approx(kappa_pointwise(ps), rel=1e-9, abs=1e-12)


@given(powers_st)
def test_pointwise_matches_referenced_at_max_background(values):
    ps = _set(values, values[0])
    p = {c: ps[c] for c in SLOT_COMBINATIONS}
    bgs = {c: ps.background for c in SLOT_COMBINATIONS}
    nc = NormalizedContributionSet.from_powers(p, bgs, ps.background, ps.background)
    assert nc.gamma == 1.0
    k1, k2 = kappa_pointwise(ps), kappa_background_referenced(nc)
    assert k2 == pytest.approx(k1, rel=1e-12, abs=1e-12 * max(values) / values[0])


def test_background_referenced_zero_and_scale():
    p = {c: 1.0 for c in SLOT_COMBINATIONS}
    nc = NormalizedContributionSet.from_powers(p, dict(p), 1.0, 1.0)
    assert kappa_background_referenced(nc) == 0.0
    rng = np.random.default_rng(3)
    p = {c: rng.uniform(0.1, 0.9) for c in SLOT_COMBINATIONS}
    bg = {c: rng.uniform(1.0, 1.2) for c in SLOT_COMBINATIONS}
    k1 = kappa_background_referenced(NormalizedContributionSet.from_powers(p, bg, 1.1, 1.2))
    k2 = kappa_background_referenced(NormalizedContributionSet.from_powers(
        {c: 7 * v for c, v in p.items()}, {c: 7 * v for c, v in bg.items()}, 7 * 1.1, 7 * 1.2))
    assert k2 == pytest.approx(k1, rel=1e-12)
    with pytest.raises(KappaError):
        NormalizedContributionSet.from_powers(p, {**bg, Combination.from_label("A"): 0.0}, 1.0, 1.0)


def test_slot_identity_zero_regions():
    assert slot_identity_residual(np.zeros(7)) == 0.0


def test_slot_identity_random_draws():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        E = rng.normal(size=7) + 1j * rng.normal(size=7)
        H = rng.normal(size=7) + 1j * rng.normal(size=7)
        worst = max(worst, slot_identity_residual(E, H, relative=True))
    assert worst <= 1e-12


def test_slot_identity_expansion_oracle():
    # independent signed sum over the eight combinations, |Σ open regions|² each
    rng = np.random.default_rng(7)
    E = rng.normal(size=7) + 1j * rng.normal(size=7)
    blocked = {"A": 1, "B": 3, "C": 5}
    sign = {"BG": 1, "A": -1, "B": -1, "C": -1, "AB": 1, "BC": 1, "CA": 1, "ABC": -1}
    total = 0.0
    for c in enumerate_combinations():
        keep = [r for r in range(7) if r not in {blocked[m] for m in c.members}]
        total += sign[c.label] * abs(E[keep].sum()) ** 2
    assert slot_identity_residual(E) == pytest.approx(total, abs=1e-12)


def test_slot_identity_needs_seven():
    with pytest.raises(KappaError):
        slot_identity_residual(np.ones(6))


def test_delta_p_example():
    assert delta_P(2.0, 0.02, 1.0, 0.01) == pytest.approx(7.0710678e-3, rel=1e-7)


def test_delta_p_matches_monte_carlo():
    rng = np.random.default_rng(11)
    n = 1_000_000
    bg = rng.normal(2.0, 0.02, n)
    p = rng.normal(1.0, 0.01, n)
    mc = np.std((bg - p) / bg)
    assert delta_P(2.0, 0.02, 1.0, 0.01) == pytest.approx(mc, rel=0.02)


def test_zero_sigma_and_quadrature_sum():
    m0 = {c: CombinationMeasurement(1.0, 0.0, 0.5, 0.0) for c in SLOT_COMBINATIONS}
    assert propagate_errors(m0).sigma_kappa == 0.0
    # δP = 1e-3 for each: p_bg = 1, σ_bg = 0, σ = 1e-3
    m1 = {c: CombinationMeasurement(1.0, 0.0, 0.5, 1e-3) for c in SLOT_COMBINATIONS}
    assert propagate_errors(m1).sigma_kappa == pytest.approx(math.sqrt(7) * 1e-3, rel=1e-12)
    with pytest.raises(KappaError):
        delta_P(0.0, 0.1, 1.0, 0.1)


def _mc_sigma_kappa(meas, rng, n=1_000_000):
    k = np.zeros(n)
    signs = {"ABC": 1, "AB": -1, "BC": -1, "CA": -1, "A": 1, "B": 1, "C": 1}
    for c, m in meas.items():
        bg = rng.normal(m.p_bg, m.sigma_bg, n)
        p = rng.normal(m.p, m.sigma, n)
        k += signs[c.label] * (bg - p) / bg
    return float(np.std(k))


@pytest.mark.parametrize("rel", [1e-3, 5e-3, 1e-2])
def test_sigma_kappa_matches_monte_carlo(rel):
    rng = np.random.default_rng(int(rel * 1e4))
    meas = {}
    for c in SLOT_COMBINATIONS:
        bg = rng.uniform(0.8, 1.2)
        p = bg * rng.uniform(0.2, 0.9)
        meas[c] = CombinationMeasurement(bg, rel * bg, p, rel * p)
    assert propagate_errors(meas).sigma_kappa == pytest.approx(_mc_sigma_kappa(meas, rng), rel=0.05)


def test_dbm_conversion():
    assert dbm_to_watts(30.0) == pytest.approx(1.0)
    assert dbm_to_watts(0.0) == pytest.approx(1e-3)
    assert watts_to_dbm(dbm_to_watts(-17.3)) == pytest.approx(-17.3)


def test_identity_calibration():
    x = np.geomspace(1e-7, 1e-3, 9)
    for kind in ("polynomial", "spline"):
        m = fit_nonlinearity(zip(x, x), kind=kind, degree=3)
        grid = np.geomspace(1e-7, 1e-3, 200)
        assert np.allclose(m(grid), grid, rtol=1e-12, atol=0)


def test_spline_interpolates():
    pts = synthetic_calibration(bow=0.08, n=11)
    m = fit_nonlinearity(pts, kind="spline")
    x, y = np.array(pts).T
    assert np.allclose(m(x), y, rtol=1e-12)


def test_quadratic_fit_recovers_coefficients():
    # closed-form least squares on exact quadratic data: the residual is zero,
    # so the fitted coefficients equal the generating ones
    c0, c1, c2 = 0.2, 0.97, 0.004
    x_dbm = np.linspace(-40.0, 0.0, 15)
    y_dbm = c0 + c1 * x_dbm + c2 * x_dbm**2
    pts = list(zip(dbm_to_watts(x_dbm), dbm_to_watts(y_dbm)))
    m = fit_nonlinearity(pts, kind="polynomial", degree=2)
    V = np.vander(x_dbm, 3, increasing=True)
    ref = np.linalg.lstsq(V, y_dbm, rcond=None)[0]
    assert np.allclose(m.coefficients, ref, atol=1e-9)
    assert np.allclose(m.coefficients, [c0, c1, c2], atol=1e-9)


@pytest.mark.parametrize(
    "pts,kw",
    [
        ([(1, 1), (2, 2), (3, 3)], {}),
        ([(1, 1), (3, 2), (2, 3), (4, 4)], {}),
        ([(1, 1), (2, 3), (3, 2), (4, 4)], {}),
        ([(1, 1), (2, 2), (3, 3), (4, 4)], dict(degree=4)),
        ([(1, 1), (2, 2), (3, 3), (4, 4)], dict(kind="lookup")),
    ],
)
def test_fit_rejects(pts, kw):
    with pytest.raises(NonlinearityError):
        fit_nonlinearity(pts, **kw)


def test_load_calibration(tmp_path):
    f = tmp_path / "cal.csv"
    f.write_text("input_dbm,measured_dbm\n-30,-30.1\n-20,-20.05\n-10,-10.0\n0,0.02\n")
    pts = load_calibration(f)
    assert pts[0][0] == pytest.approx(1e-6)
    assert pts[-1][1] == pytest.approx(dbm_to_watts(0.02))


def _naive_sets(n=5):
    rng = np.random.default_rng(5)
    sets = []
    for _ in range(n):
        a, b, c = rng.uniform(0.05, 0.25, 3)
        bg = rng.uniform(0.8, 1.0)
        p = {"BG": bg, "A": bg - a, "B": bg - b, "C": bg - c, "AB": bg - a - b, "BC": bg - b - c,
             "CA": bg - c - a, "ABC": bg - a - b - c}
        sets.append(PowerSet.from_labels(p, 1.0))
    return sets


def test_error_kappa_identity():
    ek = error_kappa(identity_model(1e-6, 1.0), _naive_sets(), np.arange(5.0))
    assert ek.max_abs <= 1e-10


def _engine_sets():
    from kappasim.geometry import DetectorLine, build_plane
    from kappasim.pathintegral import power_sets

    line = DetectorLine.linspace(-0.4, 0.4, 9)
    return power_sets(build_plane(), line, include_nonclassical=False), line.array


def test_naive_shares_are_blind_to_quadratic_distortion():
    # p linear in slot indicators -> p² quadratic -> no third difference
    m = NonlinearityModel.from_function(lambda p: p + 0.1 * p**2, 1e-3, 1.0)
    assert error_kappa(m, _naive_sets(), np.arange(5.0), reference_power_w=1.0).max_abs < 1e-14


def test_error_kappa_linear_in_distortion():
    sets, x = _engine_sets()
    vals = []
    for eps in (1e-3, 1e-2):
        m = NonlinearityModel.from_function(lambda p, e=eps: p + e * p**2, 1e-4, 10.0)
        ek = error_kappa(m, sets, x, reference_power_w=1.0)
        # oracle: apply the map directly and recompute κ
        scale = 1.0 / max(ps.max_bg for ps in sets)
        top = max((scale * s.background) + eps * (scale * s.background) ** 2 for s in sets)
        direct = [
            kappa_pointwise(PowerSet({c: scale * v + eps * (scale * v) ** 2 for c, v in ps.p.items()}, top))
            for ps in sets
        ]
        assert np.allclose(ek.kappa, direct, rtol=1e-9, atol=1e-15)
        vals.append(ek.max_abs)
    assert vals[0] > 1e-6
    assert vals[1] / vals[0] == pytest.approx(10.0, rel=0.02)


def test_error_kappa_flags_extrapolation():
    m = identity_model(1e-6, 1e-3)
    with pytest.warns(ExtrapolationWarning):
        ek = error_kappa(m, _naive_sets(), np.arange(5.0), reference_power_w=1.0)
    assert ek.metadata["extrapolated"]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert not error_kappa(m, _naive_sets(), np.arange(5.0)).metadata["extrapolated"]


def test_error_kappa_length_mismatch():
    with pytest.raises(KappaError):
        error_kappa(identity_model(), _naive_sets(3), [0.0])


@settings(max_examples=30)
@given(st.floats(0.0, 0.1), st.integers(6, 30))
def test_fitted_models_are_monotone(bow, n):
    pts = synthetic_calibration(bow=bow, n=n)
    for kind in ("polynomial", "spline"):
        m = fit_nonlinearity(pts, kind=kind)
        x = np.geomspace(*m.range_w, 300)
        assert np.all(np.diff(m(x)) > 0)
