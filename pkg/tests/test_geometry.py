import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kappasim.geometry import (
    BACKGROUND,
    FULL,
    Combination,
    DetectorLine,
    GeometryError,
    build_plane,
    enumerate_combinations,
    gaussian_beam_gain,
    ground_reflection_budget,
    layout_from_config,
    region_decomposition,
    seven_regions,
)


def test_eight_combinations_in_canonical_order():
    combos = enumerate_combinations()
    assert len(combos) == 8
    assert combos[0] == BACKGROUND
    assert [c.label for c in combos] == ["BG", "A", "B", "C", "AB", "BC", "CA", "ABC"]
    assert len(set(combos)) == 8


@pytest.mark.parametrize("label", ["AB", "BA", "ab", " CA ", "AC"])
def test_label_parsing_is_order_free(label):
    c = Combination.from_label(label)
    assert c.label in ("AB", "CA")


def test_bad_labels():
    with pytest.raises(GeometryError):
        Combination.from_label("AD")
    with pytest.raises(GeometryError):
        Combination.from_label("AA")


def test_mirror_pairs():
    m = {c.label: c.mirrored().label for c in enumerate_combinations()}
    assert m["AB"] == "BC" and m["BC"] == "AB"
    assert m["B"] == "B" and m["ABC"] == "ABC" and m["BG"] == "BG"
    assert m["A"] == "C" and m["CA"] == "CA"


def test_build_plane_defaults():
    lay = build_plane()
    assert lay.slot_centers == (-0.13, 0.0, 0.13)
    assert lay.slot_width == 0.10
    assert lay.baffles == []
    assert lay.source_to_plane == lay.plane_to_detector == 1.25


def test_build_plane_is_pure():
    assert build_plane(0.1, 0.13, FULL, 0.05) == build_plane(0.1, 0.13, FULL, 0.05)


def test_baffles_sit_between_slots():
    lay = build_plane(baffle_length=0.2)
    assert [b.x for b in lay.baffles] == [-0.065, 0.065]
    assert all(b.length == 0.2 and b.side == "detector" for b in lay.baffles)


@pytest.mark.parametrize(
    "kw",
    [dict(w=0.0), dict(w=0.14, d=0.13), dict(baffle_length=-1.0), dict(source_to_plane=0.0),
     dict(baffle_side="left")],
)
def test_build_plane_rejects(kw):
    with pytest.raises(GeometryError):
        build_plane(**kw)


def test_seven_regions():
    regions = seven_regions(build_plane())
    assert len(regions) == 7
    assert [r.kind for r in regions[1::2]] == ["absorber"] * 3
    assert [r.label for r in regions[1::2]] == ["A", "B", "C"]
    assert regions[0].lo == -math.inf and regions[-1].hi == math.inf
    assert all(a.hi == b.lo for a, b in zip(regions, regions[1:]))


def test_five_regions_without_slot_c():
    lay = build_plane().with_combination(Combination.from_label("AB"))
    assert len(region_decomposition(lay)) == 5
    with pytest.raises(GeometryError):
        seven_regions(lay)


@given(
    w=st.floats(0.01, 0.5),
    extra=st.floats(0.001, 0.5),
    labels=st.sampled_from(["A", "B", "C", "AB", "BC", "CA", "ABC"]),
)
def test_regions_tile_the_axis(w, extra, labels):
    lay = build_plane(w, w + extra, Combination.from_label(labels))
    regions = region_decomposition(lay)
    assert len(regions) == 2 * len(labels) + 1
    for a, b in zip(regions, regions[1:]):
        assert a.hi == b.lo
        assert a.kind != b.kind
    finite = [r.width for r in regions[1:-1]]
    assert sum(finite) == pytest.approx(regions[-1].lo - regions[0].hi, rel=1e-12, abs=1e-15)


@given(labels=st.sampled_from(["A", "B", "C", "AB", "BC", "CA", "ABC"]))
def test_mirrored_layout_mirrors_absorbers(labels):
    lay = build_plane(combination=Combination.from_label(labels), baffle_length=0.1)
    mir = lay.mirrored()
    a = sorted((-iv.hi, -iv.lo) for iv in lay.absorbers())
    b = [(iv.lo, iv.hi) for iv in mir.absorbers()]
    assert np.allclose(a, b)
    assert mir.mirrored() == lay


def test_config_round_trip():
    lay = build_plane(0.08, 0.15, Combination.from_label("CA"), 0.3, source_to_plane=2.0)
    assert layout_from_config(lay.to_config()) == lay


def test_detector_line():
    line = DetectorLine.linspace(-0.5, 0.5, 41)
    assert len(line) == 41
    assert line.angular_positions[0] == pytest.approx(-math.degrees(math.atan(0.4)))
    with pytest.raises(GeometryError):
        DetectorLine(())
    with pytest.raises(GeometryError):
        DetectorLine((0.0, 0.0))


def test_ground_bounce_angle():
    gb = ground_reflection_budget(1.75, 1.25)
    assert gb.angle_deg == pytest.approx(54.46, abs=0.01)
    assert gb.path_reflected == pytest.approx(2 * math.hypot(1.75, 1.25))


def test_no_reflection_no_change():
    assert ground_reflection_budget(1.75, 1.25, reflection_coeff=0.0).relative_power == 0.0


def test_ground_bounce_budget_order():
    rel = ground_reflection_budget(1.75, 1.25, gaussian_beam_gain(), 0.10).relative_power
    assert 0.5e-4 <= rel <= 2e-4


def test_ground_bounce_uses_supplied_gain():
    rel = ground_reflection_budget(1.0, 1.0, lambda th: 1.0, 1.0).relative_power
    assert rel == pytest.approx(0.5)


@pytest.mark.parametrize("args", [(0.0, 1.0), (1.0, -1.0)])
def test_ground_bounce_rejects(args):
    with pytest.raises(GeometryError):
        ground_reflection_budget(*args)
    with pytest.raises(GeometryError):
        ground_reflection_budget(1.0, 1.0, reflection_coeff=1.5)


def test_beam_gain_half_power_at_half_width():
    g = gaussian_beam_gain(55.0)
    assert g(0.0) == 1.0
    assert 10 * math.log10(g(27.5)) == pytest.approx(-3.0)
