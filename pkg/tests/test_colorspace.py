import io
import math
from importlib import resources

import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chroma_assoc.colorspace import (
    D65,
    D65_4DP,
    LabColor,
    LchColor,
    XyYColor,
    XyzColor,
    delta_e_76,
    in_srgb_gamut,
    lab_to_hex,
    lab_to_lch,
    lab_to_srgb,
    lab_to_xyz,
    lch_to_lab,
    xyy_to_xyz,
    xyz_to_lab,
    xyz_to_xyy,
)
from chroma_assoc.errors import InputValidationError

TABLE_TOLERANCE = 0.01


def _table() -> pd.DataFrame:
    raw = resources.files("chroma_assoc.data").joinpath("uw71.csv").read_bytes()
    return pd.read_csv(io.BytesIO(raw))


def test_uw71_xyy_reproduces_tabulated_lab():
    table = _table()
    assert len(table) == 71
    for row in table.itertuples(index=False):
        Y = 18.419 if int(row.index) == 7 else row.Y  # the table prints 8.419 for this L* = 50 color
        lab = xyz_to_lab(xyy_to_xyz(XyYColor(row.x, row.y, Y)))
        assert abs(lab.L - row.L) < TABLE_TOLERANCE, row.index
        assert abs(lab.a - row.a) < TABLE_TOLERANCE, row.index
        assert abs(lab.b - row.b) < TABLE_TOLERANCE, row.index


def test_four_decimal_white_point_leaves_residual_at_white():
    white = XyYColor(0.31273, 0.32902, 100.0)
    assert abs(xyz_to_lab(xyy_to_xyz(white), D65).b) < 1e-9
    assert abs(xyz_to_lab(xyy_to_xyz(white), D65_4DP).b) > 0.005


def test_black_is_degenerate_but_defined():
    assert xyy_to_xyz(XyYColor(0.31273, 0.32902, 0.0)) == XyzColor(0.0, 0.0, 0.0)
    lab = xyz_to_lab(XyzColor(0.0, 0.0, 0.0))
    assert lab == LabColor(0.0, 0.0, 0.0)
    assert xyz_to_xyy(XyzColor(0.0, 0.0, 0.0)) == XyYColor(D65.x, D65.y, 0.0)


@pytest.mark.parametrize("bad", [(-0.1, 0.3, 10.0), (0.3, 1.2, 10.0), (0.3, 0.3, -1.0)])
def test_xyy_rejects_out_of_range(bad):
    with pytest.raises(InputValidationError):
        XyYColor(*bad)


def test_achromatic_hue_is_zero():
    lch = lab_to_lch(LabColor(50.0, 0.0, 0.0))
    assert lch.C == 0.0
    assert lch.h == 0.0


def test_hue_quadrants():
    assert lab_to_lch(LabColor(50, 10, 0)).h == pytest.approx(0.0)
    assert lab_to_lch(LabColor(50, 0, 10)).h == pytest.approx(90.0)
    assert lab_to_lch(LabColor(50, -10, 0)).h == pytest.approx(180.0)
    assert lab_to_lch(LabColor(50, 0, -10)).h == pytest.approx(270.0)


def test_hex_known_values():
    assert lab_to_hex(LabColor(100.0, 0.0, 0.0)) == ("#FFFFFF", False)
    assert lab_to_hex(LabColor(0.0, 0.0, 0.0)) == ("#000000", False)
    assert lab_to_hex(LabColor(50.0, 0.0, 0.0)) == ("#777777", False)
    assert lab_to_hex(LabColor(50.0, 28.891, -73.589)) == ("#2F6EF6", False)


def test_out_of_gamut_is_clamped_and_flagged():
    saturated = LabColor(50.0, 120.0, 120.0)
    assert not in_srgb_gamut(saturated)
    hex_code, clamped = lab_to_hex(saturated)
    assert clamped
    assert len(hex_code) == 7 and hex_code.startswith("#")
    srgb = lab_to_srgb(saturated)
    assert all(0 <= ch <= 255 for ch in (srgb.r, srgb.g, srgb.b))


labs = st.builds(
    LabColor,
    st.floats(0.0, 100.0, allow_nan=False),
    st.floats(-128.0, 128.0, allow_nan=False),
    st.floats(-128.0, 128.0, allow_nan=False),
)


@given(labs)
def test_lab_xyz_round_trip(lab):
    back = xyz_to_lab(lab_to_xyz(lab))
    assert back.L == pytest.approx(lab.L, abs=1e-6)
    assert back.a == pytest.approx(lab.a, abs=1e-6)
    assert back.b == pytest.approx(lab.b, abs=1e-6)


@given(labs)
def test_lch_round_trip(lab):
    back = lch_to_lab(lab_to_lch(lab))
    assert back.a == pytest.approx(lab.a, abs=1e-9)
    assert back.b == pytest.approx(lab.b, abs=1e-9)


@given(labs, labs, labs)
@settings(max_examples=200)
def test_delta_e_is_a_metric(a, b, c):
    assert delta_e_76(a, a) == 0.0
    assert delta_e_76(a, b) == pytest.approx(delta_e_76(b, a))
    assert delta_e_76(a, b) >= 0.0
    assert delta_e_76(a, c) <= delta_e_76(a, b) + delta_e_76(b, c) + 1e-9


def test_delta_e_is_euclidean():
    assert delta_e_76(LabColor(50, 0, 0), LabColor(53, 4, 0)) == pytest.approx(5.0)


def test_lch_normalizes_hue():
    assert lch_to_lab(LchColor(50.0, 10.0, 360.0)).a == pytest.approx(10.0)
    assert math.isclose(lab_to_lch(lch_to_lab(LchColor(50.0, 10.0, 359.999))).h, 359.999, abs_tol=1e-6)
