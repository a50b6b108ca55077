"""
Color conversions among CIE 1931 xyY, CIE XYZ, CIELAB, cylindrical LCh and 8-bit sRGB hex.

Tristimulus values use the 0-100 scale throughout. All functions are pure and
operate on frozen dataclasses, so they are safe to call from any thread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from chroma_assoc.errors import InputValidationError

# CIELAB transfer function constants
_DELTA = 6.0 / 29.0
_DELTA_SQ = _DELTA * _DELTA
_DELTA_CUBE = _DELTA_SQ * _DELTA
_OFFSET = 4.0 / 29.0

# Chroma at or below this is treated as achromatic (hue fixed at 0)
ACHROMATIC_EPSILON = 1e-12

# Linear channels within this distance of [0, 1] are not reported as clamped
GAMUT_TOLERANCE = 1e-6

# IEC 61966-2-1 linear sRGB -> XYZ (D65), as tabulated by Lindbloom.
# The inverse is computed rather than typed so the pair is exactly consistent.
_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XYZ_TO_SRGB = np.linalg.inv(_SRGB_TO_XYZ)
_SRGB_WHITE = _SRGB_TO_XYZ @ np.ones(3)


@dataclass(frozen=True)
class XyYColor:
    """CIE 1931 chromaticity (x, y) plus luminance Y on the 0-100 scale."""

    x: float
    y: float
    Y: float

    def __post_init__(self) -> None:
        if self.x < 0 or self.y < 0 or self.Y < 0 or self.x + self.y > 1.0 + 1e-12:
            raise InputValidationError(f"Invalid xyY color: {self}")


@dataclass(frozen=True)
class XyzColor:
    X: float
    Y: float
    Z: float


@dataclass(frozen=True)
class LabColor:
    L: float
    a: float
    b: float


@dataclass(frozen=True)
class LchColor:
    """Cylindrical CIELAB. h is in degrees, [0, 360); achromatic colors have h = 0."""

    L: float
    C: float
    h: float


@dataclass(frozen=True)
class SrgbColor:
    r: int
    g: int
    b: int
    clamped: bool = False

    @property
    def hex(self) -> str:
        return f"#{self.r:02X}{self.g:02X}{self.b:02X}"


@dataclass(frozen=True)
class WhitePoint:
    x: float
    y: float
    Y: float = 100.0

    @property
    def xyz(self) -> XyzColor:
        return xyy_to_xyz(XyYColor(self.x, self.y, self.Y))


# D65 at the chromaticity carried by the neutral rows of the UW-71 table.
# The four-decimal value leaves a ~0.013 b* residual at the white row.
D65 = WhitePoint(0.31273, 0.32902, 100.0)
D65_4DP = WhitePoint(0.3127, 0.3290, 100.0)


def xyy_to_xyz(c: XyYColor) -> XyzColor:
    """xyY -> XYZ. y == 0 is degenerate and maps to black."""
    if c.y == 0:
        return XyzColor(0.0, 0.0, 0.0)
    scale = c.Y / c.y
    return XyzColor(c.x * scale, c.Y, (1.0 - c.x - c.y) * scale)


def xyz_to_xyy(c: XyzColor, w: WhitePoint = D65) -> XyYColor:
    """XYZ -> xyY. Black takes the white point's chromaticity with Y = 0."""
    total = c.X + c.Y + c.Z
    if total == 0:
        return XyYColor(w.x, w.y, 0.0)
    return XyYColor(c.X / total, c.Y / total, c.Y)


def _f(t: float) -> float:
    if t > _DELTA_CUBE:
        return t ** (1.0 / 3.0)
    return t / (3.0 * _DELTA_SQ) + _OFFSET


def _f_inv(u: float) -> float:
    if u > _DELTA:
        return u * u * u
    return 3.0 * _DELTA_SQ * (u - _OFFSET)


def xyz_to_lab(c: XyzColor, w: WhitePoint = D65) -> LabColor:
    if w.Y <= 0:
        raise InputValidationError("White point luminance must be positive")
    wn = w.xyz
    fx = _f(c.X / wn.X)
    fy = _f(c.Y / wn.Y)
    fz = _f(c.Z / wn.Z)
    return LabColor(116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz))


def lab_to_xyz(c: LabColor, w: WhitePoint = D65) -> XyzColor:
    wn = w.xyz
    fy = (c.L + 16.0) / 116.0
    fx = fy + c.a / 500.0
    fz = fy - c.b / 200.0
    return XyzColor(wn.X * _f_inv(fx), wn.Y * _f_inv(fy), wn.Z * _f_inv(fz))


def lab_to_lch(c: LabColor) -> LchColor:
    chroma = math.hypot(c.a, c.b)
    if chroma <= ACHROMATIC_EPSILON:
        return LchColor(c.L, chroma, 0.0)
    hue = math.degrees(math.atan2(c.b, c.a)) % 360.0
    if hue >= 360.0:
        hue = 0.0
    return LchColor(c.L, chroma, hue)


def lch_to_lab(c: LchColor) -> LabColor:
    rad = math.radians(c.h)
    return LabColor(c.L, c.C * math.cos(rad), c.C * math.sin(rad))


def _linear_srgb(c: LabColor, w: WhitePoint) -> np.ndarray:
    # XYZ scaling from the library white to the sRGB white, so the library
    # white encodes to exactly (1, 1, 1)
    xyz = lab_to_xyz(c, w)
    wn = w.xyz
    relative = np.array([xyz.X / wn.X, xyz.Y / wn.Y, xyz.Z / wn.Z])
    return _XYZ_TO_SRGB @ (relative * _SRGB_WHITE)


def _gamma_encode(v: float) -> float:
    if v <= 0.0031308:
        return 12.92 * v
    return 1.055 * v ** (1.0 / 2.4) - 0.055


def has_real_xyz(c: LabColor, w: WhitePoint = D65) -> bool:
    """False for Lab coordinates whose XYZ has a negative component (no physical color)."""
    xyz = lab_to_xyz(c, w)
    return min(xyz.X, xyz.Y, xyz.Z) >= 0.0


def in_srgb_gamut(c: LabColor, w: WhitePoint = D65) -> bool:
    """True if the color is representable in sRGB without clamping."""
    rgb = _linear_srgb(c, w)
    return bool(np.all(rgb >= -GAMUT_TOLERANCE) and np.all(rgb <= 1.0 + GAMUT_TOLERANCE))


def lab_to_srgb(c: LabColor, w: WhitePoint = D65) -> SrgbColor:
    """
    Lab -> 8-bit sRGB. Out-of-gamut channels are clamped to [0, 1] before
    encoding and the result is flagged; rounding is half-up.
    """
    linear = _linear_srgb(c, w)
    clamped = bool(np.any(linear < -GAMUT_TOLERANCE) or np.any(linear > 1.0 + GAMUT_TOLERANCE))
    channels = []
    for v in linear:
        encoded = min(1.0, max(0.0, _gamma_encode(min(1.0, max(0.0, float(v))))))
        channels.append(int(math.floor(encoded * 255.0 + 0.5)))
    return SrgbColor(channels[0], channels[1], channels[2], clamped)


def lab_to_hex(c: LabColor, w: WhitePoint = D65) -> tuple[str, bool]:
    """Return ("#RRGGBB", clamped)."""
    srgb = lab_to_srgb(c, w)
    return srgb.hex, srgb.clamped


def delta_e_76(a: LabColor, b: LabColor) -> float:
    """CIE76 color difference: Euclidean distance in (L, a, b)."""
    return math.dist((a.L, a.a, a.b), (b.L, b.a, b.b))
