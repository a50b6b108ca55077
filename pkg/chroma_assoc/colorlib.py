"""Color libraries: the embedded UW-71 set, ΔE-lattice libraries, hue/chroma ordering, CSV import/export."""

from __future__ import annotations

import hashlib
import io
import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

import pandas as pd

from chroma_assoc.colorspace import (
    ACHROMATIC_EPSILON,
    D65,
    LabColor,
    LchColor,
    WhitePoint,
    XyYColor,
    lab_to_hex,
    lab_to_lch,
    has_real_xyz,
    lab_to_xyz,
    xyz_to_xyy,
)
from chroma_assoc.errors import ConfigurationError, EmptyLibraryError, InputValidationError, SchemaError

logger = logging.getLogger(__name__)

UW71_NAME = "UW-71"
UW71_RESOURCE = "uw71.csv"
UW71_SHA256 = "6075818e4c23e6cca6eb938b432c76513998e81af80370dccf4621c60e1a8bc8"

# Hue angles are compared at this many decimals when ordering, so colors on
# the same hue ray tie and fall through to chroma
HUE_TIE_DECIMALS = 2

LIBRARY_CSV_COLUMNS = ("index", "sorted_position", "x", "y", "Y", "L", "a", "b", "C", "h", "hex", "clamped")


@dataclass(frozen=True)
class ColorSpec:
    """One library color in every representation, with its 1-based index and sorted position."""

    index: int
    sorted_position: int
    xyy: XyYColor
    lab: LabColor
    lch: LchColor
    hex: str
    clamped: bool

    @classmethod
    def from_lab(
        cls,
        index: int,
        lab: LabColor,
        *,
        sorted_position: int = 0,
        xyy: XyYColor | None = None,
        white_point: WhitePoint = D65,
    ) -> "ColorSpec":
        """Build a spec whose lch and hex are derived from lab."""
        if xyy is None:
            xyy = xyz_to_xyy(lab_to_xyz(lab, white_point), white_point)
        hex_code, clamped = lab_to_hex(lab, white_point)
        return cls(index, sorted_position, xyy, lab, lab_to_lch(lab), hex_code, clamped)


@dataclass(frozen=True)
class ColorLibrary:
    name: str
    colors: tuple[ColorSpec, ...]
    white_point: WhitePoint = field(default=D65)

    def __post_init__(self) -> None:
        if not self.colors:
            raise EmptyLibraryError(f"Color library {self.name!r} is empty")
        indices = [c.index for c in self.colors]
        if len(set(indices)) != len(indices):
            raise InputValidationError(f"Duplicate color index in library {self.name!r}")

    def __len__(self) -> int:
        return len(self.colors)

    def __iter__(self) -> Iterator[ColorSpec]:
        return iter(self.colors)

    @property
    def hexes(self) -> list[str]:
        return [c.hex for c in self.colors]

    @property
    def indices(self) -> list[int]:
        return [c.index for c in self.colors]

    def by_index(self, index: int) -> ColorSpec:
        for c in self.colors:
            if c.index == index:
                return c
        raise KeyError(index)

    def position_of(self, index: int) -> int:
        """0-based position of a color index within the library order."""
        for pos, c in enumerate(self.colors):
            if c.index == index:
                return pos
        raise KeyError(index)


def _read_uw71_bytes() -> bytes:
    return resources.files("chroma_assoc.data").joinpath(UW71_RESOURCE).read_bytes()


@lru_cache(maxsize=1)
def load_uw71() -> ColorLibrary:
    """
    The UW-71 library exactly as tabulated: xyY, Lab and sorted positions are
    taken from the embedded table; LCh and hex are derived.
    """
    raw = _read_uw71_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    if digest != UW71_SHA256:
        raise ConfigurationError(f"Embedded UW-71 table is corrupt (sha256 {digest})")
    table = pd.read_csv(io.BytesIO(raw), dtype=float)
    colors = []
    for row in table.itertuples(index=False):
        lab = LabColor(float(row.L), float(row.a), float(row.b))
        colors.append(
            ColorSpec.from_lab(
                int(row.index),
                lab,
                sorted_position=int(row.sorted_position),
                xyy=XyYColor(float(row.x), float(row.y), float(row.Y)),
            )
        )
    return ColorLibrary(UW71_NAME, tuple(colors), D65)


def _ordering_key(c: ColorSpec) -> tuple:
    if c.lch.C <= ACHROMATIC_EPSILON:
        return (0, 0.0, 0.0, -c.lch.L)
    return (1, round(c.lch.h, HUE_TIE_DECIMALS), c.lch.C, -c.lch.L)


def sort_by_hue_chroma(lib: ColorLibrary | Sequence[ColorSpec]) -> list[int]:
    """
    1-based sorted position of each color, in library order.

    Achromatic colors come first, lightest first; chromatic colors follow by
    ascending hue angle, then ascending chroma, then descending lightness.
    The sort is stable.
    """
    colors = list(lib)
    order = sorted(range(len(colors)), key=lambda i: _ordering_key(colors[i]))
    ranks = [0] * len(colors)
    for rank, i in enumerate(order, start=1):
        ranks[i] = rank
    return ranks


def _lattice(lo: float, hi: float, step: float) -> list[float]:
    start = math.ceil(lo / step - 1e-9)
    stop = math.floor(hi / step + 1e-9)
    return [k * step for k in range(start, stop + 1)]


def generate_grid_library(
    delta_e: float,
    lightness_planes: Iterable[float],
    gamut_filter: Callable[[LabColor], bool] | None = None,
    *,
    ab_range: tuple[float, float] = (-125.0, 125.0),
    white_point: WhitePoint = D65,
    name: str | None = None,
) -> ColorLibrary:
    """
    Colors on an axis-aligned lattice in (a, b) with spacing delta_e, on each
    of the given lightness planes, kept when gamut_filter accepts them.
    Lattice points whose XYZ has a negative component are not colors and are
    always skipped, whatever the filter. Output is ordered by (L, a, b).
    """
    if delta_e <= 0:
        raise InputValidationError(f"delta_e must be positive, got {delta_e}")
    planes = sorted(set(float(L) for L in lightness_planes))
    axis = _lattice(ab_range[0], ab_range[1], delta_e)
    accept = gamut_filter or (lambda _lab: True)
    real = [LabColor(L, a, b) for L, a, b in itertools.product(planes, axis, axis)]
    real = [lab for lab in real if has_real_xyz(lab, white_point)]
    labs = [lab for lab in real if accept(lab)]
    if not labs:
        raise EmptyLibraryError("Gamut filter rejected every lattice point")
    specs = [ColorSpec.from_lab(i, lab, white_point=white_point) for i, lab in enumerate(labs, start=1)]
    ranks = sort_by_hue_chroma(specs)
    specs = [
        ColorSpec(s.index, rank, s.xyy, s.lab, s.lch, s.hex, s.clamped)
        for s, rank in zip(specs, ranks)
    ]
    label = name or f"grid-dE{delta_e:g}"
    logger.debug("Generated %s with %d colors", label, len(specs))
    return ColorLibrary(label, tuple(specs), white_point)


def write_library_csv(lib: ColorLibrary, path: Path) -> None:
    rows = [
        {
            "index": c.index,
            "sorted_position": c.sorted_position,
            "x": c.xyy.x,
            "y": c.xyy.y,
            "Y": c.xyy.Y,
            "L": c.lab.L,
            "a": c.lab.a,
            "b": c.lab.b,
            "C": c.lch.C,
            "h": c.lch.h,
            "hex": c.hex,
            "clamped": str(c.clamped).lower(),
        }
        for c in lib
    ]
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows, columns=list(LIBRARY_CSV_COLUMNS)).to_csv(
        path, index=False, float_format="%.6g", encoding="utf-8", lineterminator="\n"
    )


def load_library_csv(path: Path, name: str | None = None, white_point: WhitePoint = D65) -> ColorLibrary:
    """
    Read a library CSV. Coordinates come from the x, y, Y, L, a, b columns;
    C, h, hex and clamped are recomputed so the representations stay consistent.
    """
    try:
        table = pd.read_csv(path, encoding="utf-8")
    except FileNotFoundError:
        raise
    except Exception as e:
        raise SchemaError(f"Unreadable library CSV: {e}", path=path) from e
    missing = [c for c in ("index", "sorted_position", "x", "y", "Y", "L", "a", "b") if c not in table.columns]
    if missing:
        raise SchemaError(f"Library CSV missing columns: {', '.join(missing)}", path=path)
    colors = []
    for line, row in enumerate(table.itertuples(index=False), start=2):
        try:
            lab = LabColor(float(row.L), float(row.a), float(row.b))
            xyy = XyYColor(float(row.x), float(row.y), float(row.Y))
            colors.append(
                ColorSpec.from_lab(int(row.index), lab, sorted_position=int(row.sorted_position), xyy=xyy, white_point=white_point)
            )
        except (TypeError, ValueError) as e:
            raise SchemaError(f"Bad library row: {e}", path=path, line=line) from e
    recomputed = [c for c in table.get("hex", pd.Series(dtype=str)).astype(str)]
    if recomputed and recomputed != [c.hex for c in colors]:
        logger.warning("Hex codes in %s differ from recomputed values; using recomputed", path)
    return ColorLibrary(name or Path(path).stem, tuple(colors), white_point)


def resolve_library(selector: str) -> ColorLibrary:
    """'uw71' (case-insensitive) or a path to a library CSV."""
    if selector.lower().replace("-", "") == "uw71":
        return load_uw71()
    path = Path(selector)
    if not path.exists():
        raise ConfigurationError(f"Library file not found: {path}")
    return load_library_csv(path)
