"""Per-concept colorimetric regression: associations ~ L + C + hue harmonics + constant."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from chroma_assoc.colorlib import ColorLibrary
from chroma_assoc.errors import InputValidationError, SingularDesignError, UndefinedStatisticError
from chroma_assoc.estimator import AssociationDistribution
from chroma_assoc.metrics import ols, pearson

logger = logging.getLogger(__name__)

COLUMNS = ("L", "C", "cos_h", "sin_h", "cos_2h", "sin_2h", "k")
COEFFICIENT_NAMES = ("w_L", "w_C", "w_cos_h", "w_sin_h", "w_cos_2h", "w_sin_2h", "k")


@dataclass(frozen=True, eq=False)
class ColorimetricDesign:
    library_name: str
    matrix: np.ndarray  # rows = colors in library order, columns = COLUMNS

    @property
    def n_rows(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.matrix))


def design_row(L: float, C: float, h_deg: float) -> np.ndarray:
    h = math.radians(h_deg)
    return np.array([L, C, math.cos(h), math.sin(h), math.cos(2 * h), math.sin(2 * h), 1.0])


def build_design(library: ColorLibrary) -> ColorimetricDesign:
    rows = [design_row(c.lch.L, c.lch.C, c.lch.h) for c in library]
    matrix = np.vstack(rows)
    matrix.setflags(write=False)
    return ColorimetricDesign(library.name, matrix)


def _angle(y: float, x: float, period: float) -> float:
    deg = math.degrees(math.atan2(y, x)) % period
    return 0.0 if deg >= period else deg


def dominant_hue(w_cos_h: float, w_sin_h: float) -> float:
    """Direction of the first-harmonic weights, degrees in [0, 360)."""
    return _angle(w_sin_h, w_cos_h, 360.0)


def dominant_axis(w_cos_2h: float, w_sin_2h: float) -> float:
    """Axis of the second-harmonic weights, degrees in [0, 180)."""
    deg = (math.degrees(math.atan2(w_sin_2h, w_cos_2h)) / 2.0) % 180.0
    return 0.0 if deg >= 180.0 else deg


@dataclass(frozen=True)
class ColorimetricFit:
    """fit_r is None when the observed associations are constant."""

    concept: str
    coefficients: tuple[float, ...]
    fit_r: float | None
    dominant_hue_deg: float
    dominant_axis_deg: float

    @classmethod
    def from_coefficients(cls, concept: str, coefficients: Iterable[float], fit_r: float | None = None) -> "ColorimetricFit":
        coef = tuple(float(v) for v in coefficients)
        if len(coef) != len(COLUMNS):
            raise InputValidationError(f"Expected {len(COLUMNS)} coefficients, got {len(coef)}")
        return cls(concept, coef, fit_r, dominant_hue(coef[2], coef[3]), dominant_axis(coef[4], coef[5]))

    @property
    def named(self) -> dict[str, float]:
        return dict(zip(COEFFICIENT_NAMES, self.coefficients))

    def to_row(self) -> dict:
        return {
            "concept": self.concept,
            **self.named,
            "fit_r": self.fit_r,
            "dominant_hue_deg": self.dominant_hue_deg,
            "dominant_axis_deg": self.dominant_axis_deg,
        }


def fit_concept(design: ColorimetricDesign, associations: AssociationDistribution) -> ColorimetricFit:
    """OLS fit of one concept; fit_r correlates the fitted values with the observations."""
    y = np.asarray(associations.values, dtype=float)
    if y.size != design.n_rows:
        raise InputValidationError(
            f"{associations.concept!r}: {y.size} associations for a {design.n_rows}-color design"
        )
    if not np.all(np.isfinite(y)):
        raise InputValidationError(f"{associations.concept!r} has unrated colors")
    if design.rank < len(COLUMNS):
        raise SingularDesignError(f"Design for {design.library_name} has rank {design.rank} < {len(COLUMNS)}")
    res = ols(design.matrix, y)
    try:
        fit_r: float | None = pearson(res.fitted, y)
    except UndefinedStatisticError:
        logger.warning("Fit correlation undefined for %r (constant associations)", associations.concept)
        fit_r = None
    return ColorimetricFit.from_coefficients(associations.concept, res.coefficients, fit_r)


def predict(fit: ColorimetricFit, colors: ColorLibrary) -> np.ndarray:
    """Linear prediction per color. Not clamped to [0, 1]."""
    return build_design(colors).matrix @ np.asarray(fit.coefficients)
