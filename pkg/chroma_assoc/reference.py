"""
Published reference values: the 70-concept set, comparison correlations from
other estimation methods, and colorimetric regression coefficients fit to
mean human ratings.

These are fixed constants used for defaults, fixtures and side-by-side
reporting. Nothing in the package asserts agreement with them.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from statistics import fmean

import pandas as pd

COEFFICIENTS_RESOURCE = "colorimetric_coefficients.csv"

# category -> (concepts, participants n)
CONCEPT_CATEGORIES: dict[str, tuple[tuple[str, ...], int]] = {
    "activities": (("driving", "eating", "sleeping", "leisure", "working"), 52),
    "animals": (("bear", "bird", "lion", "frog", "fish"), 45),
    "automobiles": (("airplane", "car", "boat", "truck", "train"), 51),
    "clothes": (("dress", "pants", "shirt", "socks", "shoes"), 48),
    "directions": (("above", "below", "beside", "near", "far"), 44),
    "emotions": (("angry", "disgust", "fearful", "happy", "sad"), 50),
    "fruits": (("blueberry", "lemon", "mango", "strawberry", "watermelon"), 46),
    "fruits2": (("apple", "banana", "cherry", "grape", "peach"), 49),
    "properties": (("comfort", "efficiency", "reliability", "safety", "speed"), 50),
    "scenes": (("beach", "field", "ocean", "sky", "sunset"), 45),
    "times_of_day": (("dawn", "day", "dusk", "noon", "night"), 46),
    "values": (("evil", "greed", "justice", "love", "peace"), 50),
    "vegetables": (("carrot", "celery", "corn", "eggplant", "mushroom"), 52),
    "weather": (("blizzard", "drought", "hurricane", "lightning", "sandstorm"), 52),
}

CONCEPTS: tuple[str, ...] = tuple(c for concepts, _n in CONCEPT_CATEGORIES.values() for c in concepts)

FRUIT_CONCEPTS = CONCEPT_CATEGORIES["fruits"][0]


def category_of(concept: str) -> str | None:
    key = concept.strip().lower()
    for name, (concepts, _n) in CONCEPT_CATEGORIES.items():
        if key in concepts:
            return name
    return None


def participants_for(concept: str) -> int | None:
    cat = category_of(concept)
    return CONCEPT_CATEGORIES[cat][1] if cat else None


@dataclass(frozen=True)
class ComparisonRow:
    concept: str
    colorization_network: float
    palette_extrapolation: float | None
    single_rating_llm: float


# Per-concept correlations with mean human ratings for fruit and vegetable
# concepts. palette_extrapolation is None where that dataset lacked the concept.
COMPARISON_CORRELATIONS: tuple[ComparisonRow, ...] = (
    ComparisonRow("apple", 0.69, None, 0.90),
    ComparisonRow("banana", 0.88, None, 0.84),
    ComparisonRow("blueberry", 0.84, 0.84, 0.84),
    ComparisonRow("carrot", 0.82, None, 0.75),
    ComparisonRow("celery", 0.77, None, 0.87),
    ComparisonRow("cherry", 0.62, None, 0.82),
    ComparisonRow("corn", 0.81, None, 0.83),
    ComparisonRow("eggplant", 0.49, None, 0.71),
    ComparisonRow("grape", 0.12, None, 0.69),
    ComparisonRow("lemon", 0.92, 0.92, 0.87),
    ComparisonRow("mango", 0.92, 0.92, 0.86),
    ComparisonRow("mushroom", 0.54, None, 0.76),
    ComparisonRow("peach", 0.86, None, 0.90),
    ComparisonRow("strawberry", 0.66, 0.66, 0.61),
    ComparisonRow("watermelon", 0.65, 0.65, 0.78),
)


@dataclass(frozen=True)
class CorrelationBand:
    mean: float
    min: float
    max: float

    def describe(self) -> str:
        return f"mean r = {self.mean:.2f} (min {self.min:.2f}, max {self.max:.2f})"


# Single-rating LLM estimates for the five "fruits" concepts
FRUIT_BAND = CorrelationBand(mean=0.80, min=0.61, max=0.90)


def band_of(values: list[float]) -> CorrelationBand:
    return CorrelationBand(mean=fmean(values), min=min(values), max=max(values))


@lru_cache(maxsize=1)
def load_colorimetric_coefficients() -> pd.DataFrame:
    """
    Published per-concept coefficients, indexed by concept, with columns
    w_L, w_C, w_cos_h, w_sin_h, w_cos_2h, w_sin_2h, k.

    The published sin(h), cos(2h) and sin(2h) columns repeat the same value in
    every row; only w_L, w_C, w_cos_h and k are meaningful for cross-checks.
    """
    raw = resources.files("chroma_assoc.data").joinpath(COEFFICIENTS_RESOURCE).read_bytes()
    return pd.read_csv(io.BytesIO(raw)).set_index("concept")
