from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from chroma_assoc.colorlib import ColorLibrary, ColorSpec, load_uw71
from chroma_assoc.colorspace import LabColor
from chroma_assoc.metrics import HumanRatingSet

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def uw71() -> ColorLibrary:
    return load_uw71()


@pytest.fixture
def grays() -> ColorLibrary:
    """White, mid gray, black."""
    colors = tuple(
        ColorSpec.from_lab(i, LabColor(L, 0.0, 0.0), sorted_position=i)
        for i, L in enumerate((100.0, 50.0, 0.0), start=1)
    )
    return ColorLibrary("grays", colors)


@pytest.fixture
def pinned_clock(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    return "2023-11-14T22:13:20Z"


def lightness_truth(library: ColorLibrary):
    by_hex = {c.hex: c.lab.L / 100.0 for c in library}
    return lambda _concept, hex_code: by_hex[hex_code]


def synthetic_human(
    concept: str,
    signal: np.ndarray,
    n_participants: int,
    noise_sd: float,
    seed: int,
) -> HumanRatingSet:
    """Participants = signal + independent Gaussian noise, clipped to [0, 1]."""
    rng = np.random.default_rng(seed)
    ratings = np.clip(signal[None, :] + rng.normal(0.0, noise_sd, (n_participants, signal.size)), 0.0, 1.0)
    return HumanRatingSet(concept, ratings)
