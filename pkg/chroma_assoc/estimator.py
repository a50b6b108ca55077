"""
Rating protocols, prompt construction, response parsing and the per-concept
estimation loop that fans rating requests out to a backend.
"""

from __future__ import annotations

import logging
import math
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from enum import Enum
from statistics import fmean
from typing import Any, Callable, Iterable

from chroma_assoc.backends import RateLimiter, RatingBackend, is_retryable
from chroma_assoc.colorlib import ColorLibrary, ColorSpec
from chroma_assoc.errors import (
    BackendError,
    IncompleteDistributionError,
    InputValidationError,
    ParseFailure,
    ProtocolViolation,
)

logger = logging.getLogger(__name__)

DEFAULT_MODEL = "gpt-4"
DEFAULT_WORKERS = 4
STOCHASTIC_TEMPERATURE = 1.0
STOCHASTIC_REPETITIONS = 10

SYSTEM_PROMPT = "You are an expert on color-concept associations."

TASK_DESCRIPTION = (
    "I will give you the hexcode for a color and a concept word. "
    "Rate on a continuous scale from 0 to 1, using 3 decimal places, "
    "how associated the color is with the concept."
)

ANCHORING_TEMPLATE = (
    "The concept is '{concept}'.\n"
    "Before rating, here's the set of all the colors {hexes}.\n"
    "Think of which color you associate most with '{concept}.' That color should get a rating of 1.\n"
    "Now think of which color you associated least with '{concept}.'\n"
    "That color should get a rating of 0. Now let's do the rating task."
)

RATING_TRIAL_TEMPLATE = (
    "Let's do the rating task —\n"
    "Concept: '{concept}'\n"
    "Color: {hex}\n"
    "Answer with only the number:"
)

HEX_SEPARATOR = ", "

_HEX_RE = re.compile(r"^#[0-9A-Fa-f]{6}$")
_NUMBER_RE = re.compile(r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)")

SOURCE_DATE_EPOCH_ENV = "SOURCE_DATE_EPOCH"


def now_iso() -> str:
    """UTC ISO-8601 timestamp; SOURCE_DATE_EPOCH pins it for reproducible artifacts."""
    pinned = os.environ.get(SOURCE_DATE_EPOCH_ENV, "").strip()
    if pinned:
        dt = datetime.fromtimestamp(int(pinned), tz=timezone.utc)
    else:
        dt = datetime.now(timezone.utc)
    return dt.replace(microsecond=0).isoformat().replace("+00:00", "Z")


class ProtocolName(str, Enum):
    SINGLE_DETERMINISTIC = "single_deterministic"  # temperature 0, one rating
    ANCHORED_DETERMINISTIC = "anchored_deterministic"  # as above plus the anchoring preamble
    STOCHASTIC_AVERAGED = "stochastic_averaged"  # temperature 1, repeated ratings averaged


@dataclass(frozen=True)
class RatingProtocol:
    name: ProtocolName
    temperature: float
    repetitions: int
    anchoring: bool
    system_prompt: str = SYSTEM_PROMPT
    model_id: str = DEFAULT_MODEL

    def __post_init__(self) -> None:
        object.__setattr__(self, "name", ProtocolName(self.name))
        if self.temperature < 0:
            raise InputValidationError(f"temperature must be >= 0, got {self.temperature}")
        if self.repetitions < 1:
            raise InputValidationError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.name is ProtocolName.STOCHASTIC_AVERAGED:
            if self.anchoring:
                raise InputValidationError("stochastic_averaged does not use anchoring")
            return
        if self.temperature != 0 or self.repetitions != 1:
            raise InputValidationError(f"{self.name.value} requires temperature 0 and a single repetition")
        if self.anchoring != (self.name is ProtocolName.ANCHORED_DETERMINISTIC):
            raise InputValidationError(f"anchoring flag does not match protocol {self.name.value}")

    @classmethod
    def preset(
        cls,
        name: ProtocolName | str,
        *,
        model_id: str = DEFAULT_MODEL,
        temperature: float | None = None,
        repetitions: int | None = None,
    ) -> "RatingProtocol":
        """Protocol defaults; overrides are validated like any other field."""
        name = ProtocolName(name)
        if name is ProtocolName.STOCHASTIC_AVERAGED:
            defaults = (STOCHASTIC_TEMPERATURE, STOCHASTIC_REPETITIONS, False)
        else:
            defaults = (0.0, 1, name is ProtocolName.ANCHORED_DETERMINISTIC)
        return cls(
            name=name,
            temperature=defaults[0] if temperature is None else float(temperature),
            repetitions=defaults[1] if repetitions is None else int(repetitions),
            anchoring=defaults[2],
            model_id=model_id,
        )

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["name"] = self.name.value
        return d


def build_prompt(protocol: RatingProtocol, concept: str, hex_code: str, library: ColorLibrary) -> tuple[str, str]:
    """Return (system, user) for one rating trial."""
    concept = concept.strip()
    if not concept:
        raise InputValidationError("concept must be non-empty")
    if "'" in concept or "\n" in concept:
        raise InputValidationError(f"concept may not contain quotes or newlines: {concept!r}")
    if not _HEX_RE.match(hex_code):
        raise InputValidationError(f"Malformed hex color {hex_code!r}; expected '#RRGGBB'")
    parts = [TASK_DESCRIPTION]
    if protocol.anchoring:
        parts.append(ANCHORING_TEMPLATE.format(concept=concept, hexes=HEX_SEPARATOR.join(library.hexes)))
    parts.append(RATING_TRIAL_TEMPLATE.format(concept=concept, hex=hex_code.upper()))
    return protocol.system_prompt, "\n".join(parts)


def parse_rating(raw: str) -> float:
    """First decimal number in raw, which must lie in [0, 1]. Out-of-range values are rejected, never clamped."""
    m = _NUMBER_RE.search(raw or "")
    if m is None:
        raise ParseFailure("No number in response", raw)
    value = float(m.group(0))
    if not 0.0 <= value <= 1.0:
        raise ParseFailure(f"Rating {value} outside [0, 1]", raw)
    return value


@dataclass(frozen=True)
class RetryPolicy:
    """Attempts per rating; transport errors and parse failures share the budget."""

    max_attempts: int = 3
    backoff: float = 2.0
    base_delay: float = 1.0
    max_delay: float = 120.0
    sleep: Callable[[float], None] = field(default=time.sleep, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise InputValidationError("max_attempts must be >= 1")

    def delay(self, attempt: int, exc: BaseException | None = None) -> float:
        """Seconds to wait after the given 1-based failed attempt. Retry-After wins when present."""
        if isinstance(exc, BackendError) and exc.retry_after is not None:
            return min(exc.retry_after, self.max_delay)
        return min(self.base_delay * (self.backoff ** (attempt - 1)), self.max_delay)


@dataclass(frozen=True)
class RatingRecord:
    concept: str
    color_index: int
    hex: str
    raw_response: str
    parsed_value: float | None
    attempts: int
    protocol_name: str
    timestamp: str
    repetition: int = 1
    model_id: str = DEFAULT_MODEL
    error: str | None = None

    def __post_init__(self) -> None:
        if self.parsed_value is not None and not 0.0 <= self.parsed_value <= 1.0:
            raise InputValidationError(f"parsed_value {self.parsed_value} outside [0, 1]")

    @property
    def ok(self) -> bool:
        return self.parsed_value is not None

    @property
    def key(self) -> tuple[str, str, str, int, int]:
        """(protocol, model, concept, color_index, repetition): the resume key."""
        return (self.protocol_name, self.model_id, self.concept, self.color_index, self.repetition)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RatingRecord":
        value = d.get("parsed_value")
        return cls(
            concept=str(d["concept"]),
            color_index=int(d["color_index"]),
            hex=str(d["hex"]),
            raw_response=str(d.get("raw_response", "")),
            parsed_value=None if value is None else float(value),
            attempts=int(d.get("attempts", 1)),
            protocol_name=str(d["protocol_name"]),
            timestamp=str(d.get("timestamp", "")),
            repetition=int(d.get("repetition", 1)),
            model_id=str(d.get("model_id", DEFAULT_MODEL)),
            error=d.get("error"),
        )


@dataclass(frozen=True)
class AssociationDistribution:
    """
    One rating per library color, in library order. values holds NaN only for
    colors that received no rating (the partial distribution of a failed run).
    """

    concept: str
    library_name: str
    values: tuple[float, ...]
    n_ratings_per_color: int
    counts: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        for v in vals:
            if not math.isnan(v) and not 0.0 <= v <= 1.0:
                raise InputValidationError(f"Association value {v} outside [0, 1] for {self.concept!r}")
        if not self.counts:
            object.__setattr__(self, "counts", tuple(0 if math.isnan(v) else self.n_ratings_per_color for v in vals))
        elif len(self.counts) != len(vals):
            raise InputValidationError("counts must have one entry per value")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def complete(self) -> bool:
        return not any(math.isnan(v) for v in self.values)


def _rate_once(
    protocol: RatingProtocol,
    concept: str,
    color: ColorSpec,
    repetition: int,
    system: str,
    user: str,
    backend: RatingBackend,
    retry: RetryPolicy,
    rate_limiter: RateLimiter | None,
    clock: Callable[[], str],
) -> RatingRecord:
    raw = ""
    last_error: BaseException | None = None
    attempt = 0
    for attempt in range(1, retry.max_attempts + 1):
        if rate_limiter is not None:
            rate_limiter.acquire()
        try:
            raw = backend.complete(system, user, temperature=protocol.temperature, model_id=protocol.model_id)
            value = parse_rating(raw)
            return RatingRecord(
                concept, color.index, color.hex, raw, value, attempt,
                protocol.name.value, clock(), repetition, protocol.model_id,
            )
        except ProtocolViolation:
            raise
        except (ParseFailure, BackendError) as e:
            last_error = e
            retryable = isinstance(e, ParseFailure) or is_retryable(e)
            if attempt < retry.max_attempts and retryable:
                wait = retry.delay(attempt, e)
                logger.warning(
                    "Rating %r / color %d rep %d failed (%s); retry %d/%d in %.1fs",
                    concept, color.index, repetition, e, attempt, retry.max_attempts - 1, wait,
                )
                retry.sleep(wait)
                continue
            break
    logger.warning("Rating %r / color %d rep %d gave up after %d attempts: %s", concept, color.index, repetition, attempt, last_error)
    return RatingRecord(
        concept, color.index, color.hex, raw, None, attempt,
        protocol.name.value, clock(), repetition, protocol.model_id,
        error=f"{type(last_error).__name__}: {last_error}",
    )


def estimate_distribution(
    protocol: RatingProtocol,
    concept: str,
    library: ColorLibrary,
    backend: RatingBackend,
    retry: RetryPolicy | None = None,
    *,
    max_workers: int = DEFAULT_WORKERS,
    rate_limiter: RateLimiter | None = None,
    prior_records: Iterable[RatingRecord] = (),
    on_record: Callable[[RatingRecord], None] | None = None,
    clock: Callable[[], str] = now_iso,
) -> tuple[AssociationDistribution, list[RatingRecord]]:
    """
    Rate every library color protocol.repetitions times and average per color.

    One task per color runs its repetitions in order, so the n-th request for
    a pair is always repetition n. Successful prior_records with the same
    protocol and model are reused rather than re-requested. on_record is
    called from the calling thread for each new record, before any
    IncompleteDistributionError is raised.
    """
    retry = retry or RetryPolicy()
    if max_workers < 1:
        raise InputValidationError("max_workers must be >= 1")
    cached: dict[tuple[int, int], RatingRecord] = {}
    for r in prior_records:
        if r.ok and r.concept == concept and r.protocol_name == protocol.name.value and r.model_id == protocol.model_id:
            cached[(r.color_index, r.repetition)] = r

    def _rate_color(color: ColorSpec) -> list[RatingRecord]:
        system, user = build_prompt(protocol, concept, color.hex, library)
        out = []
        for rep in range(1, protocol.repetitions + 1):
            if (color.index, rep) in cached:
                continue
            out.append(_rate_once(protocol, concept, color, rep, system, user, backend, retry, rate_limiter, clock))
        return out

    new_records: dict[int, list[RatingRecord]] = {}
    lock = threading.Lock()

    def _collect(color: ColorSpec, records: list[RatingRecord]) -> None:
        with lock:
            new_records[color.index] = records
        if on_record is not None:
            for rec in records:
                on_record(rec)

    workers = min(max_workers, len(library))
    if workers == 1:
        for color in library:
            _collect(color, _rate_color(color))
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            futures = {ex.submit(_rate_color, color): color for color in library}
            for fut in as_completed(futures):
                _collect(futures[fut], fut.result())

    values: list[float] = []
    counts: list[int] = []
    records: list[RatingRecord] = []
    failed: list[int] = []
    for color in library:
        reps = [cached[(color.index, rep)] for rep in range(1, protocol.repetitions + 1) if (color.index, rep) in cached]
        reps.extend(new_records.get(color.index, []))
        reps.sort(key=lambda r: r.repetition)
        records.extend(reps)
        parsed = [r.parsed_value for r in reps if r.parsed_value is not None]
        if not parsed:
            failed.append(color.index)
            values.append(math.nan)
            counts.append(0)
            continue
        if len(parsed) < protocol.repetitions:
            logger.warning("%r / color %d: %d of %d repetitions usable", concept, color.index, len(parsed), protocol.repetitions)
        values.append(fmean(parsed))
        counts.append(len(parsed))

    dist = AssociationDistribution(concept, library.name, tuple(values), protocol.repetitions, tuple(counts))
    if failed:
        raise IncompleteDistributionError(
            f"{len(failed)} of {len(library)} colors have no usable rating for {concept!r}",
            distribution=dist,
            records=records,
            failed_colors=failed,
        )
    return dist, records

