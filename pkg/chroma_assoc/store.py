"""
File formats: human ratings and concreteness CSVs, run manifests, the
append-only rating cache, and the CSV/JSON artifacts every subcommand writes.

Run directory layout:

    <out>/<run>/manifest.json
    <out>/<run>/records.jsonl
    <out>/<run>/distributions/<concept>.csv
"""

from __future__ import annotations

import json
import logging
import math
import re
import threading
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from chroma_assoc.colorlib import ColorLibrary
from chroma_assoc.errors import (
    ConfigurationError,
    ManifestMismatchError,
    SchemaError,
)
from chroma_assoc.estimator import AssociationDistribution, RatingProtocol, RatingRecord, now_iso
from chroma_assoc.metrics import HumanRatingSet

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SCHEMA_PREFIX = "# schema="
FLOAT_FORMAT = "%.6g"

HUMAN_RATINGS_COLUMNS = ("participant_id", "concept", "color_index", "rating")
CONCRETENESS_COLUMNS = ("word", "concreteness")
# Column names used by the published concreteness norms spreadsheet
CONCRETENESS_ALIASES = {"Word": "word", "Conc.M": "concreteness"}
CONCRETENESS_RANGE = (1.0, 5.0)
DISTRIBUTION_COLUMNS = ("concept", "color_index", "hex", "value", "n_ratings")
EVALUATION_COLUMNS = ("concept", "pearson_r", "significant", "split_half_r", "specificity", "concreteness")
FIT_COLUMNS = (
    "concept", "w_L", "w_C", "w_cos_h", "w_sin_h", "w_cos_2h", "w_sin_2h", "k",
    "fit_r", "dominant_hue_deg", "dominant_axis_deg",
)

MANIFEST_NAME = "manifest.json"
RECORDS_NAME = "records.jsonl"
DISTRIBUTIONS_DIR = "distributions"

# Per-repetition status characters in RunManifest.status
STATUS_PENDING = "."
STATUS_OK = "o"
STATUS_FAILED = "x"


def slug(name: str) -> str:
    """File-safe name for a concept or run."""
    s = re.sub(r"[^\w.-]", "_", name.strip().lower())
    s = s.strip("_") or "unnamed"
    return s[:150]


def write_text(path: Path, text: str) -> None:
    """Write text as UTF-8 with LF line endings."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def _clean_json(obj: Any) -> Any:
    if isinstance(obj, float):
        return None if math.isnan(obj) or math.isinf(obj) else obj
    if isinstance(obj, (np.floating,)):
        return _clean_json(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean_json(v) for v in obj]
    return obj


def write_json(path: Path, data: Any) -> None:
    """Pretty JSON; NaN and infinities become null."""
    write_text(path, json.dumps(_clean_json(data), indent=2, ensure_ascii=False) + "\n")


def _write_table(path: Path, rows: list[dict], columns: Sequence[str], header_line: str | None = None) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    body = pd.DataFrame(rows, columns=list(columns)).to_csv(
        index=False, float_format=FLOAT_FORMAT, lineterminator="\n"
    )
    write_text(path, (header_line + "\n" if header_line else "") + body)


def _read_versioned_csv(path: Path) -> tuple[pd.DataFrame, int]:
    """Read a CSV whose optional first line is '# schema=N'. Returns (frame, first data line number)."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"File not found: {path}")
    with open(path, encoding="utf-8") as f:
        first = f.readline()
    skip = 0
    if first.startswith(SCHEMA_PREFIX):
        try:
            version = int(first[len(SCHEMA_PREFIX):].strip())
        except ValueError:
            raise SchemaError("Unreadable schema line", path=path, line=1) from None
        if version > SCHEMA_VERSION:
            raise SchemaError(f"Schema version {version} is newer than supported {SCHEMA_VERSION}", path=path, line=1)
        skip = 1
    try:
        frame = pd.read_csv(path, skiprows=skip, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise SchemaError("File is empty", path=path) from None
    except pd.errors.ParserError as e:
        raise SchemaError(f"Malformed CSV: {e}", path=path) from e
    frame.columns = [str(c).strip() for c in frame.columns]
    # header is on line skip + 1, first data row on skip + 2
    return frame, skip + 2


def _check_columns(frame: pd.DataFrame, required: Sequence[str], path: Path) -> None:
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise SchemaError(f"Missing columns: {', '.join(missing)} (expected {', '.join(required)})", path=path)
    extra = [c for c in frame.columns if c not in required]
    if extra:
        logger.warning("%s: ignoring unknown columns %s", path, ", ".join(extra))


def load_human_ratings(
    path: Path,
    library: ColorLibrary,
    rejected: list | None = None,
) -> dict[str, HumanRatingSet]:
    """
    Group rows into one participant x color matrix per concept, colors in library order.

    Participants who did not rate every color of a concept are left out and
    appended to rejected as (concept, participant_id, n_rated).
    """
    frame, first_line = _read_versioned_csv(path)
    _check_columns(frame, HUMAN_RATINGS_COLUMNS, path)
    positions = {idx: pos for pos, idx in enumerate(library.indices)}
    n_colors = len(library)
    cells: dict[str, OrderedDict[str, dict[int, float]]] = OrderedDict()
    for i, row in enumerate(frame.itertuples(index=False)):
        line = first_line + i
        pid = str(row.participant_id).strip()
        concept = str(row.concept).strip().lower()
        if not pid or not concept:
            raise SchemaError("Empty participant_id or concept", path=path, line=line)
        try:
            color_index = int(str(row.color_index).strip())
        except ValueError:
            raise SchemaError(f"color_index {row.color_index!r} is not an integer", path=path, line=line) from None
        if color_index not in positions:
            raise SchemaError(f"Unknown color_index {color_index} for library {library.name}", path=path, line=line)
        try:
            rating = float(str(row.rating).strip())
        except ValueError:
            raise SchemaError(f"Rating {row.rating!r} is not a number", path=path, line=line) from None
        if not 0.0 <= rating <= 1.0:
            raise SchemaError(f"Rating {rating} outside [0, 1]", path=path, line=line)
        by_pid = cells.setdefault(concept, OrderedDict()).setdefault(pid, {})
        if color_index in by_pid:
            raise SchemaError(f"Duplicate rating for ({pid}, {concept}, {color_index})", path=path, line=line)
        by_pid[color_index] = rating

    result: dict[str, HumanRatingSet] = {}
    for concept, participants in cells.items():
        rows, ids = [], []
        for pid, ratings in participants.items():
            if len(ratings) != n_colors:
                logger.warning("%s: participant %s rated %d/%d colors for %r; rejected", path, pid, len(ratings), n_colors, concept)
                if rejected is not None:
                    rejected.append((concept, pid, len(ratings)))
                continue
            vec = np.empty(n_colors)
            for idx, value in ratings.items():
                vec[positions[idx]] = value
            rows.append(vec)
            ids.append(pid)
        if not rows:
            logger.warning("%s: no complete participants for %r", path, concept)
            continue
        result[concept] = HumanRatingSet(concept, np.vstack(rows), tuple(ids))
    return result


def write_human_ratings(path: Path, sets: Mapping[str, HumanRatingSet], library: ColorLibrary) -> None:
    rows = []
    for concept, h in sets.items():
        for pid, vec in zip(h.participant_ids, h.ratings):
            for idx, value in zip(library.indices, vec):
                rows.append({"participant_id": pid, "concept": concept, "color_index": idx, "rating": float(value)})
    _write_table(path, rows, HUMAN_RATINGS_COLUMNS, f"{SCHEMA_PREFIX}{SCHEMA_VERSION}")


@dataclass
class ConcretenessNorms:
    """Case-insensitive word -> concreteness (1-5). Unknown words are absent, not defaulted."""

    values: dict[str, float] = field(default_factory=dict)
    duplicates: int = 0

    def get(self, word: str) -> float | None:
        return self.values.get(word.strip().lower())

    def __contains__(self, word: object) -> bool:
        return isinstance(word, str) and word.strip().lower() in self.values

    def __len__(self) -> int:
        return len(self.values)


def load_concreteness(path: Path) -> ConcretenessNorms:
    frame, first_line = _read_versioned_csv(path)
    frame = frame.rename(columns={k: v for k, v in CONCRETENESS_ALIASES.items() if k in frame.columns})
    _check_columns(frame, CONCRETENESS_COLUMNS, path)
    norms = ConcretenessNorms()
    lo, hi = CONCRETENESS_RANGE
    for i, row in enumerate(frame.itertuples(index=False)):
        line = first_line + i
        word = str(row.word).strip().lower()
        if not word:
            continue
        try:
            value = float(str(row.concreteness).strip())
        except ValueError:
            raise SchemaError(f"Concreteness {row.concreteness!r} is not a number", path=path, line=line) from None
        if not lo <= value <= hi:
            raise SchemaError(f"Concreteness {value} outside [{lo:g}, {hi:g}]", path=path, line=line)
        if word in norms.values:
            norms.duplicates += 1
        norms.values[word] = value
    if norms.duplicates:
        logger.warning("%s: %d duplicate words; later rows win", path, norms.duplicates)
    return norms


@dataclass
class RunManifest:
    """
    Configuration and progress of one estimate run. status maps concept ->
    color index -> one character per repetition ('.' pending, 'o' ok, 'x' failed).
    """

    run_name: str
    protocol: dict[str, Any]
    model_id: str
    library_name: str
    color_indices: list[int]
    concepts: list[str]
    seed: int
    backend: str
    created: str
    updated: str
    status: dict[str, dict[str, str]] = field(default_factory=dict)
    complete: bool = False
    color_hexes: list[str] = field(default_factory=list)
    version: int = SCHEMA_VERSION

    @classmethod
    def new(
        cls,
        run_name: str,
        protocol: RatingProtocol,
        library: ColorLibrary,
        concepts: Sequence[str],
        *,
        seed: int,
        backend: str,
    ) -> "RunManifest":
        stamp = now_iso()
        blank = STATUS_PENDING * protocol.repetitions
        return cls(
            run_name=run_name,
            protocol=protocol.to_dict(),
            model_id=protocol.model_id,
            library_name=library.name,
            color_indices=list(library.indices),
            concepts=list(concepts),
            seed=seed,
            backend=backend,
            created=stamp,
            updated=stamp,
            status={c: {str(i): blank for i in library.indices} for c in concepts},
            color_hexes=library.hexes,
        )

    @property
    def protocol_name(self) -> str:
        return str(self.protocol["name"])

    @property
    def repetitions(self) -> int:
        return int(self.protocol["repetitions"])

    def rating_protocol(self) -> RatingProtocol:
        return RatingProtocol(**self.protocol)

    def all_keys(self) -> set[tuple[str, int, int]]:
        return {
            (c, i, rep)
            for c in self.concepts
            for i in self.color_indices
            for rep in range(1, self.repetitions + 1)
        }

    def mark(self, record: RatingRecord) -> None:
        per_color = self.status.setdefault(record.concept, {})
        cur = list(per_color.get(str(record.color_index), STATUS_PENDING * self.repetitions))
        cur[record.repetition - 1] = STATUS_OK if record.ok else STATUS_FAILED
        per_color[str(record.color_index)] = "".join(cur)

    def counts(self) -> dict[str, int]:
        text = "".join(s for per_color in self.status.values() for s in per_color.values())
        return {"ok": text.count(STATUS_OK), "failed": text.count(STATUS_FAILED), "pending": text.count(STATUS_PENDING)}

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunManifest":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})


def save_manifest(path: Path, manifest: RunManifest) -> None:
    write_json(path, manifest.to_dict())


def load_manifest(path: Path) -> RunManifest | None:
    """Load a run manifest; None if the file does not exist."""
    path = Path(path)
    if not path.exists():
        return None
    try:
        return RunManifest.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except (ValueError, TypeError, KeyError) as e:
        raise SchemaError(f"Unreadable manifest: {e}", path=path) from e


class RatingCache:
    """Append-only JSON-lines file of RatingRecords. All appends go through one lock."""

    def __init__(self, path: Path) -> None:
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, record: RatingRecord) -> None:
        line = json.dumps(record.to_dict(), ensure_ascii=False, sort_keys=True)
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8", newline="\n") as f:
                f.write(line + "\n")

    def load(self) -> list[RatingRecord]:
        """All readable records. A torn final line from an interrupted run is skipped with a warning."""
        if not self.path.exists():
            return []
        records = []
        with open(self.path, encoding="utf-8") as f:
            for n, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    records.append(RatingRecord.from_dict(json.loads(line)))
                except (ValueError, KeyError, TypeError) as e:
                    logger.warning("%s:%d: skipping unreadable record (%s)", self.path, n, e)
        return records

    def rewrite(self, records: Iterable[RatingRecord]) -> None:
        """Replace the file with records in the given order."""
        lines = [json.dumps(r.to_dict(), ensure_ascii=False, sort_keys=True) for r in records]
        with self._lock:
            write_text(self.path, "".join(line + "\n" for line in lines))


def check_library(manifest: RunManifest, library: ColorLibrary) -> None:
    """Refuse a library whose name, indices or colors differ from the one the run was rated on."""
    if manifest.library_name != library.name or manifest.color_indices != library.indices:
        raise ManifestMismatchError(
            f"Run {manifest.run_name!r} was rated on {manifest.library_name} "
            f"({len(manifest.color_indices)} colors), not {library.name} ({len(library)} colors)"
        )
    # manifests written before color_hexes existed carry an empty list
    if manifest.color_hexes and manifest.color_hexes != library.hexes:
        changed = [i for i, a, b in zip(library.indices, manifest.color_hexes, library.hexes) if a != b]
        raise ManifestMismatchError(
            f"Run {manifest.run_name!r}: colors {changed[:5]} of {library.name} differ from the rated ones"
        )


def resume_run(manifest: RunManifest, cache_path: Path, library: ColorLibrary) -> set[tuple[str, int, int]]:
    """(concept, color_index, repetition) keys with no successfully parsed record in the cache."""
    check_library(manifest, library)
    done = set()
    for r in RatingCache(cache_path).load():
        if r.protocol_name != manifest.protocol_name or r.model_id != manifest.model_id:
            raise ManifestMismatchError(
                f"{cache_path} holds {r.protocol_name}/{r.model_id} records; "
                f"manifest is {manifest.protocol_name}/{manifest.model_id}"
            )
        if r.ok:
            done.add((r.concept, r.color_index, r.repetition))
    return manifest.all_keys() - done


@dataclass(frozen=True)
class RunPaths:
    root: Path

    @property
    def manifest(self) -> Path:
        return self.root / MANIFEST_NAME

    @property
    def records(self) -> Path:
        return self.root / RECORDS_NAME

    @property
    def distributions(self) -> Path:
        return self.root / DISTRIBUTIONS_DIR

    def distribution(self, concept: str) -> Path:
        return self.distributions / f"{slug(concept)}.csv"


def write_distribution_csv(path: Path, dist: AssociationDistribution, library: ColorLibrary) -> None:
    rows = [
        {
            "concept": dist.concept,
            "color_index": c.index,
            "hex": c.hex,
            "value": None if math.isnan(v) else v,
            "n_ratings": n,
        }
        for c, v, n in zip(library, dist.values, dist.counts)
    ]
    _write_table(path, rows, DISTRIBUTION_COLUMNS)


def read_distribution_csv(path: Path, library: ColorLibrary, n_ratings_per_color: int = 1) -> AssociationDistribution:
    """A distributions CSV reordered to library order; every library color must be present."""
    frame, first_line = _read_versioned_csv(path)
    _check_columns(frame, DISTRIBUTION_COLUMNS, path)
    concepts = {str(c).strip() for c in frame["concept"]}
    if len(concepts) != 1:
        raise SchemaError(f"Expected one concept, found {sorted(concepts)}", path=path)
    by_index: dict[int, tuple[float, int]] = {}
    for i, row in enumerate(frame.itertuples(index=False)):
        try:
            value = float(row.value) if str(row.value).strip() else math.nan
            by_index[int(row.color_index)] = (value, int(row.n_ratings))
        except ValueError as e:
            raise SchemaError(f"Bad distribution row: {e}", path=path, line=first_line + i) from None
    missing = [idx for idx in library.indices if idx not in by_index]
    if missing:
        raise SchemaError(f"Missing colors {missing[:5]} for library {library.name}", path=path)
    values = tuple(by_index[idx][0] for idx in library.indices)
    counts = tuple(by_index[idx][1] for idx in library.indices)
    return AssociationDistribution(concepts.pop(), library.name, values, n_ratings_per_color, counts)


def load_run(run_dir: Path, library: ColorLibrary) -> tuple[RunManifest, dict[str, AssociationDistribution]]:
    """Manifest plus every concept's distribution, in manifest concept order."""
    paths = RunPaths(Path(run_dir))
    manifest = load_manifest(paths.manifest)
    if manifest is None:
        raise ConfigurationError(f"Not a run directory (no {MANIFEST_NAME}): {run_dir}")
    check_library(manifest, library)
    dists = OrderedDict()
    for concept in manifest.concepts:
        path = paths.distribution(concept)
        if not path.exists():
            raise ConfigurationError(f"Run {run_dir} has no distribution for {concept!r}")
        dists[concept] = read_distribution_csv(path, library, manifest.repetitions)
    return manifest, dists


def write_evaluations_csv(path: Path, rows: Iterable[Mapping[str, Any]]) -> None:
    _write_table(path, [dict(r) for r in rows], EVALUATION_COLUMNS)


def write_fits_csv(path: Path, rows: Iterable[Mapping[str, Any]]) -> None:
    _write_table(path, [dict(r) for r in rows], FIT_COLUMNS)


def write_rows_csv(path: Path, rows: list[Mapping[str, Any]], columns: Sequence[str]) -> None:
    """Any other tabular artifact (figure data, summaries)."""
    _write_table(path, [dict(r) for r in rows], columns)
