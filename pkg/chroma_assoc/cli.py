"""chroma-assoc CLI. Invoked as `chroma-assoc` when installed with pip install -e ."""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import ExitStack
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pandas as pd

try:
    from tqdm import tqdm
except ImportError:
    tqdm = None

from chroma_assoc import __version__
from chroma_assoc._deps import check_required, optional_hint
from chroma_assoc.backends import (
    HttpChatBackend,
    MockBackend,
    RateLimiter,
    RatingBackend,
    get_api_config,
    mock_backend,
)
from chroma_assoc.colorlib import (
    ColorLibrary,
    generate_grid_library,
    resolve_library,
    write_library_csv,
)
from chroma_assoc.colorspace import in_srgb_gamut
from chroma_assoc.errors import (
    ChromaAssocError,
    ConceptSetMismatchError,
    ConfigurationError,
    IncompleteDistributionError,
    InputValidationError,
    ManifestMismatchError,
    UndefinedStatisticError,
)
from chroma_assoc.estimator import (
    DEFAULT_MODEL,
    DEFAULT_WORKERS,
    AssociationDistribution,
    ProtocolName,
    RatingProtocol,
    RetryPolicy,
    estimate_distribution,
    now_iso,
)
from chroma_assoc.metrics import (
    DEFAULT_ALPHA,
    SPLIT_HALF_ITERATIONS,
    ConceptEvaluation,
    HumanRatingSet,
    bonferroni_alpha,
    concept_seed,
    critical_r,
    evaluate_concept,
    learning_curve,
    paired_t_test,
    pearson,
    shannon_entropy,
    specificities,
    summarize_cohort,
)
from chroma_assoc.reference import CONCEPTS, FRUIT_BAND, FRUIT_CONCEPTS, band_of
from chroma_assoc.regression import build_design, fit_concept
from chroma_assoc.report import correlation_chart, distribution_chart, scatter_chart
from chroma_assoc.store import (
    ConcretenessNorms,
    RatingCache,
    RunManifest,
    RunPaths,
    check_library,
    load_concreteness,
    load_human_ratings,
    load_manifest,
    load_run,
    resume_run,
    save_manifest,
    slug,
    write_distribution_csv,
    write_evaluations_csv,
    write_fits_csv,
    write_json,
    write_rows_csv,
    write_text,
)

logger = logging.getLogger("chroma_assoc")

DEFAULT_OUT_DIR = "runs"
MOCK_PREFIX = "mock:"


def _status(msg: str) -> None:
    print(msg, file=sys.stderr)


def _configure_logging(verbose: int, quiet: bool) -> None:
    level = logging.WARNING if quiet else (logging.DEBUG if verbose else logging.INFO)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("chroma_assoc")
    root.handlers[:] = [handler]
    root.setLevel(level)
    root.propagate = False


def _load_dotenv() -> None:
    try:
        from dotenv import load_dotenv
    except ImportError:
        return
    load_dotenv(Path.cwd() / ".env", override=False)


def _progress(total: int, desc: str, enabled: bool):
    if not enabled or tqdm is None:
        return None
    return tqdm(total=total, desc=desc, unit=" rating", file=sys.stderr, leave=False)


# --- backends -----------------------------------------------------------------


def _lightness_truth(library: ColorLibrary) -> Callable[[str, str], float]:
    by_hex: dict[str, float] = {}
    for c in library:
        by_hex.setdefault(c.hex, c.lab.L / 100.0)
    return lambda _concept, hex_code: by_hex[hex_code]


def _file_truth(path: Path) -> Callable[[str, str], float]:
    if not path.exists():
        raise ConfigurationError(f"Ground-truth file not found: {path}")
    frame = pd.read_csv(path, dtype={"concept": str, "hex": str})
    missing = {"concept", "hex", "value"} - set(frame.columns)
    if missing:
        raise ConfigurationError(f"{path}: ground-truth CSV needs columns concept, hex, value")
    table = {
        (str(r.concept).strip(), str(r.hex).strip().upper()): float(r.value)
        for r in frame.itertuples(index=False)
    }

    def truth(concept: str, hex_code: str) -> float:
        try:
            return table[(concept, hex_code)]
        except KeyError:
            raise ConfigurationError(f"{path} has no value for ({concept!r}, {hex_code})") from None

    return truth


def _mock_number(spec: str, name: str, text: str, lo: float, hi: float) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigurationError(f"Mock backend {spec!r}: {name}={text!r} is not a number") from None
    if not lo <= value <= hi:
        raise ConfigurationError(f"Mock backend {spec!r}: {name}={value} is outside [{lo}, {hi}]")
    return value


def parse_mock_spec(spec: str, library: ColorLibrary, seed: int) -> MockBackend:
    """
    mock:constant=V | mock:lightness | mock:file=PATH, each optionally followed
    by ,noise=SD.
    """
    body = spec[len(MOCK_PREFIX):]
    parts = [p.strip() for p in body.split(",") if p.strip()]
    if not parts:
        raise ConfigurationError(f"Mock backend {spec!r} names no ground truth; use constant=V, lightness or file=PATH")
    head, *opts = parts
    noise = 0.0
    for opt in opts:
        key, _, text = opt.partition("=")
        if key != "noise":
            raise ConfigurationError(f"Unknown mock option {opt!r}")
        noise = _mock_number(spec, "noise", text, 0.0, 1.0)
    kind, _, arg = head.partition("=")
    if kind == "constant":
        value = _mock_number(spec, "constant", arg, 0.0, 1.0)
        truth: Callable[[str, str], float] = lambda _c, _h: value
    elif kind == "lightness":
        truth = _lightness_truth(library)
    elif kind == "file":
        truth = _file_truth(Path(arg))
    else:
        raise ConfigurationError(f"Unknown mock ground truth {head!r}; use constant=V, lightness or file=PATH")
    return mock_backend(truth, noise_sd=noise, seed=seed)


def make_backend(spec: str, library: ColorLibrary, seed: int, api_url: str | None, stack: ExitStack) -> RatingBackend:
    if spec == "http":
        return stack.enter_context(HttpChatBackend(get_api_config(url=api_url)))
    if spec.startswith(MOCK_PREFIX):
        return parse_mock_spec(spec, library, seed)
    raise ConfigurationError(f"Unknown backend {spec!r}; use http or mock:...")


# --- helpers ------------------------------------------------------------------


def _read_concepts(args: argparse.Namespace) -> list[str]:
    concepts: list[str] = []
    if args.concepts_file:
        path = Path(args.concepts_file)
        if not path.exists():
            raise ConfigurationError(f"Concepts file not found: {path}")
        concepts.extend(line.strip() for line in path.read_text(encoding="utf-8").splitlines())
    if args.concepts:
        concepts.extend(args.concepts)
    concepts = [c.strip().lower() for c in concepts if c.strip() and not c.strip().startswith("#")]
    if not concepts:
        concepts = list(CONCEPTS)
    return list(dict.fromkeys(concepts))


def _run_dir(out_dir: Path, name: str) -> Path:
    p = Path(name)
    if (p / "manifest.json").exists():
        return p
    return out_dir / slug(name)


def _concept_order(records, concepts: Sequence[str], library: ColorLibrary):
    c_pos = {c: i for i, c in enumerate(concepts)}
    color_pos = {idx: i for i, idx in enumerate(library.indices)}
    return sorted(
        records,
        key=lambda r: (c_pos.get(r.concept, len(c_pos)), r.concept, color_pos.get(r.color_index, 0), r.repetition, r.attempts),
    )


def _worker_count(args: argparse.Namespace) -> int:
    return max(1, int(args.workers))


# --- subcommands ----------------------------------------------------------------


def cmd_estimate(args: argparse.Namespace) -> int:
    library = resolve_library(args.library)
    protocol = RatingProtocol.preset(
        args.protocol, model_id=args.model, temperature=args.temperature, repetitions=args.repetitions
    )
    concepts = _read_concepts(args)
    out_dir = Path(args.out_dir)
    run_name = args.run_name or protocol.name.value
    paths = RunPaths(out_dir / slug(run_name))
    with ExitStack() as stack:
        # Resolved before anything is written
        backend = make_backend(args.backend, library, args.seed, args.api_url, stack)
        manifest = load_manifest(paths.manifest)
        if manifest is None:
            manifest = RunManifest.new(run_name, protocol, library, concepts, seed=args.seed, backend=args.backend)
        else:
            check_library(manifest, library)
            if manifest.protocol != protocol.to_dict():
                raise ManifestMismatchError(
                    f"{paths.root} was created with a different protocol or model; use another --run-name"
                )
            blank = "." * protocol.repetitions
            for c in concepts:
                if c not in manifest.concepts:
                    manifest.concepts.append(c)
                    manifest.status[c] = {str(i): blank for i in library.indices}
        cache = RatingCache(paths.records)
        remaining = resume_run(manifest, paths.records, library)
        prior = [r for r in cache.load() if r.ok]
        todo = sum(1 for key in remaining if key[0] in concepts)
        total = len(concepts) * len(library) * protocol.repetitions
        if todo < total:
            _status(f"  Resuming {paths.root}: {total - todo} of {total} ratings cached")
        save_manifest(paths.manifest, manifest)

        limiter = RateLimiter(args.rate, burst=_worker_count(args)) if args.rate else None
        retry = RetryPolicy(max_attempts=args.max_attempts)
        pbar = _progress(todo, "Rating", not args.no_progress)
        first_error: IncompleteDistributionError | None = None

        def on_record(record) -> None:
            cache.append(record)
            manifest.mark(record)
            if pbar is not None:
                pbar.update(1)

        try:
            for concept in concepts:
                reps = f" × {protocol.repetitions} repetitions" if protocol.repetitions > 1 else ""
                _status(f"  → Rating {len(library)} colors{reps} for '{concept}'...")
                try:
                    dist, _records = estimate_distribution(
                        protocol, concept, library, backend, retry,
                        max_workers=_worker_count(args),
                        rate_limiter=limiter,
                        prior_records=[r for r in prior if r.concept == concept],
                        on_record=on_record,
                    )
                except IncompleteDistributionError as e:
                    dist = e.distribution
                    first_error = first_error or e
                    _status(f"  {concept}: {len(e.failed_colors)} colors failed")
                write_distribution_csv(paths.distribution(concept), dist, library)
                manifest.updated = now_iso()
                save_manifest(paths.manifest, manifest)
        finally:
            if pbar is not None:
                pbar.close()
            cache.rewrite(_concept_order(cache.load(), manifest.concepts, library))
            counts = manifest.counts()
            manifest.complete = counts["pending"] == 0 and counts["failed"] == 0
            manifest.updated = now_iso()
            save_manifest(paths.manifest, manifest)

    if first_error is not None:
        raise first_error
    _status(f"\nDone. {len(concepts)} distributions in {paths.distributions}")
    return 0


def _load_human(args: argparse.Namespace, library: ColorLibrary) -> dict[str, HumanRatingSet]:
    rejected: list = []
    human = load_human_ratings(Path(args.human), library, rejected)
    if rejected:
        _status(f"  {len(rejected)} incomplete participant/concept rows rejected (see warnings)")
    return human


def _load_norms(args: argparse.Namespace) -> ConcretenessNorms | None:
    return load_concreteness(Path(args.concreteness)) if args.concreteness else None


def _human_specificities(human: dict[str, HumanRatingSet], concepts: Sequence[str]) -> dict[str, float]:
    if len(concepts) < 2:
        return {}
    try:
        return specificities({c: human[c].means for c in concepts})
    except (UndefinedStatisticError, InputValidationError) as e:
        logger.warning("Specificity unavailable: %s", e)
        return {}


def _evaluate_run(
    dists: dict[str, AssociationDistribution],
    human: dict[str, HumanRatingSet],
    concepts: Sequence[str],
    spec: dict[str, float],
    norms: ConcretenessNorms | None,
    args: argparse.Namespace,
) -> dict[str, ConceptEvaluation]:
    """Evaluations keyed by concept, in concept order. Concepts with an undefined correlation are left out."""

    def _one(concept: str) -> ConceptEvaluation | None:
        try:
            return evaluate_concept(
                concept,
                dists[concept].values,
                human[concept],
                n_concepts=len(concepts),
                alpha=args.alpha,
                n_iterations=args.iterations,
                seed=args.seed,
                specificity=spec.get(concept),
                concreteness=norms.get(concept) if norms else None,
            )
        except (UndefinedStatisticError, InputValidationError) as e:
            logger.warning("Not evaluating %r: %s", concept, e)
            return None

    with ThreadPoolExecutor(max_workers=_worker_count(args)) as ex:
        results = list(ex.map(_one, concepts))
    return {c: e for c, e in zip(concepts, results) if e is not None}


def cmd_evaluate(args: argparse.Namespace) -> int:
    library = resolve_library(args.library)
    out_dir = Path(args.out_dir)
    runs: dict[str, dict[str, AssociationDistribution]] = {}
    manifests: dict[str, tuple[RunManifest, Path]] = {}
    for name in args.runs:
        run_dir = _run_dir(out_dir, name)
        manifest, dists = load_run(run_dir, library)
        label = manifest.run_name
        if label in runs:
            label = f"{label}@{name}"
        runs[label] = dists
        manifests[label] = (manifest, run_dir)
    labels = list(runs)
    base = set(runs[labels[0]])
    for label in labels[1:]:
        other = set(runs[label])
        if other != base:
            raise ConceptSetMismatchError(base - other, other - base)
    human = _load_human(args, library)
    concepts = [c for c in runs[labels[0]] if c in human]
    skipped = [c for c in runs[labels[0]] if c not in human]
    if skipped:
        logger.warning("No human ratings for %s; not evaluated", ", ".join(skipped))
    if not concepts:
        raise ConfigurationError(f"{args.human} has no ratings for any concept in the runs")
    norms = _load_norms(args)
    spec = _human_specificities(human, concepts)
    dest = Path(args.dest) if args.dest else out_dir / "evaluation"

    evaluations: dict[str, dict[str, ConceptEvaluation]] = {}
    for label in labels:
        _status(f"  → Evaluating {len(concepts)} concepts for run '{label}'...")
        evals = _evaluate_run(runs[label], human, concepts, spec, norms, args)
        evaluations[label] = evals
        run_dest = dest / slug(label)
        write_evaluations_csv(run_dest / "evaluations.csv", [e.to_row() for e in evals.values()])
        summary = summarize_cohort(list(evals.values()), args.alpha).to_dict()
        fruit_rs = [evals[c].pearson_r for c in FRUIT_CONCEPTS if c in evals]
        if len(fruit_rs) == len(FRUIT_CONCEPTS):
            band = band_of(fruit_rs)
            summary["fruits"] = {"observed": vars(band), "published": vars(FRUIT_BAND)}
            _status(f"  fruits: {band.describe()}; published {FRUIT_BAND.describe()}")
        write_json(run_dest / "summary.json", summary)
        manifest, run_dir = manifests[label]
        if manifest.repetitions > 1:
            _write_learning_curve(
                run_dest / "learning_curve.csv",
                RunPaths(run_dir).records,
                human,
                list(evals),
                library,
                manifest.repetitions,
                args.seed,
            )
        _status(f"  {label}: mean r = {summary['mean_r']:.3f}, {summary['n_significant']}/{len(evals)} significant")

    first = evaluations[labels[0]]
    split = {c: e.split_half_r for c, e in first.items() if e.split_half_r is not None}
    comparisons = []
    for a, b in itertools.combinations(labels, 2):
        shared = [c for c in concepts if c in evaluations[a] and c in evaluations[b]]
        comparisons.append(
            _paired(a, b, [evaluations[a][c].pearson_r for c in shared], [evaluations[b][c].pearson_r for c in shared])
        )
    for label in labels:
        with_split = [e for e in evaluations[label].values() if e.split_half_r is not None]
        comparisons.append(
            _paired(label, "split_half", [e.pearson_r for e in with_split], [e.split_half_r for e in with_split])
        )
    write_json(dest / "paired_tests.json", comparisons)

    threshold = critical_r(bonferroni_alpha(args.alpha, len(concepts)), len(library) - 2)
    by_run = {label: {c: e.pearson_r for c, e in evaluations[label].items()} for label in labels}
    write_text(dest / "correlations.svg", correlation_chart(concepts, by_run, split_half=split, critical_r=threshold))
    rows = [
        {"concept": c, "run": label, "pearson_r": by_run[label].get(c), "split_half_r": split.get(c)}
        for c in concepts
        for label in labels
    ]
    write_rows_csv(dest / "correlations.csv", rows, ("concept", "run", "pearson_r", "split_half_r"))
    _status(f"\nDone. Evaluation in {dest}")
    return 0


def _write_learning_curve(
    dest: Path,
    records_path: Path,
    human: dict[str, HumanRatingSet],
    concepts: Sequence[str],
    library: ColorLibrary,
    max_k: int,
    seed: int,
) -> None:
    """Mean model-human r using k = 1..max_k ratings per color, per concept."""
    by_concept: dict[str, list] = {}
    for r in RatingCache(records_path).load():
        by_concept.setdefault(r.concept, []).append(r)
    rows = []
    for concept in concepts:
        try:
            curve = learning_curve(
                by_concept.get(concept, []),
                human[concept].means,
                max_k,
                concept_seed(seed, concept),
                color_order=library.indices,
            )
        except ChromaAssocError as e:
            logger.warning("No learning curve for %r: %s", concept, e)
            continue
        rows.extend({"concept": concept, "k": k, "pearson_r": r} for k, r in enumerate(curve, start=1))
    write_rows_csv(dest, rows, ("concept", "k", "pearson_r"))


def _paired(a: str, b: str, xs: list[float], ys: list[float]) -> dict:
    entry: dict = {"a": a, "b": b, "n": len(xs)}
    try:
        res = paired_t_test(xs, ys)
        entry.update(t=res.t, df=res.df, p=res.p, mean_difference=res.mean_difference)
    except ChromaAssocError as e:
        entry["error"] = str(e)
        logger.warning("Paired test %s vs %s: %s", a, b, e)
    return entry


def _source_distributions(args: argparse.Namespace, library: ColorLibrary) -> tuple[str, dict[str, np.ndarray]]:
    """Named association vectors from --run or, failing that, --human means."""
    if args.run:
        manifest, dists = load_run(_run_dir(Path(args.out_dir), args.run), library)
        return manifest.run_name, {c: np.asarray(d.values) for c, d in dists.items()}
    if args.human:
        human = _load_human(args, library)
        return "human", {c: h.means for c, h in human.items()}
    raise ConfigurationError("Provide --run or --human")


def cmd_specificity(args: argparse.Namespace) -> int:
    library = resolve_library(args.library)
    source, vectors = _source_distributions(args, library)
    if len(vectors) < 2:
        raise UndefinedStatisticError("Specificity needs at least two concepts")
    spec = specificities(vectors)
    norms = _load_norms(args)
    rows = [
        {
            "concept": c,
            "entropy": shannon_entropy(v),
            "specificity": spec[c],
            "concreteness": norms.get(c) if norms else None,
        }
        for c, v in vectors.items()
    ]
    dest = Path(args.dest) if args.dest else Path(args.out_dir) / "specificity"
    write_rows_csv(dest / f"{slug(source)}.csv", rows, ("concept", "entropy", "specificity", "concreteness"))
    top = sorted(rows, key=lambda r: r["specificity"], reverse=True)[:3]
    _status("  Most specific: " + ", ".join(f"{r['concept']} ({r['specificity']:.3f})" for r in top))
    _status(f"\nDone. Specificity in {dest}")
    return 0


def cmd_fit_colorspace(args: argparse.Namespace) -> int:
    library = resolve_library(args.library)
    source, vectors = _source_distributions(args, library)
    design = build_design(library)
    fits = []
    for concept, values in vectors.items():
        dist = AssociationDistribution(concept, library.name, tuple(float(v) for v in values), 1)
        fits.append(fit_concept(design, dist))
    dest = Path(args.dest) if args.dest else Path(args.out_dir) / "fits"
    write_fits_csv(dest / f"{slug(source)}.csv", [f.to_row() for f in fits])
    rs = [f.fit_r for f in fits if f.fit_r is not None]
    if rs:
        _status(f"  {len(fits)} fits, mean fit r = {float(np.mean(rs)):.3f}")
    _status(f"\nDone. Fits in {dest}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    library = resolve_library(args.library)
    manifest, dists = load_run(_run_dir(Path(args.out_dir), args.run), library)
    human = _load_human(args, library) if args.human else {}
    dest = Path(args.dest) if args.dest else Path(args.out_dir) / "report" / slug(manifest.run_name)
    for concept, dist in dists.items():
        h = human.get(concept)
        svg = distribution_chart(dist, library, human_means=h.means if h is not None else None)
        write_text(dest / f"{slug(concept)}.svg", svg)
        rows = [
            {
                "color_index": c.index,
                "sorted_position": c.sorted_position,
                "hex": c.hex,
                "value": v,
                "human_mean": float(h.means[i]) if h is not None else None,
            }
            for i, (c, v) in enumerate(zip(library, dist.values))
        ]
        write_rows_csv(dest / f"{slug(concept)}.csv", rows, ("color_index", "sorted_position", "hex", "value", "human_mean"))
    shared = [c for c in dists if c in human]
    spec = _human_specificities(human, shared)
    if spec:
        xs, ys, labels = [], [], []
        for c in shared:
            try:
                r = pearson(dists[c].values, human[c].means)
            except ChromaAssocError as e:
                logger.warning("Skipping %r in scatter: %s", c, e)
                continue
            xs.append(spec[c])
            ys.append(r)
            labels.append(c)
        write_text(dest / "specificity_vs_r.svg", scatter_chart(xs, ys, labels, x_label="specificity", y_label="model-human r"))
        write_rows_csv(
            dest / "specificity_vs_r.csv",
            [{"concept": c, "specificity": x, "pearson_r": y} for c, x, y in zip(labels, xs, ys)],
            ("concept", "specificity", "pearson_r"),
        )
    _status(f"\nDone. {len(dists)} charts in {dest}")
    return 0


def cmd_library(args: argparse.Namespace) -> int:
    if args.grid is not None:
        planes = [float(p) for p in args.planes.split(",") if p.strip()]
        gamut = in_srgb_gamut if args.srgb_only else None
        library = generate_grid_library(args.grid, planes, gamut, ab_range=(-args.ab_max, args.ab_max))
    else:
        library = resolve_library(args.library)
    dest = Path(args.output) if args.output else Path(args.out_dir) / f"{slug(library.name)}.csv"
    write_library_csv(library, dest)
    clamped = sum(1 for c in library if c.clamped)
    _status(f"  {library.name}: {len(library)} colors, {clamped} clamped to sRGB")
    _status(f"\nDone. Library in {dest}")
    return 0


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--library", default="uw71", metavar="uw71|PATH", help="Color library: uw71 (default) or a library CSV")
    common.add_argument("--out-dir", default=DEFAULT_OUT_DIR, help=f"Output directory (default: {DEFAULT_OUT_DIR})")
    common.add_argument("--seed", type=int, default=0, help="Seed for every stochastic step (default: 0)")
    common.add_argument(
        "--workers", type=int, default=DEFAULT_WORKERS, metavar="N",
        help=f"Concurrent requests / evaluations (default: {DEFAULT_WORKERS})",
    )
    common.add_argument("--no-progress", action="store_true", help="Disable progress bar (e.g. for scripting)")
    common.add_argument("-v", "--verbose", action="count", default=0, help="Debug logging")
    common.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only")

    parser = argparse.ArgumentParser(
        prog="chroma-assoc",
        description="Estimate color-concept association distributions with a chat model and evaluate them against human ratings.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("estimate", parents=[common], help="Rate every library color for each concept")
    p.add_argument("--protocol", default=ProtocolName.SINGLE_DETERMINISTIC.value, choices=[n.value for n in ProtocolName])
    p.add_argument("--temperature", type=float, default=None, help="Override (stochastic_averaged only)")
    p.add_argument("--repetitions", type=int, default=None, help="Override (stochastic_averaged only)")
    p.add_argument("--model", default=DEFAULT_MODEL, help=f"Model id sent to the backend (default: {DEFAULT_MODEL})")
    p.add_argument(
        "--backend", default="http",
        help="http (CHROMA_ASSOC_API_URL / CHROMA_ASSOC_API_KEY) or mock:constant=V | mock:lightness | mock:file=PATH [,noise=SD]",
    )
    p.add_argument("--api-url", default=None, help="Override CHROMA_ASSOC_API_URL")
    p.add_argument("--concepts", nargs="*", default=None, metavar="CONCEPT", help="Concepts to rate (default: the 70-concept set)")
    p.add_argument("--concepts-file", default=None, metavar="PATH", help="One concept per line")
    p.add_argument("--run-name", default=None, help="Run directory name (default: protocol name)")
    p.add_argument("--rate", type=float, default=None, metavar="RPS", help="Max requests per second")
    p.add_argument("--max-attempts", type=int, default=RetryPolicy().max_attempts, help="Attempts per rating")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("evaluate", parents=[common], help="Compare runs with human ratings")
    p.add_argument("--runs", nargs="+", required=True, metavar="RUN", help="Run names (under --out-dir) or run directories")
    p.add_argument("--human", required=True, metavar="PATH", help="Human ratings CSV")
    p.add_argument("--concreteness", default=None, metavar="PATH", help="Concreteness norms CSV")
    p.add_argument("--iterations", type=int, default=SPLIT_HALF_ITERATIONS, help="Split-half iterations")
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="Family-wise alpha before Bonferroni")
    p.add_argument("--dest", default=None, metavar="DIR", help="Output directory (default: <out-dir>/evaluation)")
    p.set_defaults(func=cmd_evaluate)

    for name, func, help_text in (
        ("specificity", cmd_specificity, "Entropy-based specificity per concept"),
        ("fit-colorspace", cmd_fit_colorspace, "Per-concept colorimetric regression"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--run", default=None, metavar="RUN", help="Use a run's distributions")
        p.add_argument("--human", default=None, metavar="PATH", help="Use human mean ratings (when no --run)")
        if name == "specificity":
            p.add_argument("--concreteness", default=None, metavar="PATH", help="Concreteness norms CSV")
        p.add_argument("--dest", default=None, metavar="DIR")
        p.set_defaults(func=func)

    p = sub.add_parser("report", parents=[common], help="SVG charts for a run")
    p.add_argument("--run", required=True, metavar="RUN")
    p.add_argument("--human", default=None, metavar="PATH", help="Overlay human means and plot specificity vs r")
    p.add_argument("--dest", default=None, metavar="DIR")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("library", parents=[common], help="Export a color library as CSV")
    p.add_argument("--grid", type=float, default=None, metavar="DELTA_E", help="Generate a lattice library with this spacing")
    p.add_argument("--planes", default="0,25,50,75,88,100", help="Lightness planes for --grid")
    p.add_argument("--ab-max", type=float, default=125.0, help="Lattice extent in a* and b*")
    p.add_argument("--srgb-only", action="store_true", help="Keep only sRGB-representable lattice colors")
    p.add_argument("--output", default=None, metavar="PATH")
    p.set_defaults(func=cmd_library)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    check_required()
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose, args.quiet)
    hint = optional_hint()
    if hint and not args.quiet:
        _status(hint)
    _load_dotenv()
    try:
        return args.func(args)
    except ChromaAssocError as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
