"""
Statistics for comparing estimated and human association distributions.

Correlation, Spearman-Brown split-half reliability, Bonferroni critical r,
paired t-tests, entropy-based specificity, OLS summaries and learning curves.
Randomness always comes from an explicit seed.
"""

from __future__ import annotations

import logging
import math
import zlib
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

import numpy as np
from scipy import stats

from chroma_assoc.errors import (
    DegenerateTestError,
    InputValidationError,
    InsufficientDataError,
    SingularDesignError,
    UndefinedStatisticError,
)

logger = logging.getLogger(__name__)

SPLIT_HALF_ITERATIONS = 50
# Resamples allowed per split-half iteration when a half-mean vector is constant
SPLIT_HALF_MAX_RESAMPLES = 100
SPECIFICITY_EPS = 1e-6
DEFAULT_ALPHA = 0.05
LEARNING_CURVE_SHUFFLES = 20

Seed = Union[int, Sequence[int]]


def concept_seed(seed: int, concept: str) -> list[int]:
    """Independent RNG stream per concept, stable across runs and worker order."""
    return [int(seed), zlib.crc32(concept.encode("utf-8"))]


def _vector(x: Iterable[float], name: str) -> np.ndarray:
    arr = np.asarray(list(x) if not isinstance(x, np.ndarray) else x, dtype=float)
    if arr.ndim != 1:
        raise InputValidationError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise InputValidationError(f"{name} contains non-finite values")
    return arr


def _checked_pair(x: Iterable[float], y: Iterable[float]) -> tuple[np.ndarray, np.ndarray]:
    a = _vector(x, "x")
    b = _vector(y, "y")
    if a.shape != b.shape:
        raise InputValidationError(f"Length mismatch: {a.size} vs {b.size}")
    if a.size < 3:
        raise InsufficientDataError(f"pearson needs at least 3 pairs, got {a.size}")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise UndefinedStatisticError("Correlation undefined for a constant vector")
    return a, b


def pearson(x: Iterable[float], y: Iterable[float]) -> float:
    """Sample Pearson correlation. Constant inputs raise instead of returning NaN."""
    a, b = _checked_pair(x, y)
    return float(np.clip(stats.pearsonr(a, b)[0], -1.0, 1.0))


@dataclass(frozen=True)
class CorrelationTest:
    r: float
    df: int
    p: float


def correlation_test(x: Iterable[float], y: Iterable[float]) -> CorrelationTest:
    """Pearson r with df = n - 2 and a two-tailed p."""
    a, b = _checked_pair(x, y)
    res = stats.pearsonr(a, b)
    return CorrelationTest(float(np.clip(res[0], -1.0, 1.0)), a.size - 2, float(res[1]))


def spearman_brown(r: float) -> float:
    """Full-length reliability from a half-length correlation: 2r / (1 + r)."""
    if r > 1.0 or math.isnan(r):
        raise InputValidationError(f"correlation must be <= 1, got {r}")
    if r <= -1.0:
        raise UndefinedStatisticError("Spearman-Brown is undefined at r = -1")
    return 2.0 * r / (1.0 + r)


@dataclass(frozen=True, eq=False)
class HumanRatingSet:
    """Participant x color matrix of ratings for one concept, colors in library order."""

    concept: str
    ratings: np.ndarray
    participant_ids: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        arr = np.array(self.ratings, dtype=float)
        if arr.ndim != 2:
            raise InputValidationError("ratings must be a participants x colors matrix")
        if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
            raise InputValidationError(f"ratings for {self.concept!r} must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "ratings", arr)
        ids = tuple(str(p) for p in self.participant_ids) or tuple(str(i + 1) for i in range(arr.shape[0]))
        if len(ids) != arr.shape[0]:
            raise InputValidationError("participant_ids must have one entry per row")
        object.__setattr__(self, "participant_ids", ids)

    @property
    def n_participants(self) -> int:
        return int(self.ratings.shape[0])

    @property
    def n_colors(self) -> int:
        return int(self.ratings.shape[1])

    @property
    def means(self) -> np.ndarray:
        return self.ratings.mean(axis=0)


def split_half_reliability(
    h: HumanRatingSet,
    n_iterations: int = SPLIT_HALF_ITERATIONS,
    seed: Seed = 0,
    *,
    max_resamples: int = SPLIT_HALF_MAX_RESAMPLES,
) -> float:
    """
    Mean Spearman-Brown-corrected correlation between the per-color means of
    two random halves of the participants (sizes floor(n/2) and ceil(n/2)).
    """
    n = h.n_participants
    if n < 2:
        raise InsufficientDataError(f"split-half needs at least 2 participants, {h.concept!r} has {n}")
    if n_iterations < 1:
        raise InputValidationError("n_iterations must be >= 1")
    rng = np.random.default_rng(seed)
    half = n // 2
    results = []
    for _ in range(n_iterations):
        for _attempt in range(max_resamples):
            order = rng.permutation(n)
            first = h.ratings[order[:half]].mean(axis=0)
            second = h.ratings[order[half:]].mean(axis=0)
            try:
                results.append(spearman_brown(pearson(first, second)))
                break
            except UndefinedStatisticError:
                continue
        else:
            raise UndefinedStatisticError(
                f"No usable split for {h.concept!r} after {max_resamples} resamples"
            )
    return float(np.mean(results))


def bonferroni_alpha(alpha: float, n_tests: int) -> float:
    if n_tests < 1:
        raise InputValidationError("n_tests must be >= 1")
    return alpha / n_tests


def critical_r(alpha: float, df: int) -> float:
    """Smallest |r| significant at two-tailed alpha with df degrees of freedom."""
    if not 0.0 < alpha < 1.0:
        raise InputValidationError(f"alpha must be in (0, 1), got {alpha}")
    if df < 1:
        raise InputValidationError(f"df must be >= 1, got {df}")
    t = float(stats.t.ppf(1.0 - alpha / 2.0, df))
    return t / math.sqrt(t * t + df)


@dataclass(frozen=True)
class PairedTTest:
    t: float
    df: int
    p: float
    mean_difference: float


def paired_t_test(a: Iterable[float], b: Iterable[float]) -> PairedTTest:
    x = _vector(a, "a")
    y = _vector(b, "b")
    if x.shape != y.shape:
        raise InputValidationError(f"Length mismatch: {x.size} vs {y.size}")
    n = x.size
    if n < 2:
        raise InsufficientDataError("paired t-test needs at least 2 pairs")
    d = x - y
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd <= 1e-12 * max(1.0, abs(mean)):
        raise DegenerateTestError("Paired differences have zero variance")
    res = stats.ttest_rel(x, y)
    return PairedTTest(float(res.statistic), n - 1, float(res.pvalue), mean)


def shannon_entropy(values: Iterable[float]) -> float:
    """Entropy in nats of values normalized to a probability vector; 0 ln 0 = 0."""
    v = _vector(values, "values")
    if np.any(v < 0):
        raise InputValidationError("values must be non-negative")
    total = float(v.sum())
    if total <= 0.0:
        raise InputValidationError("values are all zero; entropy undefined")
    p = v[v > 0] / total
    return float(-(p * np.log(p)).sum())


def specificity(values: Iterable[float], cohort_entropies: Iterable[float]) -> float:
    """
    ln(1 - H_norm + eps), where H_norm is this distribution's entropy min-max
    scaled over the cohort. Higher means a peakier distribution.
    """
    h = shannon_entropy(values)
    cohort = _vector(cohort_entropies, "cohort_entropies")
    if cohort.size < 2:
        raise UndefinedStatisticError("Specificity needs a cohort of at least 2 concepts")
    lo, hi = float(cohort.min()), float(cohort.max())
    if hi - lo <= 0.0:
        raise UndefinedStatisticError("All cohort entropies are equal; normalization undefined")
    if not np.any(np.isclose(cohort, h, rtol=0.0, atol=1e-9)):
        raise InputValidationError("cohort_entropies must include this distribution's entropy")
    h_norm = min(1.0, max(0.0, (h - lo) / (hi - lo)))
    return math.log(1.0 - h_norm + SPECIFICITY_EPS)


def specificities(distributions: Mapping[str, Iterable[float]]) -> dict[str, float]:
    """Specificity of every concept against the cohort formed by all of them."""
    entropies = {c: shannon_entropy(v) for c, v in distributions.items()}
    cohort = list(entropies.values())
    return {c: specificity(distributions[c], cohort) for c in distributions}


@dataclass(frozen=True)
class OlsResult:
    coefficients: np.ndarray
    std_errors: np.ndarray
    t_statistics: np.ndarray
    p_values: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray
    r_squared: float
    df_resid: int


def ols(X: np.ndarray, y: np.ndarray) -> OlsResult:
    """Least squares with classical standard errors. X must have full column rank."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    if y.shape != (n,):
        raise InputValidationError(f"response has {y.size} rows, design has {n}")
    if n <= k:
        raise InsufficientDataError(f"OLS needs more observations ({n}) than columns ({k})")
    if np.linalg.matrix_rank(X) < k:
        raise SingularDesignError(f"Design matrix is rank deficient (rank < {k})")
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    fitted = X @ beta
    resid = y - fitted
    df = n - k
    sigma2 = float(resid @ resid) / df
    cov = sigma2 * np.linalg.inv(X.T @ X)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = beta / se
    p = 2.0 * stats.t.sf(np.abs(t), df)
    sst = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(resid @ resid) / sst if sst > 0 else math.nan
    if not math.isnan(r2):
        r2 = min(1.0, max(0.0, r2))
    return OlsResult(beta, se, t, p, resid, fitted, r2, df)


@dataclass(frozen=True)
class RegressionSummary:
    coefficients: dict[str, float]
    std_errors: dict[str, float]
    t_statistics: dict[str, float]
    p_values: dict[str, float]
    r_squared: float
    n: int
    df_resid: int

    def to_dict(self) -> dict:
        return {
            "coefficients": self.coefficients,
            "std_errors": self.std_errors,
            "t_statistics": self.t_statistics,
            "p_values": self.p_values,
            "r_squared": self.r_squared,
            "n": self.n,
            "df_resid": self.df_resid,
        }


def regress(predictors: Mapping[str, Iterable[float]], response: Iterable[float]) -> RegressionSummary:
    """OLS of response on the named predictors plus an intercept (reported as 'intercept')."""
    if not predictors:
        raise InputValidationError("At least one predictor is required")
    if "intercept" in predictors:
        raise InputValidationError("'intercept' is reserved")
    y = _vector(response, "response")
    names = list(predictors)
    cols = [_vector(predictors[name], name) for name in names]
    for name, col in zip(names, cols):
        if col.shape != y.shape:
            raise InputValidationError(f"Predictor {name!r} has {col.size} rows, response has {y.size}")
    X = np.column_stack(cols + [np.ones_like(y)])
    if float(np.ptp(y)) == 0.0:
        raise UndefinedStatisticError("Response is constant; r^2 undefined")
    res = ols(X, y)
    labels = names + ["intercept"]

    def _named(arr: np.ndarray) -> dict[str, float]:
        return {label: float(v) for label, v in zip(labels, arr)}

    return RegressionSummary(
        coefficients=_named(res.coefficients),
        std_errors=_named(res.std_errors),
        t_statistics=_named(res.t_statistics),
        p_values=_named(res.p_values),
        r_squared=res.r_squared,
        n=int(y.size),
        df_resid=res.df_resid,
    )


def learning_curve(
    records: Iterable,
    human_means: Iterable[float],
    max_k: int,
    seed: Seed | None = None,
    *,
    color_order: Sequence[int] | None = None,
    n_shuffles: int = LEARNING_CURVE_SHUFFLES,
) -> list[float]:
    """
    Correlation with human_means using the first k ratings per color, k = 1..max_k.

    Records must belong to one concept. Colors are taken in color_order (default:
    ascending color index), which must match human_means. With a seed, each k
    averages n_shuffles random k-subsets of the ratings instead of the first k.
    """
    if max_k < 1:
        raise InputValidationError("max_k must be >= 1")
    by_color: dict[int, list[tuple[int, float]]] = defaultdict(list)
    concepts = set()
    for r in records:
        concepts.add(r.concept)
        if r.parsed_value is not None:
            by_color[r.color_index].append((r.repetition, r.parsed_value))
    if len(concepts) > 1:
        raise InputValidationError(f"learning_curve expects one concept, got {sorted(concepts)}")
    order = list(color_order) if color_order is not None else sorted(by_color)
    target = _vector(human_means, "human_means")
    if len(order) != target.size:
        raise InputValidationError(f"{len(order)} colors rated, {target.size} human means")
    matrix = np.empty((len(order), max_k))
    for row, idx in enumerate(order):
        reps = [v for _rep, v in sorted(by_color.get(idx, []))]
        if len(reps) < max_k:
            raise InsufficientDataError(f"Color {idx} has {len(reps)} usable ratings, need {max_k}")
        matrix[row] = reps[:max_k]
    if seed is None:
        return [pearson(target, matrix[:, :k].mean(axis=1)) for k in range(1, max_k + 1)]
    rng = np.random.default_rng(seed)
    curve = []
    for k in range(1, max_k + 1):
        rs = []
        for _ in range(n_shuffles):
            picks = np.argsort(rng.random(matrix.shape), axis=1)[:, :k]
            rs.append(pearson(target, np.take_along_axis(matrix, picks, axis=1).mean(axis=1)))
        curve.append(float(np.mean(rs)))
    return curve


@dataclass(frozen=True)
class ConceptEvaluation:
    concept: str
    pearson_r: float
    significant: bool
    split_half_r: float | None
    specificity: float | None
    concreteness: float | None
    critical_r: float

    def to_row(self) -> dict:
        return {
            "concept": self.concept,
            "pearson_r": self.pearson_r,
            "significant": self.significant,
            "split_half_r": self.split_half_r,
            "specificity": self.specificity,
            "concreteness": self.concreteness,
        }


def evaluate_concept(
    concept: str,
    model_values: Iterable[float],
    human: HumanRatingSet,
    *,
    n_concepts: int,
    alpha: float = DEFAULT_ALPHA,
    n_iterations: int = SPLIT_HALF_ITERATIONS,
    seed: int = 0,
    specificity: float | None = None,
    concreteness: float | None = None,
) -> ConceptEvaluation:
    """
    Model-human correlation for one concept, judged against the Bonferroni
    critical r over n_concepts tests with df = n_colors - 2.
    """
    values = _vector(model_values, "model_values")
    if values.size != human.n_colors:
        raise InputValidationError(f"{concept!r}: {values.size} model values, {human.n_colors} human columns")
    r = pearson(values, human.means)
    threshold = critical_r(bonferroni_alpha(alpha, n_concepts), values.size - 2)
    split = None
    if human.n_participants >= 2:
        try:
            split = split_half_reliability(human, n_iterations, concept_seed(seed, concept))
        except UndefinedStatisticError as e:
            logger.warning("Split-half undefined for %r: %s", concept, e)
    return ConceptEvaluation(concept, r, r > threshold, split, specificity, concreteness, threshold)


@dataclass(frozen=True)
class CohortSummary:
    n_concepts: int
    mean_r: float
    n_significant: int
    alpha: float
    critical_r: float
    mean_split_half_r: float | None
    correlations: dict[str, CorrelationTest]
    regression: RegressionSummary | None

    def to_dict(self) -> dict:
        return {
            "n_concepts": self.n_concepts,
            "mean_r": self.mean_r,
            "n_significant": self.n_significant,
            "alpha": self.alpha,
            "critical_r": self.critical_r,
            "mean_split_half_r": self.mean_split_half_r,
            "correlations": {k: vars(v) for k, v in self.correlations.items()},
            "regression": self.regression.to_dict() if self.regression else None,
        }


def _paired_columns(evals: Sequence[ConceptEvaluation], first: str, second: str) -> tuple[list[float], list[float]]:
    xs, ys = [], []
    for e in evals:
        x, y = getattr(e, first), getattr(e, second)
        if x is not None and y is not None:
            xs.append(float(x))
            ys.append(float(y))
    return xs, ys


def summarize_cohort(evals: Sequence[ConceptEvaluation], alpha: float = DEFAULT_ALPHA) -> CohortSummary:
    """Cohort-level figures: mean r, significance count, and how specificity and concreteness relate to r."""
    if not evals:
        raise InsufficientDataError("No concept evaluations to summarize")
    splits = [e.split_half_r for e in evals if e.split_half_r is not None]
    correlations: dict[str, CorrelationTest] = {}
    pairs = [
        ("specificity", "pearson_r"),
        ("specificity", "split_half_r"),
        ("concreteness", "pearson_r"),
        ("concreteness", "split_half_r"),
        ("concreteness", "specificity"),
    ]
    for first, second in pairs:
        xs, ys = _paired_columns(evals, first, second)
        if len(xs) < 3:
            continue
        try:
            correlations[f"{first}~{second}"] = correlation_test(xs, ys)
        except UndefinedStatisticError as e:
            logger.warning("Skipping %s vs %s: %s", first, second, e)
    regression = None
    usable = [e for e in evals if e.specificity is not None and e.concreteness is not None]
    if len(usable) > 3:
        try:
            regression = regress(
                {
                    "concreteness": [e.concreteness for e in usable],
                    "specificity": [e.specificity for e in usable],
                },
                [e.pearson_r for e in usable],
            )
        except (SingularDesignError, UndefinedStatisticError, InsufficientDataError) as e:
            logger.warning("Skipping concreteness + specificity regression: %s", e)
    return CohortSummary(
        n_concepts=len(evals),
        mean_r=float(np.mean([e.pearson_r for e in evals])),
        n_significant=sum(1 for e in evals if e.significant),
        alpha=bonferroni_alpha(alpha, len(evals)),
        critical_r=evals[0].critical_r,
        mean_split_half_r=float(np.mean(splits)) if splits else None,
        correlations=correlations,
        regression=regression,
    )
