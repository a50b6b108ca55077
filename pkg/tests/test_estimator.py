import math

import numpy as np

import pytest

from chroma_assoc.backends import MockBackend, constant_backend
from chroma_assoc.errors import (
    BackendError,
    IncompleteDistributionError,
    InputValidationError,
    ParseFailure,
    ProtocolViolation,
)
from chroma_assoc.estimator import (
    SYSTEM_PROMPT,
    AssociationDistribution,
    ProtocolName,
    RatingProtocol,
    RatingRecord,
    RetryPolicy,
    build_prompt,
    estimate_distribution,
    now_iso,
    parse_rating,
)
from chroma_assoc.reference import CONCEPTS

from .conftest import GOLDEN, lightness_truth

NO_SLEEP = RetryPolicy(sleep=lambda _s: None)


def test_single_prompt_matches_golden(uw71):
    protocol = RatingProtocol.preset("single_deterministic")
    system, user = build_prompt(protocol, "apple", "#FFFFFF", uw71)
    assert system == SYSTEM_PROMPT
    assert (GOLDEN / "single_deterministic_apple.txt").read_text(encoding="utf-8") == user + "\n"


def test_anchored_prompt_matches_golden(grays):
    protocol = RatingProtocol.preset("anchored_deterministic")
    _system, user = build_prompt(protocol, "apple", "#777777", grays)
    assert (GOLDEN / "anchored_deterministic_apple.txt").read_text(encoding="utf-8") == user + "\n"


def test_anchored_prompt_lists_every_uw71_hex(uw71):
    protocol = RatingProtocol.preset("anchored_deterministic")
    _system, user = build_prompt(protocol, "apple", "#FFFFFF", uw71)
    listed = user.split("here's the set of all the colors ", 1)[1].split(".\n", 1)[0]
    assert listed.split(", ") == uw71.hexes
    assert "That color should get a rating of 1." in user
    assert "That color should get a rating of 0." in user


@pytest.mark.parametrize("concept", ["", "   ", "o'clock", "two\nlines"])
def test_prompt_rejects_bad_concepts(uw71, concept):
    with pytest.raises(InputValidationError):
        build_prompt(RatingProtocol.preset("single_deterministic"), concept, "#FFFFFF", uw71)


@pytest.mark.parametrize("hex_code", ["FFFFFF", "#FFF", "#GGGGGG", "#FFFFFF0"])
def test_prompt_rejects_bad_hex(uw71, hex_code):
    with pytest.raises(InputValidationError):
        build_prompt(RatingProtocol.preset("single_deterministic"), "apple", hex_code, uw71)


def test_protocol_presets():
    single = RatingProtocol.preset(ProtocolName.SINGLE_DETERMINISTIC)
    assert (single.temperature, single.repetitions, single.anchoring) == (0.0, 1, False)
    anchored = RatingProtocol.preset("anchored_deterministic")
    assert anchored.anchoring
    stochastic = RatingProtocol.preset("stochastic_averaged")
    assert (stochastic.temperature, stochastic.repetitions) == (1.0, 10)
    assert RatingProtocol.preset("stochastic_averaged", repetitions=3, temperature=0.7).repetitions == 3


def test_protocol_invariants():
    with pytest.raises(InputValidationError):
        RatingProtocol.preset("single_deterministic", temperature=1.0)
    with pytest.raises(InputValidationError):
        RatingProtocol.preset("anchored_deterministic", repetitions=2)
    with pytest.raises(InputValidationError):
        RatingProtocol.preset("stochastic_averaged", repetitions=0)
    with pytest.raises(InputValidationError):
        RatingProtocol("stochastic_averaged", 1.0, 10, anchoring=True)
    with pytest.raises(ValueError):
        RatingProtocol.preset("no_such_protocol")


@pytest.mark.parametrize(
    "raw,value",
    [
        ("0.731", 0.731),
        ("  0.5\n", 0.5),
        ("Rating: 0.250", 0.25),
        (".9", 0.9),
        ("1", 1.0),
        ("0", 0.0),
        ("0.4 or maybe 0.6", 0.4),
    ],
)
def test_parse_rating(raw, value):
    assert parse_rating(raw) == pytest.approx(value)


@pytest.mark.parametrize("raw", ["", "no idea", "1.5", "-0.2", "42"])
def test_parse_rating_rejects(raw):
    with pytest.raises(ParseFailure) as info:
        parse_rating(raw)
    assert info.value.raw == raw


def test_retry_delay_doubles_and_honors_retry_after():
    policy = RetryPolicy(base_delay=1.0, backoff=2.0, max_delay=5.0)
    assert [policy.delay(n) for n in (1, 2, 3, 4)] == [1.0, 2.0, 4.0, 5.0]
    assert policy.delay(1, BackendError("slow down", status_code=429, retry_after=3.0)) == 3.0


def test_single_deterministic_constant(uw71):
    protocol = RatingProtocol.preset("single_deterministic")
    dist, records = estimate_distribution(protocol, "apple", uw71, constant_backend(0.5), NO_SLEEP)
    assert len(dist) == 71
    assert dist.values == (0.5,) * 71
    assert dist.complete
    assert [r.color_index for r in records] == uw71.indices
    assert all(r.attempts == 1 and r.protocol_name == "single_deterministic" for r in records)


def test_values_are_in_library_order(uw71):
    backend = MockBackend(lightness_truth(uw71))
    dist, _ = estimate_distribution(
        RatingProtocol.preset("single_deterministic"), "night", uw71, backend, NO_SLEEP, max_workers=8
    )
    expected = [round(c.lab.L / 100.0, 3) for c in uw71]
    assert list(dist.values) == pytest.approx(expected, abs=5e-4)


def test_rating_counts_for_the_concept_set(uw71):
    single = RatingProtocol.preset("single_deterministic")
    backend = constant_backend(0.3)
    total = 0
    for concept in CONCEPTS:
        _dist, records = estimate_distribution(single, concept, uw71, backend, NO_SLEEP, max_workers=8)
        total += len(records)
    assert total == 4970
    assert backend.requests == 4970


def test_stochastic_repetitions_are_averaged(uw71):
    protocol = RatingProtocol.preset("stochastic_averaged")
    backend = MockBackend(lambda _c, _h: 0.5, noise_sd=0.1, seed=7)
    dist, records = estimate_distribution(protocol, "sky", uw71, backend, NO_SLEEP)
    assert len(records) == 710
    first = [r for r in records if r.color_index == uw71.indices[0]]
    assert [r.repetition for r in first] == list(range(1, 11))
    assert dist.values[0] == pytest.approx(sum(r.parsed_value for r in first) / 10)
    assert dist.n_ratings_per_color == 10
    assert set(dist.counts) == {10}


def test_stochastic_record_count_over_concept_set(uw71):
    protocol = RatingProtocol.preset("stochastic_averaged")
    backend = constant_backend(0.5, noise_sd=0.05, seed=1)
    total = sum(
        len(estimate_distribution(protocol, c, uw71, backend, NO_SLEEP, max_workers=8)[1]) for c in CONCEPTS
    )
    assert total == 49700


def test_seeded_runs_replay_exactly(uw71):
    protocol = RatingProtocol.preset("stochastic_averaged", repetitions=3)

    def run(workers):
        backend = MockBackend(lightness_truth(uw71), noise_sd=0.2, seed=11)
        dist, records = estimate_distribution(protocol, "dusk", uw71, backend, NO_SLEEP, max_workers=workers)
        return dist.values, [(r.color_index, r.repetition, r.raw_response) for r in records]

    assert run(1) == run(6)


class FlakyBackend:
    """Fails the first `failures` calls per prompt, then answers `answer`."""

    capabilities = MockBackend.capabilities

    def __init__(self, failures, answer="0.4", error=None):
        self.failures = failures
        self.answer = answer
        self.error = error
        self.calls = {}

    def complete(self, system, user, *, temperature, model_id):
        n = self.calls.get(user, 0)
        self.calls[user] = n + 1
        if n < self.failures:
            if self.error is not None:
                raise self.error
            return "I cannot say"
        return self.answer


def test_parse_failures_are_retried(grays):
    protocol = RatingProtocol.preset("single_deterministic")
    dist, records = estimate_distribution(protocol, "apple", grays, FlakyBackend(2), NO_SLEEP, max_workers=1)
    assert dist.values == (0.4, 0.4, 0.4)
    assert [r.attempts for r in records] == [3, 3, 3]


def test_non_retryable_status_fails_fast(grays):
    protocol = RatingProtocol.preset("single_deterministic")
    backend = FlakyBackend(5, error=BackendError("bad request", status_code=400))
    with pytest.raises(IncompleteDistributionError) as info:
        estimate_distribution(protocol, "apple", grays, backend, NO_SLEEP, max_workers=1)
    err = info.value
    assert err.failed_colors == [1, 2, 3]
    assert all(math.isnan(v) for v in err.distribution.values)
    assert all(r.attempts == 1 and r.error for r in err.records)


def test_exhausted_retries_yield_partial_distribution(grays):
    protocol = RatingProtocol.preset("single_deterministic")
    seen = []

    class OneBadColor(MockBackend):
        def complete(self, system, user, *, temperature, model_id):
            if "#000000" in user.splitlines()[-2]:
                return "no"
            return super().complete(system, user, temperature=temperature, model_id=model_id)

    backend = OneBadColor(lambda _c, _h: 0.9)
    with pytest.raises(IncompleteDistributionError) as info:
        estimate_distribution(protocol, "night", grays, backend, NO_SLEEP, max_workers=2, on_record=seen.append)
    dist = info.value.distribution
    assert dist.values[:2] == (0.9, 0.9)
    assert math.isnan(dist.values[2])
    assert dist.counts == (1, 1, 0)
    assert info.value.failed_colors == [3]
    # every record reached on_record before the error surfaced
    assert len(seen) == 3


def test_prior_records_are_not_re_requested(grays):
    protocol = RatingProtocol.preset("single_deterministic")
    prior = [
        RatingRecord("apple", 1, "#FFFFFF", "0.200", 0.2, 1, "single_deterministic", "t"),
        RatingRecord("apple", 2, "#777777", "nope", None, 3, "single_deterministic", "t", error="ParseFailure"),
    ]
    backend = constant_backend(0.6)
    dist, records = estimate_distribution(protocol, "apple", grays, backend, NO_SLEEP, prior_records=prior)
    assert dist.values == (0.2, 0.6, 0.6)
    assert backend.requests == 2
    assert records[0] is prior[0]


def test_mock_refuses_foreign_prompts(grays):
    class Rewriting:
        capabilities = MockBackend.capabilities

        def __init__(self):
            self.inner = constant_backend(0.5)

        def complete(self, system, user, *, temperature, model_id):
            return self.inner.complete(system, user.replace("Answer with only the number:", "Answer:"),
                                       temperature=temperature, model_id=model_id)

    with pytest.raises(ProtocolViolation):
        estimate_distribution(RatingProtocol.preset("single_deterministic"), "apple", grays, Rewriting(), NO_SLEEP)


def test_distribution_validates_range():
    with pytest.raises(InputValidationError):
        AssociationDistribution("apple", "grays", (0.5, 1.2), 1)
    partial = AssociationDistribution("apple", "grays", (0.5, math.nan), 1)
    assert not partial.complete
    assert partial.counts == (1, 0)


def test_record_round_trip_through_dict():
    rec = RatingRecord("apple", 4, "#112233", "0.5", 0.5, 2, "stochastic_averaged", "2024-01-01T00:00:00Z", 3, "m")
    assert RatingRecord.from_dict(rec.to_dict()) == rec
    assert rec.key == ("stochastic_averaged", "m", "apple", 4, 3)


def test_now_iso_honors_source_date_epoch(pinned_clock):
    assert now_iso() == pinned_clock


def _mid_truth(library):
    """Truth in [0.2, 0.8] so noisy answers are never clamped."""
    by_hex = {c.hex: 0.2 + 0.6 * c.lab.L / 100.0 for c in library}
    return lambda _concept, hex_code: by_hex[hex_code]


def test_averaged_means_stay_near_the_truth(uw71, grays):
    sd = 0.05
    protocol = RatingProtocol.preset("stochastic_averaged", temperature=1.0, repetitions=10)
    bound = 3 * sd / math.sqrt(10) + 5e-4

    truth = _mid_truth(grays)
    dist, _ = estimate_distribution(protocol, "dusk", grays, MockBackend(truth, noise_sd=sd, seed=21), NO_SLEEP)
    for color, mean in zip(grays, dist.values):
        assert abs(mean - truth("dusk", color.hex)) <= bound

    truth = _mid_truth(uw71)
    dist, _ = estimate_distribution(protocol, "dusk", uw71, MockBackend(truth, noise_sd=sd, seed=21), NO_SLEEP)
    errors = np.array([abs(mean - truth("dusk", c.hex)) for c, mean in zip(uw71, dist.values)])
    assert np.mean(errors <= bound) >= 0.9
    assert errors.max() <= 5 * sd / math.sqrt(10)


def test_variance_of_means_shrinks_with_repetitions(uw71):
    sd = 0.1
    concepts = ["rain", "fog", "mud", "ash", "ink"]
    scaled = []
    for reps in (1, 4, 16):
        protocol = RatingProtocol.preset("stochastic_averaged", temperature=1.0, repetitions=reps)
        backend = MockBackend(lambda _c, _h: 0.5, noise_sd=sd, seed=8)
        deviations = []
        for concept in concepts:
            dist, _ = estimate_distribution(protocol, concept, uw71, backend, NO_SLEEP, max_workers=8)
            deviations.extend(v - 0.5 for v in dist.values)
        variance = float(np.mean(np.square(deviations)))
        scaled.append(variance * reps)
    # 355 means per setting: the estimate of sd**2 is good to about 8%
    assert scaled == pytest.approx([sd**2] * 3, rel=0.3)
