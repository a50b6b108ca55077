import json

import httpx
import pytest

from chroma_assoc.backends import (
    API_KEY_ENV,
    API_URL_ENV,
    DEFAULT_API_URL,
    ApiConfig,
    HttpChatBackend,
    MockBackend,
    RateLimiter,
    RatingBackend,
    _parse_retry_after,
    constant_backend,
    get_api_config,
    is_retryable,
    mock_backend,
)
from chroma_assoc.errors import BackendError, ConfigurationError, ProtocolViolation
from chroma_assoc.estimator import RatingProtocol, RetryPolicy, build_prompt, estimate_distribution

CONFIG = ApiConfig(url="https://chat.test/v1/chat/completions", api_key="sk-test")


def _reply(text):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": text}}]})


def test_http_backend_posts_chat_payload():
    seen = []

    def handler(request):
        seen.append(request)
        return _reply("0.812")

    with HttpChatBackend(CONFIG, transport=httpx.MockTransport(handler)) as backend:
        out = backend.complete("sys", "user text", temperature=0.0, model_id="gpt-4")
    assert out == "0.812"
    req = seen[0]
    assert str(req.url) == CONFIG.url
    assert req.headers["authorization"] == "Bearer sk-test"
    body = json.loads(req.content)
    assert body == {
        "model": "gpt-4",
        "temperature": 0.0,
        "messages": [{"role": "system", "content": "sys"}, {"role": "user", "content": "user text"}],
    }


def test_http_errors_carry_status_and_retry_after():
    def handler(request):
        return httpx.Response(429, headers={"Retry-After": "7"}, json={"error": "slow down"})

    backend = HttpChatBackend(CONFIG, transport=httpx.MockTransport(handler))
    with pytest.raises(BackendError) as info:
        backend.complete("s", "u", temperature=0.0, model_id="m")
    assert info.value.status_code == 429
    assert info.value.retry_after == 7.0
    assert is_retryable(info.value)
    backend.close()


def test_malformed_body_is_a_backend_error():
    backend = HttpChatBackend(CONFIG, transport=httpx.MockTransport(lambda r: httpx.Response(200, json={"x": 1})))
    with pytest.raises(BackendError, match="Malformed"):
        backend.complete("s", "u", temperature=0.0, model_id="m")


def test_transport_failure_is_retryable():
    def handler(request):
        raise httpx.ConnectError("refused", request=request)

    backend = HttpChatBackend(CONFIG, transport=httpx.MockTransport(handler))
    with pytest.raises(BackendError) as info:
        backend.complete("s", "u", temperature=0.0, model_id="m")
    assert info.value.status_code is None
    assert is_retryable(info.value)


@pytest.mark.parametrize("status,retry", [(400, False), (401, False), (404, False), (500, True), (503, True)])
def test_retryable_statuses(status, retry):
    assert is_retryable(BackendError("x", status_code=status)) is retry


def test_estimator_retries_throttled_requests(grays):
    calls = []
    waits = []

    def handler(request):
        calls.append(1)
        if len(calls) == 1:
            return httpx.Response(503, headers={"Retry-After": "2"})
        return _reply("Sure: 0.250")

    backend = HttpChatBackend(CONFIG, transport=httpx.MockTransport(handler))
    protocol = RatingProtocol.preset("single_deterministic")
    dist, records = estimate_distribution(
        protocol, "sky", grays, backend, RetryPolicy(sleep=waits.append), max_workers=1
    )
    assert dist.values == (0.25, 0.25, 0.25)
    assert records[0].attempts == 2
    assert waits == [2.0]


def test_api_config_from_env(monkeypatch):
    monkeypatch.setenv(API_KEY_ENV, " sk-env ")
    monkeypatch.delenv(API_URL_ENV, raising=False)
    cfg = get_api_config()
    assert cfg == ApiConfig(DEFAULT_API_URL, "sk-env")
    monkeypatch.setenv(API_URL_ENV, "http://localhost:8000/v1/chat/completions")
    assert get_api_config().url == "http://localhost:8000/v1/chat/completions"
    assert get_api_config(url="http://x").url == "http://x"


def test_missing_key_is_configuration_error(monkeypatch):
    monkeypatch.delenv(API_KEY_ENV, raising=False)
    with pytest.raises(ConfigurationError, match=API_KEY_ENV):
        get_api_config()


@pytest.mark.parametrize("value,expected", [(None, None), ("", None), ("3", 3.0), ("-4", 0.0), ("soon", None)])
def test_parse_retry_after(value, expected):
    assert _parse_retry_after(value) == expected


def test_backends_satisfy_protocol():
    assert isinstance(constant_backend(0.5), RatingBackend)
    assert isinstance(HttpChatBackend(CONFIG), RatingBackend)


def test_mock_reads_prompt_back(uw71):
    _system, user = build_prompt(RatingProtocol.preset("anchored_deterministic"), "sunset", "#2F6EF6", uw71)
    assert MockBackend.parse_prompt(user) == ("sunset", "#2F6EF6")
    with pytest.raises(ProtocolViolation):
        MockBackend.parse_prompt("Rate this color please")


def test_mock_is_deterministic_at_zero_temperature():
    backend = MockBackend(lambda _c, _h: 0.42, noise_sd=0.3, seed=5)
    prompt = "Concept: 'sky'\nColor: #FFFFFF\nAnswer with only the number:"
    assert {backend.complete("s", prompt, temperature=0.0, model_id="m") for _ in range(5)} == {"0.420"}


def test_mock_noise_stream_is_per_key_and_seeded():
    prompt = "Concept: 'sky'\nColor: #FFFFFF\nAnswer with only the number:"
    other = "Concept: 'sea'\nColor: #FFFFFF\nAnswer with only the number:"

    def draws(seed, interleave):
        backend = MockBackend(lambda _c, _h: 0.5, noise_sd=0.2, seed=seed)
        out = []
        for _ in range(4):
            if interleave:
                backend.complete("s", other, temperature=1.0, model_id="m")
            out.append(backend.complete("s", prompt, temperature=1.0, model_id="m"))
        return out

    assert draws(3, False) == draws(3, True)
    assert draws(3, False) != draws(4, False)
    assert len(set(draws(3, False))) > 1


def test_mock_clamps_to_unit_interval():
    prompt = "Concept: 'sky'\nColor: #FFFFFF\nAnswer with only the number:"
    backend = MockBackend(lambda _c, _h: 0.99, noise_sd=5.0, seed=1)
    values = [float(backend.complete("s", prompt, temperature=1.0, model_id="m")) for _ in range(50)]
    assert all(0.0 <= v <= 1.0 for v in values)
    assert 0.0 in values and 1.0 in values


def test_rate_limiter_waits_for_tokens():
    now = [0.0]
    slept = []

    def sleep(s):
        slept.append(s)
        now[0] += s

    limiter = RateLimiter(2.0, burst=1, clock=lambda: now[0], sleep=sleep)
    for _ in range(3):
        limiter.acquire()
    assert slept == pytest.approx([0.5, 0.5])
    RateLimiter(None).acquire()
    with pytest.raises(ValueError):
        RateLimiter(0.0)


def test_mock_backend_factory(uw71):
    protocol = RatingProtocol.preset("stochastic_averaged", repetitions=2)

    def run(seed):
        backend = mock_backend(lambda _c, hex_code: 0.9 if hex_code == "#FFFFFF" else 0.1, noise_sd=0.05, seed=seed)
        return estimate_distribution(protocol, "snow", uw71, backend, RetryPolicy(sleep=lambda _s: None))[0].values

    assert run(2) == run(2)
    assert run(2) != run(3)
    white = uw71.position_of(29)
    assert run(2)[white] == pytest.approx(0.9, abs=0.2)
    with pytest.raises(ValueError):
        mock_backend(lambda _c, _h: 0.5, noise_sd=-1.0)
