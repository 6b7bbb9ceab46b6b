import json
import threading
import time

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lengthctl.backend import (
    BackendConfig,
    BackendError,
    OpenAIChatBackend,
    ScriptedBackend,
    SimulatedBackend,
    SimulatorProfile,
    TokenLedger,
    billed_cost,
    build_backend,
    load_backend_config,
)
from lengthctl.core import ControlConfig, LengthState, Message, Transcript, count_words
from lengthctl.reflector import next_directive, parse_reply, run_session

DOC = " ".join(f"w{i}" for i in range(100))


def directive_transcript(strategy, requested, produced=0):
    cfg = ControlConfig(strategy, requested)
    d = next_directive(cfg, LengthState(requested, produced_words=produced, deviation=cfg.deviation))
    return Transcript([Message("user", DOC), Message("user", d.prompt_text)])


# -- simulator -----------------------------------------------------------------


def test_exact_binary_reply_length():
    reply = SimulatedBackend().complete(directive_transcript("binary", 500))
    parsed = parse_reply(reply.content)
    assert count_words(parsed.segment_text) == 250
    assert parsed.done is False


def test_exact_trivial_reply_is_one_sentence():
    reply = SimulatedBackend(SimulatorProfile(sentence_words=17)).complete(directive_transcript("multi", 500))
    assert count_words(parse_reply(reply.content).segment_text) == 17


def test_done_after_one_round():
    backend = SimulatedBackend(SimulatorProfile(done_policy="after_n_rounds(1)"))
    t = directive_transcript("multi", 500)
    first = backend.complete(t)
    assert parse_reply(first.content).done is False
    t.append(first)
    t.append(Message("user", "go on"))
    assert parse_reply(backend.complete(t).content).done is True


def test_done_once_budget_exhausted():
    backend = SimulatedBackend()
    parsed = parse_reply(backend.complete(directive_transcript("multi", 100, produced=90)).content)
    assert parsed.done and count_words(parsed.segment_text) == 10
    parsed = parse_reply(backend.complete(directive_transcript("multi", 100, produced=100)).content)
    assert parsed.done and parsed.segment_text == ""


def test_noisy_within_band():
    prof = SimulatorProfile(compliance="noisy", noise_fraction=0.1, seed=5)
    for requested in range(200, 1200, 37):
        n = count_words(parse_reply(SimulatedBackend(prof).complete(directive_transcript("binary", requested)).content).segment_text)
        target = requested // 2
        assert 0.9 * target - 0.5 <= n <= 1.1 * target + 0.5 and n >= 1


def test_simulator_is_deterministic():
    prof = SimulatorProfile(compliance="noisy", seed=9)
    t = directive_transcript("binary", 800)
    assert SimulatedBackend(prof).complete(t) == SimulatedBackend(prof).complete(t)
    other = SimulatedBackend(SimulatorProfile(compliance="noisy", seed=10)).complete(t)
    assert other != SimulatedBackend(prof).complete(t)


def test_profile_validation():
    with pytest.raises(ValueError):
        SimulatorProfile(done_policy="sometimes")
    with pytest.raises(ValueError):
        SimulatorProfile(compliance="chatty")
    assert SimulatorProfile(done_policy="after_n_rounds(3)").done_after == 3


def test_complete_preconditions():
    with pytest.raises(ValueError):
        SimulatedBackend().complete(Transcript())
    with pytest.raises(ValueError):
        SimulatedBackend().complete(Transcript([Message("user", "x"), Message("assistant", "y")]))


# -- ledger ------------------------------------------------------------------------


def test_prefix_caching():
    backend = ScriptedBackend(["ok"])
    shared = " ".join(f"p{i}" for i in range(100))
    backend.complete(Transcript([Message("user", shared + " first tail")]))
    before = backend.ledger.cached_input_words
    backend.complete(Transcript([Message("user", shared + " second tail here")]))
    assert backend.ledger.cached_input_words - before == 100
    assert backend.ledger.fresh_input_words == 102 + 3


def test_previous_reply_is_cached():
    backend = ScriptedBackend(["one two three"])
    t = Transcript([Message("user", DOC)])
    reply = backend.complete(t)
    t.append(reply)
    t.append(Message("user", "next please"))
    backend.complete(t)
    assert backend.ledger.cached_input_words == 100 + 3
    assert backend.ledger.output_words == 6


def test_role_change_breaks_prefix():
    backend = ScriptedBackend(["ok"])
    backend.complete(Transcript([Message("system", "same words")]))
    backend.complete(Transcript([Message("user", "same words")]))
    assert backend.ledger.cached_input_words == 0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.sampled_from(["a", "b", "c"]), max_size=8), min_size=1, max_size=6))
def test_ledger_conservation(calls):
    backend = ScriptedBackend(["x y"])
    presented = 0
    for words in calls:
        t = Transcript([Message("user", DOC), Message("user", " ".join(words) or "-")])
        presented += sum(count_words(m.content) for m in t)
        backend.complete(t)
    led = backend.ledger
    assert led.fresh_input_words + led.cached_input_words == presented
    assert led.calls == len(calls)


def test_payload_view_excludes_framing():
    out = run_session(ControlConfig("binary", 300), DOC, SimulatedBackend())
    led = out.ledger
    assert led.payload_output_words == 300
    assert led.output_words > 300  # JSON framing
    assert led.payload_fresh_input_words == 100
    pay = led.payload()
    assert pay.fresh_input_words == 100 and pay.output_words == 300


@pytest.mark.parametrize(
    "ledger, k, c, expected",
    [
        (TokenLedger(1000, 0, 250), 2, 0.1, 1500),
        (TokenLedger(100, 900, 0), 1, 0.1, 190),
        (TokenLedger(), 1, 0.1, 0),
    ],
)
def test_billed_cost(ledger, k, c, expected):
    assert billed_cost(ledger, k, c) == pytest.approx(expected)


@pytest.mark.parametrize("k, c", [(1, 1.0), (1, 0.0), (1, -0.1), (0, 0.5), (-1, 0.5)])
def test_billed_cost_rejects(k, c):
    with pytest.raises(ValueError):
        billed_cost(TokenLedger(1, 1, 1), k, c)


def test_ledger_arithmetic():
    a = TokenLedger(1, 2, 3, 4, 5, 6, 7)
    assert (a + a) - a == a


# -- remote client -------------------------------------------------------------------


def make_remote(handler, monkeypatch, **kw):
    monkeypatch.setenv("TEST_KEY", "sk-test")
    return OpenAIChatBackend(
        "https://llm.example/v1", "test-model", api_key_env="TEST_KEY",
        transport=httpx.MockTransport(handler), sleep=lambda s: None, **kw,
    )


def ok_response(content):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": content}}]})


def test_remote_round_trips_messages(monkeypatch):
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers["authorization"]
        seen["body"] = json.loads(request.content)
        return ok_response('{"text": "hi", "done": false}')

    backend = make_remote(handler, monkeypatch, temperature=0.3)
    msgs = [Message("system", "Be brief."), Message("user", "Ünïcode \"quotes\"\n\ttabs 雨")]
    reply = backend.complete(Transcript(msgs))
    assert seen["url"] == "https://llm.example/v1/chat/completions"
    assert seen["auth"] == "Bearer sk-test"
    assert seen["body"] == {"model": "test-model", "temperature": 0.3,
                            "messages": [m.to_dict() for m in msgs]}
    assert reply == Message("assistant", '{"text": "hi", "done": false}')
    assert backend.ledger.output_words == 4


def test_remote_missing_key_fails_fast(monkeypatch):
    monkeypatch.delenv("NO_SUCH_KEY", raising=False)

    def handler(request):  # pragma: no cover - must never be called
        raise AssertionError("request sent without a key")

    with pytest.raises(BackendError) as info:
        OpenAIChatBackend("https://x/v1", "m", api_key_env="NO_SUCH_KEY", transport=httpx.MockTransport(handler))
    assert info.value.kind == "auth"


def test_remote_retries_rate_limit_with_backoff(monkeypatch):
    attempts, sleeps = [], []

    def handler(request):
        attempts.append(1)
        if len(attempts) < 3:
            return httpx.Response(429, text="slow down")
        return ok_response("fine")

    monkeypatch.setenv("TEST_KEY", "k")
    backend = OpenAIChatBackend("https://x/v1", "m", api_key_env="TEST_KEY", backoff_seconds=0.5,
                                transport=httpx.MockTransport(handler), sleep=sleeps.append)
    assert backend.complete([Message("user", "hi")]).content == "fine"
    assert sleeps == [0.5, 1.0]


def test_remote_gives_up_after_three_attempts(monkeypatch):
    attempts = []

    def handler(request):
        attempts.append(1)
        raise httpx.ConnectError("down", request=request)

    with pytest.raises(BackendError) as info:
        make_remote(handler, monkeypatch).complete([Message("user", "hi")])
    assert info.value.kind == "network" and len(attempts) == 3


@pytest.mark.parametrize(
    "response, kind",
    [
        (httpx.Response(401, text="bad key"), "auth"),
        (httpx.Response(200, json={"choices": []}), "malformed_upstream"),
        (httpx.Response(200, text="<html>"), "malformed_upstream"),
        (httpx.Response(400, text="bad request"), "malformed_upstream"),
    ],
)
def test_remote_error_kinds_not_retried(monkeypatch, response, kind):
    attempts = []

    def handler(request):
        attempts.append(1)
        return response

    with pytest.raises(BackendError) as info:
        make_remote(handler, monkeypatch).complete([Message("user", "hi")])
    assert info.value.kind == kind and len(attempts) == 1


def test_remote_concurrency_limit(monkeypatch):
    active, peak = [0], [0]
    lock = threading.Lock()

    def handler(request):
        with lock:
            active[0] += 1
            peak[0] = max(peak[0], active[0])
        time.sleep(0.02)
        with lock:
            active[0] -= 1
        return ok_response("x")

    backend = make_remote(handler, monkeypatch, max_concurrent=2)
    children = [backend.spawn() for _ in range(6)]
    threads = [threading.Thread(target=c.complete, args=([Message("user", "hi")],)) for c in children]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert peak[0] <= 2
    assert all(c.ledger.calls == 1 for c in children) and backend.ledger.calls == 0


def test_remote_session_end_to_end(monkeypatch):
    replies = iter(['{"text": "a b c d", "done": false}', 'Okay! {"text": "e f", "done": true}'])
    backend = make_remote(lambda r: ok_response(next(replies)), monkeypatch)
    out = run_session(ControlConfig("multi", 50), DOC, backend)
    assert (out.final_text, out.rounds, out.terminated_by) == ("a b c d e f", 2, "model_done")


# -- config -------------------------------------------------------------------------


def test_backend_config_file(tmp_path, monkeypatch):
    path = tmp_path / "backend.json"
    path.write_text(json.dumps({"kind": "simulator", "simulator": {"compliance": "noisy", "seed": 4}}))
    cfg = load_backend_config(path)
    assert cfg.simulator == SimulatorProfile(compliance="noisy", seed=4)
    assert isinstance(build_backend(cfg), SimulatedBackend)

    path.write_text(json.dumps({"kind": "openai", "base_url": "https://x/v1", "model": "m",
                                "api_key_env": "CFG_KEY", "request_timeout_seconds": 5, "max_concurrent": 3}))
    monkeypatch.setenv("CFG_KEY", "k")
    remote = build_backend(load_backend_config(path))
    assert isinstance(remote, OpenAIChatBackend) and remote.max_concurrent == 3

    path.write_text(json.dumps({"kind": "openai", "bogus": 1}))
    with pytest.raises(ValueError):
        load_backend_config(path)
    with pytest.raises(ValueError):
        BackendConfig(kind="carrier-pigeon")
