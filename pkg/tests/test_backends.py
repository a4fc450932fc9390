"""Scripted backend determinism, the masked generation loss, and the HTTP
client's protocol/retry behavior (exercised through an injected fake
session, no sockets)."""

import json

import numpy as np
import pytest

import cogtree.backends as backends_mod
from cogtree.backends import (
    GenerationRequest,
    HTTPBackend,
    ScriptedBackend,
    hash_unit_vector,
    make_backend,
    sft_loss,
)
from cogtree.errors import (
    BackendUnavailable,
    ContextLongerThanSequence,
    MalformedResponse,
    Timeout,
)


def test_scripted_canned_candidates():
    backend = ScriptedBackend()
    backend.add_completion("p", ["A", "B", "C"])
    result = backend.generate(GenerationRequest(prompt="p", n=3))
    assert result.texts == ["A", "B", "C"]


def test_scripted_deterministic_generation():
    backend = ScriptedBackend(fallback_seed=3)
    req = GenerationRequest(prompt="unknown prompt", n=1, temperature=0.0)
    assert backend.generate(req).texts == backend.generate(req).texts


def test_generate_truncates_at_stop():
    backend = ScriptedBackend()
    backend.add_completion("p", ["x<END>y"])
    result = backend.generate(GenerationRequest(prompt="p", n=1, stop=("<END>",)))
    assert result.texts == ["x"]


def test_generate_cycles_when_script_is_short():
    backend = ScriptedBackend()
    backend.add_completion("p", ["A", "B"])
    assert backend.generate(GenerationRequest(prompt="p", n=5)).texts == [
        "A", "B", "A", "B", "A",
    ]


def test_scripted_embedding_deterministic_and_unit_norm():
    backend = ScriptedBackend(fallback_seed=1)
    a = backend.embed("some text")
    b = backend.embed("some text")
    assert np.array_equal(a, b)
    assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-12)
    assert a.shape == (backend.dim,)


def test_scripted_embeddings_do_not_collide():
    backend = ScriptedBackend(fallback_seed=2)
    vecs = [backend.embed(f"text {i}") for i in range(1000)]
    mat = np.stack(vecs)
    sims = mat @ mat.T
    np.fill_diagonal(sims, 0.0)
    assert sims.max() < 0.999


def test_scripted_embed_rejects_empty_text():
    with pytest.raises(ValueError):
        ScriptedBackend().embed("")


def test_scripted_override_embedding():
    backend = ScriptedBackend()
    vec = np.zeros(backend.dim)
    vec[0] = 1.0
    backend.add_embedding("special", vec)
    assert np.array_equal(backend.embed("special"), vec)


def test_scripted_logprobs_are_negative():
    backend = ScriptedBackend()
    backend.add_completion("p", ["three token text"])
    result = backend.generate(GenerationRequest(prompt="p", n=1, want_logprobs=True))
    assert result.token_logprobs is not None
    assert all(lp <= 0 for _, lp in result.token_logprobs[0])


# -- masked generation loss ----------------------------------------------------

def test_sft_loss_perfect_prediction_is_zero():
    assert sft_loss([0.0, 0.0, 0.0], 0) == 0.0
    assert sft_loss([0.0, 0.0, 0.0], 2) == 0.0


def test_sft_loss_hand_sum():
    assert sft_loss([-1.0, -2.0, -3.0], 1) == pytest.approx(5.0)


def test_sft_loss_all_context():
    assert sft_loss([-1.0, -2.0, -3.0], 3) == 0.0


def test_sft_loss_context_overrun():
    with pytest.raises(ContextLongerThanSequence):
        sft_loss([-1.0], 2)


def test_sft_loss_monotone_in_context_length():
    rng = np.random.default_rng(0)
    logprobs = list(-rng.uniform(0.0, 3.0, size=12))
    losses = [sft_loss(logprobs, m) for m in range(len(logprobs) + 1)]
    assert all(a >= b for a, b in zip(losses, losses[1:]))
    assert losses[0] == max(losses)


# -- HTTP client ----------------------------------------------------------------

class FakeResponse:
    def __init__(self, status_code=200, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload
        self.text = text

    def json(self):
        if self._payload is None:
            raise ValueError("no json")
        return self._payload


class FakeSession:
    """Yields queued responses/exceptions; records calls."""

    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.calls = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls.append({"url": url, "body": json, "headers": headers})
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


def _completion_payload(texts):
    return {"choices": [{"text": t} for t in texts]}


def _no_sleep(monkeypatch):
    slept = []
    monkeypatch.setattr(backends_mod.time, "sleep", slept.append)
    return slept


def test_http_generate_parses_choices(monkeypatch):
    session = FakeSession([FakeResponse(payload=_completion_payload(["one", "two"]))])
    backend = HTTPBackend(base_url="http://svc", api_key="k", session=session)
    result = backend.generate(GenerationRequest(prompt="p", n=2))
    assert result.texts == ["one", "two"]
    body = session.calls[0]["body"]
    assert body["prompt"] == "p" and body["n"] == 2
    assert session.calls[0]["headers"]["Authorization"] == "Bearer k"


def test_http_retries_then_succeeds(monkeypatch):
    import requests

    slept = _no_sleep(monkeypatch)
    session = FakeSession(
        [
            requests.ConnectionError("down"),
            FakeResponse(status_code=503),
            FakeResponse(payload=_completion_payload(["ok"])),
        ]
    )
    backend = HTTPBackend(base_url="http://svc", session=session)
    result = backend.generate(GenerationRequest(prompt="p", n=1))
    assert result.texts == ["ok"]
    assert len(session.calls) == 3
    assert slept == [0.5, 1.0]


def test_http_gives_up_after_three_attempts(monkeypatch):
    import requests

    _no_sleep(monkeypatch)
    session = FakeSession([requests.ConnectionError("down")] * 3)
    backend = HTTPBackend(base_url="http://svc", session=session)
    with pytest.raises(BackendUnavailable):
        backend.generate(GenerationRequest(prompt="p"))
    assert len(session.calls) == 3


def test_http_timeout_surfaces_as_timeout(monkeypatch):
    import requests

    _no_sleep(monkeypatch)
    session = FakeSession([requests.Timeout("slow")] * 3)
    backend = HTTPBackend(base_url="http://svc", session=session)
    with pytest.raises(Timeout):
        backend.embed("text")


def test_http_malformed_payload():
    session = FakeSession([FakeResponse(payload={"nope": 1})])
    backend = HTTPBackend(base_url="http://svc", session=session)
    with pytest.raises(MalformedResponse):
        backend.generate(GenerationRequest(prompt="p"))


def test_http_client_error_is_not_retried():
    session = FakeSession([FakeResponse(status_code=401, text="denied")])
    backend = HTTPBackend(base_url="http://svc", session=session)
    with pytest.raises(MalformedResponse):
        backend.generate(GenerationRequest(prompt="p"))
    assert len(session.calls) == 1


def test_http_embed_and_dim_discovery():
    session = FakeSession([FakeResponse(payload={"data": [{"embedding": [1.0, 2.0, 3.0]}]})])
    backend = HTTPBackend(base_url="http://svc", session=session)
    vec = backend.embed("text")
    assert np.array_equal(vec, [1.0, 2.0, 3.0])
    assert backend.dim == 3


def test_http_wrong_candidate_count():
    session = FakeSession([FakeResponse(payload=_completion_payload(["only one"]))])
    backend = HTTPBackend(base_url="http://svc", session=session)
    with pytest.raises(MalformedResponse):
        backend.generate(GenerationRequest(prompt="p", n=3))


class ScriptRoutingSession:
    """Fake transport that serves the completion protocol straight from a
    ScriptedBackend, for interchangeability tests."""

    def __init__(self, scripted: ScriptedBackend):
        self.scripted = scripted

    def post(self, url, json=None, headers=None, timeout=None):
        if url.endswith("/completions"):
            req = GenerationRequest(
                prompt=json["prompt"],
                n=json["n"],
                max_tokens=json["max_tokens"],
                temperature=json["temperature"],
                stop=tuple(json.get("stop", ())),
                seed=json.get("seed"),
            )
            texts = self.scripted.generate(req).texts
            return FakeResponse(payload={"choices": [{"text": t} for t in texts]})
        if url.endswith("/embeddings"):
            vec = self.scripted.embed(json["input"])
            return FakeResponse(payload={"data": [{"embedding": vec.tolist()}]})
        return FakeResponse(status_code=404, text="no such endpoint")


def test_http_and_scripted_backends_are_interchangeable():
    from cogtree.core import Mode, Query
    from cogtree.search import SearchDeps, run_rollout
    from cogtree.synthetic import build_logic_world

    world = build_logic_world(n_samples=6, seed=13)
    sample = next(s for s in world.samples if s.provable)
    query = Query(id=sample.id, text=sample.goal, mode=Mode.LOGIC, theory=sample.theory)

    direct = run_rollout(
        query, SearchDeps(world.index, world.backend, world.oracle()), world.cfg
    )
    http_backend = HTTPBackend(
        base_url="http://svc", session=ScriptRoutingSession(world.backend)
    )
    via_http = run_rollout(
        query, SearchDeps(world.index, http_backend, world.oracle()), world.cfg
    )

    assert direct.terminal_reason == via_http.terminal_reason
    assert direct.overall == via_http.overall
    assert [s.decomposition.raw_text for s in direct.chain.steps] == [
        s.decomposition.raw_text for s in via_http.chain.steps
    ]


def test_make_backend_specs(monkeypatch):
    assert isinstance(make_backend("scripted"), ScriptedBackend)
    scripted = make_backend("scripted:7")
    assert isinstance(scripted, ScriptedBackend) and scripted.fallback_seed == 7
    assert isinstance(make_backend("http://svc"), HTTPBackend)


def test_hash_unit_vector_is_seed_sensitive():
    a = hash_unit_vector("same text", seed=0)
    b = hash_unit_vector("same text", seed=1)
    assert not np.allclose(a, b)
