from __future__ import annotations

import json
from pathlib import Path

import pytest
import requests

from ftc.core import LabelDistribution, NLILabel
from ftc.modelio.cache import ResponseCache, cached_call
from ftc.modelio.client import CachedModel, ModelClient
from ftc.modelio.mock_server import MockServer, MockServerConfig
from ftc.modelio.oracle import (
    OracleWorld,
    WorldError,
    classify_conditioned,
    decide,
    oracle_classify,
    parse_hypothesis,
)
from ftc.modelio.protocol import (
    ClassifyRequest,
    GenerateRequest,
    ProtocolError,
    TransportError,
    build_golden_corpus,
    canonical_json,
    error_body,
    parse_generate_text,
    parse_label_distribution,
    request_key,
)

E, C, N = NLILabel.E, NLILabel.C, NLILabel.N


# --- protocol -------------------------------------------------------------------


def test_classify_request_wire_round_trip_omits_absent_fields():
    bare = ClassifyRequest("scene-1", "A dog barks.")
    assert bare.to_wire() == {
        "premise_ref": "scene-1",
        "hypothesis": "A dog barks.",
        "condition": "x",
    }
    full = ClassifyRequest(
        "scene-1", "A dog barks.", "x_and_e", "A dog is an animal.", 0.3
    )
    assert ClassifyRequest.from_wire(full.to_wire()) == full


def test_classify_request_validation():
    with pytest.raises(ValueError, match="condition"):
        ClassifyRequest("p", "h", "both")
    with pytest.raises(ValueError, match="explanation"):
        ClassifyRequest("p", "h", "e_only")
    with pytest.raises(ValueError, match="noise_sigma"):
        ClassifyRequest("p", "h", noise_sigma=-0.1)


def test_generate_request_validation():
    with pytest.raises(ValueError, match="prompt"):
        GenerateRequest("", 8)
    with pytest.raises(ValueError, match="max_tokens"):
        GenerateRequest("go", 0)
    with pytest.raises(ValueError, match="temperature"):
        GenerateRequest("go", 8, temperature=-1.0)
    request = GenerateRequest("go", 8, stop=["\n"])
    assert request.stop == ("\n",)
    assert GenerateRequest.from_wire(request.to_wire()) == request


def test_canonical_json_is_sorted_and_compact():
    assert canonical_json({"b": 1, "a": [1, 2]}) == '{"a":[1,2],"b":1}'


def test_request_key_separates_kind_and_payload():
    payload = {"premise_ref": "p", "hypothesis": "h", "condition": "x"}
    key = request_key("classify", payload)
    assert key == request_key("classify", dict(reversed(list(payload.items()))))
    assert key != request_key("generate", payload)
    assert key != request_key("classify", dict(payload, condition="e_only"))
    assert len(key) == 64  # sha256 hex


def test_response_parsers_reject_malformed_bodies():
    good = {"probs": {"E": 0.8, "C": 0.1, "N": 0.1}}
    assert parse_label_distribution(good).argmax() == E
    for bad in ({}, {"probs": {"E": 1.0}}, {"probs": "x"}, [1], None):
        with pytest.raises(ProtocolError):
            parse_label_distribution(bad)
    assert parse_generate_text({"text": "hi"}) == "hi"
    for bad in ({}, {"text": 3}, "x", None):
        with pytest.raises(ProtocolError):
            parse_generate_text(bad)


def test_error_body_envelope():
    assert error_body("bad-json", "nope") == {
        "error": {"code": "bad-json", "message": "nope"}
    }


# --- oracle world ------------------------------------------------------------------

# A hand-checkable scene: a poodle (a dog, an animal) chases a ball; dogs and
# cats are disjoint.
_TINY = OracleWorld(
    isa_edges=frozenset({("poodle", "dog"), ("dog", "animal"), ("cat", "animal")}),
    disjoint_pairs=frozenset({("dog", "cat")}),
    scene_facts={
        "scene-1": frozenset({("poodle", "chasing", "ball"), ("poodle", "is", "pet")}),
    },
    vocabulary=frozenset({"poodle", "dog", "animal", "cat", "ball", "pet", "toy"}),
)


def _brute_closure(edges: set[tuple[str, str]], term: str) -> set[str]:
    # Independent of the implementation: expand the edge list to a fixpoint.
    reached = {term}
    changed = True
    while changed:
        changed = False
        for child, parent in edges:
            if child in reached and parent not in reached:
                reached.add(parent)
                changed = True
    return reached


def test_closure_matches_brute_force_expansion():
    edges = set(_TINY.isa_edges)
    for term in _TINY.terms():
        assert set(_TINY.closure(term)) == _brute_closure(edges, term)
    # Premise-local "is" facts join the edge set only for that premise.
    local = edges | {("poodle", "pet")}
    assert set(_TINY.closure("poodle", "scene-1")) == _brute_closure(local, "poodle")
    assert "pet" not in _TINY.closure("poodle", "scene-other")


def test_isa_cycle_is_rejected():
    with pytest.raises(WorldError, match="cycle"):
        OracleWorld(
            isa_edges=frozenset({("a", "b"), ("b", "a")}),
            disjoint_pairs=frozenset(),
            scene_facts={},
            vocabulary=frozenset({"a", "b"}),
        )


def test_disjointness_is_symmetric():
    assert _TINY.incompatible("dog", "cat")
    assert _TINY.incompatible("cat", "dog")
    assert _TINY.incompatible("poodle", "cat")  # via closure
    assert not _TINY.incompatible("dog", "animal")


DECIDE_CASES = [
    ("The poodle is chasing the ball.", E),  # literal fact
    ("The dog is chasing the ball.", E),  # subject generalizes up
    ("The animal is chasing the ball.", E),
    ("The poodle is a dog.", E),  # taxonomy claim
    ("The poodle is an animal.", E),
    ("The poodle is a pet.", E),  # premise-local "is" fact
    ("The poodle is a cat.", C),  # disjoint with its own class
    ("The cat is chasing the ball.", C),  # disjoint subject on a real fact
    ("The dog is not chasing the ball.", C),  # negated entailment
    ("The cat is not chasing the ball.", E),  # negated contradiction
    ("The poodle is a toy.", N),  # in vocabulary, unprovable
    ("The poodle is not a toy.", N),  # negated N stays N
    ("The zebra is chasing the ball.", N),  # unknown subject
    ("The poodle is chasing the zebra.", N),  # unknown object
]


@pytest.mark.parametrize("hypothesis,expected", DECIDE_CASES)
def test_decide_hand_derived_labels(hypothesis, expected):
    label, parsed = decide(_TINY, "scene-1", hypothesis)
    assert parsed
    assert label == expected


def test_unparseable_hypothesis_is_neutral():
    label, parsed = decide(_TINY, "scene-1", "Blue!")
    assert (label, parsed) == (N, False)


def test_parse_prefers_longest_known_terms():
    world = OracleWorld(
        isa_edges=frozenset(),
        disjoint_pairs=frozenset(),
        scene_facts={"s": frozenset({("tire swing", "on", "playground")})},
        vocabulary=frozenset({"tire swing", "playground", "tire", "swing"}),
    )
    query = parse_hypothesis(world, "The tire swing is on the playground.")
    assert query.subject == "tire swing"
    assert query.relation == "on"
    assert query.object_ == "playground"
    assert decide(world, "s", "A tire swing on the playground.")[0] == E


def test_oracle_distribution_is_near_one_hot():
    dist = oracle_classify(_TINY, "scene-1", "The poodle is a dog.")
    assert dist.p_e == pytest.approx(0.98)
    assert dist.p_c == pytest.approx(0.01)
    assert dist.p_n == pytest.approx(0.01)


def test_noise_is_stable_per_request():
    args = (_TINY, "scene-1", "The poodle is a dog.")
    clean = oracle_classify(*args)
    assert oracle_classify(*args, noise_sigma=None) == clean
    noisy_one = oracle_classify(*args, noise_sigma=0.7)
    noisy_two = oracle_classify(*args, noise_sigma=0.7)
    assert noisy_one == noisy_two  # same request, same draw
    flipped = sum(
        oracle_classify(_TINY, "scene-1", f"The poodle is a dog. v{i}",
                        noise_sigma=1.0).argmax() != E
        for i in range(60)
    )
    assert flipped > 20  # sigma 1 resamples the argmax uniformly


def test_conditioned_explanation_adds_a_taxonomy_edge():
    request = ClassifyRequest("scene-1", "The poodle is a toy.", "x")
    assert classify_conditioned(_TINY, request).argmax() == N
    helped = ClassifyRequest(
        "scene-1", "The poodle is a toy.", "x_and_e", "A poodle is a toy."
    )
    assert classify_conditioned(_TINY, helped).argmax() == E


def test_explanation_only_ignores_the_hypothesis():
    for hypothesis in ("The poodle is a dog.", "Totally unrelated text here."):
        request = ClassifyRequest(
            "scene-1", hypothesis, "e_only", "A dog is not a cat."
        )
        assert classify_conditioned(_TINY, request).argmax() == C
    neutral = ClassifyRequest("scene-1", "h x", "e_only", "Not all dogs are pets.")
    assert classify_conditioned(_TINY, neutral).argmax() == N


def test_world_json_round_trip():
    doc = _TINY.to_json()
    again = OracleWorld.from_json(doc)
    assert again.to_json() == doc
    assert decide(again, "scene-1", "The dog is chasing the ball.")[0] == E


# --- cache ----------------------------------------------------------------------


def test_cache_round_trip_and_stats(tmp_path):
    cache = ResponseCache(tmp_path)
    assert cache.get("k1") is None
    cache.put("k1", {"q": 1}, {"answer": 1})
    assert cache.get("k1") == {"answer": 1}
    assert cache.stats() == {"hits": 1, "misses": 1, "size": 1}


def test_cache_last_entry_wins_and_survives_reload(tmp_path):
    cache = ResponseCache(tmp_path)
    cache.put("k", {}, {"v": "old"})
    cache.put("k", {}, {"v": "new"})
    assert cache.get("k") == {"v": "new"}
    fresh = ResponseCache(tmp_path)
    assert fresh.get("k") == {"v": "new"}


def test_cache_skips_corrupt_lines(tmp_path):
    cache = ResponseCache(tmp_path)
    cache.put("good", {}, {"v": 1})
    with cache.path.open("a", encoding="utf-8") as fh:
        fh.write("{not json\n")
        fh.write(json.dumps({"wrong": "shape"}) + "\n")
    fresh = ResponseCache(tmp_path)
    assert fresh.get("good") == {"v": 1}


def test_cached_call_fetches_once(tmp_path):
    cache = ResponseCache(tmp_path)
    calls = []

    def fetch():
        calls.append(1)
        return {"n": len(calls)}

    payload = {"q": "x"}
    first = cached_call(cache, "classify", payload, fetch)
    second = cached_call(cache, "classify", payload, fetch)
    assert first == second == {"n": 1}
    assert len(calls) == 1
    # No cache: every call goes through.
    cached_call(None, "classify", payload, fetch)
    assert len(calls) == 2


# --- client ----------------------------------------------------------------------


class _FakeResponse:
    def __init__(self, status_code: int, body):
        self.status_code = status_code
        self._body = body
        self.text = body if isinstance(body, str) else json.dumps(body)

    def json(self):
        if isinstance(self._body, str):
            raise ValueError("not json")
        return self._body


class _FakeSession:
    """Scripted transport: pops one outcome per post."""

    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.requests = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.requests.append({"url": url, "json": json, "headers": headers})
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


_OK_PROBS = _FakeResponse(200, {"probs": {"E": 0.9, "C": 0.05, "N": 0.05}})


def _client(session, **kwargs):
    kwargs.setdefault("classifier_url", "http://model.test")
    kwargs.setdefault("generator_url", "http://model.test")
    kwargs.setdefault("backoff", (0.1, 0.2))
    sleeps = []
    client = ModelClient(session=session, sleep=sleeps.append, **kwargs)
    return client, sleeps


def test_client_retries_transient_failures_with_backoff():
    session = _FakeSession(
        [requests.ConnectionError("down"), _FakeResponse(503, {"oops": 1}), _OK_PROBS]
    )
    client, sleeps = _client(session)
    dist = client.classify(ClassifyRequest("p", "h"))
    assert dist.argmax() == E
    assert sleeps == [0.1, 0.2]
    assert len(session.requests) == 3


def test_client_gives_up_after_backoff_is_exhausted():
    session = _FakeSession([requests.ConnectionError("down")] * 3)
    client, _ = _client(session)
    with pytest.raises(TransportError, match="giving up"):
        client.classify(ClassifyRequest("p", "h"))


def test_client_does_not_retry_client_errors():
    session = _FakeSession([_FakeResponse(400, error_body("bad-request", "nope"))])
    client, sleeps = _client(session)
    with pytest.raises(ProtocolError, match="bad-request"):
        client.classify(ClassifyRequest("p", "h"))
    assert sleeps == []
    assert len(session.requests) == 1


def test_client_rejects_non_json_success_bodies():
    session = _FakeSession([_FakeResponse(200, "<html>hi</html>")])
    client, _ = _client(session)
    with pytest.raises(ProtocolError, match="non-JSON"):
        client.classify(ClassifyRequest("p", "h"))


def test_client_sends_bearer_token_and_caps_tokens():
    session = _FakeSession([_FakeResponse(200, {"text": "ok"})])
    client, _ = _client(session, bearer_token="secret", max_tokens_cap=16)
    client.generate(GenerateRequest("go", 8))
    assert session.requests[0]["headers"]["Authorization"] == "Bearer secret"
    with pytest.raises(ValueError, match="cap"):
        client.generate(GenerateRequest("go", 64))


def test_client_requires_configured_urls(monkeypatch):
    monkeypatch.delenv("FTC_CLASSIFIER_URL", raising=False)
    monkeypatch.delenv("FTC_GENERATOR_URL", raising=False)
    bare = ModelClient(session=_FakeSession([]))
    with pytest.raises(TransportError, match="FTC_CLASSIFIER_URL"):
        bare.classify(ClassifyRequest("p", "h"))
    with pytest.raises(TransportError, match="FTC_GENERATOR_URL"):
        bare.generate(GenerateRequest("go", 8))


def test_cached_model_serves_repeats_from_cache(tmp_path):
    class CountingClassifier:
        calls = 0

        def classify(self, request):
            CountingClassifier.calls += 1
            return LabelDistribution(0.98, 0.01, 0.01)

    model = CachedModel(ResponseCache(tmp_path), CountingClassifier())
    request = ClassifyRequest("p", "h")
    assert model.classify(request) == model.classify(request)
    assert CountingClassifier.calls == 1
    with pytest.raises(TransportError):
        model.generate(GenerateRequest("go", 8))


# --- mock server -------------------------------------------------------------------


@pytest.fixture(scope="module")
def tiny_server():
    with MockServer(MockServerConfig(world=_TINY)) as server:
        yield server


def test_mock_server_round_trips(tiny_server):
    client = ModelClient(
        classifier_url=tiny_server.url, generator_url=tiny_server.url
    )
    dist = client.classify(ClassifyRequest("scene-1", "The poodle is a dog."))
    assert dist.argmax() == E
    text = client.generate(
        GenerateRequest(
            "Extract the two key spans from each explanation.\n###\n"
            "Explanation: A dog is a type of animal.\nLabel: entailment\nSpans:",
            max_tokens=32,
            stop=("\n",),
        )
    )
    assert text.strip() == "A: dog | B: animal"


def test_mock_server_error_envelopes(tiny_server):
    def post(path, data: bytes):
        return requests.post(tiny_server.url + path, data=data, timeout=5)

    bad_json = post("/v1/classify", b"{nope")
    assert bad_json.status_code == 400
    assert bad_json.json()["error"]["code"] == "bad-json"

    unknown = post("/v1/nothing", b"{}")
    assert unknown.status_code == 404
    assert unknown.json()["error"]["code"] == "not-found"

    bad_request = post("/v1/classify", json.dumps({"condition": "maybe"}).encode())
    assert bad_request.status_code == 400
    assert bad_request.json()["error"]["code"] == "bad-request"

    over_cap = post(
        "/v1/generate",
        json.dumps({"prompt": "go", "max_tokens": 100000}).encode(),
    )
    assert over_cap.status_code == 400
    assert over_cap.json()["error"]["code"] == "max-tokens"


def test_mock_server_canned_mode():
    request = ClassifyRequest("p", "h")
    config = MockServerConfig.from_json(
        {
            "classify": "canned",
            "generate": "canned",
            "canned_classify": [
                {
                    "request": request.to_wire(),
                    "response": {"probs": {"E": 0.2, "C": 0.7, "N": 0.1}},
                }
            ],
            "canned_generate": [{"suffix": "Spans:", "text": " A: x | B: y"}],
        }
    )
    with MockServer(config) as server:
        client = ModelClient(classifier_url=server.url, generator_url=server.url)
        assert client.classify(request).argmax() == C
        with pytest.raises(ProtocolError, match="no-canned-response"):
            client.classify(ClassifyRequest("p", "other"))
        assert client.generate(GenerateRequest("...Spans:", 8)) == " A: x | B: y"
        with pytest.raises(ProtocolError, match="no-canned-response"):
            client.generate(GenerateRequest("no match", 8))


def test_mock_server_satisfies_the_golden_corpus(tiny_server):
    corpus = build_golden_corpus()
    for case in corpus["classify"]:
        response = requests.post(
            tiny_server.url + corpus["classify_path"], json=case["body"], timeout=5
        )
        if case["expect"] == "ok":
            assert response.status_code == 200, case["name"]
            parse_label_distribution(response.json())  # raises on bad shape
        else:
            assert 400 <= response.status_code < 500, case["name"]
            envelope = response.json()["error"]
            assert set(envelope) >= {"code", "message"}
    for case in corpus["generate"]:
        response = requests.post(
            tiny_server.url + corpus["generate_path"], json=case["body"], timeout=5
        )
        if case["expect"] == "ok":
            assert response.status_code == 200, case["name"]
            parse_generate_text(response.json())
        else:
            assert 400 <= response.status_code < 500, case["name"]
            assert "error" in response.json()


def test_shipped_corpus_artifact_is_current():
    # protocol/golden_corpus.json is what out-of-tree servers test against;
    # regenerate it whenever the builder changes.
    artifact = Path(__file__).parents[1] / "protocol" / "golden_corpus.json"
    assert json.loads(artifact.read_text()) == build_golden_corpus()


def test_zero_noise_requests_are_deterministic(tiny_server):
    client = ModelClient(classifier_url=tiny_server.url)
    request = ClassifyRequest("scene-1", "The dog is chasing the ball.",
                              noise_sigma=0.0)
    assert client.classify(request) == client.classify(request)
