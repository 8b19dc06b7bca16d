from __future__ import annotations

import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from aspecteval.backend import (
    CHOICE_PROB_PATH,
    ChoiceProbRequest,
    ChoiceProbResponse,
    CountingBackend,
    MockBackend,
    ReplayBackend,
)
from aspecteval.backend.base import request_hash
from aspecteval.engine import Engine, EvaluationRequest, InjectionMode, boolean_score, score_boolean
from aspecteval.errors import BackendError, DataError
from aspecteval.jsonl import read_jsonl
from aspecteval.prompts import default_instruction_templates, render_boolean_prompt
from aspecteval.selector import HashEmbeddingProvider
from aspecteval.tracecheck import verify_trace

from conftest import REPLAY
from oracles import brute_top_k

NAT, GRD, REL = "naturalness@dialogue-turn", "groundedness@dialogue-turn", "relevance@dialogue-turn"
OUTPUT = "Sure, I love hiking in the mountains."
SOURCES = ("User: Do you like the outdoors?",)


def scripted(entries: dict[str, tuple[float, float]]) -> ReplayBackend:
    table = {}
    for prompt, probs in entries.items():
        body = ChoiceProbRequest(prompt).body()
        h = request_hash(CHOICE_PROB_PATH, body)
        table[h] = {"hash": h, "path": CHOICE_PROB_PATH, "request": body, "response": {"probs": list(probs)}}
    return ReplayBackend(table, strict=True)


def prompt(catalog, aid, aux=()):
    return render_boolean_prompt(default_instruction_templates(), catalog.get(aid), OUTPUT, SOURCES, aux)


class FixedBackend:
    provider_id = "fixed"

    def __init__(self, probs):
        self.probs = probs

    def choice_prob(self, request):
        return ChoiceProbResponse(self.probs)

    def embed(self, texts):
        return HashEmbeddingProvider().embed(texts)


class TestScoreFormula:
    @pytest.mark.parametrize("p_yes,p_no,expected", [(0.3, 0.3, 0.5), (0.9, 0.1, 0.9), (0.2, 0.6, 0.25)])
    def test_examples(self, catalog, p_yes, p_no, expected):
        assert boolean_score(p_yes, p_no) == pytest.approx(expected, abs=1e-15)
        got = score_boolean(OUTPUT, SOURCES, catalog.get(NAT), FixedBackend((p_yes, p_no)))
        assert got == pytest.approx(expected, abs=1e-15)

    def test_zero_sum_is_an_error(self):
        with pytest.raises(BackendError):
            boolean_score(0.0, 0.0)

    def test_subnormal_sum_accepted(self):
        assert boolean_score(5e-324, 5e-324) == 0.5

    def test_uses_yes_no_choices(self, catalog):
        seen = []

        class Spy(FixedBackend):
            def choice_prob(self, request):
                seen.append(request.choices)
                return super().choice_prob(request)

        score_boolean(OUTPUT, SOURCES, catalog.get(NAT), Spy((0.5, 0.5)))
        assert seen == [("Yes", "No")]

    @given(st.floats(0, 1), st.floats(1e-9, 1), st.floats(0, 1))
    def test_monotone_in_p_yes(self, a, p_no, b):
        lo, hi = sorted((a, b))
        assert 0.0 <= boolean_score(lo, p_no) <= boolean_score(hi, p_no) <= 1.0


class TestRequest:
    def test_validation(self):
        with pytest.raises(DataError):
            EvaluationRequest("r", "x", (), NAT, k=-1)
        with pytest.raises(DataError):
            EvaluationRequest("r", "x", (), NAT, k=True)
        with pytest.raises(ValueError):
            EvaluationRequest("r", "x", (), NAT, injection="oracle")

    def test_from_row(self):
        req = EvaluationRequest.from_row(
            {"id": "a", "output": "o", "sources": ["s"], "target_aspect": NAT, "ratings": {GRD: 0.5}}, k=2
        )
        assert req.k == 2 and req.ratings[GRD] == 0.5 and req.sources == ("s",)
        with pytest.raises(DataError, match="missing 'output'"):
            EvaluationRequest.from_row({"id": "a", "target_aspect": NAT})
        with pytest.raises(DataError, match="sources"):
            EvaluationRequest.from_row({"id": "a", "output": "o", "sources": "s", "target_aspect": NAT})


class TestAlgorithm:
    def test_k0_equals_bare_score(self, catalog):
        backend = MockBackend(11)
        for aid in (NAT, REL, "coherence@summarization"):
            score, trace = Engine(backend, catalog).evaluate(EvaluationRequest("r", OUTPUT, SOURCES, aid, k=0))
            assert score == score_boolean(OUTPUT, SOURCES, catalog.get(aid), backend)
            assert trace["selected"] == trace["auxiliary"] == []
            assert trace["enriched_sources"] == list(SOURCES)

    def test_scripted_replay_example(self, catalog, hash_vectors):
        # precondition of the example: mock embeddings put naturalness first for this target
        assert brute_top_k(REL, [NAT, GRD], hash_vectors, 1) == [NAT]
        backend = scripted({
            prompt(catalog, NAT): (0.8, 0.2),
            prompt(catalog, REL, ["The response is natural."]): (0.6, 0.2),
        })
        engine = Engine(backend, catalog, embedder=HashEmbeddingProvider())
        score, trace = engine.evaluate(EvaluationRequest("r", OUTPUT, SOURCES, REL, k=1, pool=(NAT, GRD)))
        assert [s["aspect_id"] for s in trace["selected"]] == [NAT]
        assert trace["auxiliary"][0]["score"] == pytest.approx(0.8)
        assert trace["enriched_sources"] == [*SOURCES, "The response is natural."]
        assert score == 0.6 / (0.6 + 0.2)  # exactly the formula; 0.75 up to float rounding
        assert score == pytest.approx(0.75, abs=1e-12)
        assert verify_trace(trace, catalog, hash_vectors, engine.verbalizers) == []

    def test_ground_truth_injection(self, catalog):
        backend = CountingBackend(scripted({prompt(catalog, REL, ["The response is unnatural."]): (0.1, 0.3)}))
        engine = Engine(backend, catalog, embedder=HashEmbeddingProvider())
        req = EvaluationRequest("r", OUTPUT, SOURCES, REL, k=1, pool=(NAT, GRD),
                                injection="ground-truth", ratings={NAT: 0.2})
        score, trace = engine.evaluate(req)
        assert trace["enriched_sources"][-1] == "The response is unnatural."
        assert score == 0.25
        assert backend.prompts == [prompt(catalog, REL, ["The response is unnatural."])]

    def test_ground_truth_missing_rating(self, catalog):
        engine = Engine(MockBackend(0), catalog, embedder=HashEmbeddingProvider())
        req = EvaluationRequest("r", OUTPUT, SOURCES, REL, k=1, pool=(NAT, GRD), injection="ground-truth")
        with pytest.raises(DataError, match="naturalness"):
            engine.evaluate(req)

    def test_threshold_boundary_is_negative(self, catalog):
        engine = Engine(MockBackend(0), catalog, embedder=HashEmbeddingProvider())
        req = EvaluationRequest("r", OUTPUT, SOURCES, REL, k=1, pool=(NAT,), injection="ground-truth",
                                ratings={NAT: 0.5})
        assert engine.evaluate(req)[1]["auxiliary"][0]["verbalization"] == "The response is unnatural."

    @pytest.mark.parametrize("mode", ["ground-truth", "random"])
    def test_non_predicted_modes_issue_no_auxiliary_calls(self, catalog, mode):
        backend = CountingBackend(MockBackend(3))
        engine = Engine(backend, catalog, embedder=HashEmbeddingProvider())
        ratings = {a.id: 0.7 for a in catalog if a.nlg_task == "dialogue-turn" and a.seen}
        reqs = [EvaluationRequest(f"r{i}", f"{OUTPUT} {i}", SOURCES, REL, k=3, pool_mode="seen",
                                  injection=mode, ratings=ratings) for i in range(5)]
        batch = engine.evaluate_batch(reqs)
        assert len(batch.results) == 5
        assert len(backend.prompts) == 5  # the target query only
        assert all(len(t["auxiliary"]) == 3 for t in batch.traces)

    def test_random_mode_is_seeded(self, catalog):
        def run(seed):
            engine = Engine(MockBackend(0), catalog, embedder=HashEmbeddingProvider())
            reqs = [EvaluationRequest(f"r{i}", OUTPUT, SOURCES, REL, k=2, injection="random", seed=seed)
                    for i in range(20)]
            return [[a["score"] for a in t["auxiliary"]] for t in engine.evaluate_batch(reqs).traces]

        assert run(1) == run(1)
        assert run(1) != run(2)
        flat = [s for row in run(1) for s in row]
        assert set(flat) == {0.0, 1.0}

    def test_predicted_auxiliaries_reuse_sources_without_recursion(self, catalog):
        backend = CountingBackend(MockBackend(3))
        engine = Engine(backend, catalog, embedder=HashEmbeddingProvider())
        engine.evaluate(EvaluationRequest("r", OUTPUT, SOURCES, REL, k=2, pool=(NAT, GRD, "coherence@dialogue-turn")))
        assert len(backend.prompts) == 3
        assert all(p.count(SOURCES[0]) == 1 for p in backend.prompts)

    def test_pool_defaults_to_task_family(self, catalog):
        engine = Engine(MockBackend(0), catalog, embedder=HashEmbeddingProvider())
        _, trace = engine.evaluate(EvaluationRequest("r", OUTPUT, SOURCES, "coherence@summarization", k=1))
        assert trace["pool"] and all(a.endswith("@summarization") for a in trace["pool"])
        assert "coherence@summarization" not in trace["pool"]


class TestBatch:
    def test_duplicate_requests_hit_cache(self, catalog):
        backend = CountingBackend(MockBackend(3))
        engine = Engine(backend, catalog, embedder=HashEmbeddingProvider())
        req = {"id": "a", "output": OUTPUT, "sources": list(SOURCES), "target_aspect": REL}
        batch = engine.evaluate_batch([req, {**req, "id": "b"}], defaults={"k": 1})
        assert batch.results[0]["score"] == batch.results[1]["score"]
        assert len(backend.prompts) == len(set(backend.prompts)) == 2

    def test_cache_under_concurrency(self, catalog):
        release = threading.Event()

        class Slow(CountingBackend):
            def choice_prob(self, request):
                release.wait(5)
                return super().choice_prob(request)

        backend = Slow(MockBackend(3))
        engine = Engine(backend, catalog, embedder=HashEmbeddingProvider())
        reqs = [{"id": f"r{i}", "output": OUTPUT, "sources": list(SOURCES), "target_aspect": REL} for i in range(16)]
        threading.Timer(0.2, release.set).start()
        batch = engine.evaluate_batch(reqs, parallelism=8, defaults={"k": 0})
        assert len(batch.results) == 16
        assert len(backend.prompts) == 1

    def test_skip_mode_records_errors(self, catalog):
        engine = Engine(MockBackend(0), catalog, embedder=HashEmbeddingProvider())
        good = [{"id": f"r{i}", "output": f"o{i}", "sources": [], "target_aspect": REL} for i in range(4)]
        bad = {"id": "broken", "output": 17, "target_aspect": REL}
        batch = engine.evaluate_batch(good[:2] + [bad] + good[2:], on_error="skip", defaults={"k": 1})
        assert [r["id"] for r in batch.results] == ["r0", "r1", "r2", "r3"]
        assert batch.errors == [{"id": "broken", "error": "data_error", "message": batch.errors[0]["message"]}]
        with pytest.raises(DataError):
            engine.evaluate_batch(good[:2] + [bad], on_error="abort")

    def test_backend_error_skipped(self, catalog):
        engine = Engine(scripted({}), catalog, embedder=HashEmbeddingProvider())
        batch = engine.evaluate_batch([{"id": "x", "output": "o", "target_aspect": REL}], on_error="skip",
                                      defaults={"k": 0})
        assert batch.results == [] and batch.errors[0]["error"] == "fixture_miss"

    def test_parallelism_does_not_change_output(self, catalog, tmp_path):
        requests = read_jsonl(REPLAY / "requests.jsonl")
        outs = []
        for par in (1, 8):
            engine = Engine(ReplayBackend(REPLAY / "fixtures.jsonl"), catalog, embedder=HashEmbeddingProvider())
            paths = engine.evaluate_batch(requests, parallelism=par, defaults={"k": 1}).write(tmp_path / str(par))
            outs.append({k: p.read_bytes() for k, p in paths.items()})
        assert outs[0] == outs[1]

    def test_bad_on_error(self, catalog):
        with pytest.raises(DataError):
            Engine(MockBackend(0), catalog).evaluate_batch([], on_error="ignore")


class TestGolden:
    def test_replay_reproduces_golden_files(self, catalog, tmp_path):
        engine = Engine(ReplayBackend(REPLAY / "fixtures.jsonl"), catalog, embedder=HashEmbeddingProvider())
        paths = engine.evaluate_batch(read_jsonl(REPLAY / "requests.jsonl"), defaults={"k": 1}).write(tmp_path)
        assert paths["results"].read_bytes() == (REPLAY / "golden_results.jsonl").read_bytes()
        assert paths["traces"].read_bytes() == (REPLAY / "golden_traces.jsonl").read_bytes()

    def test_every_golden_trace_verifies(self, catalog, verbalizers, hash_vectors):
        traces = read_jsonl(REPLAY / "golden_traces.jsonl")
        assert len(traces) >= 20
        assert len({t["target_aspect"] for t in traces}) == 6
        for t in traces:
            assert verify_trace(t, catalog, hash_vectors, verbalizers) == []
            assert [s["aspect_id"] for s in t["selected"]] == brute_top_k(t["target_aspect"], t["pool"],
                                                                          hash_vectors, t["k"])

    def test_verifier_catches_tampering(self, catalog, hash_vectors):
        trace = read_jsonl(REPLAY / "golden_traces.jsonl")[0]
        assert verify_trace({**trace, "score": trace["score"] + 1e-9}, catalog, hash_vectors)
        wrong = [a for a in trace["pool"] if a != trace["selected"][0]["aspect_id"]][0]
        bad = {**trace, "selected": [{"aspect_id": wrong, "similarity": 0.0}]}
        assert verify_trace(bad, catalog, hash_vectors)
        assert verify_trace({**trace, "enriched_sources": trace["sources"]}, catalog, hash_vectors)


def test_injection_mode_values():
    assert [m.value for m in InjectionMode] == ["predicted", "ground-truth", "random"]
