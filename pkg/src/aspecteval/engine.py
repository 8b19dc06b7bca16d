"""Inference with auxiliary aspects.

For a target aspect the engine (1) picks the top-k auxiliary aspects by
definition similarity, (2) obtains a result for each of them (predicted
by Boolean QA, taken from ground truth, or drawn at random), (3) appends
their verbalizations to the additional texts, and (4) scores the target
with ``P(Yes) / (P(Yes) + P(No))`` on the enriched input.
"""

from __future__ import annotations

import logging
import random
import threading
from collections.abc import Mapping, Sequence
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from .backend import YES_NO, Backend, ChoiceProbRequest
from .domain import Aspect, AspectCatalog, UnitScore, nlg_family
from .errors import AspectEvalError, BackendError, DataError
from .jsonl import write_jsonl
from .prompts import TemplateSet, default_instruction_templates, render_boolean_prompt
from .selector import (
    AspectEmbedding,
    EmbeddingCache,
    EmbeddingProvider,
    PoolMode,
    embed_definitions,
    filter_pool,
    rank_pool,
    select_top_k,
)
from .verbalizer import DEFAULT_THRESHOLD, TemplateCatalog, default_template_catalog, verbalize

log = logging.getLogger(__name__)


class InjectionMode(str, Enum):
    PREDICTED = "predicted"
    GROUND_TRUTH = "ground-truth"
    RANDOM = "random"

    def __str__(self) -> str:
        return self.value


def boolean_score(p_yes: float, p_no: float) -> UnitScore:
    total = p_yes + p_no
    if not total > 0.0:
        raise BackendError(f"P(Yes) + P(No) must be positive, got {p_yes!r} + {p_no!r}")
    return UnitScore(p_yes / total)


@dataclass(frozen=True)
class EvaluationRequest:
    id: str
    output: str
    sources: tuple[str, ...]
    target_aspect: str
    k: int = 1
    pool_mode: PoolMode = PoolMode.ALL
    injection: InjectionMode = InjectionMode.PREDICTED
    ratings: Mapping[str, float] = field(default_factory=dict)
    pool: tuple[str, ...] | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "pool_mode", PoolMode(self.pool_mode))
        object.__setattr__(self, "injection", InjectionMode(self.injection))
        object.__setattr__(self, "ratings", {k: UnitScore(v) for k, v in self.ratings.items()})
        if self.pool is not None:
            object.__setattr__(self, "pool", tuple(self.pool))
        if isinstance(self.k, bool) or not isinstance(self.k, int) or self.k < 0:
            raise DataError(f"k must be a non-negative integer, got {self.k!r}")

    @classmethod
    def from_row(cls, row: Mapping[str, Any], **defaults: Any) -> EvaluationRequest:
        """Build from a request-file row; engine settings come from ``defaults``."""
        for key in ("id", "output", "target_aspect"):
            if key not in row:
                raise DataError(f"request {row.get('id', '?')!r} is missing {key!r}")
        if not isinstance(row["output"], str):
            raise DataError(f"request {row['id']!r}: output must be a string")
        sources = row.get("sources", [])
        if not isinstance(sources, list) or not all(isinstance(s, str) for s in sources):
            raise DataError(f"request {row['id']!r}: sources must be a list of strings")
        ratings = row.get("ratings") or {}
        if not isinstance(ratings, dict):
            raise DataError(f"request {row['id']!r}: ratings must be an object")
        kw = dict(defaults)
        if "pool" in row:
            kw["pool"] = tuple(row["pool"])
        return cls(
            id=str(row["id"]),
            output=row["output"],
            sources=tuple(sources),
            target_aspect=str(row["target_aspect"]),
            ratings=ratings,
            **kw,
        )


@dataclass
class BatchResult:
    results: list[dict]
    traces: list[dict]
    errors: list[dict]

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        paths = {"results": out / "results.jsonl", "traces": out / "traces.jsonl", "errors": out / "errors.jsonl"}
        write_jsonl(paths["results"], self.results)
        write_jsonl(paths["traces"], self.traces)
        write_jsonl(paths["errors"], self.errors)
        return paths


class Engine:
    """Runs the auxiliary-aspect inference procedure against one backend.

    Choice-probability answers are memoized by prompt for the lifetime of
    the engine, so a prompt reaches the backend at most once even when
    several worker threads ask for it at the same time.
    """

    def __init__(
        self,
        backend: Backend,
        catalog: AspectCatalog,
        verbalizers: TemplateCatalog | None = None,
        templates: TemplateSet | None = None,
        embedder: EmbeddingProvider | None = None,
        threshold: float = DEFAULT_THRESHOLD,
        fallback_templates: bool = False,
    ):
        self.backend = backend
        self.catalog = catalog
        self.verbalizers = verbalizers if verbalizers is not None else default_template_catalog()
        self.templates = templates or default_instruction_templates()
        self.embedder = embedder if embedder is not None else backend
        self.threshold = UnitScore(threshold)
        self.fallback_templates = fallback_templates
        self._embedding_cache = EmbeddingCache()
        self._embeddings: dict[str, AspectEmbedding] | None = None
        self._prompts: dict[str, Future] = {}
        self._lock = threading.Lock()
        self._embed_lock = threading.Lock()

    # -- backend access -------------------------------------------------

    def embeddings(self) -> dict[str, AspectEmbedding]:
        with self._embed_lock:
            if self._embeddings is None:
                embs = embed_definitions(list(self.catalog), self.embedder, self._embedding_cache)
                self._embeddings = {e.aspect_id: e for e in embs}
            return self._embeddings

    def query(self, prompt: str) -> tuple[float, float]:
        """Raw (P(Yes), P(No)) for a prompt, memoized."""
        with self._lock:
            fut = self._prompts.get(prompt)
            owner = fut is None
            if owner:
                fut = Future()
                self._prompts[prompt] = fut
        if owner:
            try:
                resp = self.backend.choice_prob(ChoiceProbRequest(prompt, YES_NO))
            except BaseException as exc:
                fut.set_exception(exc)
                raise
            fut.set_result(resp.probs[:2])
        return fut.result()

    def score_boolean(
        self, output: str, sources: Sequence[str], aspect: Aspect, auxiliary: Sequence[str] = ()
    ) -> UnitScore:
        return self._score(output, sources, aspect, auxiliary)[0]

    def _score(
        self, output: str, sources: Sequence[str], aspect: Aspect, auxiliary: Sequence[str] = ()
    ) -> tuple[UnitScore, float, float]:
        prompt = render_boolean_prompt(self.templates, aspect, output, sources, auxiliary)
        p_yes, p_no = self.query(prompt)
        return boolean_score(p_yes, p_no), p_yes, p_no

    # -- the procedure --------------------------------------------------

    def pool_for(self, target: Aspect, req: EvaluationRequest) -> list[Aspect]:
        if req.pool is not None:
            return [self.catalog.get(aid) for aid in req.pool]
        family = nlg_family(target.nlg_task)
        return [a for a in self.catalog if nlg_family(a.nlg_task) == family]

    def _verbalize(self, aspect: Aspect, score: float) -> str:
        return verbalize(aspect, score, self.threshold, self.verbalizers, fallback=self.fallback_templates)

    def evaluate(self, req: EvaluationRequest) -> tuple[UnitScore, dict]:
        target = self.catalog.get(req.target_aspect)
        pool = self.pool_for(target, req) if req.k > 0 else []
        candidates = filter_pool(target, pool, req.pool_mode) if req.k > 0 else []

        selected: list[tuple[Aspect, float | None]] = []
        if req.k > 0:
            if req.pool_mode is PoolMode.RANDOM:
                rng = random.Random(f"{req.seed}:{req.id}:pool")
                picks = select_top_k(target, pool, req.k, req.pool_mode, {}, rng)
                selected = [(a, None) for a in picks]
            else:
                embs = self.embeddings()
                picks = select_top_k(target, pool, req.k, req.pool_mode, embs)
                sims = dict((a.id, s) for a, s in rank_pool(target, picks, embs))
                selected = [(a, sims[a.id]) for a in picks]

        if req.injection is InjectionMode.GROUND_TRUTH:
            missing = [a.id for a, _ in selected if a.id not in req.ratings]
            if missing:
                raise DataError(f"request {req.id!r}: ground-truth mode lacks ratings for {missing}")
        coin = random.Random(f"{req.seed}:{req.id}:results")

        aux_rows: list[dict] = []
        verbalized: list[str] = []
        for aspect, _ in selected:
            p_yes = p_no = None
            if req.injection is InjectionMode.PREDICTED:
                # auxiliaries reuse the request's source texts and get no auxiliaries of their own
                score, p_yes, p_no = self._score(req.output, req.sources, aspect)
            elif req.injection is InjectionMode.GROUND_TRUTH:
                score = req.ratings[aspect.id]
            else:
                score = UnitScore(1.0 if coin.random() < 0.5 else 0.0)
            text = self._verbalize(aspect, score)
            verbalized.append(text)
            aux_rows.append(
                {"aspect_id": aspect.id, "p_yes": p_yes, "p_no": p_no, "score": float(score), "verbalization": text}
            )

        final, t_yes, t_no = self._score(req.output, req.sources, target, verbalized)
        trace = {
            "id": req.id,
            "target_aspect": target.id,
            "k": req.k,
            "pool_mode": req.pool_mode.value,
            "injection_mode": req.injection.value,
            "threshold": float(self.threshold),
            "pool": [a.id for a in candidates],
            "selected": [{"aspect_id": a.id, "similarity": s} for a, s in selected],
            "auxiliary": aux_rows,
            "sources": list(req.sources),
            "enriched_sources": list(req.sources) + verbalized,
            "target": {"p_yes": t_yes, "p_no": t_no},
            "score": float(final),
        }
        return final, trace

    def evaluate_batch(
        self,
        requests: Sequence[EvaluationRequest | Mapping[str, Any]],
        parallelism: int = 1,
        on_error: str = "abort",
        defaults: Mapping[str, Any] | None = None,
    ) -> BatchResult:
        """Evaluate many requests; output order always follows input order.

        ``on_error="skip"`` records per-item failures instead of raising.
        """
        if on_error not in ("abort", "skip"):
            raise DataError(f"on_error must be 'abort' or 'skip', got {on_error!r}")
        defaults = dict(defaults or {})

        def run(item: tuple[int, EvaluationRequest | Mapping[str, Any]]):
            idx, raw = item
            item_id = raw.id if isinstance(raw, EvaluationRequest) else str(raw.get("id", f"#{idx}"))
            try:
                req = raw if isinstance(raw, EvaluationRequest) else EvaluationRequest.from_row(raw, **defaults)
                score, trace = self.evaluate(req)
            except AspectEvalError as exc:
                if on_error == "abort":
                    raise
                return item_id, None, None, {"id": item_id, "error": exc.kind, "message": str(exc)}
            row = {"id": req.id, "score": float(score), "k": req.k, "mode": req.injection.value,
                   "pool_mode": req.pool_mode.value}
            return item_id, row, trace, None

        items = list(enumerate(requests))
        if parallelism <= 1:
            outcomes = [run(it) for it in items]
        else:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                outcomes = list(pool.map(run, items))
        results = [o[1] for o in outcomes if o[1] is not None]
        traces = [o[2] for o in outcomes if o[2] is not None]
        errors = [o[3] for o in outcomes if o[3] is not None]
        log.info("evaluated %d items: %d ok, %d failed", len(items), len(results), len(errors))
        return BatchResult(results, traces, errors)


def score_boolean(
    output: str,
    sources: Sequence[str],
    aspect: Aspect,
    backend: Backend,
    templates: TemplateSet | None = None,
) -> UnitScore:
    """Bare Boolean-QA score of ``aspect`` with no auxiliary information."""
    templates = templates or default_instruction_templates()
    prompt = render_boolean_prompt(templates, aspect, output, sources)
    probs = backend.choice_prob(ChoiceProbRequest(prompt, YES_NO)).probs
    return boolean_score(probs[0], probs[1])


def evaluate_with_auxiliary(
    req: EvaluationRequest, backend: Backend, catalog: AspectCatalog, **engine_kw: Any
) -> tuple[UnitScore, dict]:
    return Engine(backend, catalog, **engine_kw).evaluate(req)

