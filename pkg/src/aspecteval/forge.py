"""Instruction-tuning data synthesis.

From human ratings we derive four task forms (scoring, pairwise comparison,
three-way ranking, Boolean QA), render them as unified instructions, and
pair each stage-1 task with a stage-2 copy whose input also carries the
verbalized ground-truth ratings of the record's other aspects.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
import math
import random
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

from .domain import (
    AUX_SLOT,
    NOTA,
    Aspect,
    AspectCatalog,
    CandidateGroup,
    InstructionTask,
    RatingRecord,
    Stage,
    TaskType,
    UnitScore,
)
from .errors import DataError
from .ingest import group_by_context
from .jsonl import dumps, write_json, write_jsonl
from .prompts import TemplateSet, assemble_instruction, default_instruction_templates, join_texts
from .verbalizer import DEFAULT_THRESHOLD, TemplateCatalog, default_template_catalog, is_positive, verbalize

log = logging.getLogger(__name__)

TASK_ORDER = (TaskType.SCORING, TaskType.BOOLEAN_QA, TaskType.COMPARISON, TaskType.RANKING)


@dataclass(frozen=True)
class ForgeConfig:
    """Knobs for task derivation.

    ``quotas`` caps the number of instances per (aspect, task type); a missing
    entry or ``None`` means unbounded and ``0`` disables the task type.
    """

    likert_levels: int = 5
    threshold: float = DEFAULT_THRESHOLD
    min_gap: float = 0.0
    allow_nota: bool = False
    seed: int = 0
    quotas: Mapping[TaskType, Optional[int]] = field(default_factory=dict)
    train: tuple[str, ...] = ()
    test: tuple[str, ...] = ()
    fallback_templates: bool = False

    def __post_init__(self) -> None:
        if self.likert_levels < 2:
            raise DataError(f"likert_levels must be >= 2, got {self.likert_levels}")
        UnitScore(self.threshold)
        if not 0.0 <= self.min_gap <= 1.0:
            raise DataError(f"min_gap must lie in [0, 1], got {self.min_gap}")
        quotas = {TaskType(k): v for k, v in self.quotas.items()}
        for k, v in quotas.items():
            if v is not None and v < 0:
                raise DataError(f"quota for {k.value} must be non-negative, got {v}")
        object.__setattr__(self, "quotas", quotas)
        object.__setattr__(self, "train", tuple(self.train))
        object.__setattr__(self, "test", tuple(self.test))

    def quota(self, task_type: TaskType) -> Optional[int]:
        return self.quotas.get(task_type)

    def variables(self, task_type: TaskType) -> dict[str, str]:
        if task_type is TaskType.SCORING:
            return {"levels": str(self.likert_levels)}
        if task_type is TaskType.COMPARISON:
            tie = " If both candidates are equally good, answer None of the above." if self.allow_nota else ""
            return {"tie_option": tie}
        return {}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["quotas"] = {k.value: v for k, v in sorted(self.quotas.items(), key=lambda kv: kv[0].value)}
        d["train"] = list(self.train)
        d["test"] = list(self.test)
        return d


def likert_label(y: float, levels: int) -> int:
    """Equal-width binning of a unit score onto ``1..levels``; ``y == 1`` maps to ``levels``."""
    y = UnitScore(y)
    return min(math.floor(y * levels) + 1, levels)


def _rating(record: RatingRecord, aspect: Aspect) -> UnitScore:
    try:
        return record.ratings[aspect.id]
    except KeyError:
        raise DataError(f"record {record.record_id!r} has no rating for {aspect.id!r}") from None


def _render(
    task_type: TaskType,
    aspect: Aspect,
    payload: Mapping[str, str],
    cfg: ForgeConfig,
    templates: TemplateSet | None,
) -> str:
    templates = templates or default_instruction_templates()
    return assemble_instruction(templates.lookup(aspect.id, task_type), aspect, payload, cfg.variables(task_type))


def _single_payload(record: RatingRecord) -> dict[str, str]:
    return {"source": join_texts(record.source_texts), "output": record.output_text}


def derive_scoring(
    record: RatingRecord,
    aspect: Aspect,
    levels: int = 5,
    *,
    templates: TemplateSet | None = None,
    task_id: str | None = None,
) -> InstructionTask:
    label = likert_label(_rating(record, aspect), levels)
    payload = _single_payload(record)
    cfg = ForgeConfig(likert_levels=levels)
    return InstructionTask(
        task_id=task_id or f"scoring:{aspect.id}:{record.record_id}",
        task_type=TaskType.SCORING,
        aspect_id=aspect.id,
        instruction=_render(TaskType.SCORING, aspect, payload, cfg, templates),
        payloads=payload,
        label=label,
    )


def derive_boolean_qa(
    record: RatingRecord,
    aspect: Aspect,
    threshold: float = DEFAULT_THRESHOLD,
    *,
    templates: TemplateSet | None = None,
    task_id: str | None = None,
) -> InstructionTask:
    score = _rating(record, aspect)
    payload = _single_payload(record)
    return InstructionTask(
        task_id=task_id or f"boolean_qa:{aspect.id}:{record.record_id}",
        task_type=TaskType.BOOLEAN_QA,
        aspect_id=aspect.id,
        instruction=_render(TaskType.BOOLEAN_QA, aspect, payload, ForgeConfig(), templates),
        payloads=payload,
        label="Yes" if is_positive(score, threshold) else "No",
    )


def _multi_payload(group: CandidateGroup, presented: Sequence[RatingRecord]) -> dict[str, str]:
    payload = {"source": join_texts(group.source_texts)}
    for i, r in enumerate(presented, start=1):
        payload[f"candidate_{i}"] = r.output_text
    return payload


def _comparison(
    group: CandidateGroup,
    aspect: Aspect,
    cfg: ForgeConfig,
    rng: random.Random,
    pair: Sequence[RatingRecord] | None,
    templates: TemplateSet | None,
    task_id: str | None,
) -> tuple[InstructionTask, list[RatingRecord]] | None:
    rated = group.rated_on(aspect.id)
    if len(rated) < 2:
        raise DataError(f"context {group.context_id!r}: fewer than 2 candidates rated on {aspect.id!r}")
    a, b = pair if pair is not None else rng.sample(rated, 2)
    sa, sb = _rating(a, aspect), _rating(b, aspect)
    if sa == sb:
        if not cfg.allow_nota:
            return None
    elif abs(sa - sb) < cfg.min_gap:
        return None
    presented = [a, b]
    rng.shuffle(presented)
    if sa == sb:
        label: Any = NOTA
    else:
        winner = a if sa > sb else b
        label = presented.index(winner) + 1
    payload = _multi_payload(group, presented)
    task = InstructionTask(
        task_id=task_id or f"comparison:{aspect.id}:{a.record_id}+{b.record_id}",
        task_type=TaskType.COMPARISON,
        aspect_id=aspect.id,
        instruction=_render(TaskType.COMPARISON, aspect, payload, cfg, templates),
        payloads=payload,
        label=label,
    )
    return task, presented


def derive_comparison(
    group: CandidateGroup,
    aspect: Aspect,
    cfg: ForgeConfig,
    rng: random.Random,
    *,
    pair: Sequence[RatingRecord] | None = None,
    templates: TemplateSet | None = None,
    task_id: str | None = None,
) -> InstructionTask | None:
    """Pairwise task; ``None`` when the pair is skipped (tie without NOTA, or gap below ``min_gap``)."""
    out = _comparison(group, aspect, cfg, rng, pair, templates, task_id)
    return out[0] if out else None


def _ranking(
    group: CandidateGroup,
    aspect: Aspect,
    rng: random.Random,
    triple: Sequence[RatingRecord] | None,
    cfg: ForgeConfig,
    templates: TemplateSet | None,
    task_id: str | None,
) -> tuple[InstructionTask, list[RatingRecord]] | None:
    rated = group.rated_on(aspect.id)
    if len(rated) < 3:
        raise DataError(f"context {group.context_id!r}: fewer than 3 candidates rated on {aspect.id!r}")
    chosen = list(triple) if triple is not None else rng.sample(rated, 3)
    scores = [_rating(r, aspect) for r in chosen]
    if len(set(scores)) < 3:
        return None
    presented = list(chosen)
    rng.shuffle(presented)
    order = sorted(range(3), key=lambda i: _rating(presented[i], aspect), reverse=True)
    payload = _multi_payload(group, presented)
    task = InstructionTask(
        task_id=task_id or f"ranking:{aspect.id}:" + "+".join(r.record_id for r in chosen),
        task_type=TaskType.RANKING,
        aspect_id=aspect.id,
        instruction=_render(TaskType.RANKING, aspect, payload, cfg, templates),
        payloads=payload,
        label=tuple(i + 1 for i in order),
    )
    return task, presented


def derive_ranking(
    group: CandidateGroup,
    aspect: Aspect,
    rng: random.Random,
    *,
    triple: Sequence[RatingRecord] | None = None,
    templates: TemplateSet | None = None,
    task_id: str | None = None,
) -> InstructionTask | None:
    """Three-way ranking task; ``None`` when any two sampled scores tie."""
    out = _ranking(group, aspect, rng, triple, ForgeConfig(), templates, task_id)
    return out[0] if out else None


def verbalize_ratings(
    ratings: Mapping[str, float],
    target_id: str,
    catalog: AspectCatalog,
    verbalizers: TemplateCatalog,
    threshold: float = DEFAULT_THRESHOLD,
    fallback: bool = False,
) -> str:
    """Verbalize every rated aspect except the target, in catalog order."""
    if target_id not in ratings:
        raise DataError(f"ratings do not include the target aspect {target_id!r}")
    others = sorted((aid for aid in ratings if aid != target_id), key=catalog.position)
    return " ".join(
        verbalize(catalog.get(aid), ratings[aid], threshold, verbalizers, fallback=fallback) for aid in others
    )


def enrich_with_auxiliary(
    task: InstructionTask,
    group_ratings: Mapping[str, float] | Sequence[Mapping[str, float]],
    catalog: AspectCatalog,
    verbalizers: TemplateCatalog | None = None,
    cfg: ForgeConfig | None = None,
    templates: TemplateSet | None = None,
) -> InstructionTask:
    """Turn a stage-1 task into its stage-2 counterpart.

    ``group_ratings`` is one ratings map for single-output tasks, or one map
    per presented candidate for comparison/ranking tasks; in the latter case
    each candidate's statements are prefixed with its candidate number.
    """
    if task.stage is not Stage.STAGE1:
        raise DataError(f"task {task.task_id!r} is not a stage1 task")
    cfg = cfg or ForgeConfig()
    verbalizers = verbalizers if verbalizers is not None else default_template_catalog()

    def _one(ratings: Mapping[str, float]) -> str:
        return verbalize_ratings(ratings, task.aspect_id, catalog, verbalizers, cfg.threshold, cfg.fallback_templates)

    if isinstance(group_ratings, Mapping):
        aux = _one(group_ratings)
    else:
        blocks = []
        for i, ratings in enumerate(group_ratings, start=1):
            text = _one(ratings)
            if text:
                blocks.append(f"Candidate {i}: {text}")
        aux = " ".join(blocks)
    payload = dict(task.payloads)
    payload[AUX_SLOT] = aux
    aspect = catalog.get(task.aspect_id)
    return InstructionTask(
        task_id=task.task_id,
        task_type=task.task_type,
        aspect_id=task.aspect_id,
        instruction=_render(task.task_type, aspect, payload, cfg, templates),
        payloads=payload,
        label=task.label,
        stage=Stage.STAGE2,
    )


@dataclass
class TrainingMix:
    stage1: list[InstructionTask]
    stage2: list[InstructionTask]
    inference_requests: list[dict]
    human_ratings: list[dict]
    manifest: dict

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        paths = {
            "stage1": out / "stage1.jsonl",
            "stage2": out / "stage2.jsonl",
            "inference": out / "inference_requests.jsonl",
            "human": out / "human_ratings.jsonl",
            "manifest": out / "manifest.json",
        }
        write_jsonl(paths["stage1"], (t.to_dict() for t in self.stage1))
        write_jsonl(paths["stage2"], (t.to_dict() for t in self.stage2))
        write_jsonl(paths["inference"], self.inference_requests)
        write_jsonl(paths["human"], self.human_ratings)
        write_json(paths["manifest"], self.manifest)
        return paths


def _check_split(names: Sequence[str], cfg: ForgeConfig) -> tuple[list[str], list[str]]:
    both = sorted(set(cfg.train) & set(cfg.test))
    if both:
        raise DataError(f"datasets assigned to both train and test: {both}")
    if not cfg.train and not cfg.test:
        return list(names), []
    unknown = sorted((set(cfg.train) | set(cfg.test)) - set(names))
    if unknown:
        raise DataError(f"split manifest names unknown datasets: {unknown}")
    unassigned = [n for n in names if n not in cfg.train and n not in cfg.test]
    if unassigned:
        raise DataError(f"datasets missing from the split manifest: {unassigned}")
    return [n for n in names if n in cfg.train], [n for n in names if n in cfg.test]


def _apply_quota(items: list, quota: Optional[int], rng: random.Random) -> list:
    if quota is None or len(items) <= quota:
        return items
    keep = sorted(rng.sample(range(len(items)), quota))
    return [items[i] for i in keep]


def _dataset_aspects(records: Sequence[RatingRecord], catalog: AspectCatalog) -> list[Aspect]:
    rated = {aid for r in records for aid in r.ratings}
    return [a for a in catalog if a.id in rated]


def build_training_mix(
    sources: Mapping[str, Sequence[RatingRecord]],
    catalog: AspectCatalog,
    cfg: ForgeConfig,
    *,
    templates: TemplateSet | None = None,
    verbalizers: TemplateCatalog | None = None,
) -> TrainingMix:
    """Derive, cap, enrich and shuffle tasks for every training dataset.

    Test-split datasets are not turned into tasks; they become engine
    request rows plus a human-ratings file for meta-evaluation.
    """
    templates = templates or default_instruction_templates()
    verbalizers = verbalizers if verbalizers is not None else default_template_catalog()
    train_names, test_names = _check_split(list(sources), cfg)
    rng = random.Random(cfg.seed)

    # (stage1 task, ratings used for enrichment)
    derived: list[tuple[InstructionTask, Any]] = []
    counts: dict[str, dict[str, int]] = {}
    warnings: list[str] = []

    for name in train_names:
        records = list(sources[name])
        for r in records:
            r.check_against(catalog)
        groups = group_by_context(records)
        for aspect in _dataset_aspects(records, catalog):
            per_type: dict[TaskType, list[tuple[InstructionTask, Any]]] = {t: [] for t in TASK_ORDER}
            if cfg.quota(TaskType.SCORING) != 0:
                for r in records:
                    if aspect.id in r.ratings:
                        t = derive_scoring(
                            r, aspect, cfg.likert_levels, templates=templates,
                            task_id=f"{name}/scoring/{aspect.id}/{r.record_id}",
                        )
                        per_type[TaskType.SCORING].append((t, r.ratings))
            if cfg.quota(TaskType.BOOLEAN_QA) != 0:
                for r in records:
                    if aspect.id in r.ratings:
                        t = derive_boolean_qa(
                            r, aspect, cfg.threshold, templates=templates,
                            task_id=f"{name}/boolean_qa/{aspect.id}/{r.record_id}",
                        )
                        per_type[TaskType.BOOLEAN_QA].append((t, r.ratings))
            for g in groups:
                rated = g.rated_on(aspect.id)
                if cfg.quota(TaskType.COMPARISON) != 0 and len(rated) >= 2:
                    for a, b in itertools.combinations(rated, 2):
                        tid = f"{name}/comparison/{aspect.id}/{a.record_id}+{b.record_id}"
                        out = _comparison(g, aspect, cfg, rng, (a, b), templates, tid)
                        if out:
                            per_type[TaskType.COMPARISON].append((out[0], [r.ratings for r in out[1]]))
                if cfg.quota(TaskType.RANKING) != 0 and len(rated) >= 3:
                    for trio in itertools.combinations(rated, 3):
                        tid = f"{name}/ranking/{aspect.id}/" + "+".join(r.record_id for r in trio)
                        out = _ranking(g, aspect, rng, trio, cfg, templates, tid)
                        if out:
                            per_type[TaskType.RANKING].append((out[0], [r.ratings for r in out[1]]))
            for tt in TASK_ORDER:
                items = per_type[tt]
                quota = cfg.quota(tt)
                if quota is not None and quota > len(items) and quota > 0:
                    msg = f"{name}: quota {quota} for {aspect.id}/{tt.value} exceeds the {len(items)} derivable instances"
                    log.warning(msg)
                    warnings.append(msg)
                items = _apply_quota(items, quota, rng)
                if items:
                    bucket = counts.setdefault(aspect.id, {})
                    bucket[tt.value] = bucket.get(tt.value, 0) + len(items)
                derived.extend(items)

    order = list(range(len(derived)))
    rng.shuffle(order)
    stage1 = [derived[i][0] for i in order]
    stage2 = [
        enrich_with_auxiliary(derived[i][0], derived[i][1], catalog, verbalizers, cfg, templates) for i in order
    ]

    requests: list[dict] = []
    human: list[dict] = []
    for name in test_names:
        for r in sources[name]:
            r.check_against(catalog)
            for aid in sorted(r.ratings, key=catalog.position):
                item_id = f"{name}/{r.record_id}/{aid}"
                requests.append({
                    "id": item_id,
                    "output": r.output_text,
                    "sources": list(r.source_texts),
                    "target_aspect": aid,
                    "ratings": {k: float(v) for k, v in r.ratings.items() if k != aid},
                })
                human.append({
                    "id": item_id,
                    "aspect_id": aid,
                    "context_id": f"{name}/{r.context_id}",
                    "score": float(r.ratings[aid]),
                })

    config = cfg.to_dict()
    by_type: dict[str, int] = {}
    for t in stage1:
        by_type[t.task_type.value] = by_type.get(t.task_type.value, 0) + 1
    manifest = {
        "seed": cfg.seed,
        "config": config,
        "config_hash": hashlib.sha256(dumps(config).encode("utf-8")).hexdigest(),
        "datasets": {"train": train_names, "test": test_names},
        "counts": counts,
        "totals": {"stage1": len(stage1), "stage2": len(stage2), "inference": len(requests), "by_task_type": by_type},
        "warnings": warnings,
    }
    return TrainingMix(stage1, stage2, requests, human, manifest)
