"""Core vocabulary: scores, aspects, rating records and instruction tasks.

Aspect ids follow the ``name@nlg_task`` convention (for example
``naturalness@dialogue-turn``). The convention is local to this package;
it lets two aspects with the same name under different NLG tasks coexist
in one catalog.
"""

from __future__ import annotations

import math
import re
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Union

from .errors import (
    AmbiguousAspectError,
    CatalogError,
    DataError,
    ScoreRangeError,
    UnknownAspectError,
)
from .jsonl import iter_jsonl, write_jsonl

NLG_TASKS = ("dialogue-turn", "dialogue-level", "summarization", "data2text", "other")

NOTA = "NOTA"


class UnitScore(float):
    """A float constrained to the closed unit interval."""

    __slots__ = ()

    def __new__(cls, value: float) -> UnitScore:
        try:
            v = float(value)
        except (TypeError, ValueError) as exc:
            raise ScoreRangeError(f"not a number: {value!r}") from exc
        if not math.isfinite(v):
            raise ScoreRangeError(f"score must be finite, got {value!r}")
        if v < 0.0 or v > 1.0:
            raise ScoreRangeError(f"score {v!r} outside [0, 1]")
        return super().__new__(cls, v)

    def __repr__(self) -> str:
        return f"UnitScore({float(self)!r})"


def clamp_unit(value: float) -> UnitScore:
    """Validate ``value`` as a unit score.

    Despite the name nothing is clamped: values outside ``[0, 1]`` and
    non-finite values raise :class:`ScoreRangeError`.
    """
    return UnitScore(value)


def aspect_id(name: str, nlg_task: str) -> str:
    slug = re.sub(r"\s+", "_", name.strip().lower())
    return f"{slug}@{nlg_task}"


def nlg_family(nlg_task: str) -> str:
    """Collapse dialogue-turn and dialogue-level into one family."""
    return "dialogue" if nlg_task.startswith("dialogue") else nlg_task


@dataclass(frozen=True)
class Aspect:
    id: str
    name: str
    nlg_task: str
    definition: str
    seen: bool = False

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "nlg_task": self.nlg_task,
            "definition": self.definition,
            "seen": self.seen,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Aspect:
        try:
            return cls(
                id=str(d["id"]),
                name=str(d["name"]),
                nlg_task=str(d["nlg_task"]),
                definition=str(d["definition"]),
                seen=bool(d.get("seen", False)),
            )
        except KeyError as exc:
            raise CatalogError(f"aspect record missing field {exc.args[0]!r}") from exc


class AspectCatalog:
    """Ordered, read-only collection of aspects.

    Construction does not validate; call :func:`validate_catalog` (or load
    with ``strict=True``) to get the list of problems.
    """

    def __init__(self, aspects: Iterable[Aspect] = ()):
        self._aspects: tuple[Aspect, ...] = tuple(aspects)
        self._by_id: dict[str, Aspect] = {}
        self._order: dict[str, int] = {}
        for i, a in enumerate(self._aspects):
            self._by_id.setdefault(a.id, a)
            self._order.setdefault(a.id, i)

    def __iter__(self) -> Iterator[Aspect]:
        return iter(self._aspects)

    def __len__(self) -> int:
        return len(self._aspects)

    def __contains__(self, aspect_or_id: object) -> bool:
        key = aspect_or_id.id if isinstance(aspect_or_id, Aspect) else aspect_or_id
        return key in self._by_id

    def __eq__(self, other: object) -> bool:
        return isinstance(other, AspectCatalog) and self._aspects == other._aspects

    def __repr__(self) -> str:
        return f"AspectCatalog({len(self)} aspects)"

    @property
    def aspects(self) -> tuple[Aspect, ...]:
        return self._aspects

    @property
    def ids(self) -> list[str]:
        return [a.id for a in self._aspects]

    def get(self, aspect_id: str) -> Aspect:
        try:
            return self._by_id[aspect_id]
        except KeyError:
            raise UnknownAspectError(f"unknown aspect id {aspect_id!r}") from None

    def by_name(self, name: str) -> Aspect:
        """Look up by bare name; fails when the name exists under several NLG tasks."""
        key = name.strip().lower()
        hits = [a for a in self._aspects if a.name.lower() == key]
        if not hits:
            raise UnknownAspectError(f"no aspect named {name!r}")
        if len(hits) > 1:
            ids = ", ".join(a.id for a in hits)
            raise AmbiguousAspectError(f"aspect name {name!r} is ambiguous: {ids}")
        return hits[0]

    def resolve(self, ref: str) -> Aspect:
        """Resolve either a full id or an unambiguous bare name."""
        if ref in self._by_id:
            return self._by_id[ref]
        return self.by_name(ref)

    def position(self, aspect_id: str) -> int:
        try:
            return self._order[aspect_id]
        except KeyError:
            raise UnknownAspectError(f"unknown aspect id {aspect_id!r}") from None

    def to_records(self) -> list[dict]:
        return [a.to_dict() for a in self._aspects]


def validate_catalog(catalog: Iterable[Aspect]) -> list[str]:
    """Return a list of human-readable problems; empty means valid."""
    problems: list[str] = []
    seen_ids: set[str] = set()
    for i, a in enumerate(catalog, start=1):
        if a.id in seen_ids:
            problems.append(f"entry {i}: duplicate aspect id {a.id!r}")
        seen_ids.add(a.id)
        if not a.definition.strip():
            problems.append(f"entry {i}: aspect {a.id!r} has an empty definition")
        if a.nlg_task not in NLG_TASKS:
            problems.append(f"entry {i}: aspect {a.id!r} has unknown nlg_task {a.nlg_task!r}")
        if not a.name.strip():
            problems.append(f"entry {i}: aspect {a.id!r} has an empty name")
    return problems


def load_catalog(path: str | Path, strict: bool = True) -> AspectCatalog:
    catalog = AspectCatalog(Aspect.from_dict(rec) for _, rec in iter_jsonl(path))
    if strict:
        problems = validate_catalog(catalog)
        if problems:
            raise CatalogError(f"invalid aspect catalog {path}: " + "; ".join(problems))
    return catalog


def save_catalog(path: str | Path, catalog: AspectCatalog) -> None:
    write_jsonl(path, catalog.to_records())


def default_catalog_path() -> Path:
    return Path(str(resources.files("aspecteval") / "data" / "aspects.jsonl"))


def default_catalog() -> AspectCatalog:
    return load_catalog(default_catalog_path())


@dataclass(frozen=True)
class RatingRecord:
    """One human-rated system output.

    ``ratings`` holds normalized scores keyed by aspect id; missing ratings
    are simply absent. ``raw_scales`` keeps the original annotation range of
    each rated aspect.
    """

    record_id: str
    context_id: str
    system_id: str
    output_text: str
    source_texts: tuple[str, ...] = ()
    ratings: Mapping[str, UnitScore] = field(default_factory=dict)
    raw_scales: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "source_texts", tuple(self.source_texts))
        object.__setattr__(self, "ratings", {k: UnitScore(v) for k, v in self.ratings.items()})
        object.__setattr__(
            self, "raw_scales", {k: (float(lo), float(hi)) for k, (lo, hi) in self.raw_scales.items()}
        )

    def check_against(self, catalog: AspectCatalog) -> None:
        for aid in self.ratings:
            if aid not in catalog:
                raise UnknownAspectError(f"record {self.record_id!r} rates unknown aspect {aid!r}")

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "context_id": self.context_id,
            "system_id": self.system_id,
            "output_text": self.output_text,
            "source_texts": list(self.source_texts),
            "ratings": {k: float(v) for k, v in self.ratings.items()},
            "raw_scales": {k: list(v) for k, v in self.raw_scales.items()},
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> RatingRecord:
        try:
            return cls(
                record_id=str(d["record_id"]),
                context_id=str(d["context_id"]),
                system_id=str(d.get("system_id", "")),
                output_text=str(d["output_text"]),
                source_texts=tuple(d.get("source_texts", ())),
                ratings=dict(d.get("ratings", {})),
                raw_scales={k: tuple(v) for k, v in d.get("raw_scales", {}).items()},
            )
        except KeyError as exc:
            raise DataError(f"rating record missing field {exc.args[0]!r}") from exc


@dataclass(frozen=True)
class CandidateGroup:
    context_id: str
    records: tuple[RatingRecord, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        if not self.records:
            raise DataError(f"candidate group {self.context_id!r} is empty")
        first = self.records[0].source_texts
        for r in self.records:
            if r.context_id != self.context_id:
                raise DataError(f"record {r.record_id!r} does not belong to context {self.context_id!r}")
            if r.source_texts != first:
                raise DataError(f"context {self.context_id!r}: records disagree on source texts")

    @property
    def source_texts(self) -> tuple[str, ...]:
        return self.records[0].source_texts

    def rated_on(self, aspect_id: str) -> list[RatingRecord]:
        return [r for r in self.records if aspect_id in r.ratings]


class TaskType(str, Enum):
    SCORING = "scoring"
    COMPARISON = "comparison"
    RANKING = "ranking"
    BOOLEAN_QA = "boolean_qa"

    def __str__(self) -> str:
        return self.value


class Stage(str, Enum):
    STAGE1 = "stage1"
    STAGE2 = "stage2"
    INFERENCE = "inference"

    def __str__(self) -> str:
        return self.value


AUX_SLOT = "auxiliary_evaluations"

Label = Union[int, str, tuple]


def _check_label(task_type: TaskType, label: Any) -> Label:
    if task_type is TaskType.SCORING:
        if isinstance(label, bool) or not isinstance(label, int) or label < 1:
            raise DataError(f"scoring label must be a positive integer, got {label!r}")
        return label
    if task_type is TaskType.COMPARISON:
        if label == NOTA or label in (1, 2) and not isinstance(label, bool):
            return label
        raise DataError(f"comparison label must be 1, 2 or {NOTA!r}, got {label!r}")
    if task_type is TaskType.RANKING:
        perm = tuple(label) if isinstance(label, (list, tuple)) else None
        if perm is None or sorted(perm) != [1, 2, 3]:
            raise DataError(f"ranking label must be a permutation of (1, 2, 3), got {label!r}")
        return perm
    if label not in ("Yes", "No"):
        raise DataError(f"boolean QA label must be 'Yes' or 'No', got {label!r}")
    return label


@dataclass(frozen=True)
class InstructionTask:
    task_id: str
    task_type: TaskType
    aspect_id: str
    instruction: str
    payloads: Mapping[str, str]
    label: Label
    stage: Stage = Stage.STAGE1

    def __post_init__(self) -> None:
        object.__setattr__(self, "task_type", TaskType(self.task_type))
        object.__setattr__(self, "stage", Stage(self.stage))
        object.__setattr__(self, "payloads", dict(self.payloads))
        object.__setattr__(self, "label", _check_label(self.task_type, self.label))
        has_aux = AUX_SLOT in self.payloads
        if self.stage is Stage.STAGE2 and not has_aux:
            raise DataError(f"stage2 task {self.task_id!r} lacks the {AUX_SLOT!r} payload")
        if self.stage is Stage.STAGE1 and has_aux:
            raise DataError(f"stage1 task {self.task_id!r} must not carry {AUX_SLOT!r}")

    def to_dict(self) -> dict:
        label = list(self.label) if isinstance(self.label, tuple) else self.label
        return {
            "task_id": self.task_id,
            "stage": self.stage.value,
            "task_type": self.task_type.value,
            "aspect_id": self.aspect_id,
            "instruction": self.instruction,
            "payloads": dict(self.payloads),
            "label": label,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> InstructionTask:
        try:
            return cls(
                task_id=str(d["task_id"]),
                task_type=TaskType(d["task_type"]),
                aspect_id=str(d["aspect_id"]),
                instruction=str(d["instruction"]),
                payloads=dict(d["payloads"]),
                label=d["label"],
                stage=Stage(d["stage"]),
            )
        except KeyError as exc:
            raise DataError(f"instruction task missing field {exc.args[0]!r}") from exc
        except ValueError as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(str(exc)) from exc


def ratings_of(records: Sequence[RatingRecord], aspect_id: str) -> list[UnitScore]:
    return [r.ratings[aspect_id] for r in records]
