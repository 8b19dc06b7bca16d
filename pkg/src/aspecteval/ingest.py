"""Load human-rating datasets into normalized :class:`RatingRecord` lists."""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .domain import AspectCatalog, CandidateGroup, RatingRecord, UnitScore
from .errors import DataError, ScoreRangeError
from .jsonl import iter_jsonl, read_json, read_jsonl, write_jsonl

log = logging.getLogger(__name__)


def normalize_score(raw: float, scale: tuple[float, float]) -> UnitScore:
    lo, hi = float(scale[0]), float(scale[1])
    if not lo < hi:
        raise DataError(f"degenerate rating scale ({lo}, {hi})")
    raw = float(raw)
    if not math.isfinite(raw) or raw < lo or raw > hi:
        raise ScoreRangeError(f"rating {raw!r} outside scale ({lo:g}, {hi:g})")
    return UnitScore((raw - lo) / (hi - lo))


def denormalize_score(score: float, scale: tuple[float, float]) -> float:
    lo, hi = float(scale[0]), float(scale[1])
    return lo + float(score) * (hi - lo)


@dataclass(frozen=True)
class SourceSchemaConfig:
    """Column mapping and rating scales for one source dataset.

    ``scales`` and ``aspect_map`` are keyed by the aspect name used inside the
    raw file; ``aspect_map`` translates that name into a catalog id.
    Each entry of ``source_fields`` may hold a string or a list of strings;
    they are concatenated in declaration order.
    """

    dataset: str
    scales: Mapping[str, tuple[float, float]]
    aspect_map: Mapping[str, str]
    record_id_field: str = "id"
    context_field: str = "context_id"
    system_field: str = "system_id"
    output_field: str = "output"
    source_fields: tuple[str, ...] = ("sources",)
    ratings_field: str = "ratings"

    def validate(self, catalog: AspectCatalog) -> None:
        for name, (lo, hi) in self.scales.items():
            if not float(lo) < float(hi):
                raise DataError(f"{self.dataset}: scale for {name!r} must have min < max, got ({lo}, {hi})")
            if name not in self.aspect_map:
                raise DataError(f"{self.dataset}: aspect {name!r} has a scale but no catalog mapping")
        for name, aid in self.aspect_map.items():
            if aid not in catalog:
                raise DataError(f"{self.dataset}: aspect {name!r} maps to unknown catalog id {aid!r}")
            if name not in self.scales:
                raise DataError(f"{self.dataset}: aspect {name!r} has no declared rating scale")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> SourceSchemaConfig:
        fields = dict(d.get("fields", {}))
        sources = fields.get("sources", ("sources",))
        if isinstance(sources, str):
            sources = (sources,)
        try:
            return cls(
                dataset=str(d["dataset"]),
                scales={k: (float(v[0]), float(v[1])) for k, v in d["scales"].items()},
                aspect_map=dict(d["aspects"]),
                record_id_field=fields.get("record_id", "id"),
                context_field=fields.get("context_id", "context_id"),
                system_field=fields.get("system_id", "system_id"),
                output_field=fields.get("output", "output"),
                source_fields=tuple(sources),
                ratings_field=fields.get("ratings", "ratings"),
            )
        except KeyError as exc:
            raise DataError(f"schema config missing field {exc.args[0]!r}") from exc

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "scales": {k: list(v) for k, v in self.scales.items()},
            "aspects": dict(self.aspect_map),
            "fields": {
                "record_id": self.record_id_field,
                "context_id": self.context_field,
                "system_id": self.system_field,
                "output": self.output_field,
                "sources": list(self.source_fields),
                "ratings": self.ratings_field,
            },
        }


def load_schema(path: str | Path) -> SourceSchemaConfig:
    return SourceSchemaConfig.from_dict(read_json(path))


def _row_error(path: Path, lineno: int, fieldname: str, msg: str) -> DataError:
    return DataError(f"{path}: row {lineno}, field {fieldname!r}: {msg}")


def _source_texts(row: Mapping[str, Any], schema: SourceSchemaConfig, path: Path, lineno: int) -> tuple[str, ...]:
    texts: list[str] = []
    for f in schema.source_fields:
        value = row.get(f)
        if value is None:
            continue
        if isinstance(value, str):
            texts.append(value)
        elif isinstance(value, list) and all(isinstance(v, str) for v in value):
            texts.extend(value)
        else:
            raise _row_error(path, lineno, f, "expected a string or a list of strings")
    return tuple(texts)


def _aggregate(raw: Any, scale: tuple[float, float], path: Path, lineno: int, fieldname: str) -> UnitScore | None:
    """Average multi-annotator ratings; ``None`` means no usable rating."""
    values = raw if isinstance(raw, list) else [raw]
    values = [v for v in values if v is not None]
    if not values:
        return None
    total = 0.0
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise _row_error(path, lineno, fieldname, f"rating {v!r} is not numeric")
        if isinstance(v, float) and math.isnan(v):
            raise _row_error(path, lineno, fieldname, "NaN rating; omit the entry instead")
        try:
            normalize_score(v, scale)
        except ScoreRangeError as exc:
            raise _row_error(path, lineno, fieldname, str(exc)) from exc
        total += float(v)
    return normalize_score(total / len(values), scale)


def load_rating_dataset(
    path: str | Path, schema: SourceSchemaConfig, catalog: AspectCatalog
) -> list[RatingRecord]:
    path = Path(path)
    schema.validate(catalog)
    records: list[RatingRecord] = []
    for lineno, row in iter_jsonl(path):
        output = row.get(schema.output_field)
        if not isinstance(output, str):
            raise _row_error(path, lineno, schema.output_field, "missing or non-string output text")
        context = row.get(schema.context_field)
        if context is None:
            raise _row_error(path, lineno, schema.context_field, "missing context id")
        raw_ratings = row.get(schema.ratings_field, {})
        if not isinstance(raw_ratings, dict):
            raise _row_error(path, lineno, schema.ratings_field, "expected an object of ratings")
        ratings: dict[str, UnitScore] = {}
        scales: dict[str, tuple[float, float]] = {}
        for name, raw in raw_ratings.items():
            if name not in schema.aspect_map:
                raise _row_error(path, lineno, f"{schema.ratings_field}.{name}", "aspect not declared in schema")
            scale = schema.scales[name]
            score = _aggregate(raw, scale, path, lineno, f"{schema.ratings_field}.{name}")
            if score is None:
                continue
            aid = schema.aspect_map[name]
            ratings[aid] = score
            scales[aid] = scale
        record_id = row.get(schema.record_id_field)
        records.append(
            RatingRecord(
                record_id=str(record_id) if record_id is not None else f"{schema.dataset}:{lineno}",
                context_id=str(context),
                system_id=str(row.get(schema.system_field, "")),
                output_text=output,
                source_texts=_source_texts(row, schema, path, lineno),
                ratings=ratings,
                raw_scales=scales,
            )
        )
    log.info("loaded %d records from %s", len(records), path)
    return records


def group_by_context(records: Iterable[RatingRecord]) -> list[CandidateGroup]:
    """Partition records by context id, ordered by first occurrence."""
    buckets: dict[str, list[RatingRecord]] = {}
    for r in records:
        bucket = buckets.setdefault(r.context_id, [])
        if bucket and bucket[0].source_texts != r.source_texts:
            raise DataError(
                f"context {r.context_id!r}: record {r.record_id!r} has different source texts "
                f"than record {bucket[0].record_id!r}"
            )
        bucket.append(r)
    return [CandidateGroup(cid, tuple(rs)) for cid, rs in buckets.items()]


def write_records(path: str | Path, records: Iterable[RatingRecord]) -> int:
    return write_jsonl(path, (r.to_dict() for r in records))


def read_records(path: str | Path) -> list[RatingRecord]:
    return [RatingRecord.from_dict(d) for d in read_jsonl(path)]
