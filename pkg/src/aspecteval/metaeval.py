"""Meta-evaluation: correlate predicted scores with human judgments.

Every report names its aggregation mode. ``pooled`` correlates all pairs
at once; ``grouped`` averages per-context correlations (the usual
"summary-level" / "turn-level" reading), skipping groups where the
correlation is undefined and counting them.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from . import kernels
from .errors import DataError, UndefinedCorrelationError
from .jsonl import read_jsonl, write_json

REPORT_DECIMALS = 10


@dataclass(frozen=True)
class PairedSeries:
    predicted: tuple[float, ...]
    human: tuple[float, ...]
    ids: tuple[str, ...] = ()
    groups: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "predicted", tuple(float(v) for v in self.predicted))
        object.__setattr__(self, "human", tuple(float(v) for v in self.human))
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "groups", tuple(self.groups))
        n = len(self.predicted)
        if n != len(self.human):
            raise DataError(f"series lengths differ: {n} predicted vs {len(self.human)} human")
        if n < 2:
            raise DataError("a paired series needs at least 2 observations")
        if not all(math.isfinite(v) for v in self.predicted + self.human):
            raise DataError("paired series contains non-finite values")
        for name, extra in (("ids", self.ids), ("groups", self.groups)):
            if extra and len(extra) != n:
                raise DataError(f"{name} length {len(extra)} does not match series length {n}")

    def __len__(self) -> int:
        return len(self.predicted)


def _xy(series: PairedSeries | tuple[Sequence[float], Sequence[float]]) -> tuple[Sequence[float], Sequence[float]]:
    if not isinstance(series, PairedSeries):
        series = PairedSeries(*series)
    return series.predicted, series.human


def pearson(series: PairedSeries) -> float:
    x, y = _xy(series)
    r = kernels.pearson(x, y)
    if math.isnan(r):
        raise UndefinedCorrelationError("Pearson correlation undefined: one side is constant")
    return r


def spearman(series: PairedSeries) -> float:
    x, y = _xy(series)
    r = kernels.pearson(kernels.average_ranks(x), kernels.average_ranks(y))
    if math.isnan(r):
        raise UndefinedCorrelationError("Spearman correlation undefined: one side is constant")
    return r


def kendall_tau_b(series: PairedSeries) -> float:
    x, y = _xy(series)
    c, d, tx, ty = kernels.pair_counts(x, y)
    # pairs tied on both sides drop out of both factors
    denom = (c + d + tx) * (c + d + ty)
    if denom == 0:
        raise UndefinedCorrelationError("Kendall tau-b undefined: all pairs tied on one side")
    tau = (c - d) / math.sqrt(denom)
    return max(-1.0, min(1.0, tau))


METRICS: dict[str, Callable[[PairedSeries], float]] = {
    "pearson": pearson,
    "spearman": spearman,
    "kendall": kendall_tau_b,
}


class Aggregation(str, Enum):
    POOLED = "pooled"
    GROUPED = "grouped"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class CorrelationReport:
    metric: str
    mode: Aggregation
    value: float | None
    n: int
    groups_used: int
    groups_skipped: int
    aspect_id: str = ""

    def to_dict(self) -> dict:
        return {
            "aspect_id": self.aspect_id,
            "metric": self.metric,
            "mode": self.mode.value,
            "value": None if self.value is None else round(self.value, REPORT_DECIMALS),
            "n": self.n,
            "groups_used": self.groups_used,
            "groups_skipped": self.groups_skipped,
        }


def segment_correlation(
    series: PairedSeries, metric: str, mode: Aggregation | str, aspect_id: str = ""
) -> CorrelationReport:
    fn = METRICS[metric]
    mode = Aggregation(mode)
    if mode is Aggregation.POOLED:
        try:
            value: float | None = fn(series)
        except UndefinedCorrelationError:
            value = None
        return CorrelationReport(metric, mode, value, len(series), 1 if value is not None else 0,
                                 0 if value is not None else 1, aspect_id)
    if not series.groups:
        raise DataError("grouped correlation needs group keys")
    buckets: dict[str, tuple[list[float], list[float]]] = {}
    for g, p, h in zip(series.groups, series.predicted, series.human):
        xs, ys = buckets.setdefault(g, ([], []))
        xs.append(p)
        ys.append(h)
    values: list[float] = []
    skipped = 0
    for xs, ys in buckets.values():
        if len(xs) < 2:
            skipped += 1
            continue
        try:
            values.append(fn(PairedSeries(xs, ys)))
        except UndefinedCorrelationError:
            skipped += 1
    if not values:
        raise DataError(f"no usable groups for grouped {metric} ({skipped} skipped)")
    total = 0.0
    for v in values:
        total += v
    return CorrelationReport(metric, mode, total / len(values), len(series), len(values), skipped, aspect_id)


def join_results(results: Sequence[Mapping], human: Sequence[Mapping]) -> dict[str, PairedSeries]:
    """Join engine results with human ratings on ``id``; one series per aspect.

    Raises :class:`DataError` listing unmatched ids on either side.
    """
    pred = {}
    for r in results:
        if r.get("score") is None:
            continue
        pred[str(r["id"])] = float(r["score"])
    gold = {str(h["id"]): h for h in human}
    missing_gold = sorted(set(pred) - set(gold))
    missing_pred = sorted(set(gold) - set(pred))
    if missing_gold or missing_pred:
        parts = []
        if missing_gold:
            parts.append(f"results without human rating: {missing_gold}")
        if missing_pred:
            parts.append(f"human ratings without result: {missing_pred}")
        raise DataError("unmatched ids; " + "; ".join(parts))
    per_aspect: dict[str, list[tuple[str, float, float, str]]] = {}
    for h in human:
        hid = str(h["id"])
        per_aspect.setdefault(str(h["aspect_id"]), []).append(
            (hid, pred[hid], float(h["score"]), str(h.get("context_id", "")))
        )
    return {
        aid: PairedSeries(
            predicted=[p for _, p, _, _ in rows],
            human=[s for _, _, s, _ in rows],
            ids=[i for i, _, _, _ in rows],
            groups=[g for _, _, _, g in rows],
        )
        for aid, rows in per_aspect.items()
    }


def run_metaeval(
    results: Sequence[Mapping],
    human: Sequence[Mapping],
    metrics: Iterable[str] = ("pearson", "spearman", "kendall"),
    modes: Iterable[Aggregation | str] = (Aggregation.POOLED, Aggregation.GROUPED),
) -> list[CorrelationReport]:
    series = join_results(results, human)
    metrics = list(metrics)
    modes = [Aggregation(m) for m in modes]
    reports = []
    for aid in sorted(series):
        for metric in metrics:
            for mode in modes:
                reports.append(segment_correlation(series[aid], metric, mode, aid))
    return reports


def summary_table(reports: Iterable[CorrelationReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(["aspect_id", "metric", "mode", "value", "n", "groups_used", "groups_skipped"])
    for r in reports:
        d = r.to_dict()
        value = "undefined" if d["value"] is None else f"{d['value']:.{REPORT_DECIMALS}f}"
        w.writerow([d["aspect_id"], d["metric"], d["mode"], value, d["n"], d["groups_used"], d["groups_skipped"]])
    return buf.getvalue()


def write_reports(out_dir: str | Path, reports: Sequence[CorrelationReport]) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for r in reports:
        name = f"report__{r.aspect_id.replace('@', '_at_')}__{r.metric}__{r.mode.value}.json"
        write_json(out / name, r.to_dict())
        paths[name] = out / name
    summary = out / "summary.tsv"
    summary.write_text(summary_table(reports), encoding="utf-8")
    paths["summary.tsv"] = summary
    return paths


def load_and_run(results_path: str | Path, human_path: str | Path, **kw) -> list[CorrelationReport]:
    return run_metaeval(read_jsonl(results_path), read_jsonl(human_path), **kw)
