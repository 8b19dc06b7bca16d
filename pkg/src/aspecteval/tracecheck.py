"""Independent re-check of evaluation traces.

Recomputes aspect selection with its own cosine and a full sort, and
re-derives every score from the recorded probabilities. Only the rounding
constant is shared with the selector; no selection, kernel or engine code
is called.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence

from .domain import AspectCatalog
from .selector import SIMILARITY_DECIMALS
from .verbalizer import TemplateCatalog, generic_template


def _cos(u: Sequence[float], v: Sequence[float]) -> float:
    dot = sum(a * b for a, b in zip(u, v))
    return dot / (math.sqrt(sum(a * a for a in u)) * math.sqrt(sum(b * b for b in v)))


def verify_trace(
    trace: Mapping,
    catalog: AspectCatalog,
    vectors: Mapping[str, Sequence[float]],
    verbalizers: TemplateCatalog | None = None,
    fallback: bool = False,
    tol: float = 1e-12,
) -> list[str]:
    """Return a list of discrepancies; empty means the trace is consistent."""
    problems: list[str] = []
    tid = trace["id"]
    target = trace["target_aspect"]
    k = trace["k"]
    selected = [s["aspect_id"] for s in trace["selected"]]
    aux = trace["auxiliary"]
    pool = list(trace["pool"])

    if len(selected) > k:
        problems.append(f"{tid}: {len(selected)} aspects selected with k={k}")
    if target in selected:
        problems.append(f"{tid}: target aspect selected as its own auxiliary")
    if not set(selected) <= set(pool):
        problems.append(f"{tid}: selection outside the recorded pool")
    if k > 0 and pool and len(selected) != min(k, len(pool)):
        problems.append(f"{tid}: expected {min(k, len(pool))} selections, got {len(selected)}")

    if trace["pool_mode"] != "random" and k > 0:
        t = vectors[target]
        sims = {a: _cos(vectors[a], t) for a in pool}
        brute = sorted(pool, key=lambda a: (-round(sims[a], SIMILARITY_DECIMALS), a))[:k]
        if brute != selected:
            problems.append(f"{tid}: selection {selected} differs from brute-force top-k {brute}")
        for s in trace["selected"]:
            if s["similarity"] is None or abs(s["similarity"] - sims[s["aspect_id"]]) > tol:
                problems.append(f"{tid}: similarity of {s['aspect_id']} does not match recomputation")

    if [a["aspect_id"] for a in aux] != selected:
        problems.append(f"{tid}: auxiliary results do not follow the selection order")
    hs = [a["verbalization"] for a in aux]
    if len(hs) != len(selected):
        problems.append(f"{tid}: {len(hs)} verbalizations for {len(selected)} selected aspects")
    if trace["enriched_sources"] != list(trace["sources"]) + hs:
        problems.append(f"{tid}: enriched sources are not sources followed by verbalizations")

    threshold = trace.get("threshold", 0.5)
    for a in aux:
        if not 0.0 <= a["score"] <= 1.0:
            problems.append(f"{tid}: auxiliary score {a['score']} outside [0, 1]")
        if trace["injection_mode"] == "predicted":
            if a["p_yes"] is None or a["p_no"] is None:
                problems.append(f"{tid}: predicted auxiliary {a['aspect_id']} lacks probabilities")
                continue
            expect = a["p_yes"] / (a["p_yes"] + a["p_no"])
            if expect != a["score"]:
                problems.append(f"{tid}: auxiliary score of {a['aspect_id']} does not match its probabilities")
        elif a["p_yes"] is not None or a["p_no"] is not None:
            problems.append(f"{tid}: {trace['injection_mode']} auxiliary carries model probabilities")
        if verbalizers is not None:
            aspect = catalog.get(a["aspect_id"])
            tpl = verbalizers.get(aspect.id) or (generic_template(aspect) if fallback else None)
            if tpl is None:
                problems.append(f"{tid}: no template to check {aspect.id}")
            else:
                want = tpl.pos_text if a["score"] > threshold else tpl.neg_text
                if want != a["verbalization"]:
                    problems.append(f"{tid}: verbalization of {aspect.id} inconsistent with score")

    p_yes, p_no = trace["target"]["p_yes"], trace["target"]["p_no"]
    expect = p_yes / (p_yes + p_no)
    if expect != trace["score"]:
        problems.append(f"{tid}: final score {trace['score']} != formula value {expect}")
    if not 0.0 <= trace["score"] <= 1.0:
        problems.append(f"{tid}: final score outside [0, 1]")
    return problems
