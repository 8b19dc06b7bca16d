from __future__ import annotations

import csv
from pathlib import Path

import pytest

from aspecteval.domain import Aspect, AspectCatalog, RatingRecord, default_catalog
from aspecteval.selector import HashEmbeddingProvider
from aspecteval.verbalizer import default_template_catalog

FIXTURES = Path(__file__).parent / "fixtures"
CORPUS = FIXTURES / "corpus"
REPLAY = FIXTURES / "replay"
EXPECTED_REPORT = FIXTURES / "expected_report"


@pytest.fixture(scope="session")
def catalog() -> AspectCatalog:
    return default_catalog()


@pytest.fixture(scope="session")
def verbalizers():
    return default_template_catalog()


@pytest.fixture(scope="session")
def hash_vectors(catalog):
    provider = HashEmbeddingProvider()
    return {a.id: provider.embed([a.definition])[0] for a in catalog}


# Reference verbalizer rows -> catalog id(s). "Engagingnes" is how the source
# table spells it; understandability is listed once but covers both dialogue levels.
DIALOGUE_LEVEL = {"Topic Depth", "Likeability", "Flexibility", "Informativeness", "Inquisitiveness"}


def reference_rows():
    with open(FIXTURES / "reference_verbalizers.tsv", encoding="utf-8", newline="") as fh:
        yield from csv.DictReader(fh, delimiter="\t")


def reference_ids(table: str, name: str) -> list[str]:
    slug = name.lower().replace(" ", "_")
    if slug == "engagingnes":
        slug = "engagingness"
    if table == "summarization":
        return [f"{slug}@summarization"]
    if slug == "understandability":
        return ["understandability@dialogue-level", "understandability@dialogue-turn"]
    return [f"{slug}@{'dialogue-level' if name in DIALOGUE_LEVEL else 'dialogue-turn'}"]


def collapse(text: str) -> str:
    """Transcribed rows keep stray whitespace; compare with runs collapsed."""
    return " ".join(text.split())


def make_record(rid: str, ctx: str, output: str, ratings: dict, sources=("src",)) -> RatingRecord:
    return RatingRecord(
        record_id=rid, context_id=ctx, system_id="sys", output_text=output,
        source_texts=tuple(sources), ratings=ratings,
    )


def toy_aspect(name: str, seen: bool = True, task: str = "dialogue-turn") -> Aspect:
    return Aspect(id=f"{name}@{task}", name=name, nlg_task=task, definition=f"How {name} the text is.", seen=seen)


def synthetic_records(
    n_contexts: int, n_candidates: int, aspect_ids, seed: int = 0, levels: int = 5, prefix: str = "r"
) -> list[RatingRecord]:
    """Ratings drawn from a coarse grid so ties are common."""
    import random

    rng = random.Random(seed)
    out = []
    for c in range(n_contexts):
        for j in range(n_candidates):
            ratings = {aid: rng.randrange(levels) / (levels - 1) for aid in aspect_ids}
            out.append(make_record(f"{prefix}{c}-{j}", f"ctx{c}", f"output {prefix} {c}/{j}", ratings,
                                   (f"source text {c}",)))
    return out


# -- acceptance summary ---------------------------------------------------------

_ACCEPTANCE: dict[str, dict] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    entry = _ACCEPTANCE.setdefault(report.nodeid, {**props, "outcome": "passed"})
    entry.update(props)
    if report.failed:
        entry["outcome"] = "failed"
    elif report.skipped:
        entry["outcome"] = "skipped"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for entry in sorted(_ACCEPTANCE.values(), key=lambda e: e["criterion"]):
        verdict = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[entry["outcome"]]
        elapsed = entry.get("elapsed")
        timing = f"{elapsed:.2f}s" if elapsed is not None else "n/a"
        terminalreporter.write_line(
            f"criterion {entry['criterion']}: {verdict}  {entry['title']}  ({timing}, bound {entry['bound']}s)"
        )
