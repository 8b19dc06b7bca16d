from __future__ import annotations

import json

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from aspecteval.errors import DataError, ScoreRangeError
from aspecteval.ingest import (
    SourceSchemaConfig,
    denormalize_score,
    group_by_context,
    load_rating_dataset,
    load_schema,
    normalize_score,
    read_records,
    write_records,
)

from conftest import CORPUS, make_record

SCHEMA = SourceSchemaConfig(
    dataset="toy",
    scales={"nat": (1, 5), "flu": (0, 2)},
    aspect_map={"nat": "naturalness@dialogue-turn", "flu": "fluency@dialogue-turn"},
)


def write_rows(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


class TestNormalize:
    @pytest.mark.parametrize(
        "raw,scale,expected", [(5, (1, 5), 1.0), (1, (1, 5), 0.0), (2, (0, 4), 0.5), (3, (1, 5), 0.5)]
    )
    def test_examples(self, raw, scale, expected):
        assert normalize_score(raw, scale) == expected

    def test_affine_oracle_off_grid(self):
        assert normalize_score(4.2, (1, 5)) == pytest.approx(0.8, abs=1e-12)

    def test_out_of_range(self):
        with pytest.raises(ScoreRangeError):
            normalize_score(6, (1, 5))

    def test_degenerate_scale(self):
        with pytest.raises(DataError):
            normalize_score(1, (1, 1))


scales = st.tuples(st.integers(-10, 10), st.integers(1, 10)).map(lambda t: (float(t[0]), float(t[0] + t[1])))


@given(scale=scales, a=st.floats(0, 1), b=st.floats(0, 1))
def test_normalize_is_monotone(scale, a, b):
    lo, hi = scale
    r1, r2 = lo + a * (hi - lo), lo + b * (hi - lo)
    assume(r1 < r2)
    assert normalize_score(r1, scale) < normalize_score(r2, scale)


@given(scale=scales, a=st.floats(0, 1))
def test_normalize_round_trips(scale, a):
    lo, hi = scale
    raw = min(hi, lo + a * (hi - lo))
    assert denormalize_score(normalize_score(raw, scale), scale) == pytest.approx(raw, abs=1e-12)


class TestLoad:
    def test_rows_normalized_in_order(self, tmp_path, catalog):
        p = write_rows(tmp_path / "d.jsonl", [
            {"id": "a", "context_id": "c1", "output": "x", "sources": ["s1", "s2"], "ratings": {"nat": 3}},
            {"id": "b", "context_id": "c1", "output": "y", "sources": ["s1", "s2"], "ratings": {"nat": 4.2, "flu": 2}},
        ])
        recs = load_rating_dataset(p, SCHEMA, catalog)
        assert [r.record_id for r in recs] == ["a", "b"]
        assert recs[0].ratings == {"naturalness@dialogue-turn": 0.5}
        assert recs[1].ratings["naturalness@dialogue-turn"] == pytest.approx(0.8, abs=1e-12)
        assert recs[1].ratings["fluency@dialogue-turn"] == 1.0
        assert recs[0].source_texts == ("s1", "s2")
        assert recs[1].raw_scales["fluency@dialogue-turn"] == (0.0, 2.0)

    def test_annotators_are_averaged_and_null_is_absent(self, tmp_path, catalog):
        p = write_rows(tmp_path / "d.jsonl", [
            {"id": "a", "context_id": "c", "output": "x", "ratings": {"nat": [1, 2, 3], "flu": None}},
        ])
        (rec,) = load_rating_dataset(p, SCHEMA, catalog)
        assert rec.ratings == {"naturalness@dialogue-turn": 0.25}

    def test_error_names_row_and_field(self, tmp_path, catalog):
        p = write_rows(tmp_path / "d.jsonl", [
            {"id": "a", "context_id": "c", "output": "x", "ratings": {"nat": 3}},
            {"id": "b", "context_id": "c", "output": "x", "ratings": {"nat": 9}},
        ])
        with pytest.raises(DataError, match=r"row 2, field 'ratings.nat'"):
            load_rating_dataset(p, SCHEMA, catalog)

    def test_missing_output(self, tmp_path, catalog):
        p = write_rows(tmp_path / "d.jsonl", [{"id": "a", "context_id": "c", "ratings": {}}])
        with pytest.raises(DataError, match="row 1, field 'output'"):
            load_rating_dataset(p, SCHEMA, catalog)

    def test_unreadable_file(self, tmp_path, catalog):
        with pytest.raises(DataError, match="cannot read"):
            load_rating_dataset(tmp_path / "missing.jsonl", SCHEMA, catalog)

    def test_schema_must_map_into_catalog(self, catalog):
        bad = SourceSchemaConfig("toy", {"x": (1, 5)}, {"x": "nope@other"})
        with pytest.raises(DataError, match="unknown catalog id"):
            bad.validate(catalog)
        with pytest.raises(DataError, match="min < max"):
            SourceSchemaConfig("toy", {"x": (5, 1)}, {"x": "fluency@dialogue-turn"}).validate(catalog)

    def test_shipped_corpus(self, catalog):
        schema = load_schema(CORPUS / "schema.json")
        recs = load_rating_dataset(CORPUS / "test.jsonl", schema, catalog)
        assert len(recs) == 24
        assert all(len(r.ratings) == 6 for r in recs)
        assert SourceSchemaConfig.from_dict(schema.to_dict()) == schema

    def test_records_round_trip(self, tmp_path, catalog):
        schema = load_schema(CORPUS / "schema.json")
        recs = load_rating_dataset(CORPUS / "train.jsonl", schema, catalog)
        write_records(tmp_path / "n.jsonl", recs)
        assert read_records(tmp_path / "n.jsonl") == recs


class TestGrouping:
    def test_partition(self):
        recs = [make_record(f"r{i}", f"c{i % 2}", f"o{i}", {}) for i in range(4)]
        groups = group_by_context(recs)
        assert [g.context_id for g in groups] == ["c0", "c1"]
        assert [len(g.records) for g in groups] == [2, 2]

    def test_singleton(self):
        assert len(group_by_context([make_record("r", "c", "o", {})])) == 1

    def test_conflicting_sources(self):
        recs = [make_record("a", "c", "o", {}, ("s1",)), make_record("b", "c", "p", {}, ("s2",))]
        with pytest.raises(DataError, match="'c'"):
            group_by_context(recs)


@given(st.lists(st.sampled_from("abcde"), max_size=30))
def test_group_sizes_sum_to_input(contexts):
    recs = [make_record(f"r{i}", c, f"o{i}", {}) for i, c in enumerate(contexts)]
    groups = group_by_context(recs)
    assert sum(len(g.records) for g in groups) == len(recs)
    assert [g.context_id for g in groups] == list(dict.fromkeys(contexts))
