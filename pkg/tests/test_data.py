"""Featurestore: numeric bucketing, vocabularies, encoding, splitting."""

import json

import numpy as np
import pytest

from fignn import data as fdata
from fignn.data import (
    MISSING_TOKEN,
    UNKNOWN_TOKEN,
    FieldSchema,
    RawRecord,
    Vocabulary,
    build_vocabulary,
    encode,
    normalize_numeric,
    parse_tsv_line,
    split_dataset,
    tokenize_value,
)
from fignn.errors import ConfigError, DataError


def two_field_schema():
    return [FieldSchema("A", "categorical", 0), FieldSchema("B", "categorical", 1)]


# ---------------------------------------------------------------------------
# numeric normalization


def test_normalize_boundary_and_hand_values():
    assert normalize_numeric(2.0) == "2"
    assert normalize_numeric(7.389057) == "4"  # just above e^2, (ln z)^2 = 4.0000...
    assert normalize_numeric(100.0) == "21"  # (ln 100)^2 = 21.2076
    assert normalize_numeric(0.0) == "0"
    assert normalize_numeric(1.5) == "1"
    assert normalize_numeric(None) == MISSING_TOKEN


def test_normalize_rejects_bad_values():
    with pytest.raises(DataError, match="negative"):
        normalize_numeric(-1.0, context="record 3, field 'x'")
    with pytest.raises(DataError, match="non-finite"):
        normalize_numeric(float("inf"))
    with pytest.raises(DataError, match="non-finite"):
        normalize_numeric(float("nan"))


def test_normalize_is_non_decreasing_above_two():
    rng = np.random.default_rng(0)
    zs = np.sort(rng.uniform(2.0001, 1e6, size=500))
    tokens = [int(normalize_numeric(z)) for z in zs]
    assert all(a <= b for a, b in zip(tokens, tokens[1:]))


def test_tokenize_value():
    assert tokenize_value("", "categorical") == MISSING_TOKEN
    assert tokenize_value("", "numeric") == MISSING_TOKEN
    assert tokenize_value("red", "categorical") == "red"
    assert tokenize_value("100", "numeric") == "21"
    with pytest.raises(DataError, match="cannot parse"):
        tokenize_value("abc", "numeric", context="field 'n'")


# ---------------------------------------------------------------------------
# vocabulary building


def test_vocabulary_keeps_everything_at_min_count_one():
    records = [
        RawRecord(1, ("x", "u")),
        RawRecord(0, ("y", "u")),
        RawRecord(0, ("x", "u")),
    ]
    vocab = build_vocabulary(records, two_field_schema(), min_count=1)
    # 2 tokens + unknown for A, 1 token + unknown for B
    assert vocab.total_feature_count == 5
    assert vocab.fields[0].size == 3
    assert vocab.fields[1].size == 2
    assert UNKNOWN_TOKEN in vocab.fields[0].tokens
    assert UNKNOWN_TOKEN in vocab.fields[1].tokens


def test_infrequent_tokens_fall_back_to_unknown():
    records = [
        RawRecord(1, ("x", "u")),
        RawRecord(0, ("y", "u")),
        RawRecord(0, ("y", "u")),
    ]
    vocab = build_vocabulary(records, two_field_schema(), min_count=2)
    assert "x" not in vocab.fields[0].tokens
    assert vocab.fields[0].lookup("x") == vocab.fields[0].unknown_index


def test_field_ranges_are_disjoint_and_cover_everything():
    rng = np.random.default_rng(1)
    schema = [FieldSchema(f"f{i}", "categorical", i) for i in range(4)]
    records = [
        RawRecord(0, tuple(f"t{rng.integers(0, 5)}" for _ in range(4))) for _ in range(60)
    ]
    vocab = build_vocabulary(records, schema, min_count=1)
    seen = set()
    for i, fv in enumerate(vocab.fields):
        lo, hi = vocab.index_range(i)
        indices = set(fv.tokens.values())
        assert indices == set(range(lo, hi))
        assert not (indices & seen)
        seen |= indices
    assert seen == set(range(vocab.total_feature_count))


def test_build_vocabulary_errors():
    with pytest.raises(DataError, match="empty"):
        build_vocabulary([], two_field_schema(), min_count=1)
    with pytest.raises(DataError, match="record 2"):
        build_vocabulary(
            [RawRecord(0, ("a", "b")), RawRecord(0, ("a",))], two_field_schema(), 1
        )
    with pytest.raises(ConfigError, match="min_count"):
        build_vocabulary([RawRecord(0, ("a", "b"))], two_field_schema(), 0)


def test_numeric_fields_are_bucketized_before_counting():
    schema = [FieldSchema("cat", "categorical", 0), FieldSchema("num", "numeric", 1)]
    records = [
        RawRecord(0, ("a", "100")),
        RawRecord(1, ("a", "99")),  # (ln 99)^2 = 21.11 -> same bucket as 100
        RawRecord(0, ("b", "")),
    ]
    vocab = build_vocabulary(records, schema, min_count=2)
    assert "21" in vocab.fields[1].tokens
    assert MISSING_TOKEN not in vocab.fields[1].tokens  # only seen once


def test_vocabulary_json_round_trip_and_stability():
    records = [RawRecord(0, ("x", "u")), RawRecord(1, ("y", "v"))]
    vocab = build_vocabulary(records, two_field_schema(), min_count=1)
    text = vocab.to_json()
    again = build_vocabulary(records, two_field_schema(), min_count=1)
    assert again.to_json() == text  # byte-stable given identical inputs
    loaded = Vocabulary.from_json(text)
    assert loaded.to_json() == text
    doc = json.loads(text)
    doc["format_version"] = 99
    with pytest.raises(DataError, match="format_version"):
        Vocabulary.from_json(json.dumps(doc))


# ---------------------------------------------------------------------------
# encoding


def test_encode_known_unknown_and_determinism():
    records = [RawRecord(1, ("x", "u")), RawRecord(0, ("y", "u"))]
    vocab = build_vocabulary(records, two_field_schema(), min_count=1)
    inst = encode(RawRecord(1, ("x", "u")), vocab)
    assert inst.label == 1
    assert inst.feature_indices[0] == vocab.fields[0].tokens["x"]
    stranger = encode(RawRecord(0, ("zzz", "u")), vocab)
    assert stranger.feature_indices[0] == vocab.fields[0].unknown_index
    assert encode(RawRecord(1, ("x", "u")), vocab) == inst
    lo0, hi0 = vocab.index_range(0)
    lo1, hi1 = vocab.index_range(1)
    assert lo0 <= inst.feature_indices[0] < hi0
    assert lo1 <= inst.feature_indices[1] < hi1


def test_parse_tsv_line_errors_carry_line_numbers():
    rec = parse_tsv_line("1\tfoo\tbar\n", 2, line_no=7)
    assert rec == RawRecord(1, ("foo", "bar"))
    with pytest.raises(DataError, match="line 7"):
        parse_tsv_line("1\tfoo\n", 2, line_no=7)
    with pytest.raises(DataError, match="label"):
        parse_tsv_line("2\tfoo\tbar\n", 2, line_no=1)


def test_schema_loading_and_validation(tmp_path):
    path = tmp_path / "schema.json"
    path.write_text(json.dumps([{"name": "a", "kind": "categorical"}, {"name": "n", "kind": "numeric"}]))
    schema = fdata.load_schema(path)
    assert [f.name for f in schema] == ["a", "n"]
    path.write_text(json.dumps([{"name": "a", "kind": "categorical"}]))
    with pytest.raises(ConfigError, match="at least 2"):
        fdata.load_schema(path)
    path.write_text(json.dumps([{"name": "a", "kind": "weird"}, {"name": "b", "kind": "numeric"}]))
    with pytest.raises(ConfigError, match="kind"):
        fdata.load_schema(path)


# ---------------------------------------------------------------------------
# splitting


def instances(n):
    return [fdata.EncodedInstance(label=i % 2, feature_indices=(i, i)) for i in range(n)]


def test_split_sizes():
    split = split_dataset(instances(10), seed=0)
    assert (len(split.train), len(split.validation), len(split.test)) == (8, 1, 1)
    split = split_dataset(instances(100), seed=5)
    assert (len(split.train), len(split.validation), len(split.test)) == (80, 10, 10)


def test_split_determinism_and_partition_property():
    items = instances(57)
    first = split_dataset(items, seed=123)
    second = split_dataset(items, seed=123)
    assert first.train == second.train
    assert first.validation == second.validation
    assert first.test == second.test
    for seed in range(20):
        split = split_dataset(items, seed=seed)
        merged = split.train + split.validation + split.test
        assert len(merged) == len(items)
        assert sorted(i.feature_indices[0] for i in merged) == list(range(57))


def test_split_needs_ten_instances():
    with pytest.raises(DataError, match="at least 10"):
        split_dataset(instances(9), seed=0)
