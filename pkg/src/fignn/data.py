"""Raw click-log ingestion: schemas, vocabularies, encoding, splitting.

Input format is header-less TSV: column 0 is the binary label, columns
1..m are field values (numeric fields carried as decimal strings, empty
string means missing).  A JSON schema file declares the field kinds in
column order.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import ConfigError, DataError

MISSING_TOKEN = "<missing>"
UNKNOWN_TOKEN = "<unknown>"

FIELD_KINDS = ("categorical", "numeric")

VOCAB_FORMAT_VERSION = 1


@dataclass(frozen=True)
class FieldSchema:
    name: str
    kind: str
    index: int

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise ConfigError(f"field {self.name!r}: unknown kind {self.kind!r}")


def load_schema(path: str | Path) -> list[FieldSchema]:
    """Read a JSON list of {name, kind} objects, in column order."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read schema {path}: {exc}") from exc
    if not isinstance(raw, list):
        raise ConfigError(f"schema {path} must be a JSON list")
    fields = [FieldSchema(f["name"], f["kind"], i) for i, f in enumerate(raw)]
    validate_schema(fields)
    return fields


def validate_schema(fields: list[FieldSchema]) -> None:
    if len(fields) < 2:
        raise ConfigError(f"need at least 2 feature fields, got {len(fields)}")
    if [f.index for f in fields] != list(range(len(fields))):
        raise ConfigError("field indices must be contiguous from 0")
    names = [f.name for f in fields]
    if len(set(names)) != len(names):
        raise ConfigError("field names must be unique")


@dataclass(frozen=True)
class RawRecord:
    label: int
    values: tuple[str, ...]


@dataclass(frozen=True)
class EncodedInstance:
    label: int
    feature_indices: tuple[int, ...]


@dataclass
class DatasetSplit:
    train: list[EncodedInstance]
    validation: list[EncodedInstance]
    test: list[EncodedInstance]
    split_seed: int


def normalize_numeric(z: float | None, *, context: str = "") -> str:
    """Bucketize a non-negative numeric value into a categorical token.

    Values above 2 become floor(ln(z)^2), which compresses the heavy tail of
    count-like features into a small integer vocabulary; values at or below 2
    pass through as their integer part.  ``None`` means missing.
    """
    if z is None:
        return MISSING_TOKEN
    where = f" ({context})" if context else ""
    if not math.isfinite(z):
        raise DataError(f"non-finite numeric value {z!r}{where}")
    if z < 0:
        raise DataError(f"negative numeric value {z!r}{where}")
    if z <= 2:
        return str(int(z))
    return str(int(math.floor(math.log(z) ** 2)))


def tokenize_value(raw: str, kind: str, *, context: str = "") -> str:
    """Map one raw field value to its vocabulary token."""
    if raw == "":
        return MISSING_TOKEN
    if kind == "numeric":
        try:
            z = float(raw)
        except ValueError as exc:
            raise DataError(f"cannot parse numeric value {raw!r} ({context})") from exc
        return normalize_numeric(z, context=context)
    return raw


@dataclass
class FieldVocab:
    name: str
    kind: str
    tokens: dict[str, int]  # token -> global feature index, includes UNKNOWN_TOKEN
    unknown_index: int

    @property
    def size(self) -> int:
        return len(self.tokens)

    def lookup(self, token: str) -> int:
        return self.tokens.get(token, self.unknown_index)


@dataclass
class Vocabulary:
    """Per-field token -> dense index maps over one global, disjoint index space.

    Field i owns the contiguous range [base_i, base_i + size_i); every field
    maps unseen or filtered tokens to its own unknown index.
    """

    fields: list[FieldVocab]
    min_count: int
    total_feature_count: int = field(init=False)

    def __post_init__(self):
        self.total_feature_count = sum(f.size for f in self.fields)

    @property
    def num_fields(self) -> int:
        return len(self.fields)

    def index_range(self, field_idx: int) -> tuple[int, int]:
        base = sum(f.size for f in self.fields[:field_idx])
        return base, base + self.fields[field_idx].size

    def to_json(self) -> str:
        doc = {
            "format_version": VOCAB_FORMAT_VERSION,
            "min_count": self.min_count,
            "total_feature_count": self.total_feature_count,
            "fields": [
                {
                    "name": f.name,
                    "kind": f.kind,
                    "unknown_index": f.unknown_index,
                    "tokens": f.tokens,
                }
                for f in self.fields
            ],
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"vocabulary file is not valid JSON: {exc}") from exc
        if doc.get("format_version") != VOCAB_FORMAT_VERSION:
            raise DataError(
                f"unsupported vocabulary format_version {doc.get('format_version')!r}"
            )
        fields = [
            FieldVocab(f["name"], f["kind"], dict(f["tokens"]), f["unknown_index"])
            for f in doc["fields"]
        ]
        vocab = cls(fields=fields, min_count=doc["min_count"])
        if vocab.total_feature_count != doc["total_feature_count"]:
            raise DataError("vocabulary total_feature_count does not match its fields")
        return vocab

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise DataError(f"cannot read vocabulary {path}: {exc}") from exc
        return cls.from_json(text)


def build_vocabulary(
    records: Iterable[RawRecord],
    schema: list[FieldSchema],
    min_count: int,
) -> Vocabulary:
    """Count tokens per field and keep those seen at least ``min_count`` times.

    Numeric fields are bucketized first, so their buckets are what gets
    counted.  Filtered and unseen tokens fall back to the field's unknown
    index.  Counting is a single pass; counts from parallel readers could be
    merged before the thresholding step.
    """
    if min_count < 1:
        raise ConfigError(f"min_count must be >= 1, got {min_count}")
    m = len(schema)
    counts: list[Counter] = [Counter() for _ in schema]
    n_records = 0
    for pos, rec in enumerate(records, start=1):
        if len(rec.values) != m:
            raise DataError(
                f"record {pos}: expected {m} field values, got {len(rec.values)}"
            )
        n_records += 1
        for f in schema:
            token = tokenize_value(
                rec.values[f.index], f.kind, context=f"record {pos}, field {f.name!r}"
            )
            counts[f.index][token] += 1
    if n_records == 0:
        raise DataError("cannot build a vocabulary from an empty record stream")

    fields: list[FieldVocab] = []
    base = 0
    for f in schema:
        kept = sorted(
            (t for t, c in counts[f.index].items() if c >= min_count),
            key=lambda t: (-counts[f.index][t], t),
        )
        tokens = {UNKNOWN_TOKEN: base}
        for offset, token in enumerate(kept, start=1):
            tokens[token] = base + offset
        fields.append(FieldVocab(f.name, f.kind, tokens, unknown_index=base))
        base += len(tokens)
    return Vocabulary(fields=fields, min_count=min_count)


def encode(record: RawRecord, vocab: Vocabulary) -> EncodedInstance:
    """Deterministically map a raw record to per-field feature indices."""
    if len(record.values) != vocab.num_fields:
        raise DataError(
            f"record has {len(record.values)} values, vocabulary has {vocab.num_fields} fields"
        )
    indices = tuple(
        fv.lookup(tokenize_value(record.values[i], fv.kind, context=f"field {fv.name!r}"))
        for i, fv in enumerate(vocab.fields)
    )
    return EncodedInstance(label=record.label, feature_indices=indices)


def parse_tsv_line(line: str, num_fields: int, line_no: int) -> RawRecord:
    parts = line.rstrip("\n").split("\t")
    if len(parts) != num_fields + 1:
        raise DataError(
            f"line {line_no}: expected label + {num_fields} fields, got {len(parts)} columns"
        )
    if parts[0] not in ("0", "1"):
        raise DataError(f"line {line_no}: label must be 0 or 1, got {parts[0]!r}")
    return RawRecord(label=int(parts[0]), values=tuple(parts[1:]))


def read_tsv(path: str | Path, schema: list[FieldSchema]) -> Iterator[RawRecord]:
    """Yield records from a TSV file, reporting errors with line numbers."""
    m = len(schema)
    try:
        handle = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read data file {path}: {exc}") from exc
    with handle:
        for line_no, line in enumerate(handle, start=1):
            if line.strip() == "":
                continue
            yield parse_tsv_line(line, m, line_no)


def encode_file(path: str | Path, schema: list[FieldSchema], vocab: Vocabulary) -> list[EncodedInstance]:
    return [encode(rec, vocab) for rec in read_tsv(path, schema)]


def split_dataset(instances: list[EncodedInstance], seed: int) -> DatasetSplit:
    """Shuffle with ``seed`` and partition 8:1:1 (floor, floor, remainder)."""
    n = len(instances)
    if n < 10:
        raise DataError(f"need at least 10 instances to split 8:1:1, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_train = (8 * n) // 10
    n_val = n // 10
    shuffled = [instances[i] for i in order]
    return DatasetSplit(
        train=shuffled[:n_train],
        validation=shuffled[n_train : n_train + n_val],
        test=shuffled[n_train + n_val :],
        split_seed=seed,
    )
