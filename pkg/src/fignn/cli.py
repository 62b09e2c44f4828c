"""Command-line interface: build-vocab, train, evaluate, predict, explain.

Exit codes: 0 success, 1 data error, 2 configuration error, 3 internal
invariant violation.  Set FIGNN_LOG=DEBUG|INFO|... to control verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import data, explain, metrics
from .checkpoint import Checkpoint, file_sha256, load_checkpoint, save_checkpoint
from .errors import ConfigError, DataError, FignnError, InvariantError, ShapeError
from .training import DATASET_PRESETS, TrainingConfig, train

log = logging.getLogger("fignn.cli")

ABLATION_FLAGS = {
    "no-edge-attention": "disable_edge_attention",
    "no-edge-transform": "disable_edge_transform",
    "no-residual": "disable_residual",
    "binary-adjacency": "binary_adjacency",
}


def _parse_ablation(spec: str) -> dict[str, bool]:
    flags = {}
    for token in filter(None, (t.strip() for t in spec.split(","))):
        if token not in ABLATION_FLAGS:
            raise ConfigError(
                f"unknown ablation {token!r}; expected any of {sorted(ABLATION_FLAGS)}"
            )
        flags[ABLATION_FLAGS[token]] = True
    return flags


def cmd_build_vocab(args) -> int:
    schema = data.load_schema(args.schema)
    min_count = args.min_count
    if min_count is None:
        if args.preset is None:
            raise ConfigError("either --min-count or --preset is required")
        min_count = DATASET_PRESETS[args.preset]["min_count"]
    vocab = data.build_vocabulary(data.read_tsv(args.data, schema), schema, min_count)
    vocab.save(args.out)
    log.info("wrote vocabulary with %d features to %s", vocab.total_feature_count, args.out)
    return 0


def _load_train_file(path: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read training config {path}: {exc}") from exc
    required = ("data_path", "schema_path", "vocab_path")
    missing = [k for k in required if k not in doc]
    if missing:
        raise ConfigError(f"training config {path} is missing keys: {missing}")
    return doc


def cmd_train(args) -> int:
    doc = _load_train_file(args.config)
    config = TrainingConfig.from_dict(doc.get("training", {}))
    if args.model is not None:
        config.model = args.model
    if args.seed is not None:
        config.seed = args.seed
    if args.steps is not None:
        config.steps = args.steps
    if args.state_dim is not None:
        config.state_dim = args.state_dim
    if args.heads is not None:
        config.heads = args.heads
    if args.ablation is not None:
        for field_name, value in _parse_ablation(args.ablation).items():
            setattr(config, field_name, value)

    schema = data.load_schema(doc["schema_path"])
    vocab = data.Vocabulary.load(doc["vocab_path"])
    vocab_hash = file_sha256(doc["vocab_path"])
    instances = data.encode_file(doc["data_path"], schema, vocab)
    split = data.split_dataset(instances, doc.get("split_seed", config.seed))
    config.vocab_size = vocab.total_feature_count
    config.num_fields = len(schema)

    store, history = train(split, config)

    checkpoint_out = args.out or doc.get("checkpoint_out", "model.fignn")
    manifest_config = {
        "training": config.to_dict(),
        "schema": [{"name": f.name, "kind": f.kind} for f in schema],
    }
    save_checkpoint(checkpoint_out, config.model, manifest_config, vocab_hash, store)
    history_out = doc.get("history_out")
    if history_out:
        history.to_csv(history_out)
    if history.epochs:
        best = max(history.epochs, key=lambda row: row.val_auc)
        print(
            f"best epoch {best.epoch}: validation auc={best.val_auc:.6f} "
            f"logloss={best.val_logloss:.6f}"
        )
    print(f"checkpoint written to {checkpoint_out}")
    return 0


def _load_model_inputs(args) -> tuple[Checkpoint, list[data.FieldSchema], data.Vocabulary]:
    ckpt = load_checkpoint(args.checkpoint)
    actual = file_sha256(args.vocab)
    if actual != ckpt.vocab_hash:
        raise DataError(
            f"vocabulary {args.vocab} does not match the checkpoint "
            f"(hash {actual[:12]}... vs stored {ckpt.vocab_hash[:12]}...)"
        )
    schema = [
        data.FieldSchema(f["name"], f["kind"], i) for i, f in enumerate(ckpt.schema_fields())
    ]
    vocab = data.Vocabulary.load(args.vocab)
    return ckpt, schema, vocab


def cmd_evaluate(args) -> int:
    ckpt, schema, vocab = _load_model_inputs(args)
    instances = data.encode_file(args.data, schema, vocab)
    model = ckpt.build_model()
    report = metrics.evaluate(model, instances)
    print(metrics.render_table([(ckpt.model_kind, report)]))
    if args.json:
        Path(args.json).write_text(report.to_json() + "\n")
    return 0


def cmd_predict(args) -> int:
    ckpt, schema, vocab = _load_model_inputs(args)
    model = ckpt.build_model()
    rows: list[tuple[int, data.EncodedInstance]] = []
    bad_lines = 0
    with open(args.data, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if line.strip() == "":
                continue
            try:
                record = data.parse_tsv_line(line, len(schema), line_no)
                rows.append((line_no, data.encode(record, vocab)))
            except DataError as exc:
                bad_lines += 1
                print(f"skipping: {exc}", file=sys.stderr)
    probs = np.zeros(0)
    if rows:
        indices = np.asarray([inst.feature_indices for _, inst in rows], dtype=np.int64)
        probs = model.predict_proba(indices)
    with open(args.out, "w", encoding="utf-8") as out:
        for (line_no, _), p in zip(rows, probs):
            out.write(f"{line_no},{p!r}\n")
    if bad_lines:
        print(f"{bad_lines} malformed line(s) skipped", file=sys.stderr)
        return 1
    return 0


def cmd_explain(args) -> int:
    ckpt, schema, vocab = _load_model_inputs(args)
    if ckpt.model_kind != "fignn":
        raise ConfigError(
            f"cannot explain a {ckpt.model_kind!r} checkpoint: only the graph model "
            "has attentional edge weights and node gates"
        )
    instances = data.encode_file(args.data, schema, vocab)
    if not instances:
        raise DataError(f"no instances in {args.data}")
    model = ckpt.build_model()
    indices = np.asarray([inst.feature_indices for inst in instances], dtype=np.int64)
    bundle = explain.compute_explanations(model, indices, mode=args.mode, num_cases=args.cases)
    written = explain.write_explanations(bundle, args.out_dir, [f.name for f in schema])
    for path in written:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fignn",
        description="Field-interaction GNN for click-through-rate prediction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-vocab", help="count tokens and write a vocabulary file")
    p.add_argument("--data", required=True, help="TSV file: label + m field columns")
    p.add_argument("--schema", required=True, help="JSON list of {name, kind}")
    p.add_argument("--min-count", type=int, default=None, help="frequency threshold")
    p.add_argument("--preset", choices=sorted(DATASET_PRESETS), default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_build_vocab)

    p = sub.add_parser("train", help="train a model from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--model", choices=("lr", "fm", "fignn"), default=None)
    p.add_argument("--ablation", default=None, help="comma list: no-edge-attention,...")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--steps", type=int, default=None, help="propagation steps T")
    p.add_argument("--state-dim", type=int, default=None)
    p.add_argument("--heads", type=int, default=None)
    p.add_argument("--out", default=None, help="checkpoint path (overrides config)")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="report AUC and logloss on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--json", default=None, help="also write the report as JSON")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("predict", help="write per-line click probabilities")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("explain", help="export attention heat maps and node weights")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--mode", choices=("global", "case"), default="global")
    p.add_argument("--cases", type=int, default=explain.DEFAULT_CASES)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_explain)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("FIGNN_LOG", "WARNING").upper())
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ShapeError, InvariantError, FignnError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
