"""Attention-based explanations: edge heat maps and node-importance vectors.

The edge heat map is the (dataset-averaged or per-case) attentional adjacency;
averaging preserves its invariants because the mean of row-normalised
matrices is row-normalised.  Node weights are the readout gates.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .model import FiGNN

DEFAULT_CASES = 4
_CHUNK = 4096


@dataclass
class ExplanationBundle:
    field_names: list[str]
    edge_global: np.ndarray  # (m, m)
    node_global: np.ndarray  # (m,)
    edge_cases: list[np.ndarray]  # per selected case, (m, m)
    node_cases: list[np.ndarray]  # per selected case, (m,)


def compute_explanations(
    model: FiGNN,
    indices: np.ndarray,
    mode: str = "global",
    num_cases: int = DEFAULT_CASES,
) -> ExplanationBundle:
    """Averaged (and, in case mode, per-instance) attention maps over a dataset."""
    if not isinstance(model, FiGNN):
        raise ConfigError(
            f"explanations need attention maps; model kind {getattr(model, 'kind', '?')!r} has none"
        )
    if mode not in ("global", "case"):
        raise ConfigError(f"explanation mode must be 'global' or 'case', got {mode!r}")
    idx = np.atleast_2d(np.asarray(indices))
    n = idx.shape[0]
    if n == 0:
        raise DataError("cannot explain an empty dataset")
    m = model.config.num_fields
    edge_sum = np.zeros((m, m))
    node_sum = np.zeros(m)
    edge_cases: list[np.ndarray] = []
    node_cases: list[np.ndarray] = []
    wanted = min(num_cases, n) if mode == "case" else 0
    for start in range(0, n, _CHUNK):
        chunk = idx[start : start + _CHUNK]
        result = model.forward(chunk)
        adjacency = np.broadcast_to(result.adjacency.data, (chunk.shape[0], m, m))
        weights = result.prediction.node_weights.data[..., 0]
        edge_sum += adjacency.sum(axis=0)
        node_sum += weights.sum(axis=0)
        for position in range(start, min(wanted, start + chunk.shape[0])):
            edge_cases.append(adjacency[position - start].copy())
            node_cases.append(weights[position - start].copy())
    names = [f"field_{i}" for i in range(m)]
    return ExplanationBundle(
        field_names=names,
        edge_global=edge_sum / n,
        node_global=node_sum / n,
        edge_cases=edge_cases,
        node_cases=node_cases,
    )


def _write_matrix_csv(path: Path, names: list[str], matrix: np.ndarray) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([""] + names)
        for name, row in zip(names, matrix):
            writer.writerow([name] + [repr(v) for v in row])


def write_explanations(
    bundle: ExplanationBundle,
    out_dir: str | Path,
    field_names: list[str] | None = None,
) -> list[Path]:
    """Write the edge heat maps and a node-weight table as CSV files.

    The node-weight table mirrors the published layout: one globally averaged
    column followed by one column per exported case.
    """
    names = field_names or bundle.field_names
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    path = out / "edge_heatmap_global.csv"
    _write_matrix_csv(path, names, bundle.edge_global)
    written.append(path)
    for k, matrix in enumerate(bundle.edge_cases, start=1):
        path = out / f"edge_heatmap_case_{k}.csv"
        _write_matrix_csv(path, names, matrix)
        written.append(path)

    path = out / "node_weights.csv"
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["field", "global"] + [f"case_{k}" for k in range(1, len(bundle.node_cases) + 1)])
        for i, name in enumerate(names):
            row = [name, repr(bundle.node_global[i])]
            row.extend(repr(case[i]) for case in bundle.node_cases)
            writer.writerow(row)
    written.append(path)
    return written
