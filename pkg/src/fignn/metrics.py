"""Evaluation metrics: AUC, mean logloss, and relative improvement."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import scoring
from .data import EncodedInstance
from .errors import DataError
from .model import encode_batch


@dataclass
class EvalReport:
    auc: float
    logloss: float
    n_instances: int

    def to_json(self) -> str:
        return json.dumps(
            {"auc": self.auc, "logloss": self.logloss, "n_instances": self.n_instances},
            sort_keys=True,
        )


def _tied_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks, ties averaged (midrank convention)."""
    order = np.argsort(x, kind="mergesort")
    sorted_x = x[order]
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def auc(scores, labels) -> float:
    """Probability a positive outranks a negative, ties worth 0.5.

    Computed from rank sums (Mann-Whitney): with tied ranks averaged this is
    exactly the pairwise count (sum over positive/negative pairs of
    [s+ > s-] + 0.5 [s+ == s-]) / (P * N).
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise DataError(f"scores {s.shape} and labels {y.shape} must be equal-length vectors")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC needs both a positive and a negative instance")
    ranks = _tied_ranks(s)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def relative_improvement(model_value: float, base_value: float) -> float:
    """|model - base| / base as a percentage (the Table-2 comparison measure)."""
    if base_value == 0:
        raise DataError("relative improvement is undefined for a zero base value")
    return abs(model_value - base_value) / base_value * 100.0


def evaluate(model, instances: list[EncodedInstance]) -> EvalReport:
    """Run inference over the instances and report AUC plus mean logloss."""
    if not instances:
        raise DataError("cannot evaluate on an empty instance list")
    indices, labels = encode_batch(instances)
    probs = model.predict_proba(indices)
    return EvalReport(
        auc=auc(probs, labels),
        logloss=scoring.log_loss(probs, labels),
        n_instances=len(instances),
    )


def render_table(rows: list[tuple[str, EvalReport]], reference: str | None = None) -> str:
    """Aligned text table with AUC, RI-AUC, Logloss and RI-Logloss columns.

    Relative improvements are computed against the ``reference`` row (the
    last row when unspecified), which therefore reads 0.00%.
    """
    if not rows:
        raise DataError("cannot render an empty report table")
    names = [name for name, _ in rows]
    if reference is None:
        reference = names[-1]
    if reference not in names:
        raise DataError(f"reference {reference!r} not among rows {names}")
    ref = dict(rows)[reference]
    header = ["Model", "AUC", "RI-AUC", "Logloss", "RI-Logloss"]
    body = [
        [
            name,
            f"{rep.auc:.4f}",
            f"{relative_improvement(rep.auc, ref.auc):.2f}%",
            f"{rep.logloss:.4f}",
            f"{relative_improvement(rep.logloss, ref.logloss):.2f}%",
        ]
        for name, rep in rows
    ]
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = [
        "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row))
        for row in [header] + body
    ]
    return "\n".join(lines)
