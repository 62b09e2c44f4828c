"""Graph-level readout and the training loss.

Each node gets a raw score and a sigmoid gate weight from two affine heads;
the click probability is the sigmoid of the gated score sum.  The gate
weights double as per-field importance for explanations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor
from .errors import DataError

PROB_CLAMP = ad.PROB_CLAMP


@dataclass
class ScoringParams:
    score_w: Tensor  # (state_dim,)
    score_b: Tensor  # scalar
    gate_w: Tensor  # (state_dim,)
    gate_b: Tensor  # scalar


@dataclass
class Prediction:
    """Full readout: probability plus the per-node pieces that built it."""

    probability: Tensor  # () per instance, (b,) per batch
    node_scores: Tensor  # (..., m, 1)
    node_weights: Tensor  # (..., m, 1), each in (0, 1)


def score(states: Tensor, params: ScoringParams) -> Prediction:
    """Gated sum of per-node scores, squashed to a probability.

    score_i = w_s . h_i + b_s, weight_i = sigmoid(w_g . h_i + b_g),
    probability = sigmoid(sum_i weight_i * score_i).
    """
    node_scores = ad.add(ad.sum_(ad.mul(states, params.score_w), axis=-1, keepdims=True), params.score_b)
    node_weights = ad.sigmoid(
        ad.add(ad.sum_(ad.mul(states, params.gate_w), axis=-1, keepdims=True), params.gate_b)
    )
    logit = ad.sum_(ad.mul(node_weights, node_scores), axis=(-1, -2))
    return Prediction(
        probability=ad.sigmoid(logit),
        node_scores=node_scores,
        node_weights=node_weights,
    )


def log_loss(predictions, labels) -> float:
    """Mean binary cross-entropy over probabilities, clamped at 1e-7.

    This is the plain evaluation-side formula; model training records the
    identical computation on the tape via autodiff.log_loss.
    """
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise DataError(f"predictions and labels differ in shape: {p.shape} vs {y.shape}")
    if p.size == 0:
        raise DataError("log_loss of empty prediction list")
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).mean())


def node_importance(prediction: Prediction) -> np.ndarray:
    """The attentional node weights (a_1 .. a_m) for explanation export."""
    weights = prediction.node_weights.data
    return weights[..., 0]


def init_scoring_params(
    store: ParameterStore,
    state_dim: int,
    rng: np.random.Generator,
    init_scale: float,
) -> ScoringParams:
    """Create the "score.*" and "gate.*" parameter entries."""
    return ScoringParams(
        score_w=store.add("score.w", rng.uniform(-init_scale, init_scale, (state_dim,))),
        score_b=store.add("score.b", np.zeros(())),
        gate_w=store.add("gate.w", rng.uniform(-init_scale, init_scale, (state_dim,))),
        gate_b=store.add("gate.b", np.zeros(())),
    )
