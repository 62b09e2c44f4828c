"""The full field-interaction GNN: embedding -> attention -> propagation -> readout.

The forward pass is rank-polymorphic: feed indices of shape ``(m,)`` for one
instance or ``(b, m)`` for a batch, and every downstream tensor carries the
leading batch axis along.  Training uses the batched form; the per-instance
form is what the gradient checks and explanation paths exercise.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import encoder, graph, scoring
from .autodiff import ParameterStore, Tape, Tensor
from .data import EncodedInstance
from .errors import ConfigError

PREDICT_CHUNK = 4096


@dataclass(frozen=True)
class AblationConfig:
    """Switches that strip model components for the ablation comparisons.

    ``binary_adjacency`` only matters when edge attention is disabled: it
    replaces the uniform 1/(m-1) rows with raw ones.
    """

    disable_edge_attention: bool = False
    disable_edge_transform: bool = False
    disable_residual: bool = False
    binary_adjacency: bool = False


@dataclass(frozen=True)
class ModelConfig:
    num_fields: int
    vocab_size: int
    embed_dim: int = 16
    state_dim: int = 16
    heads: int = 2
    steps: int = 2
    leaky_slope: float = ad.DEFAULT_LEAKY_SLOPE
    ablation: AblationConfig = field(default_factory=AblationConfig)

    def validate(self) -> None:
        if self.num_fields < 2:
            raise ConfigError(f"num_fields must be >= 2, got {self.num_fields}")
        if self.vocab_size < self.num_fields:
            raise ConfigError(
                f"vocab_size {self.vocab_size} cannot cover {self.num_fields} fields"
            )
        if self.embed_dim < 1:
            raise ConfigError(f"embed_dim must be >= 1, got {self.embed_dim}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        encoder.head_dims(self.state_dim, self.heads)


@dataclass
class ForwardResult:
    prediction: scoring.Prediction
    adjacency: Tensor  # (..., m, m) for the attention path, (m, m) constant otherwise
    initial_states: Tensor  # (..., m, d')
    final_states: Tensor  # (..., m, d')


def encode_batch(instances: list[EncodedInstance]) -> tuple[np.ndarray, np.ndarray]:
    """Stack instances into an index matrix and a float label vector."""
    idx = np.asarray([inst.feature_indices for inst in instances], dtype=np.int64)
    labels = np.asarray([inst.label for inst in instances], dtype=np.float64)
    return idx, labels


class FiGNN:
    """Field-interaction GNN with optional ablations."""

    kind = "fignn"

    def __init__(self, config: ModelConfig, rng: np.random.Generator | int = 0):
        config.validate()
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        self.config = config
        self.store = ParameterStore()
        scale = 1.0 / np.sqrt(config.state_dim)
        self.table, self.heads = encoder.init_encoder_params(
            self.store,
            config.vocab_size,
            config.embed_dim,
            config.state_dim,
            config.heads,
            rng,
            scale,
        )
        ab = config.ablation
        self.edge_params, self.transforms, self.gru = graph.init_graph_params(
            self.store,
            config.num_fields,
            config.state_dim,
            rng,
            scale,
            leaky_slope=config.leaky_slope,
            edge_attention_weights=not ab.disable_edge_attention,
            per_node_transforms=not ab.disable_edge_transform,
        )
        self.scoring_params = scoring.init_scoring_params(
            self.store, config.state_dim, rng, scale
        )

    def adjacency(self, initial_states: Tensor) -> Tensor:
        if self.edge_params is None:
            return graph.uniform_adjacency(
                self.config.num_fields, binary=self.config.ablation.binary_adjacency
            )
        return graph.edge_attention(initial_states, self.edge_params)

    def forward(self, indices: np.ndarray) -> ForwardResult:
        idx = np.asarray(indices)
        if idx.shape[-1] != self.config.num_fields:
            raise ConfigError(
                f"indices last dim {idx.shape} does not match num_fields={self.config.num_fields}"
            )
        embeddings = encoder.embed(idx, self.table)
        initial = encoder.initial_states(embeddings, self.heads)
        adjacency = self.adjacency(initial)
        final = graph.propagate(
            initial,
            adjacency,
            self.transforms,
            self.gru,
            self.config.steps,
            residual=not self.config.ablation.disable_residual,
        )
        prediction = scoring.score(final, self.scoring_params)
        return ForwardResult(
            prediction=prediction,
            adjacency=adjacency,
            initial_states=initial,
            final_states=final,
        )

    def loss(self, indices: np.ndarray, labels: np.ndarray) -> tuple[Tensor, ForwardResult]:
        result = self.forward(indices)
        return ad.log_loss(result.prediction.probability, labels), result

    def predict_proba(self, indices: np.ndarray) -> np.ndarray:
        """Tape-free batched inference; chunked so memory stays flat."""
        idx = np.atleast_2d(np.asarray(indices))
        if idx.shape[0] == 0:
            return np.zeros(0)
        chunks = [
            self.forward(idx[i : i + PREDICT_CHUNK]).prediction.probability.data
            for i in range(0, idx.shape[0], PREDICT_CHUNK)
        ]
        return np.concatenate(chunks)

    def with_ablation(self, ablation: AblationConfig, rng: np.random.Generator | int = 0) -> "FiGNN":
        return FiGNN(replace(self.config, ablation=ablation), rng)
