"""Field embedding and multi-head self-attention producing initial node states.

All operations accept an optional leading batch axis: an instance is encoded
from indices of shape ``(m,)`` into states ``(m, d')``, a batch from
``(b, m)`` into ``(b, m, d')``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor
from .errors import ConfigError, ShapeError


@dataclass
class AttentionHeadParams:
    """Projections for one attention head; all three map d -> head_dim."""

    wq: Tensor  # (head_dim, d)
    wk: Tensor  # (head_dim, d)
    wv: Tensor  # (head_dim, d)

    @property
    def head_dim(self) -> int:
        return self.wq.shape[0]


def embed(indices: np.ndarray, table: Tensor) -> Tensor:
    """Look up one embedding row per field; gradients accumulate on shared rows."""
    return ad.gather_rows(table, np.asarray(indices))


def attention_head(embeddings: Tensor, params: AttentionHeadParams) -> Tensor:
    """Scaled dot-product self-attention over the m field rows.

    Every pair of fields attends, self included; there is no positional term,
    so the output is permutation-equivariant in the field axis.
    """
    if embeddings.shape[-1] != params.wq.shape[-1]:
        raise ShapeError(
            f"embeddings last dim {embeddings.shape} does not match projection {params.wq.shape}"
        )
    q = ad.matmul(embeddings, ad.transpose(params.wq))
    k = ad.matmul(embeddings, ad.transpose(params.wk))
    v = ad.matmul(embeddings, ad.transpose(params.wv))
    scale = Tensor(1.0 / np.sqrt(params.head_dim))
    logits = ad.mul(ad.matmul(q, ad.transpose(k)), scale)
    weights = ad.row_softmax(logits)
    return ad.matmul(weights, v)


def initial_states(embeddings: Tensor, heads: list[AttentionHeadParams]) -> Tensor:
    """Concatenate all head outputs along the feature axis and apply ReLU."""
    if not heads:
        raise ConfigError("need at least one attention head")
    outputs = [attention_head(embeddings, h) for h in heads]
    return ad.relu(outputs[0] if len(outputs) == 1 else ad.concat(outputs, axis=-1))


def head_dims(state_dim: int, num_heads: int) -> list[int]:
    """Equal head sizes; state_dim must divide evenly across heads."""
    if num_heads < 1:
        raise ConfigError(f"number of heads must be >= 1, got {num_heads}")
    if state_dim % num_heads != 0:
        raise ConfigError(
            f"state dim {state_dim} is not divisible by {num_heads} heads"
        )
    return [state_dim // num_heads] * num_heads


def init_encoder_params(
    store: ParameterStore,
    vocab_size: int,
    embed_dim: int,
    state_dim: int,
    num_heads: int,
    rng: np.random.Generator,
    init_scale: float,
) -> tuple[Tensor, list[AttentionHeadParams]]:
    """Create "embed.table" and "attn.head{k}.{Q|K|V}" entries."""
    table = store.add(
        "embed.table", rng.uniform(-init_scale, init_scale, size=(vocab_size, embed_dim))
    )
    heads = []
    for k, dim in enumerate(head_dims(state_dim, num_heads)):
        heads.append(
            AttentionHeadParams(
                wq=store.add(f"attn.head{k}.Q", rng.uniform(-init_scale, init_scale, (dim, embed_dim))),
                wk=store.add(f"attn.head{k}.K", rng.uniform(-init_scale, init_scale, (dim, embed_dim))),
                wv=store.add(f"attn.head{k}.V", rng.uniform(-init_scale, init_scale, (dim, embed_dim))),
            )
        )
    return table, heads
