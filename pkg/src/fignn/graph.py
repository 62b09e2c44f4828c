"""Propagation over the complete field graph.

One propagation step aggregates transformed neighbor states through an
attention-weighted adjacency, feeds the aggregate into a shared GRU, and adds
the initial state back as a residual.  The adjacency is computed once per
instance from the initial states and reused at every step.

Like the encoder, everything here accepts an optional leading batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor
from .errors import ConfigError, ShapeError


@dataclass
class EdgeAttentionParams:
    w_w: Tensor  # (2 * state_dim,)
    leaky_slope: float = ad.DEFAULT_LEAKY_SLOPE


@dataclass
class NodeTransformParams:
    """Per-node output/input matrices; the edge (j -> i) transform is W_in^i W_out^j."""

    w_out: list[Tensor]  # m matrices, each (state_dim, state_dim)
    w_in: list[Tensor]  # m matrices, each (state_dim, state_dim)
    b_p: Tensor  # (state_dim,), shared across nodes


@dataclass
class SharedTransformParams:
    """Ablation variant: one transform matrix for every edge."""

    w_p: Tensor  # (state_dim, state_dim)
    b_p: Tensor  # (state_dim,)


@dataclass
class GRUParams:
    """One parameter set shared by all nodes and all steps."""

    w_z: Tensor
    u_z: Tensor
    b_z: Tensor
    w_r: Tensor
    u_r: Tensor
    b_r: Tensor
    w_h: Tensor
    u_h: Tensor
    b_h: Tensor


def _offdiag_mask(m: int) -> np.ndarray:
    return ~np.eye(m, dtype=bool)


def edge_attention(states: Tensor, params: EdgeAttentionParams) -> Tensor:
    """Attentional adjacency A from the initial node states.

    The score of the ordered pair (i, j) is LeakyReLU(w . [h_i || h_j]),
    normalised by a softmax over j != i, so rows have zero diagonal and
    off-diagonal sums of exactly 1.
    """
    m = states.shape[-2]
    if m < 2:
        raise ConfigError(f"edge attention needs at least 2 nodes, got m={m}")
    d = states.shape[-1]
    if params.w_w.shape != (2 * d,):
        raise ShapeError(
            f"edge weight vector has shape {params.w_w.shape}, states need ({2 * d},)"
        )
    u = ad.slice_(params.w_w, 0, 0, d)
    v = ad.slice_(params.w_w, 0, d, 2 * d)
    # score[i, j] = u . h_i + v . h_j, via an outer sum of the two projections
    su = ad.sum_(ad.mul(states, u), axis=-1, keepdims=True)  # (..., m, 1)
    sv = ad.sum_(ad.mul(states, v), axis=-1, keepdims=True)
    scores = ad.leaky_relu(ad.add(su, ad.transpose(sv)), params.leaky_slope)
    return ad.row_softmax(scores, mask=_offdiag_mask(m))


def uniform_adjacency(m: int, binary: bool = False) -> Tensor:
    """Constant adjacency for the no-edge-attention ablation.

    Uniform rows (1/(m-1) off-diagonal) keep the row-normalisation property;
    ``binary`` switches to raw ones off the diagonal instead.
    """
    if m < 2:
        raise ConfigError(f"adjacency needs at least 2 nodes, got m={m}")
    a = np.ones((m, m)) - np.eye(m)
    if not binary:
        a /= m - 1
    return Tensor(a)


def aggregate(
    states: Tensor,
    adjacency: Tensor,
    transforms: NodeTransformParams | SharedTransformParams,
) -> Tensor:
    """Edge-wise neighbor aggregation, factored per node.

    a_i = sum_j A[j, i] * W_in^i (W_out^j h_j) + b_p.  The factoring costs one
    W_out product per source node and one W_in product per destination node
    (2m matrix products), never one per edge.
    """
    m = states.shape[-2]
    if adjacency.shape[-2:] != (m, m):
        raise ShapeError(f"adjacency {adjacency.shape} does not match {m} node states")
    if isinstance(transforms, SharedTransformParams):
        sent = ad.matmul(states, ad.transpose(transforms.w_p))
        mixed = ad.matmul(ad.transpose(adjacency), sent)
        return ad.add(mixed, transforms.b_p)
    sent = ad.concat(
        [
            ad.matmul(ad.slice_(states, -2, j, j + 1), ad.transpose(transforms.w_out[j]))
            for j in range(m)
        ],
        axis=-2,
    )
    # row i of (A^T @ sent) is sum_j A[j, i] * sent_j
    mixed = ad.matmul(ad.transpose(adjacency), sent)
    received = ad.concat(
        [
            ad.matmul(ad.slice_(mixed, -2, i, i + 1), ad.transpose(transforms.w_in[i]))
            for i in range(m)
        ],
        axis=-2,
    )
    return ad.add(received, transforms.b_p)


def gru_update(h_prev: Tensor, a: Tensor, params: GRUParams) -> Tensor:
    """Gated recurrent update of node states from their aggregated messages.

        z = sigmoid(W_z a + U_z h + b_z)
        r = sigmoid(W_r a + U_r h + b_r)
        h~ = tanh(W_h a + U_h (r * h) + b_h)
        out = h~ * z + h * (1 - z)

    Accepts states of shape (d',), (m, d') or (b, m, d'); rows update
    independently because the parameters are shared.
    """
    vector_in = h_prev.ndim == 1
    if vector_in:
        d = h_prev.shape[0]
        h_prev = ad.reshape(h_prev, (1, d))
        a = ad.reshape(a, (1, d))

    def gate(w, u, b, h):
        return ad.add(ad.add(ad.matmul(a, ad.transpose(w)), ad.matmul(h, ad.transpose(u))), b)

    z = ad.sigmoid(gate(params.w_z, params.u_z, params.b_z, h_prev))
    r = ad.sigmoid(gate(params.w_r, params.u_r, params.b_r, h_prev))
    candidate = ad.tanh(gate(params.w_h, params.u_h, params.b_h, ad.mul(r, h_prev)))
    one = Tensor(1.0)
    out = ad.add(ad.mul(candidate, z), ad.mul(h_prev, ad.sub(one, z)))
    if vector_in:
        out = ad.reshape(out, (out.shape[-1],))
    return out


def propagation_step(
    states: Tensor,
    initial: Tensor,
    adjacency: Tensor,
    transforms: NodeTransformParams | SharedTransformParams,
    gru: GRUParams,
    residual: bool = True,
) -> Tensor:
    """One aggregate + GRU update, plus the initial-state residual."""
    agg = aggregate(states, adjacency, transforms)
    updated = gru_update(states, agg, gru)
    return ad.add(updated, initial) if residual else updated


def propagate(
    initial: Tensor,
    adjacency: Tensor,
    transforms: NodeTransformParams | SharedTransformParams,
    gru: GRUParams,
    steps: int,
    residual: bool = True,
) -> Tensor:
    """Run ``steps`` propagation rounds starting from the initial states.

    The step count equals the highest order of field interaction the model
    can express.  The residual adds the *initial* state, not the previous
    one, preserving first-order information at every depth.
    """
    if steps < 1:
        raise ConfigError(f"propagation steps must be >= 1, got {steps}")
    states = initial
    for _ in range(steps):
        states = propagation_step(states, initial, adjacency, transforms, gru, residual)
    return states


def init_graph_params(
    store: ParameterStore,
    num_fields: int,
    state_dim: int,
    rng: np.random.Generator,
    init_scale: float,
    leaky_slope: float = ad.DEFAULT_LEAKY_SLOPE,
    edge_attention_weights: bool = True,
    per_node_transforms: bool = True,
) -> tuple[EdgeAttentionParams | None, NodeTransformParams | SharedTransformParams, GRUParams]:
    """Create the "graph.*" parameter entries; ablations drop or share pieces."""
    edge_params = None
    if edge_attention_weights:
        w_w = store.add("graph.W_w", rng.uniform(-init_scale, init_scale, (2 * state_dim,)))
        edge_params = EdgeAttentionParams(w_w=w_w, leaky_slope=leaky_slope)
    shape = (state_dim, state_dim)
    if per_node_transforms:
        w_out = [
            store.add(f"graph.node{i}.W_out", rng.uniform(-init_scale, init_scale, shape))
            for i in range(num_fields)
        ]
        w_in = [
            store.add(f"graph.node{i}.W_in", rng.uniform(-init_scale, init_scale, shape))
            for i in range(num_fields)
        ]
        b_p = store.add("graph.b_p", np.zeros(state_dim))
        transforms: NodeTransformParams | SharedTransformParams = NodeTransformParams(
            w_out=w_out, w_in=w_in, b_p=b_p
        )
    else:
        w_p = store.add("graph.W_p", rng.uniform(-init_scale, init_scale, shape))
        b_p = store.add("graph.b_p", np.zeros(state_dim))
        transforms = SharedTransformParams(w_p=w_p, b_p=b_p)
    gru = GRUParams(
        w_z=store.add("graph.gru.Wz", rng.uniform(-init_scale, init_scale, shape)),
        u_z=store.add("graph.gru.Uz", rng.uniform(-init_scale, init_scale, shape)),
        b_z=store.add("graph.gru.bz", np.zeros(state_dim)),
        w_r=store.add("graph.gru.Wr", rng.uniform(-init_scale, init_scale, shape)),
        u_r=store.add("graph.gru.Ur", rng.uniform(-init_scale, init_scale, shape)),
        b_r=store.add("graph.gru.br", np.zeros(state_dim)),
        w_h=store.add("graph.gru.Wh", rng.uniform(-init_scale, init_scale, shape)),
        u_h=store.add("graph.gru.Uh", rng.uniform(-init_scale, init_scale, shape)),
        b_h=store.add("graph.gru.bh", np.zeros(state_dim)),
    )
    return edge_params, transforms, gru
