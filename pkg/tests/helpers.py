"""Shared test utilities: finite-difference oracle, naive reference
implementations, and the synthetic interaction-recovery dataset.

Everything here is deliberately written as straight-line loops over plain
numpy arrays, independent of the package's tensor engine, so it can serve
as an oracle for it.
"""

import numpy as np

from fignn import autodiff as ad
from fignn import data as fdata
from fignn.data import DatasetSplit


def finite_difference(f, arrays, eps=1e-5):
    """Central-difference gradients of scalar f() w.r.t. each array, in place."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            saved = arr[ix]
            arr[ix] = saved + eps
            up = f()
            arr[ix] = saved - eps
            down = f()
            arr[ix] = saved
            g[ix] = (up - down) / (2.0 * eps)
        grads.append(g)
    return grads


def max_rel_err(a, b, floor=1e-6):
    a = np.asarray(a)
    b = np.asarray(b)
    denom = np.maximum(floor, np.maximum(np.abs(a), np.abs(b)))
    return float((np.abs(a - b) / denom).max())


def check_gradients(build_loss, tensors, eps=1e-5, tol=1e-4):
    """Assert analytic grads of build_loss() match finite differences.

    ``build_loss`` must return a scalar Tensor computed from ``tensors``
    (and record on the active tape).  Returns the worst relative error.
    """
    for t in tensors:
        t.grad = None
    with ad.Tape() as tape:
        loss = build_loss()
    ad.backward(loss, tape)
    worst = 0.0
    fd = finite_difference(lambda: build_loss().item(), [t.data for t in tensors], eps)
    for t, g in zip(tensors, fd):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        worst = max(worst, max_rel_err(analytic, g))
    assert worst < tol, f"gradient mismatch: rel err {worst} >= {tol}"
    return worst


def leaky(x, slope=0.01):
    return np.where(x >= 0, x, slope * x)


def naive_softmax(row):
    e = np.exp(row - row.max())
    return e / e.sum()


def naive_attention_head(emb, wq, wk, wv):
    """Per-pair scaled dot-product attention, all loops."""
    m = emb.shape[0]
    dk = wq.shape[0]
    q = np.array([wq @ emb[i] for i in range(m)])
    k = np.array([wk @ emb[i] for i in range(m)])
    v = np.array([wv @ emb[i] for i in range(m)])
    out = np.zeros((m, dk))
    for i in range(m):
        logits = np.array([q[i] @ k[j] for j in range(m)]) / np.sqrt(dk)
        alpha = naive_softmax(logits)
        for j in range(m):
            out[i] += alpha[j] * v[j]
    return out


def naive_edge_attention(states, w, slope=0.01):
    """Pairwise LeakyReLU scores, softmax over the non-self neighbors."""
    m, d = states.shape
    scores = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            scores[i, j] = leaky(w @ np.concatenate([states[i], states[j]]), slope)
    adjacency = np.zeros((m, m))
    for i in range(m):
        others = [j for j in range(m) if j != i]
        e = np.exp(scores[i, others] - scores[i, others].max())
        adjacency[i, others] = e / e.sum()
    return adjacency


def naive_aggregate(states, adjacency, w_out, w_in, b_p):
    """The per-edge double loop the factored implementation must equal."""
    m, d = states.shape
    agg = np.zeros((m, d))
    for i in range(m):
        for j in range(m):
            if j == i:
                continue
            agg[i] += adjacency[j, i] * (w_in[i] @ (w_out[j] @ states[j]))
        agg[i] += b_p
    return agg


def naive_aggregate_shared(states, adjacency, w_p, b_p):
    m, d = states.shape
    agg = np.zeros((m, d))
    for i in range(m):
        for j in range(m):
            if j == i:
                continue
            agg[i] += adjacency[j, i] * (w_p @ states[j])
        agg[i] += b_p
    return agg


def naive_gru(h, a, wz, uz, bz, wr, ur, br, wh, uh, bh):
    z = 1.0 / (1.0 + np.exp(-(wz @ a + uz @ h + bz)))
    r = 1.0 / (1.0 + np.exp(-(wr @ a + ur @ h + br)))
    cand = np.tanh(wh @ a + uh @ (r * h) + bh)
    return cand * z + h * (1.0 - z)


def brute_force_auc(scores, labels):
    """Pairwise positive-vs-negative counting with half credit for ties."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    pos = s[y == 1]
    neg = s[y == 0]
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


def naive_fm_pairwise(vectors):
    """Sum of inner products over i < j."""
    total = 0.0
    m = len(vectors)
    for i in range(m):
        for j in range(i + 1, m):
            total += float(vectors[i] @ vectors[j])
    return total


XOR_SCHEMA = [fdata.FieldSchema(f"f{i}", "categorical", i) for i in range(4)]


def make_xor_records(n, seed, noise=0.10, signal_tokens=8, noise_tokens=64):
    """Labels are the XOR of the token parities of the first two fields.

    The last two fields are pure noise with a larger vocabulary.  At 10%
    label noise the Bayes-optimal AUC is 0.90; a purely additive model has
    no signal to use, since each parity alone is independent of the label.
    """
    rng = np.random.default_rng(seed)
    records = []
    for _ in range(n):
        t0 = int(rng.integers(0, signal_tokens))
        t1 = int(rng.integers(0, signal_tokens))
        t2 = int(rng.integers(0, noise_tokens))
        t3 = int(rng.integers(0, noise_tokens))
        label = (t0 % 2) ^ (t1 % 2)
        if rng.random() < noise:
            label = 1 - label
        records.append(
            fdata.RawRecord(label=label, values=(f"a{t0}", f"b{t1}", f"c{t2}", f"d{t3}"))
        )
    return records


def xor_dataset(n, seed, noise=0.10, split_seed=None):
    """Full pipeline: raw records -> vocabulary -> encoding -> 8:1:1 split."""
    records = make_xor_records(n, seed, noise)
    vocab = fdata.build_vocabulary(records, XOR_SCHEMA, min_count=1)
    instances = [fdata.encode(r, vocab) for r in records]
    split = fdata.split_dataset(instances, seed if split_seed is None else split_seed)
    return vocab, split


def overfit_dataset(n=256, seed=11):
    """Noise-free XOR set reused as its own validation split (capacity check)."""
    records = make_xor_records(n, seed, noise=0.0)
    vocab = fdata.build_vocabulary(records, XOR_SCHEMA, min_count=1)
    instances = [fdata.encode(r, vocab) for r in records]
    return vocab, DatasetSplit(train=instances, validation=list(instances), test=[], split_seed=0)
