"""LR/FM baselines and the ablation variant wiring."""

import numpy as np
import pytest

from fignn import autodiff as ad
from fignn.autodiff import Tensor
from fignn.baselines import (
    AblationConfig,
    FMModel,
    FMParams,
    LRModel,
    LRParams,
    ablation_for_variant,
    build_variant,
    fm_forward,
    lr_forward,
)
from fignn.errors import ConfigError
from fignn.model import FiGNN, ModelConfig
from fignn.training import TrainingConfig, count_parameters
from helpers import check_gradients, naive_fm_pairwise


def lr_params(v, weights=None, bias=0.0):
    w = np.zeros((v, 1)) if weights is None else np.asarray(weights, float).reshape(v, 1)
    return LRParams(weights=Tensor(w), bias=Tensor(bias))


def test_lr_zero_parameters_gives_half():
    assert lr_forward(np.array([0, 2, 4]), lr_params(6)).item() == 0.5


def test_lr_bias_only():
    p = lr_forward(np.array([0, 1]), lr_params(4, bias=1.0))
    assert p.item() == pytest.approx(0.731059, abs=1e-6)


def test_lr_ignores_inactive_features():
    w = np.zeros(6)
    w[5] = 100.0  # never referenced by the instance
    active = lr_forward(np.array([0, 2]), lr_params(6, weights=w)).item()
    assert active == 0.5


def test_lr_is_invariant_to_graph_hyper_parameters():
    from fignn.training import create_model

    idx = np.array([[0, 2], [1, 3]])
    outs = []
    for steps, state_dim in [(1, 4), (3, 8)]:
        cfg = TrainingConfig(
            model="lr", vocab_size=5, num_fields=2, steps=steps, state_dim=state_dim
        )
        outs.append(create_model(cfg, 7).predict_proba(idx))
    assert np.array_equal(outs[0], outs[1])


def test_fm_with_zero_latent_reduces_to_lr():
    rng = np.random.default_rng(0)
    w = rng.standard_normal(6)
    linear = lr_params(6, weights=w, bias=0.4)
    fm = FMParams(linear=linear, latent=Tensor(np.zeros((6, 3))))
    idx = np.array([1, 5])
    assert fm_forward(idx, fm).item() == pytest.approx(lr_forward(idx, linear).item(), rel=1e-12)


def test_fm_two_unit_vectors_add_two_to_the_logit():
    latent = np.zeros((4, 2))
    latent[1] = [1.0, 1.0]
    latent[3] = [1.0, 1.0]
    fm = FMParams(linear=lr_params(4), latent=Tensor(latent))
    out = fm_forward(np.array([1, 3]), fm).item()
    assert out == pytest.approx(1.0 / (1.0 + np.exp(-2.0)), rel=1e-12)


def test_fm_identity_matches_double_loop():
    rng = np.random.default_rng(1)
    for _ in range(30):
        v = int(rng.integers(4, 20))
        m = int(rng.integers(2, 11))
        k = int(rng.integers(1, 9))
        latent = rng.standard_normal((v, k))
        idx = rng.integers(0, v, size=m)
        fm = FMParams(linear=lr_params(v), latent=Tensor(latent))
        got = fm_forward(idx, fm).item()
        logit = naive_fm_pairwise([latent[i] for i in idx])
        expected = 1.0 / (1.0 + np.exp(-logit))
        assert abs(got - expected) < 1e-10


def test_baseline_gradients():
    rng = np.random.default_rng(2)
    lr = LRModel(vocab_size=6)
    idx = np.array([[0, 3], [2, 3]])
    labels = np.array([1.0, 0.0])
    check_gradients(lambda: lr.loss(idx, labels)[0], list(lr.store.tensors()))
    fm = FMModel(vocab_size=6, factor_dim=3, rng=rng)
    check_gradients(lambda: fm.loss(idx, labels)[0], list(fm.store.tensors()))


def base_config(**kw):
    defaults = dict(num_fields=3, vocab_size=9, embed_dim=4, state_dim=4, heads=2, steps=2)
    defaults.update(kw)
    return ModelConfig(**defaults)


def test_no_op_ablation_is_bit_identical_to_the_full_model():
    full = FiGNN(base_config(), 11)
    variant = build_variant(AblationConfig(), base_config(), 11)
    idx = np.array([[0, 3, 6], [1, 4, 7]])
    assert np.array_equal(full.predict_proba(idx), variant.predict_proba(idx))


def test_disable_edge_transform_drops_the_expected_parameter_count():
    m, dp = 3, 4
    full = TrainingConfig(model="fignn", vocab_size=9, num_fields=m, embed_dim=4, state_dim=dp, heads=2)
    shared = TrainingConfig(
        model="fignn", vocab_size=9, num_fields=m, embed_dim=4, state_dim=dp, heads=2,
        disable_edge_transform=True,
    )
    assert count_parameters(full) - count_parameters(shared) == 2 * m * dp * dp - dp * dp


def test_disabled_attention_uses_constant_rows():
    cfg = base_config(ablation=AblationConfig(disable_edge_attention=True))
    model = FiGNN(cfg, 0)
    assert "graph.W_w" not in model.store
    result = model.forward(np.array([0, 3, 6]))
    a = result.adjacency.data
    assert np.array_equal(np.diag(a), np.zeros(3))
    assert np.allclose(a[a > 0], 0.5)
    raw = FiGNN(
        base_config(ablation=AblationConfig(disable_edge_attention=True, binary_adjacency=True)), 0
    )
    assert np.array_equal(
        raw.forward(np.array([0, 3, 6])).adjacency.data, np.ones((3, 3)) - np.eye(3)
    )


@pytest.mark.parametrize("variant", ["-W", "-T", "-R", "-E", "-W/T", "-E/R"])
def test_every_variant_passes_the_gradient_suite(variant):
    model = build_variant(ablation_for_variant(variant), base_config(), 5)
    idx = np.array([1, 4, 7])
    labels = np.array(1.0)
    check_gradients(lambda: model.loss(idx, labels)[0], list(model.store.tensors()))


def test_variant_name_mapping():
    assert ablation_for_variant("-E") == ablation_for_variant("-W/T")
    assert ablation_for_variant("-E/R").disable_residual
    assert ablation_for_variant("full") == AblationConfig()
    with pytest.raises(ConfigError, match="unknown variant"):
        ablation_for_variant("-X")
