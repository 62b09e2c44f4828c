"""Reference models (logistic regression, factorization machine) and ablation wiring."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor
from .errors import ConfigError
from .model import AblationConfig, FiGNN, ModelConfig

__all__ = [
    "AblationConfig",
    "LRParams",
    "FMParams",
    "LRModel",
    "FMModel",
    "lr_forward",
    "fm_forward",
    "build_variant",
    "ablation_for_variant",
    "VARIANT_NAMES",
]


@dataclass
class LRParams:
    weights: Tensor  # (vocab_size, 1), one first-order weight per feature
    bias: Tensor  # scalar


@dataclass
class FMParams:
    linear: LRParams
    latent: Tensor  # (vocab_size, factor_dim)


def lr_forward(indices: np.ndarray, params: LRParams) -> Tensor:
    """sigmoid(bias + sum of the m active feature weights)."""
    picked = ad.gather_rows(params.weights, np.asarray(indices))
    logit = ad.add(ad.sum_(picked, axis=(-1, -2)), params.bias)
    return ad.sigmoid(logit)


def fm_forward(indices: np.ndarray, params: FMParams) -> Tensor:
    """LR plus all pairwise inner products of the active latent vectors.

    The pairwise term uses the 0.5 * (||sum v||^2 - sum ||v||^2) identity,
    which is linear in m instead of quadratic; the naive i<j double loop
    lives in the test suite as the oracle.
    """
    idx = np.asarray(indices)
    picked = ad.gather_rows(params.linear.weights, idx)
    linear = ad.add(ad.sum_(picked, axis=(-1, -2)), params.linear.bias)
    vectors = ad.gather_rows(params.latent, idx)  # (..., m, k)
    summed = ad.sum_(vectors, axis=-2)  # (..., k)
    square_of_sum = ad.sum_(ad.mul(summed, summed), axis=-1)
    sum_of_squares = ad.sum_(ad.mul(vectors, vectors), axis=(-1, -2))
    pairwise = ad.mul(ad.sub(square_of_sum, sum_of_squares), Tensor(0.5))
    return ad.sigmoid(ad.add(linear, pairwise))


class _IndexModel:
    """Shared plumbing for the index-in, probability-out baselines."""

    def loss(self, indices: np.ndarray, labels: np.ndarray):
        prob = self._probability(indices)
        return ad.log_loss(prob, labels), prob

    def predict_proba(self, indices: np.ndarray) -> np.ndarray:
        idx = np.atleast_2d(np.asarray(indices))
        if idx.shape[0] == 0:
            return np.zeros(0)
        return self._probability(idx).data


class LRModel(_IndexModel):
    kind = "lr"

    def __init__(self, vocab_size: int, rng: np.random.Generator | int = 0):
        if vocab_size < 1:
            raise ConfigError(f"vocab_size must be >= 1, got {vocab_size}")
        self.vocab_size = vocab_size
        self.store = ParameterStore()
        self.params = LRParams(
            weights=self.store.add("lr.weights", np.zeros((vocab_size, 1))),
            bias=self.store.add("lr.bias", np.zeros(())),
        )

    def _probability(self, indices):
        return lr_forward(indices, self.params)


class FMModel(_IndexModel):
    kind = "fm"

    def __init__(
        self,
        vocab_size: int,
        factor_dim: int,
        rng: np.random.Generator | int = 0,
    ):
        if vocab_size < 1:
            raise ConfigError(f"vocab_size must be >= 1, got {vocab_size}")
        if factor_dim < 1:
            raise ConfigError(f"factor_dim must be >= 1, got {factor_dim}")
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        self.vocab_size = vocab_size
        self.factor_dim = factor_dim
        self.store = ParameterStore()
        scale = 1.0 / np.sqrt(factor_dim)
        self.params = FMParams(
            linear=LRParams(
                weights=self.store.add("fm.weights", np.zeros((vocab_size, 1))),
                bias=self.store.add("fm.bias", np.zeros(())),
            ),
            latent=self.store.add(
                "fm.latent", rng.uniform(-scale, scale, (vocab_size, factor_dim))
            ),
        )

    def _probability(self, indices):
        return fm_forward(indices, self.params)


# Published variant names -> ablation switches.  "-E" strips edge-wise
# interaction, which is the attention and transform switches combined.
VARIANT_NAMES = {
    "full": AblationConfig(),
    "-W": AblationConfig(disable_edge_attention=True),
    "-T": AblationConfig(disable_edge_transform=True),
    "-R": AblationConfig(disable_residual=True),
    "-E": AblationConfig(disable_edge_attention=True, disable_edge_transform=True),
    "-W/T": AblationConfig(disable_edge_attention=True, disable_edge_transform=True),
    "-E/R": AblationConfig(
        disable_edge_attention=True,
        disable_edge_transform=True,
        disable_residual=True,
    ),
}


def ablation_for_variant(name: str) -> AblationConfig:
    try:
        return VARIANT_NAMES[name]
    except KeyError:
        raise ConfigError(
            f"unknown variant {name!r}; expected one of {sorted(VARIANT_NAMES)}"
        ) from None


def build_variant(
    ablation: AblationConfig,
    base: ModelConfig,
    rng: np.random.Generator | int = 0,
) -> FiGNN:
    """Instantiate the field-interaction GNN with the given pieces disabled."""
    return FiGNN(replace(base, ablation=ablation), rng)
