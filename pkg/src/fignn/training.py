"""Training loop: balanced mini-batches, RMSProp, early stopping on validation AUC.

Everything is driven by one integer seed.  The seed fans out (via
SeedSequence) into independent streams for parameter initialisation and batch
shuffling, so two runs with the same config produce bit-identical parameters.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import metrics, scoring
from .autodiff import ParameterStore, Tape, backward
from .baselines import FMModel, LRModel
from .data import DatasetSplit, EncodedInstance
from .errors import ConfigError, DataError, InvariantError
from .model import AblationConfig, FiGNN, ModelConfig, encode_batch

log = logging.getLogger("fignn.training")

MODEL_KINDS = ("lr", "fm", "fignn")

# Best propagation depths from the full-scale hyper-parameter sweeps, kept as
# per-dataset-style defaults alongside the frequency thresholds.
DATASET_PRESETS = {
    "criteo": {"min_count": 10, "steps": 3},
    "avazu": {"min_count": 5, "steps": 2},
}


@dataclass
class TrainingConfig:
    model: str = "fignn"
    learning_rate: float = 1e-3
    rmsprop_decay: float = 0.9
    rmsprop_epsilon: float = 1e-8
    batch_size: int = 1024
    max_epochs: int = 10
    patience: int = 3
    seed: int = 0
    embed_dim: int = 16  # d
    state_dim: int = 16  # d'
    heads: int = 2
    steps: int = 2  # T
    factor_dim: int | None = None  # FM latent size, defaults to embed_dim
    leaky_slope: float = 0.01
    disable_edge_attention: bool = False
    disable_edge_transform: bool = False
    disable_residual: bool = False
    binary_adjacency: bool = False
    vocab_size: int | None = None
    num_fields: int | None = None

    def validate(self) -> None:
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.model!r}; expected one of {MODEL_KINDS}")
        if self.batch_size < 2 or self.batch_size % 2 != 0:
            raise ConfigError(f"batch_size must be even and >= 2, got {self.batch_size}")
        for name in ("learning_rate", "rmsprop_decay", "rmsprop_epsilon"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.rmsprop_decay >= 1:
            raise ConfigError(f"rmsprop_decay must be < 1, got {self.rmsprop_decay}")
        if self.max_epochs < 0:
            raise ConfigError(f"max_epochs must be >= 0, got {self.max_epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")

    def ablation(self) -> AblationConfig:
        return AblationConfig(
            disable_edge_attention=self.disable_edge_attention,
            disable_edge_transform=self.disable_edge_transform,
            disable_residual=self.disable_residual,
            binary_adjacency=self.binary_adjacency,
        )

    def model_config(self) -> ModelConfig:
        if self.vocab_size is None or self.num_fields is None:
            raise ConfigError("vocab_size and num_fields must be set before building a model")
        return ModelConfig(
            num_fields=self.num_fields,
            vocab_size=self.vocab_size,
            embed_dim=self.embed_dim,
            state_dim=self.state_dim,
            heads=self.heads,
            steps=self.steps,
            leaky_slope=self.leaky_slope,
            ablation=self.ablation(),
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainingConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_auc: float
    val_logloss: float
    seconds: float


@dataclass
class TrainingHistory:
    epochs: list[EpochStats] = field(default_factory=list)

    def append(self, stats: EpochStats) -> None:
        self.epochs.append(stats)

    def __len__(self) -> int:
        return len(self.epochs)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["epoch", "train_loss", "val_auc", "val_logloss", "seconds"])
            for row in self.epochs:
                writer.writerow(
                    [row.epoch, repr(row.train_loss), repr(row.val_auc), repr(row.val_logloss), f"{row.seconds:.3f}"]
                )


def create_model(config: TrainingConfig, rng: np.random.Generator | int = 0):
    """Instantiate the model kind named by the config."""
    config.validate()
    if config.vocab_size is None:
        raise ConfigError("vocab_size must be set to build a model")
    if config.model == "lr":
        return LRModel(config.vocab_size, rng)
    if config.model == "fm":
        return FMModel(config.vocab_size, config.factor_dim or config.embed_dim, rng)
    return FiGNN(config.model_config(), rng)


def balanced_batches(
    instances: list[EncodedInstance],
    batch_size: int,
    rng: np.random.Generator,
) -> list[list[EncodedInstance]]:
    """Mini-batches with exactly batch_size/2 positives and negatives each.

    One epoch covers the majority class once (a trailing partial chunk is
    dropped); when the minority class runs out within the epoch, the shortfall
    is resampled from it with replacement.
    """
    if batch_size < 2 or batch_size % 2 != 0:
        raise ConfigError(f"batch_size must be even and >= 2, got {batch_size}")
    pos = [inst for inst in instances if inst.label == 1]
    neg = [inst for inst in instances if inst.label == 0]
    if not pos or not neg:
        raise DataError(
            f"balanced batches need both classes, got {len(pos)} positive / {len(neg)} negative"
        )
    half = batch_size // 2
    n_batches = max(1, max(len(pos), len(neg)) // half)

    def schedule(items: list[EncodedInstance]) -> list[list[EncodedInstance]]:
        order = rng.permutation(len(items))
        out = []
        for b in range(n_batches):
            chunk = [items[i] for i in order[b * half : (b + 1) * half]]
            shortfall = half - len(chunk)
            if shortfall > 0:
                chunk.extend(items[i] for i in rng.choice(len(items), size=shortfall, replace=True))
            out.append(chunk)
        return out

    pos_chunks = schedule(pos)
    neg_chunks = schedule(neg)
    return [p + n for p, n in zip(pos_chunks, neg_chunks)]


class OptimizerState:
    """Per-parameter running mean-square accumulators for RMSProp."""

    def __init__(self, store: ParameterStore):
        self.accumulators = {name: np.zeros(t.shape) for name, t in store.items()}


def rmsprop_step(store: ParameterStore, opt: OptimizerState, cfg: TrainingConfig) -> None:
    """s <- rho s + (1 - rho) g^2;  theta <- theta - lr * g / (sqrt(s) + eps)."""
    rho = cfg.rmsprop_decay
    for name, tensor in store.items():
        g = tensor.grad
        if g is None:
            raise InvariantError(f"parameter {name!r} has no gradient; run backward first")
        if not np.all(np.isfinite(g)):
            raise InvariantError(f"non-finite gradient for parameter {name!r}")
        s = opt.accumulators[name]
        s *= rho
        s += (1.0 - rho) * g * g
        tensor.data = tensor.data - cfg.learning_rate * g / (np.sqrt(s) + cfg.rmsprop_epsilon)


def train(dataset: DatasetSplit, config: TrainingConfig) -> tuple[ParameterStore, TrainingHistory]:
    """Optimize on the train split, early-stopping on validation AUC.

    Returns the parameters of the best-validation-AUC epoch (the initial
    parameters when max_epochs is 0) together with the per-epoch history.
    """
    config.validate()
    if config.num_fields is None and dataset.train:
        config.num_fields = len(dataset.train[0].feature_indices)
    init_seed, batch_seed = np.random.SeedSequence(config.seed).spawn(2)
    model = create_model(config, np.random.default_rng(init_seed))
    store: ParameterStore = model.store
    history = TrainingHistory()
    if config.max_epochs == 0:
        return store, history

    if not dataset.validation:
        raise DataError("training with early stopping needs a non-empty validation split")
    val_indices, val_labels = encode_batch(dataset.validation)
    if len(set(val_labels.tolist())) < 2:
        raise DataError("validation split must contain both classes to compute AUC")

    opt = OptimizerState(store)
    batch_rng = np.random.default_rng(batch_seed)
    best_snapshot = store.snapshot()
    best_auc = -np.inf
    stalled = 0
    for epoch in range(1, config.max_epochs + 1):
        started = time.perf_counter()
        losses = []
        for batch in balanced_batches(dataset.train, config.batch_size, batch_rng):
            indices, labels = encode_batch(batch)
            store.zero_grads()
            with Tape() as tape:
                loss, _ = model.loss(indices, labels)
            backward(loss, tape, store)
            rmsprop_step(store, opt, config)
            losses.append(loss.item())
        val_probs = model.predict_proba(val_indices)
        val_auc = metrics.auc(val_probs, val_labels)
        val_ll = scoring.log_loss(val_probs, val_labels)
        stats = EpochStats(
            epoch=epoch,
            train_loss=float(np.mean(losses)),
            val_auc=val_auc,
            val_logloss=val_ll,
            seconds=time.perf_counter() - started,
        )
        history.append(stats)
        log.info(
            "epoch %d: train_loss=%.5f val_auc=%.5f val_logloss=%.5f (%.2fs)",
            stats.epoch,
            stats.train_loss,
            stats.val_auc,
            stats.val_logloss,
            stats.seconds,
        )
        if val_auc > best_auc:
            best_auc = val_auc
            best_snapshot = store.snapshot()
            stalled = 0
        else:
            stalled += 1
            if stalled >= config.patience:
                log.info("early stop after epoch %d (no AUC gain for %d epochs)", epoch, stalled)
                break
    store.load_snapshot(best_snapshot)
    return store, history


def count_parameters(config: TrainingConfig) -> int:
    """Exact scalar parameter count for the configured model.

    Must match the live ParameterStore enumeration; the formula-vs-enumeration
    agreement is asserted in the acceptance suite.
    """
    if config.vocab_size is None or config.num_fields is None:
        raise ConfigError("vocab_size and num_fields must be set to count parameters")
    v = config.vocab_size
    if config.model == "lr":
        return v + 1
    if config.model == "fm":
        return v + 1 + v * (config.factor_dim or config.embed_dim)
    m = config.num_fields
    d = config.embed_dim
    dp = config.state_dim
    total = v * d  # embedding table
    total += config.heads * 3 * (dp // config.heads) * d  # attention projections
    if not config.disable_edge_attention:
        total += 2 * dp  # edge score vector
    if config.disable_edge_transform:
        total += dp * dp  # shared transform
    else:
        total += 2 * m * dp * dp  # per-node out/in transforms
    total += dp  # shared aggregation bias
    total += 6 * dp * dp + 3 * dp  # GRU
    total += 2 * (dp + 1)  # scoring and gate heads
    return total
