"""Contrastive future-link training with uniform negative sampling."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, NumericalError
from .graph import DatasetSplit, TemporalGraph
from .metrics import average_precision
from .model import FTM
from .optim import AdamState, adam_step
from .tensor import Tensor

log = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "EpochStats",
    "FitResult",
    "sample_negatives",
    "contrastive_loss",
    "batch_loss",
    "train_epoch",
    "fit",
    "validation_ap",
]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    epochs: int = 10
    batch_size: int = 200
    negatives: int = 1
    seed: int = 0
    patience: int = 3

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.negatives < 0:
            raise ConfigurationError(f"negatives must be >= 0, got {self.negatives}")
        if self.epochs < 0 or self.patience < 0 or self.learning_rate < 0:
            raise ConfigurationError("epochs, patience and learning_rate must be nonnegative")


def sample_negatives(rng: np.random.Generator, dst, q: int, universe) -> np.ndarray:
    """Draw ``q`` nodes uniformly from ``universe`` per positive, never the true destination.

    ``dst`` may be a scalar (returns shape (q,)) or an array (returns (len(dst), q)).
    """
    universe = np.asarray(universe, dtype=np.int64)
    if len(np.unique(universe)) < 2:
        raise ConfigurationError("negative sampling needs at least two candidate nodes")
    scalar = np.ndim(dst) == 0
    dst = np.atleast_1d(np.asarray(dst, dtype=np.int64))
    out = universe[rng.integers(0, len(universe), size=(len(dst), q))]
    bad = out == dst[:, None]
    while bad.any():
        out[bad] = universe[rng.integers(0, len(universe), size=int(bad.sum()))]
        bad = out == dst[:, None]
    return out[0] if scalar else out


def contrastive_loss(pos_scores, neg_scores=None) -> Tensor:
    """Mean over items of ``-log s(pos) - sum_q log s(-neg_q)`` with ``s`` the logistic sigmoid."""
    per_item = -T.log_sigmoid(pos_scores)
    if neg_scores is not None and neg_scores.shape[1] > 0:
        per_item = per_item - T.tsum(T.log_sigmoid(-neg_scores), axis=1)
    return T.tmean(per_item)


def batch_loss(model: FTM, g: TemporalGraph, src, dst, times, negatives) -> Tensor:
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    times = np.asarray(times, dtype=np.float64)
    negatives = np.asarray(negatives, dtype=np.int64).reshape(len(src), -1)
    B, Q = negatives.shape
    h = model.embed(
        g,
        np.concatenate([src, dst, negatives.reshape(-1)]),
        np.concatenate([times, times, np.repeat(times, Q)]),
    )
    hs = h[np.arange(B)]
    hd = h[np.arange(B, 2 * B)]
    pos = T.tsum(hs * hd, axis=1)
    neg = None
    if Q:
        hq = T.reshape(h[np.arange(2 * B, 2 * B + B * Q)], (B, Q, -1))
        neg = T.tsum(hq * T.reshape(hs, (B, 1, -1)), axis=2)
    loss = contrastive_loss(pos, neg)
    if not np.isfinite(loss.data):
        raise NumericalError(
            f"non-finite loss {loss.data!r}: max |pos score| {np.abs(pos.data).max():.3g}, "
            f"max |embedding| {np.abs(h.data).max():.3g}"
        )
    return loss


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    seconds: float
    batches: int


def _batches(train: np.ndarray, size: int):
    train = np.sort(train)
    for i in range(0, len(train), size):
        yield train[i : i + size]


def train_epoch(
    model: FTM,
    g: TemporalGraph,
    split: DatasetSplit,
    config: TrainConfig,
    state: AdamState | None = None,
    epoch: int = 0,
) -> EpochStats:
    """One chronological pass over the training links; one Adam step per batch."""
    if state is None:
        state = AdamState(learning_rate=config.learning_rate)
    rng = np.random.default_rng([config.seed, epoch])
    universe = split.train_nodes(g)
    start = time.perf_counter()
    total, count, nb = 0.0, 0, 0
    for links in _batches(split.train, config.batch_size):
        negs = sample_negatives(rng, g.dst[links], config.negatives, universe)
        with T.Tape() as tape:
            loss = batch_loss(model, g, g.src[links], g.dst[links], g.timestamps[links], negs)
        grads = T.backprop(tape, loss, model.params)
        adam_step(state, model.params, grads)
        total += float(loss.data) * len(links)
        count += len(links)
        nb += 1
    return EpochStats(epoch, total / max(count, 1), time.perf_counter() - start, nb)


def validation_ap(model, g: TemporalGraph, links: np.ndarray, seed: int, universe=None) -> float:
    """AP of true links against one uniformly drawn negative destination each."""
    from .evaluation import link_prediction_scores

    scores, labels = link_prediction_scores(model, g, links, np.random.default_rng(seed), universe)
    return average_precision(scores, labels)


@dataclass
class FitResult:
    best_state: dict[str, np.ndarray]
    best_val_ap: float
    best_epoch: int
    history: list[dict] = field(default_factory=list)


def fit(
    model: FTM,
    g: TemporalGraph,
    split: DatasetSplit,
    config: TrainConfig,
    log_path=None,
    record_time: bool = True,
) -> FitResult:
    """Train with early stopping on validation AP; ``model`` ends holding the best parameters.

    Training stops once the number of consecutive non-improving epochs
    exceeds ``config.patience``.  Each epoch appends a JSON line
    ``{"epoch", "train_loss", "val_ap", "seconds"}`` to ``log_path``;
    ``seconds`` is null when ``record_time`` is False so logs are reproducible.
    """
    if len(split.validation) == 0:
        raise ConfigurationError("validation partition is empty")
    state = AdamState(learning_rate=config.learning_rate)
    best = FitResult(model.state_dict(), float("-inf"), 0)
    if log_path is not None:
        Path(log_path).write_text("", encoding="utf-8")
    stale = 0
    for epoch in range(1, config.epochs + 1):
        stats = train_epoch(model, g, split, config, state, epoch)
        ap = validation_ap(model, g, split.validation, config.seed)
        row = {
            "epoch": epoch,
            "train_loss": stats.train_loss,
            "val_ap": ap,
            "seconds": stats.seconds if record_time else None,
        }
        best.history.append(row)
        if log_path is not None:
            with Path(log_path).open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(row) + "\n")
        log.info("epoch %d loss %.5f val AP %.4f", epoch, stats.train_loss, ap)
        if ap > best.best_val_ap:
            best.best_state, best.best_val_ap, best.best_epoch = model.state_dict(), ap, epoch
            stale = 0
        else:
            stale += 1
            if stale > config.patience:
                break
    model.load_state_dict(best.best_state)
    return best


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
