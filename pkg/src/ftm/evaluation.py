"""Experiment harnesses: link prediction, node classification under noise, transfer, stability, sweeps."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Sequence

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, EvaluationError
from .graph import DatasetSplit, TemporalGraph, inject_noise
from .metrics import average_precision, roc_auc
from .model import FTM, ModelConfig
from .optim import AdamState, adam_step
from .training import TrainConfig, fit, sample_negatives

log = logging.getLogger(__name__)

__all__ = [
    "EvalReport",
    "AttackSweep",
    "StabilityResult",
    "link_prediction_scores",
    "eval_link_prediction",
    "logistic_probe_auc",
    "finetune_node_classifier",
    "attack_eval",
    "adapt_features",
    "transfer_eval",
    "successive_cosine",
    "embedding_stability",
    "subsample_split",
    "case_study_sweep",
    "format_table",
    "NEIGHBORHOOD_GRID",
    "FRACTION_GRID",
]

NEIGHBORHOOD_GRID = {"S": (1, 10), "M": (1, 20), "L": (2, 10), "XL": (2, 20)}
FRACTION_GRID = (0.01, 0.05, 0.10, 0.50)


@dataclass
class EvalReport:
    task: str
    setting: str
    metric: str
    value: float
    config: dict[str, Any] = field(default_factory=dict)
    seed: int | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        # cosine similarity lives in [-1, 1]; ranking metrics in [0, 1]
        lo = -1.0 if self.metric == "cosine-stability" else 0.0
        if not lo <= self.value <= 1.0:
            raise EvaluationError(f"{self.metric} value {self.value} outside [0, 1]")

    def to_json(self) -> dict[str, Any]:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def _scorer(model) -> Callable:
    if hasattr(model, "score_links"):
        return model.score_links
    if callable(model):
        return model
    raise TypeError("model must provide score_links(g, src, dst, times) or be callable")


def link_prediction_scores(model, g: TemporalGraph, links, rng: np.random.Generator, universe=None):
    """Scores for each true link followed by one negative (same source and time) per link."""
    links = np.asarray(links, dtype=np.int64)
    if universe is None:
        universe = np.arange(g.node_count)
    negs = sample_negatives(rng, g.dst[links], 1, universe)[:, 0]
    score = _scorer(model)
    src, t = g.src[links], g.timestamps[links]
    s = score(g, np.concatenate([src, src]), np.concatenate([g.dst[links], negs]), np.concatenate([t, t]))
    labels = np.concatenate([np.ones(len(links)), np.zeros(len(links))])
    return np.asarray(s, dtype=np.float64), labels


def _filter_links(g: TemporalGraph, split: DatasetSplit, setting: str) -> np.ndarray:
    test = split.test
    if setting == "transductive":
        seen = split.train_nodes(g)
        keep = np.isin(g.src[test], seen) & np.isin(g.dst[test], seen)
    elif setting == "inductive":
        keep = np.isin(g.src[test], split.new_nodes) | np.isin(g.dst[test], split.new_nodes)
    elif setting == "all":
        keep = np.ones(len(test), dtype=bool)
    else:
        raise ConfigurationError(f"unknown setting {setting!r}")
    return test[keep]


def eval_link_prediction(model, g: TemporalGraph, split: DatasetSplit, setting: str = "transductive", seed: int = 0) -> EvalReport:
    links = _filter_links(g, split, setting)
    if len(links) == 0:
        raise EvaluationError(f"no test links left for the {setting} setting")
    scores, labels = link_prediction_scores(model, g, links, np.random.default_rng(seed))
    cfg = model.config.to_dict() if isinstance(model, FTM) else {}
    return EvalReport("link-prediction", setting, "AP", average_precision(scores, labels), cfg, seed, {"links": int(len(links))})


def logistic_probe_auc(x_train, y_train, x_test, y_test, seed: int = 0, steps: int = 300, lr: float = 0.05) -> float:
    """Fit one affine layer + sigmoid by logistic loss (full-batch Adam), return test AUC.

    Inputs are standardised with training statistics.
    """
    y_train = np.asarray(y_train, dtype=np.float64)
    y_test = np.asarray(y_test)
    for name, y in (("train", y_train), ("test", y_test)):
        if len(np.unique(y)) < 2:
            raise EvaluationError(f"{name} labels contain a single class")
    mu = x_train.mean(axis=0)
    sd = x_train.std(axis=0)
    sd[sd == 0] = 1.0
    xt = (x_train - mu) / sd
    rng = np.random.default_rng(seed)
    params = {
        "w": T.Tensor(rng.normal(0, 0.01, size=(xt.shape[1], 1)), name="w", requires_grad=True),
        "b": T.Tensor(np.zeros(1), name="b", requires_grad=True),
    }
    state = AdamState(learning_rate=lr)
    sign = 2.0 * y_train - 1.0
    for _ in range(steps):
        with T.Tape() as tape:
            logits = T.reshape(xt @ params["w"], (-1,)) + params["b"]
            loss = -T.tmean(T.log_sigmoid(logits * sign))
        adam_step(state, params, T.backprop(tape, loss, params))
    logits = ((x_test - mu) / sd) @ params["w"].data[:, 0] + params["b"].data[0]
    return roc_auc(logits, y_test)


def _labeled_embeddings(model: FTM, g: TemporalGraph):
    idx = np.flatnonzero(g.labels >= 0)
    if len(idx) == 0:
        raise EvaluationError("graph has no labeled links")
    x = model.embed(g, g.src[idx], g.timestamps[idx]).data
    return x, g.labels[idx]


def finetune_node_classifier(model: FTM, g: TemporalGraph, seed: int = 0, train_fraction: float = 0.7) -> EvalReport:
    """Frozen-backbone node classification AUC on per-link state labels (chronological 70/30)."""
    x, y = _labeled_embeddings(model, g)
    if len(np.unique(y)) < 2:
        raise EvaluationError("all labels belong to one class")
    cut = int(round(train_fraction * len(y)))
    auc = logistic_probe_auc(x[:cut], y[:cut], x[cut:], y[cut:], seed=seed)
    return EvalReport("node-classification", "transductive", "AUC", auc, model.config.to_dict(), seed, {"instances": int(len(y))})


@dataclass
class AttackSweep:
    intensities: list[float] = field(default_factory=lambda: [0.0, 0.01, 0.10, 0.20, 0.30, 0.40, 0.50])
    repetitions: int = 5
    auc: list[float] = field(default_factory=list)

    def rows(self) -> dict[str, float]:
        return {f"{100 * i:g}": a for i, a in zip(self.intensities, self.auc)}


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def attack_eval(model: FTM, g: TemporalGraph, sweep: AttackSweep | None = None, seed: int = 0) -> AttackSweep:
    """Average node-classification AUC over Gaussian link-feature perturbations per intensity."""
    sweep = AttackSweep() if sweep is None else replace(sweep, auc=[])
    if sweep.repetitions < 1:
        raise ConfigurationError("repetitions must be >= 1")
    for i, intensity in enumerate(sweep.intensities):
        if intensity == 0:
            sweep.auc.append(finetune_node_classifier(model, g, seed).value)
            continue
        vals = [
            finetune_node_classifier(model, inject_noise(g, intensity, _derived_seed(seed, i, r)), seed).value
            for r in range(sweep.repetitions)
        ]
        sweep.auc.append(float(np.mean(vals)))
    return sweep


def adapt_features(g: TemporalGraph, width: int) -> TemporalGraph:
    """Zero-pad or truncate link features to ``width`` columns."""
    d = g.feature_dim
    if d == width:
        return g
    log.warning("link feature width %d differs from model width %d; %s", d, width, "padding" if d < width else "truncating")
    if d < width:
        feats = np.concatenate([g.features, np.zeros((g.num_links, width - d))], axis=1)
    else:
        feats = g.features[:, :width]
    return g.with_features(feats)


def transfer_eval(model: FTM, g: TemporalGraph, split: DatasetSplit, setting: str = "transductive", seed: int = 0) -> EvalReport:
    """Evaluate without retraining on another dataset's test split."""
    report = eval_link_prediction(model, adapt_features(g, model.config.link_dim), split, setting, seed)
    report.task = "transfer"
    report.extra["source_feature_dim"] = g.feature_dim
    return report


@dataclass
class StabilityResult:
    mean: float
    pairs: int
    skipped: int


def successive_cosine(sequences: Sequence[np.ndarray]) -> StabilityResult:
    """Mean over nodes of the mean cosine between consecutive embedding rows.

    Pairs with a zero-norm embedding are skipped; nodes without a usable pair drop out.
    """
    per_node, pairs, skipped = [], 0, 0
    for seq in sequences:
        seq = np.asarray(seq, dtype=np.float64)
        if len(seq) < 2:
            raise EvaluationError("need at least two evaluation times per node")
        a, b = seq[:-1], seq[1:]
        na, nb = np.linalg.norm(a, axis=1), np.linalg.norm(b, axis=1)
        ok = (na > 0) & (nb > 0)
        skipped += int((~ok).sum())
        if ok.any():
            cos = np.einsum("ij,ij->i", a[ok], b[ok]) / (na[ok] * nb[ok])
            per_node.append(cos.mean())
            pairs += int(ok.sum())
    if not per_node:
        raise EvaluationError("every successive pair had a zero-norm embedding")
    return StabilityResult(float(np.mean(per_node)), pairs, skipped)


def embedding_stability(model: FTM, g: TemporalGraph, nodes, times: dict[int, Sequence[float]] | None = None, max_times: int | None = None) -> StabilityResult:
    """Cosine stability of successive embeddings; default times are each node's interaction timestamps."""
    seqs = []
    for v in np.asarray(nodes, dtype=np.int64).tolist():
        if times is not None:
            ts = np.asarray(times[v], dtype=np.float64)
        else:
            lo, hi = g.adj_ptr[v], g.adj_ptr[v + 1]
            ts = np.unique(g.adj_time[lo:hi])
        if max_times is not None:
            ts = ts[:max_times]
        seqs.append(model.embed(g, np.full(len(ts), v), ts).data)
    return successive_cosine(seqs)


def subsample_split(split: DatasetSplit, fraction: float) -> DatasetSplit:
    """Keep the chronologically first ``fraction`` of train and validation links."""
    if not 0 < fraction <= 1:
        raise ConfigurationError(f"fraction must be in (0, 1], got {fraction}")
    n_train = int(fraction * len(split.train))
    n_val = int(fraction * len(split.validation))
    if n_train < 2 or n_val < 1:
        raise ConfigurationError(
            f"fraction {fraction} leaves {n_train} train / {n_val} validation links; a run needs >= 2 / >= 1"
        )
    return replace(split, train=np.sort(split.train)[:n_train], validation=np.sort(split.validation)[:n_val])


def case_study_sweep(
    g: TemporalGraph,
    split: DatasetSplit,
    axis: str,
    model_config: ModelConfig,
    train_config: TrainConfig,
    grid=None,
    setting: str = "inductive",
) -> list[EvalReport]:
    """Train and evaluate one model per grid point.

    ``axis='neighborhood'`` takes ``{label: (layers, frame_length)}``;
    ``axis='fraction'`` takes a sequence of training-data fractions.  Grid
    point ``i`` uses seeds ``model_config.seed + i`` and ``train_config.seed + i``.
    """
    if axis == "neighborhood":
        points = list((grid or NEIGHBORHOOD_GRID).items())
    elif axis == "fraction":
        points = [(f"{100 * f:g}%", f) for f in (grid or FRACTION_GRID)]
    else:
        raise ConfigurationError(f"unknown sweep axis {axis!r}")

    reports = []
    for i, (label, value) in enumerate(points):
        mcfg = replace(model_config, seed=model_config.seed + i)
        tcfg = replace(train_config, seed=train_config.seed + i)
        sp = split
        if axis == "neighborhood":
            layers, k = value
            mcfg = replace(mcfg, layers=layers, frame_length=k)
        else:
            sp = subsample_split(split, value)
        model = FTM(mcfg)
        fit(model, g, sp, tcfg)
        rep = eval_link_prediction(model, g, sp, setting, tcfg.seed)
        rep.task = f"sweep-{axis}"
        rep.extra["grid_point"] = label
        reports.append(rep)
    return reports


def format_table(rows: Sequence[str], columns: Sequence[str], values, fmt: str = "{:.2f}") -> str:
    """Aligned plain-text table; ``values[i][j]`` is the cell for ``rows[i]``, ``columns[j]``."""
    cells = [[""] + list(columns)]
    for r, vals in zip(rows, values):
        cells.append([r] + [fmt.format(v) if isinstance(v, (int, float)) else str(v) for v in vals])
    widths = [max(len(row[j]) for row in cells) for j in range(len(cells[0]))]
    lines = ["  ".join(c.rjust(w) if j else c.ljust(w) for j, (c, w) in enumerate(zip(row, widths))) for row in cells]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines) + "\n"
