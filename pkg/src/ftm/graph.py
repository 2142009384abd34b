"""Temporal edge lists: ingestion, time-bounded neighbor queries, splitting, perturbation."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import ContractError, DataValidationError, ParseError

__all__ = [
    "TemporalLink",
    "TemporalGraph",
    "DatasetSplit",
    "SynthSpec",
    "load_csv",
    "write_csv",
    "chronological_split",
    "inject_noise",
    "synth_generate",
]


@dataclass(frozen=True)
class TemporalLink:
    src: int
    dst: int
    timestamp: float
    features: np.ndarray
    label: int | None
    link_index: int


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


class TemporalGraph:
    """Immutable, chronologically sorted store of undirected timestamped links.

    Links are stably sorted by timestamp (ties keep input order) and
    ``link_index`` is the position in that order.  Every node keeps the
    sub-list of its incident links in the same order, so the history of
    ``s`` strictly before ``t`` is a prefix found by binary search.
    """

    def __init__(
        self,
        src: Sequence[int],
        dst: Sequence[int],
        timestamps: Sequence[float],
        features: np.ndarray | None = None,
        labels: Sequence[int] | None = None,
        node_count: int | None = None,
        node_features: np.ndarray | None = None,
        node_ids: Sequence[str] | None = None,
        metadata: dict[str, Any] | None = None,
    ):
        src = np.asarray(src, dtype=np.int64).reshape(-1)
        dst = np.asarray(dst, dtype=np.int64).reshape(-1)
        ts = np.asarray(timestamps, dtype=np.float64).reshape(-1)
        m = len(ts)
        if len(src) != m or len(dst) != m:
            raise ContractError(f"src/dst/timestamp lengths differ: {len(src)}, {len(dst)}, {m}")
        if not np.all(np.isfinite(ts)):
            raise DataValidationError("timestamps must be finite")
        if m and ts.min() < 0:
            raise DataValidationError(f"negative timestamp {ts.min()!r}")
        if features is None:
            features = np.zeros((m, 0))
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != m:
            raise ContractError(f"features must have shape ({m}, d_e), got {features.shape}")
        if labels is None:
            labels = np.full(m, -1, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if len(labels) != m:
            raise ContractError(f"labels length {len(labels)} != link count {m}")
        if m and (src.min() < 0 or dst.min() < 0):
            raise ContractError("node ids must be nonnegative")
        n = int(max(src.max(initial=-1), dst.max(initial=-1)) + 1)
        if node_count is None:
            node_count = n
        elif node_count < n:
            raise ContractError(f"node_count {node_count} smaller than max node id + 1 = {n}")

        order = np.argsort(ts, kind="stable")
        self.src = _frozen(src[order])
        self.dst = _frozen(dst[order])
        self.timestamps = _frozen(ts[order])
        self.features = _frozen(features[order])
        self.labels = _frozen(labels[order])
        self.node_count = int(node_count)
        if node_features is not None:
            node_features = np.asarray(node_features, dtype=np.float64)
            if node_features.shape[0] != self.node_count:
                raise ContractError(f"node_features rows {node_features.shape[0]} != node_count {self.node_count}")
            node_features = _frozen(node_features)
        self.node_features = node_features
        self.node_ids = list(node_ids) if node_ids is not None else [str(i) for i in range(self.node_count)]
        self.metadata = dict(metadata or {})
        self._build_adjacency()

    def _build_adjacency(self) -> None:
        m, n = self.num_links, self.node_count
        loops = self.src == self.dst
        # self-loops appear once in their node's adjacency
        ends = np.concatenate([self.src, self.dst[~loops]])
        other = np.concatenate([self.dst, self.src[~loops]])
        link = np.concatenate([np.arange(m), np.arange(m)[~loops]])
        order = np.lexsort((link, ends))
        counts = np.bincount(ends, minlength=n)
        self.adj_ptr = _frozen(np.concatenate([[0], np.cumsum(counts)]).astype(np.int64))
        self.adj_link = _frozen(link[order])
        self.adj_nbr = _frozen(other[order])
        self.adj_time = _frozen(self.timestamps[self.adj_link])

    @property
    def num_links(self) -> int:
        return len(self.timestamps)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.num_links

    def __repr__(self) -> str:
        return f"TemporalGraph(links={self.num_links}, nodes={self.node_count}, d_e={self.feature_dim})"

    def link(self, i: int) -> TemporalLink:
        lab = int(self.labels[i])
        return TemporalLink(
            int(self.src[i]),
            int(self.dst[i]),
            float(self.timestamps[i]),
            self.features[i],
            None if lab < 0 else lab,
            int(i),
        )

    @property
    def links(self) -> list[TemporalLink]:
        return [self.link(i) for i in range(self.num_links)]

    def _check_node(self, s: int) -> None:
        if not 0 <= s < self.node_count:
            raise ContractError(f"unknown node id {s} (graph has {self.node_count} nodes)")

    def history(self, s: int, t: float) -> tuple[int, int]:
        """Adjacency positions ``[lo, hi)`` of links incident to ``s`` with timestamp < ``t``."""
        self._check_node(s)
        lo, hi = self.adj_ptr[s], self.adj_ptr[s + 1]
        return int(lo), int(lo + np.searchsorted(self.adj_time[lo:hi], t, side="left"))

    def neighbors_before(self, s: int, t: float, limit: int | None = None) -> list[TemporalLink]:
        """Links incident to ``s`` strictly before ``t``, most recent first."""
        if t < 0:
            raise ContractError(f"query time must be >= 0, got {t}")
        lo, hi = self.history(s, t)
        if limit is not None:
            lo = max(lo, hi - limit)
        return [self.link(int(i)) for i in self.adj_link[lo:hi][::-1]]

    def degree(self, s: int) -> int:
        self._check_node(s)
        return int(self.adj_ptr[s + 1] - self.adj_ptr[s])

    def with_features(self, features: np.ndarray) -> TemporalGraph:
        """Copy of this graph with replaced link features (same order, topology, timestamps)."""
        g = object.__new__(TemporalGraph)
        g.__dict__.update(self.__dict__)
        features = np.asarray(features, dtype=np.float64)
        if features.shape[0] != self.num_links:
            raise ContractError(f"expected {self.num_links} feature rows, got {features.shape[0]}")
        g.features = _frozen(features)
        g.metadata = dict(self.metadata)
        return g

    def prefix(self, m: int) -> TemporalGraph:
        """The first ``m`` links in chronological order, same node universe."""
        m = min(m, self.num_links)
        return TemporalGraph(
            self.src[:m],
            self.dst[:m],
            self.timestamps[:m],
            self.features[:m],
            self.labels[:m],
            node_count=self.node_count,
            node_features=self.node_features,
            node_ids=self.node_ids,
            metadata=self.metadata,
        )

    def nodes_of(self, link_indices: np.ndarray) -> np.ndarray:
        idx = np.asarray(link_indices, dtype=np.int64)
        return np.unique(np.concatenate([self.src[idx], self.dst[idx]]))


def load_csv(path, has_header: bool = True, bipartite: bool = False) -> TemporalGraph:
    """Read ``src,dst,timestamp,label,f1,...,fd`` rows.

    Node ids are remapped to dense ``0..n-1`` (sorted by original id); the
    original tokens are kept in ``graph.node_ids``.  With ``bipartite=True``
    source and destination ids live in separate namespaces (JODIE-style
    user/item files where both start at 0); destinations are then listed
    as ``"dst:<id>"``.
    """
    path = Path(path)
    srcs, dsts, ts, labels, feats = [], [], [], [], []
    width = None
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if has_header and lineno == 1:
                continue
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 4:
                raise ParseError(f"expected at least 4 columns, got {len(row)}", lineno)
            # tolerate one trailing comma
            if row[-1] == "" and len(row) > 4:
                row = row[:-1]
            nf = len(row) - 4
            if width is None:
                width = nf
            elif nf != width:
                raise ParseError(f"expected {width} feature columns, got {nf}", lineno)
            try:
                t = float(row[2])
                f = [float(x) for x in row[4:]]
                lab = -1 if row[3].strip() == "" else int(float(row[3]))
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            if not np.isfinite(t):
                raise ParseError(f"non-finite timestamp {row[2]!r}", lineno)
            if t < 0:
                raise DataValidationError(f"line {lineno}: negative timestamp {t!r}")
            srcs.append(row[0].strip())
            dsts.append(row[1].strip())
            ts.append(t)
            labels.append(lab)
            feats.append(f)

    if bipartite:
        dsts = [f"dst:{d}" for d in dsts]
    ids = sorted(set(srcs) | set(dsts), key=_id_sort_key)
    index = {tok: i for i, tok in enumerate(ids)}
    features = np.array(feats, dtype=np.float64).reshape(len(ts), width or 0)
    return TemporalGraph(
        [index[s] for s in srcs],
        [index[d] for d in dsts],
        ts,
        features,
        labels,
        node_count=len(ids),
        node_ids=ids,
        metadata={"source": str(path)},
    )


def _id_sort_key(tok: str):
    prefix, _, rest = tok.rpartition(":")
    try:
        return (prefix, 0, int(rest), "")
    except ValueError:
        return (prefix, 1, 0, rest)


def write_csv(g: TemporalGraph, path, header: bool = True) -> None:
    """Write ``g`` in the :func:`load_csv` format using original node ids."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(["src", "dst", "timestamp", "label"] + [f"f{i + 1}" for i in range(g.feature_dim)])
        for i in range(g.num_links):
            lab = int(g.labels[i])
            w.writerow(
                [g.node_ids[g.src[i]], g.node_ids[g.dst[i]], repr(float(g.timestamps[i])), "" if lab < 0 else lab]
                + [repr(float(x)) for x in g.features[i]]
            )


@dataclass(frozen=True)
class DatasetSplit:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    new_nodes: np.ndarray
    train_end_time: float
    validation_end_time: float
    seed: int | None = None

    def train_nodes(self, g: TemporalGraph) -> np.ndarray:
        return g.nodes_of(self.train)

    def manifest(self, g: TemporalGraph) -> dict[str, Any]:
        return {
            "links": g.num_links,
            "train": int(len(self.train)),
            "validation": int(len(self.validation)),
            "test": int(len(self.test)),
            "train_end_time": self.train_end_time,
            "validation_end_time": self.validation_end_time,
            "new_nodes": [int(v) for v in self.new_nodes],
            "new_node_ids": [g.node_ids[v] for v in self.new_nodes],
            "seed": self.seed,
        }

    def write_manifest(self, g: TemporalGraph, path) -> None:
        Path(path).write_text(json.dumps(self.manifest(g), indent=2) + "\n", encoding="utf-8")


def chronological_split(
    g: TemporalGraph,
    ratios: tuple[float, float, float] = (0.70, 0.15, 0.15),
    new_node_fraction: float = 0.10,
    seed: int = 0,
) -> DatasetSplit:
    """Chronological train/validation/test split with masked 'new nodes'.

    ``round(new_node_fraction * node_count)`` nodes are drawn uniformly from
    the nodes that appear in the test span; all their links are removed from
    the training partition.
    """
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise DataValidationError(f"split ratios must be 3 nonnegative numbers summing to 1, got {ratios}")
    if not 0.0 <= new_node_fraction < 1.0:
        raise DataValidationError(f"new_node_fraction must be in [0, 1), got {new_node_fraction}")
    m = g.num_links
    b1 = int(round(m * ratios[0]))
    b2 = int(round(m * (ratios[0] + ratios[1])))
    idx = np.arange(m)
    train, val, test = idx[:b1], idx[b1:b2], idx[b2:]
    for name, part in (("train", train), ("validation", val), ("test", test)):
        if len(part) == 0:
            raise DataValidationError(f"empty {name} partition for {m} links and ratios {ratios}")

    rng = np.random.default_rng(seed)
    test_nodes = g.nodes_of(test)
    count = min(int(round(new_node_fraction * g.node_count)), len(test_nodes))
    new_nodes = np.sort(rng.choice(test_nodes, size=count, replace=False)) if count else np.zeros(0, np.int64)
    if count:
        masked = np.isin(g.src[train], new_nodes) | np.isin(g.dst[train], new_nodes)
        train = train[~masked]
        if len(train) == 0:
            raise DataValidationError("masking new nodes emptied the train partition")
    return DatasetSplit(
        train=train,
        validation=val,
        test=test,
        new_nodes=new_nodes.astype(np.int64),
        train_end_time=float(g.timestamps[b1 - 1]),
        validation_end_time=float(g.timestamps[b2 - 1]),
        seed=seed,
    )


def inject_noise(g: TemporalGraph, intensity: float, seed: int = 0) -> TemporalGraph:
    """Add a Gaussian direction of norm ``intensity * max_link_feature_norm`` to every link."""
    if intensity < 0:
        raise DataValidationError(f"attack intensity must be >= 0, got {intensity}")
    if intensity == 0 or g.num_links == 0 or g.feature_dim == 0:
        return g.with_features(g.features.copy())
    rng = np.random.default_rng(seed)
    target = intensity * float(np.max(np.linalg.norm(g.features, axis=1)))
    noise = rng.standard_normal(g.features.shape)
    norms = np.linalg.norm(noise, axis=1, keepdims=True)
    noise *= target / norms
    return g.with_features(g.features + noise)


@dataclass(frozen=True)
class SynthSpec:
    """Generator settings for the ``periodic-bipartite`` family.

    Each user has one preferred item and links to it with probability ``p``
    (uniformly random item otherwise); links arrive with exponential
    inter-arrival times and a uniformly chosen user.  A link's features are
    the item's prototype direction, plus a component encoding the user's
    binary state (which is also the link label), plus Gaussian noise.
    """

    users: int = 20
    items: int = 5
    links: int = 400
    feature_dim: int = 8
    p: float = 0.9
    seed: int = 0
    family: str = "periodic-bipartite"
    rate: float = 1.0
    state_fraction: float = 0.3
    state_strength: float = 0.5
    noise: float = 0.1
    extra: dict[str, Any] = field(default_factory=dict)


def synth_generate(spec: SynthSpec) -> TemporalGraph:
    if spec.family != "periodic-bipartite":
        raise DataValidationError(f"unknown generator family {spec.family!r}")
    if spec.users < 1 or spec.items < 1:
        raise DataValidationError(f"need at least one user and one item, got {spec.users}/{spec.items}")
    if spec.links < 1 or spec.feature_dim < 1:
        raise DataValidationError("links and feature_dim must be positive")
    if not 0.0 <= spec.p <= 1.0 or spec.rate <= 0:
        raise DataValidationError(f"invalid p={spec.p} or rate={spec.rate}")

    rng = np.random.default_rng(spec.seed)
    U, I, d = spec.users, spec.items, spec.feature_dim
    preferred = rng.integers(0, I, size=U)
    n_state = int(round(spec.state_fraction * U))
    state = np.zeros(U, dtype=np.int64)
    state[rng.choice(U, size=n_state, replace=False)] = 1
    protos = rng.standard_normal((I, d))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    state_dir = rng.standard_normal(d)
    state_dir /= np.linalg.norm(state_dir)

    users = rng.integers(0, U, size=spec.links)
    loyal = rng.random(spec.links) < spec.p
    items = np.where(loyal, preferred[users], rng.integers(0, I, size=spec.links))
    times = np.cumsum(rng.exponential(1.0 / spec.rate, size=spec.links))
    sign = 2.0 * state[users] - 1.0
    feats = (
        protos[items]
        + spec.state_strength * sign[:, None] * state_dir
        + spec.noise * rng.standard_normal((spec.links, d)) / np.sqrt(d)
    )
    ids = [f"u{u}" for u in range(U)] + [f"i{i}" for i in range(I)]
    return TemporalGraph(
        users,
        U + items,
        times,
        feats,
        state[users],
        node_count=U + I,
        node_ids=ids,
        metadata={
            "family": spec.family,
            "preferred": {int(u): int(U + preferred[u]) for u in range(U)},
            "user_state": {int(u): int(state[u]) for u in range(U)},
        },
    )
