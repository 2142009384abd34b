"""Frame aggregator, timeline aggregator, and the layered node-embedding recursion.

One parameter set is shared by all layers.  An embedding at depth ``l`` for
``(node, t)`` is computed from the node's timeline of frames: every frame is
summarised by multi-head attention over its links (the target row carries
the node's own depth ``l-1`` embedding at the frame's reference time, each
link row carries the neighbor's depth ``l-1`` embedding at the link time, a
time encoding of the elapsed time, and the link features), and the ``n``
frame summaries are concatenated and mapped through one affine layer.

The recursion is evaluated breadth-first: all ``(node, time)`` requests of a
layer are deduplicated and computed as one batch, so a training batch costs
one pass per depth rather than ``(k*n)^L`` separate evaluations.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, ShapeError
from .framing import Frame, timeline_positions
from .graph import TemporalGraph
from .tensor import Tensor

__all__ = [
    "ModelConfig",
    "FTM",
    "init_params",
    "time_encode",
    "time_aware_feature",
    "frame_embed",
    "frame_representations",
    "node_embed",
    "link_score",
]


@dataclass(frozen=True)
class ModelConfig:
    layers: int = 2
    heads: int = 2
    frame_length: int = 20
    timeline_length: int = 3
    hidden_dim: int = 32
    time_dim: int = 172
    link_dim: int = 172
    seed: int = 0

    def __post_init__(self):
        if self.layers < 1 or self.heads < 1 or self.timeline_length < 1:
            raise ConfigurationError(f"layers, heads and timeline_length must be >= 1: {self}")
        if self.frame_length < 2 or self.frame_length % 2:
            raise ConfigurationError(f"frame_length must be even and >= 2, got {self.frame_length}")
        if self.hidden_dim < 1 or self.hidden_dim % self.heads:
            raise ConfigurationError(f"hidden_dim {self.hidden_dim} must be a positive multiple of heads {self.heads}")
        if self.time_dim < 1 or self.link_dim < 0:
            raise ConfigurationError("time_dim must be >= 1 and link_dim >= 0")

    @property
    def input_dim(self) -> int:
        return self.hidden_dim + self.time_dim + self.link_dim

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.heads

    def to_dict(self) -> dict:
        return asdict(self)


def init_params(cfg: ModelConfig) -> dict[str, Tensor]:
    rng = np.random.default_rng(cfg.seed)
    d_in, d_h, d_k, d_t = cfg.input_dim, cfg.hidden_dim, cfg.head_dim, cfg.time_dim

    def glorot(rows, cols):
        lim = np.sqrt(6.0 / (rows + cols))
        return rng.uniform(-lim, lim, size=(rows, cols))

    arrays = {
        "time.freq": 1.0 / 10 ** (np.arange(d_t) * 9.0 / d_t),
        "time.phase": np.zeros(d_t),
    }
    for kind in ("W_Q", "W_K", "W_V"):
        for r in range(cfg.heads):
            arrays[f"attn.{kind}.{r}"] = glorot(d_in, d_k)
    arrays["ffn.W_0"] = glorot(d_in + d_h, d_h)
    arrays["ffn.b_0"] = np.zeros(d_h)
    arrays["ffn.W_1"] = glorot(d_h, d_h)
    arrays["ffn.b_1"] = np.zeros(d_h)
    arrays["timeline.W_2"] = glorot(cfg.timeline_length * d_h, d_h)
    arrays["timeline.b_2"] = np.zeros(d_h)
    return {name: Tensor(a, name=name, requires_grad=True) for name, a in arrays.items()}


def time_encode(params, dt) -> Tensor:
    """``sqrt(1/d_T) * cos(dt * freq + phase)``; a scalar gives a vector, an array of shape (m,) gives (m, d_T)."""
    freq, phase = params["time.freq"], params["time.phase"]
    dt = np.asarray(dt, dtype=np.float64)
    if np.any(dt < 0):
        raise ValueError("elapsed time must be nonnegative")
    scale = np.sqrt(1.0 / freq.shape[0])
    if dt.ndim == 0:
        return T.cos(freq * float(dt) + phase) * scale
    return T.cos(dt.reshape(-1, 1) * freq + phase) * scale


def time_aware_feature(params, h_prev, dt: float, e) -> Tensor:
    """Row ``[h_prev || phi(dt) || e]`` of the neighborhood matrix."""
    h_prev = h_prev if isinstance(h_prev, Tensor) else np.asarray(h_prev, dtype=np.float64)
    e = e if isinstance(e, Tensor) else np.asarray(e, dtype=np.float64)
    if np.ndim(getattr(h_prev, "data", h_prev)) != 1 or np.ndim(getattr(e, "data", e)) != 1:
        raise ShapeError("time_aware_feature expects 1-d h_prev and e")
    return T.concat([h_prev, time_encode(params, dt), e], axis=0)


def frame_representations(params, cfg: ModelConfig, target_h, nbr_h, dts, feats, mask):
    """Batched frame aggregator.

    Shapes: ``target_h`` (F, d_h); ``nbr_h`` (F, W, d_h); ``dts`` (F, W);
    ``feats`` (F, W, d_e); ``mask`` (F, W) bool, True for real entries.
    Returns the (F, d_h) frame representations and the (F, heads, W)
    attention weights.
    """
    mask = np.asarray(mask, dtype=bool)
    F, W = mask.shape
    d_h, d_t, d_e, n_h, d_k = cfg.hidden_dim, cfg.time_dim, cfg.link_dim, cfg.heads, cfg.head_dim
    feats = np.asarray(feats, dtype=np.float64)
    if feats.shape != (F, W, d_e):
        raise ShapeError(f"link features have shape {feats.shape}, expected {(F, W, d_e)}")
    if tuple(np.shape(getattr(nbr_h, "data", nbr_h))) != (F, W, d_h):
        raise ShapeError(f"neighbor embeddings have shape {np.shape(getattr(nbr_h, 'data', nbr_h))}, expected {(F, W, d_h)}")
    if tuple(np.shape(getattr(target_h, "data", target_h))) != (F, d_h):
        raise ShapeError(f"target embeddings have shape {np.shape(getattr(target_h, 'data', target_h))}, expected {(F, d_h)}")

    phi = time_encode(params, np.where(mask, dts, 0.0).reshape(-1))
    rows = T.concat([T.reshape(nbr_h, (F * W, d_h)), phi, feats.reshape(F * W, d_e)], axis=1)
    phi0 = time_encode(params, np.zeros(1))
    z0 = T.concat([target_h, phi0 + np.zeros((F, d_t)), np.zeros((F, d_e))], axis=1)

    def proj(kind):
        return T.concat([params[f"attn.{kind}.{r}"] for r in range(n_h)], axis=1)

    q = T.reshape(z0 @ proj("W_Q"), (F, 1, n_h, d_k))
    k = T.reshape(rows @ proj("W_K"), (F, W, n_h, d_k))
    v = T.reshape(rows @ proj("W_V"), (F, W, n_h, d_k))
    logits = T.tsum(k * q, axis=-1) * (1.0 / np.sqrt(d_k))
    alpha = T.softmax(logits, axis=1, mask=mask[:, :, None])
    heads = T.tsum(v * T.reshape(alpha, (F, W, n_h, 1)), axis=1)
    y = T.concat([z0, T.reshape(heads, (F, n_h * d_k))], axis=1)
    hidden = T.relu(y @ params["ffn.W_0"] + params["ffn.b_0"])
    out = hidden @ params["ffn.W_1"] + params["ffn.b_1"]
    return out, np.transpose(alpha.data, (0, 2, 1))


def frame_embed(params, cfg: ModelConfig, frame: Frame, neighbor_embeddings, target_embedding, return_attention=False):
    """Representation of one frame; an empty frame maps to the zero vector."""
    W = len(frame.entries)
    if W == 0:
        out = Tensor(np.zeros(cfg.hidden_dim))
        return (out, np.zeros((cfg.heads, 0))) if return_attention else out
    nbr = neighbor_embeddings
    nbr = T.reshape(nbr, (1, W, cfg.hidden_dim)) if isinstance(nbr, Tensor) else np.asarray(nbr, float).reshape(1, W, -1)
    tgt = target_embedding
    tgt = T.reshape(tgt, (1, cfg.hidden_dim)) if isinstance(tgt, Tensor) else np.asarray(tgt, float).reshape(1, -1)
    dts = np.array([[frame.ref_time - e.timestamp for e in frame.entries]])
    if cfg.link_dim:
        feats = np.stack([e.features for e in frame.entries])[None]
    else:
        feats = np.zeros((1, W, 0))
    out, attn = frame_representations(params, cfg, tgt, nbr, dts, feats, np.ones((1, W), bool))
    out = T.reshape(out, (cfg.hidden_dim,))
    return (out, attn[0]) if return_attention else out


@dataclass
class _LayerPlan:
    query: np.ndarray  # (F,) query row of each valid frame
    slot: np.ndarray  # (F,) timeline slot 0..n-1
    ref_time: np.ndarray  # (F,)
    mask: np.ndarray  # (F, W)
    link: np.ndarray  # (F, W) link index, 0 where masked
    nbr: np.ndarray  # (F, W)
    dt: np.ndarray  # (F, W)
    link_time: np.ndarray  # (F, W)


def _plan(g: TemporalGraph, nodes, times, k: int, n: int) -> _LayerPlan:
    q, slot, rt, lo_, hi_ = [], [], [], [], []
    for i, (s, t) in enumerate(zip(nodes.tolist(), times.tolist())):
        lo, frames = timeline_positions(g, s, t, k, n)
        base = n - len(frames)
        for j, (ref, hi) in enumerate(frames):
            q.append(i)
            slot.append(base + j)
            rt.append(ref)
            lo_.append(max(lo, hi - k))
            hi_.append(hi)
    hi = np.asarray(hi_, dtype=np.int64)
    size = hi - np.asarray(lo_, dtype=np.int64)
    W = int(size.max()) if len(size) else 0
    e = np.arange(W)
    mask = e[None, :] < size[:, None]
    pos = np.where(mask, hi[:, None] - 1 - e[None, :], 0)
    ref = np.asarray(rt, dtype=np.float64)
    lt = g.adj_time[pos] if len(hi) else np.zeros((0, W))
    return _LayerPlan(
        query=np.asarray(q, dtype=np.int64),
        slot=np.asarray(slot, dtype=np.int64),
        ref_time=ref,
        mask=mask,
        link=np.where(mask, g.adj_link[pos], 0) if len(hi) else np.zeros((0, W), np.int64),
        nbr=np.where(mask, g.adj_nbr[pos], 0) if len(hi) else np.zeros((0, W), np.int64),
        dt=np.where(mask, ref[:, None] - lt, 0.0),
        link_time=np.where(mask, lt, 0.0),
    )


def _unique_requests(nodes: np.ndarray, times: np.ndarray):
    order = np.lexsort((times, nodes))
    sn, st = nodes[order], times[order]
    new = np.ones(len(order), dtype=bool)
    new[1:] = (sn[1:] != sn[:-1]) | (st[1:] != st[:-1])
    groups = np.cumsum(new) - 1
    inverse = np.empty(len(order), dtype=np.int64)
    inverse[order] = groups
    return sn[new], st[new], inverse


class FTM:
    """Frame-level timeline model: configuration plus one shared parameter set."""

    def __init__(self, config: ModelConfig, params: dict[str, Tensor] | None = None):
        self.config = config
        self.params = params if params is not None else init_params(config)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state_dict(self, arrays: dict[str, np.ndarray]) -> None:
        expected = {n: p.shape for n, p in self.params.items()}
        got = {n: tuple(a.shape) for n, a in arrays.items()}
        if expected != got:
            diff = sorted(
                f"{n}: checkpoint {got.get(n)} vs config {expected.get(n)}"
                for n in set(expected) | set(got)
                if expected.get(n) != got.get(n)
            )
            raise ShapeError("checkpoint does not match model config: " + "; ".join(diff))
        for n, a in arrays.items():
            self.params[n].data = np.array(a, dtype=np.float64)

    def _check_graph(self, g: TemporalGraph) -> None:
        if g.feature_dim != self.config.link_dim:
            raise ShapeError(f"graph link features have width {g.feature_dim}, model expects {self.config.link_dim}")
        if g.node_features is not None and g.node_features.shape[1] != self.config.hidden_dim:
            raise ShapeError(
                f"node features have width {g.node_features.shape[1]}, model hidden_dim is {self.config.hidden_dim}"
            )

    def _raw(self, g: TemporalGraph, nodes: np.ndarray) -> np.ndarray:
        if g.node_features is None:
            return np.zeros((len(nodes), self.config.hidden_dim))
        return g.node_features[nodes]

    def embed(self, g: TemporalGraph, nodes, times, depth: int | None = None) -> Tensor:
        """Embeddings ``h_v(t)`` for paired arrays of nodes and times, shape (m, d_h)."""
        self._check_graph(g)
        nodes = np.asarray(nodes, dtype=np.int64).reshape(-1)
        times = np.asarray(times, dtype=np.float64).reshape(-1)
        if len(nodes) != len(times):
            raise ShapeError(f"{len(nodes)} nodes but {len(times)} times")
        if len(nodes) and (nodes.min() < 0 or nodes.max() >= g.node_count):
            raise ShapeError(f"node ids out of range for a graph of {g.node_count} nodes")
        depth = self.config.layers if depth is None else depth
        if depth < 0:
            raise ConfigurationError(f"depth must be >= 0, got {depth}")
        un, ut, inv = _unique_requests(nodes, times)
        h = self._embed_unique(g, un, ut, depth)
        if len(un) == len(nodes) and np.array_equal(inv, np.arange(len(nodes))):
            return h
        return T.take(h, inv)

    def _embed_unique(self, g, nodes, times, depth):
        cfg, P = self.config, self.params
        d_h, n = cfg.hidden_dim, cfg.timeline_length
        if depth == 0:
            return Tensor(self._raw(g, nodes))
        m = len(nodes)
        plan = _plan(g, nodes, times, cfg.frame_length, n)
        F = len(plan.query)
        if F == 0:
            flat = np.zeros((m, n * d_h))
            return flat @ P["timeline.W_2"] + P["timeline.b_2"]

        W = plan.mask.shape[1]
        tgt_nodes, tgt_times = nodes[plan.query], plan.ref_time
        nbr_nodes, nbr_times = plan.nbr[plan.mask], plan.link_time[plan.mask]
        if depth == 1:
            target_h = self._raw(g, tgt_nodes)
            nbr_h = np.zeros((F, W, d_h))
            nbr_h[plan.mask] = self._raw(g, nbr_nodes)
        else:
            req_n = np.concatenate([tgt_nodes, nbr_nodes])
            req_t = np.concatenate([tgt_times, nbr_times])
            un, ut, inv = _unique_requests(req_n, req_t)
            prev = self._embed_unique(g, un, ut, depth - 1)
            target_h = T.take(prev, inv[:F])
            gather = np.zeros((F, W), dtype=np.int64)
            gather[plan.mask] = inv[F:]
            nbr_h = T.reshape(T.take(prev, gather.reshape(-1)), (F, W, d_h))

        feats = g.features[plan.link]
        feats[~plan.mask] = 0.0
        reps, _ = frame_representations(P, cfg, target_h, nbr_h, plan.dt, feats, plan.mask)
        index = np.zeros(m * n, dtype=np.int64)
        index[plan.query * n + plan.slot] = 1 + np.arange(F)
        padded = T.take(T.concat([np.zeros((1, d_h)), reps], axis=0), index)
        return T.reshape(padded, (m, n * d_h)) @ P["timeline.W_2"] + P["timeline.b_2"]

    def node_embed(self, g: TemporalGraph, s: int, t: float, depth: int | None = None) -> np.ndarray:
        return self.embed(g, [s], [t], depth).data[0]

    def score_links(self, g: TemporalGraph, src, dst, times) -> np.ndarray:
        """Inner-product logits for arrays of candidate links (no gradient recording)."""
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        times = np.asarray(times, dtype=np.float64)
        h = self.embed(g, np.concatenate([src, dst]), np.concatenate([times, times])).data
        m = len(src)
        return np.einsum("ij,ij->i", h[:m], h[m:])

    def link_score(self, g: TemporalGraph, i: int, j: int, t: float) -> float:
        return float(self.score_links(g, [i], [j], [t])[0])


def node_embed(model: FTM, g: TemporalGraph, s: int, t: float, depth: int | None = None) -> np.ndarray:
    return model.node_embed(g, s, t, depth)


def link_score(model: FTM, g: TemporalGraph, i: int, j: int, t: float) -> float:
    return model.link_score(g, i, j, t)
