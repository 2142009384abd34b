"""Link-based framing: frames of the k most recent links and overlapping timelines of frames.

A timeline of length ``n`` for node ``s`` at time ``t`` is built back to
front.  The newest frame sits at ``t``; the reference time of each older
frame is the timestamp of the ``k/2``-th most recent link strictly before the
next newer reference time, so consecutive frames overlap by ``k/2`` links
(hop length ``k/2``).  Construction stops when fewer than ``k/2`` links
would remain in the next older frame; the missing leading frames are
invalid and represented by zeros downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ConfigurationError
from .graph import TemporalGraph, TemporalLink

__all__ = [
    "FrameEntry",
    "Frame",
    "Timeline",
    "extract_frame",
    "build_timeline",
    "timeline_positions",
    "oracle_timeline",
]


@dataclass(frozen=True)
class FrameEntry:
    neighbor: int
    features: np.ndarray = field(compare=False)
    timestamp: float
    link_index: int


@dataclass(frozen=True)
class Frame:
    node: int
    ref_time: float
    entries: tuple[FrameEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def link_indices(self) -> list[int]:
        return [e.link_index for e in self.entries]


@dataclass(frozen=True)
class Timeline:
    node: int
    query_time: float
    frames: tuple[Frame, ...]  # valid frames only, oldest first
    target_length: int

    @property
    def valid_count(self) -> int:
        return len(self.frames)

    @property
    def ref_times(self) -> list[float]:
        return [f.ref_time for f in self.frames]

    def slots(self) -> list[Frame | None]:
        """Length-``n`` view with ``None`` for the invalid leading frames."""
        return [None] * (self.target_length - self.valid_count) + list(self.frames)

    def to_json(self, g: TemporalGraph | None = None) -> dict[str, Any]:
        def name(v):
            return g.node_ids[v] if g is not None else v

        return {
            "node": name(self.node),
            "query_time": self.query_time,
            "target_length": self.target_length,
            "valid_count": self.valid_count,
            "frames": [
                {
                    "ref_time": f.ref_time,
                    "entries": [
                        {"neighbor": name(e.neighbor), "timestamp": e.timestamp, "link_index": e.link_index}
                        for e in f.entries
                    ],
                }
                for f in self.frames
            ],
        }


def _check_k(k: int) -> int:
    if k < 2 or k % 2:
        raise ConfigurationError(f"frame length must be even and >= 2 (hop = k/2), got {k}")
    return k // 2


def _entry(g: TemporalGraph, pos: int) -> FrameEntry:
    li = int(g.adj_link[pos])
    return FrameEntry(int(g.adj_nbr[pos]), g.features[li], float(g.adj_time[pos]), li)


def _frame(g: TemporalGraph, s: int, t: float, lo: int, hi: int, k: int) -> Frame:
    return Frame(s, float(t), tuple(_entry(g, p) for p in range(hi - 1, max(lo, hi - k) - 1, -1)))


def extract_frame(g: TemporalGraph, s: int, t: float, k: int) -> Frame:
    """The ``k`` most recent links of ``s`` strictly before ``t``, newest first."""
    if k < 1:
        raise ConfigurationError(f"frame length must be positive, got {k}")
    lo, hi = g.history(s, t)
    return _frame(g, s, t, lo, hi, k)


def timeline_positions(g: TemporalGraph, s: int, t: float, k: int, n: int) -> tuple[int, list[tuple[float, int]]]:
    """Index-level timeline: ``(lo, [(ref_time, hi), ...])`` oldest first.

    Frame entries are adjacency positions ``[max(lo, hi - k), hi)``.
    """
    half = _check_k(k)
    if n < 1:
        raise ConfigurationError(f"timeline length must be >= 1, got {n}")
    lo, hi = g.history(s, t)
    if hi == lo:
        return lo, []
    out = [(float(t), hi)]
    times = g.adj_time
    while len(out) < n and hi - lo >= half:
        t_prev = float(times[hi - half])
        hi_prev = lo + int(np.searchsorted(times[lo:hi], t_prev, side="left"))
        if hi_prev - lo < half:
            break
        out.append((t_prev, hi_prev))
        hi = hi_prev
    out.reverse()
    return lo, out


def build_timeline(g: TemporalGraph, s: int, t: float, k: int, n: int) -> Timeline:
    lo, frames = timeline_positions(g, s, t, k, n)
    return Timeline(s, float(t), tuple(_frame(g, s, rt, lo, hi, k) for rt, hi in frames), n)


def oracle_timeline(g: TemporalGraph, s: int, t: float, k: int, n: int, links: list[TemporalLink] | None = None) -> Timeline:
    """Brute-force timeline from linear scans of the link list (no adjacency index)."""
    half = _check_k(k)
    if links is None:
        links = g.links

    def before(tt):
        hist = [e for e in links if (e.src == s or e.dst == s) and e.timestamp < tt]
        hist.sort(key=lambda e: (e.timestamp, e.link_index), reverse=True)
        return hist

    def frame(tt, hist):
        return Frame(
            s,
            float(tt),
            tuple(FrameEntry(e.dst if e.src == s else e.src, e.features, e.timestamp, e.link_index) for e in hist[:k]),
        )

    hist = before(t)
    frames = [frame(t, hist)] if hist else []
    while frames and len(frames) < n:
        if len(hist) < half:
            break
        t_prev = hist[half - 1].timestamp
        older = before(t_prev)
        if len(older) < half:
            break
        frames.append(frame(t_prev, older))
        hist = older
    return Timeline(s, float(t), tuple(reversed(frames)), n)
