"""Event data model and temporal adjacency store for continuous-time
dynamic graphs.

The stream is append-only and time-ordered; every query at time t sees only
events strictly before t, so an event never observes itself.  Repeated
(src, dst) pairs are all kept (multigraph semantics).
"""

from __future__ import annotations

import bisect
import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Set, Tuple

import numpy as np


class Label(enum.IntEnum):
    NORMAL = 0
    ATTACK = 1
    NOISE = 2


@dataclass(frozen=True, eq=False)
class Event:
    """One timestamped directed interaction."""

    src: int
    dst: int
    t: float
    features: np.ndarray
    label: Label = Label.NORMAL

    def __eq__(self, other) -> bool:
        if not isinstance(other, Event):
            return NotImplemented
        return (
            self.src == other.src
            and self.dst == other.dst
            and self.t == other.t
            and self.label == other.label
            and np.array_equal(self.features, other.features)
        )

    def with_features(self, features: np.ndarray) -> "Event":
        return replace(self, features=features)


@dataclass(frozen=True)
class NeighborHit:
    """One entry of a node's temporal neighborhood (most recent first)."""

    event_index: int
    event: Event
    other: int
    as_src: bool


class OutOfOrderError(ValueError):
    """Inserted event is earlier than the last one in the stream."""


@dataclass
class TemporalAdjacencyStore:
    """Per-node, time-ordered index over an append-only event stream.

    Each event appears in exactly two per-node entries (its src slot and its
    dst slot); a self-loop therefore contributes two entries to the same
    node's list.
    """

    events: List[Event] = field(default_factory=list)
    _per_node: dict = field(default_factory=dict)
    _times: List[float] = field(default_factory=list)

    def insert_event(self, event: Event) -> int:
        if self.events and event.t < self.events[-1].t:
            raise OutOfOrderError(
                f"event timestamp {event.t} precedes last inserted timestamp {self.events[-1].t}"
            )
        idx = len(self.events)
        self.events.append(event)
        self._times.append(event.t)
        self._per_node.setdefault(event.src, []).append((idx, event.dst, True))
        self._per_node.setdefault(event.dst, []).append((idx, event.src, False))
        return idx

    def neighbors(self, node: int, t: float, k: int) -> List[NeighborHit]:
        """Up to k most recent entries incident to ``node`` with timestamp
        strictly below t.  Unknown nodes yield no entries."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        entries = self._per_node.get(node)
        if not entries:
            return []
        # per-node entries are in insertion order == time order
        lo, hi = 0, len(entries)
        while lo < hi:
            mid = (lo + hi) // 2
            if self.events[entries[mid][0]].t < t:
                lo = mid + 1
            else:
                hi = mid
        picked = entries[max(0, lo - k):lo]
        return [
            NeighborHit(idx, self.events[idx], other, as_src)
            for idx, other, as_src in reversed(picked)
        ]

    def node_set(self, t_max: float) -> Set[int]:
        """F(T): all nodes participating in any event with t <= t_max."""
        cut = bisect.bisect_right(self._times, t_max)
        out: Set[int] = set()
        for ev in self.events[:cut]:
            out.add(ev.src)
            out.add(ev.dst)
        return out

    def edges_until(self, t_max: float) -> Set[Tuple[int, int]]:
        """E(T): distinct ordered (src, dst) pairs with any event at t <= t_max."""
        cut = bisect.bisect_right(self._times, t_max)
        return {(ev.src, ev.dst) for ev in self.events[:cut]}

    def node_entries(self, node: int):
        return list(self._per_node.get(node, ()))

    def truncate(self, n: int) -> None:
        """Drop every event with index >= n (undo recent insertions)."""
        if n < 0 or n > len(self.events):
            raise ValueError(f"cannot truncate to {n} with {len(self.events)} events")
        for ev in self.events[n:]:
            for node in (ev.src, ev.dst):
                entries = self._per_node[node]
                while entries and entries[-1][0] >= n:
                    entries.pop()
        del self.events[n:]
        del self._times[n:]


def build_store(events: Iterable[Event]) -> TemporalAdjacencyStore:
    store = TemporalAdjacencyStore()
    for ev in events:
        store.insert_event(ev)
    return store
