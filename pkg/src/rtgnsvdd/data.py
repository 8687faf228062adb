"""Flow-record ingestion, chronological splitting, feature standardization
and a synthetic CTDG benchmark generator.

CSV schema (exact): header ``src,dst,timestamp,label,f_1,...,f_k``; UTF-8;
timestamps in decimal seconds.  Label strings are case-insensitive:
"benign"/"normal" map to Normal, anything else to Attack.  Exports write the
same schema, plus the label "noise" for injected events.  Numeric fields are
written with shortest round-trip precision, so export -> ingest is
bit-exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .ctdg import Event, Label


class DataFormatError(ValueError):
    """Malformed input file; the message carries the offending line number."""


@dataclass
class EventDataset:
    """Time-sorted event stream with the external-key <-> dense-id map."""

    events: List[Event]
    node_keys: List[str]
    n_features: int

    @property
    def n_nodes(self) -> int:
        return len(self.node_keys)

    @property
    def t_min(self) -> float:
        return self.events[0].t

    @property
    def t_max(self) -> float:
        return self.events[-1].t

    def label_counts(self) -> Dict[Label, int]:
        counts = {label: 0 for label in Label}
        for ev in self.events:
            counts[ev.label] += 1
        return counts


def _parse_label(raw: str) -> Label:
    return Label.NORMAL if raw.strip().lower() in ("benign", "normal") else Label.ATTACK


def ingest_csv(path) -> EventDataset:
    """Read a flow CSV into a dataset.

    String endpoints are mapped to dense integer ids in order of first
    appearance in the time-sorted stream; rows are stably sorted by
    timestamp.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if len(header) < 4 or header[:4] != ["src", "dst", "timestamp", "label"]:
            raise DataFormatError(
                f"{path}: line 1: header must start with src,dst,timestamp,label, got {header[:4]}"
            )
        feat_names = header[4:]
        expected = [f"f_{i + 1}" for i in range(len(feat_names))]
        if feat_names != expected:
            raise DataFormatError(
                f"{path}: line 1: feature columns must be f_1..f_{len(feat_names)}, got {feat_names}"
            )
        n_features = len(feat_names)

        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4 + n_features:
                raise DataFormatError(
                    f"{path}: line {lineno}: expected {4 + n_features} columns, got {len(row)}"
                )
            try:
                t = float(row[2])
            except ValueError:
                raise DataFormatError(
                    f"{path}: line {lineno}: unparseable timestamp {row[2]!r}"
                ) from None
            if not math.isfinite(t):
                raise DataFormatError(f"{path}: line {lineno}: non-finite timestamp {row[2]!r}")
            try:
                feats = np.array([float(x) for x in row[4:]], dtype=np.float64)
            except ValueError:
                raise DataFormatError(
                    f"{path}: line {lineno}: non-numeric feature among {row[4:]!r}"
                ) from None
            rows.append((t, row[0], row[1], _parse_label(row[3]), feats))

    rows.sort(key=lambda r: r[0])  # stable: equal timestamps keep file order

    node_ids: Dict[str, int] = {}
    node_keys: List[str] = []

    def dense(key: str) -> int:
        if key not in node_ids:
            node_ids[key] = len(node_keys)
            node_keys.append(key)
        return node_ids[key]

    events = [
        Event(src=dense(src), dst=dense(dst), t=t, features=feats, label=label)
        for t, src, dst, label, feats in rows
    ]
    return EventDataset(events=events, node_keys=node_keys, n_features=n_features)


_LABEL_NAMES = {Label.NORMAL: "normal", Label.ATTACK: "attack", Label.NOISE: "noise"}


def export_events_csv(events: Sequence[Event], n_features: int, path,
                      node_keys: Optional[Sequence[str]] = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["src", "dst", "timestamp", "label"] + [f"f_{i + 1}" for i in range(n_features)])
        for ev in events:
            src = node_keys[ev.src] if node_keys is not None else str(ev.src)
            dst = node_keys[ev.dst] if node_keys is not None else str(ev.dst)
            writer.writerow(
                [src, dst, repr(ev.t), _LABEL_NAMES[ev.label]] + [repr(float(x)) for x in ev.features]
            )


def export_csv(dataset: EventDataset, path) -> None:
    export_events_csv(dataset.events, dataset.n_features, path, dataset.node_keys)


# ---------------------------------------------------------------------------
# chronological splitting

@dataclass
class SplitSpec:
    train: float = 0.70
    val: float = 0.15
    test: float = 0.15

    def validate(self) -> None:
        if min(self.train, self.val, self.test) <= 0:
            raise ValueError("split fractions must be positive")
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")


@dataclass
class Splits:
    train: List[Event]
    val: List[Event]
    test: List[Event]
    t_val: float   # first validation timestamp
    t_test: float  # first test timestamp
    t_max: float


class ContaminatedSplitError(ValueError):
    """Attack events found before the test boundary."""


def chronological_split(dataset: EventDataset, spec: Optional[SplitSpec] = None) -> Splits:
    """Cut the stream into contiguous train/val/test segments.

    Boundaries land on event indices; a run of equal timestamps is never
    split across a boundary — the whole run falls into the earlier split.
    Train and val must be attack-free.
    """
    spec = spec or SplitSpec()
    spec.validate()
    events = dataset.events
    n = len(events)
    if n == 0:
        raise ValueError("cannot split an empty dataset")

    def adjust(cut: int) -> int:
        while 0 < cut < n and events[cut - 1].t == events[cut].t:
            cut += 1
        return min(cut, n)

    b1 = adjust(round(n * spec.train))
    b2 = adjust(max(b1, round(n * (spec.train + spec.val))))
    if b1 == 0 or b2 <= b1 or b2 >= n:
        raise ValueError(f"degenerate split boundaries ({b1}, {b2}) for {n} events")

    train, val, test = events[:b1], events[b1:b2], events[b2:]
    for name, part in (("train", train), ("val", val)):
        bad = sum(1 for ev in part if ev.label == Label.ATTACK)
        if bad:
            raise ContaminatedSplitError(
                f"{bad} attack events in the {name} split; move the split boundaries so all "
                f"attacks fall after the test boundary"
            )
    return Splits(
        train=train, val=val, test=test,
        t_val=val[0].t, t_test=test[0].t, t_max=events[-1].t,
    )


# ---------------------------------------------------------------------------
# standardization

@dataclass
class Scaler:
    """Per-dimension (x - mean)/std transform, fit on the train split only."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, events: Sequence[Event]) -> "Scaler":
        if not events:
            raise ValueError("cannot fit a scaler on an empty split")
        feats = np.stack([ev.features for ev in events])
        std = feats.std(axis=0)
        return cls(mean=feats.mean(axis=0), std=np.maximum(std, 1e-8))

    def apply(self, events: Sequence[Event]) -> List[Event]:
        return [ev.with_features((ev.features - self.mean) / self.std) for ev in events]


def standardize(train: Sequence[Event], *others: Sequence[Event]):
    """Fit on train, scale train and every other split.

    Returns (scaled_train, *scaled_others, scaler).  Applying the returned
    scaler a second time rescales again — the transform is not idempotent.
    """
    scaler = Scaler.fit(train)
    scaled = [scaler.apply(train)] + [scaler.apply(part) for part in others]
    return (*scaled, scaler)


# ---------------------------------------------------------------------------
# synthetic benchmark

@dataclass
class SynthConfig:
    """Desk-scale stand-in for a flow dataset: community-structured normal
    traffic with a planted attack burst in the test window.

    Node activity follows a power law (exponent ``activity_exponent``), so
    uniform endpoint draws — negatives during training, injected noise at
    test time — land on under-trained nodes far more often than real
    traffic does.  Victims and attackers are taken from the most active
    nodes.
    """

    n_nodes: int = 100
    n_communities: int = 4
    n_normal_events: int = 20000
    n_attack_events: int = 300
    n_features: int = 12
    duration: float = 100000.0
    intra_community_p: float = 0.9
    activity_exponent: float = 1.3
    community_mean_scale: float = 1.0
    attack_shift: float = 3.0
    attack_dims_frac: float = 0.25
    n_victims: int = 3
    n_attackers: int = 5
    attack_window: Tuple[float, float] = (0.88, 1.0)
    attack_burst_size: int = 25
    attack_burst_gap: float = 1.0  # mean spacing inside a burst, seconds
    seed: int = 0

    def validate(self) -> None:
        if self.n_nodes < self.n_communities or self.n_communities < 1:
            raise ValueError("need at least one node per community")
        if self.n_victims + self.n_attackers > self.n_nodes:
            raise ValueError("victim and attacker sets exceed the node count")
        lo, hi = self.attack_window
        if not (0.0 <= lo < hi <= 1.0):
            raise ValueError(f"attack window {self.attack_window} must be within (0, 1]")


def _weighted_pick(nodes: np.ndarray, cumw: np.ndarray, u: np.ndarray) -> np.ndarray:
    return nodes[np.searchsorted(cumw, u, side="right")]


def synth_generate(config: SynthConfig, rng: Optional[np.random.Generator] = None) -> EventDataset:
    """Generate a fully seeded synthetic dataset per the config."""
    config.validate()
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    n, k, f = config.n_nodes, config.n_communities, config.n_features

    community = np.array([i * k // n for i in range(n)])
    members = [np.flatnonzero(community == c) for c in range(k)]
    # activity rank is a fixed permutation of the nodes, heavy-tailed weights
    rank = rng.permutation(n)
    weight = (1.0 + rank).astype(np.float64) ** (-config.activity_exponent)
    comm_cumw = []
    for c in range(k):
        w = weight[members[c]]
        comm_cumw.append(np.cumsum(w) / w.sum())
    means = rng.normal(0.0, config.community_mean_scale, size=(k, f))

    m = config.n_normal_events
    ts = np.sort(rng.uniform(0.0, config.duration, size=m))
    comm = rng.integers(0, k, size=m)
    src = np.empty(m, dtype=np.int64)
    dst = np.empty(m, dtype=np.int64)
    u_src = rng.random(m)
    intra = rng.random(m) < config.intra_community_p
    shiftc = rng.integers(1, max(k, 2), size=m)
    u_dst = rng.random(m)
    for c in range(k):
        sel = comm == c
        src[sel] = _weighted_pick(members[c], comm_cumw[c], u_src[sel])
    dst_comm = np.where(intra, comm, (comm + shiftc) % k)
    for c in range(k):
        sel = dst_comm == c
        dst[sel] = _weighted_pick(members[c], comm_cumw[c], u_dst[sel])
    feats = means[comm] + rng.standard_normal((m, f))

    events = [
        Event(src=int(src[i]), dst=int(dst[i]), t=float(ts[i]),
              features=feats[i], label=Label.NORMAL)
        for i in range(m)
    ]

    a = config.n_attack_events
    if a > 0:
        # victims and attackers are the most active nodes (busy servers)
        by_activity = np.argsort(-weight, kind="stable")
        victims = by_activity[:config.n_victims]
        attackers = by_activity[config.n_victims:config.n_victims + config.n_attackers]
        lo, hi = config.attack_window
        n_shift = max(1, math.ceil(config.attack_dims_frac * f))
        shift = np.zeros(f)
        shift[:n_shift] = config.attack_shift
        # attacks arrive in dense per-pair bursts inside the attack window
        n_bursts = math.ceil(a / config.attack_burst_size)
        starts = np.sort(rng.uniform(lo * config.duration, hi * config.duration, size=n_bursts))
        left = a
        for s in range(n_bursts):
            size = min(config.attack_burst_size, left)
            left -= size
            attacker = int(attackers[rng.integers(0, len(attackers))])
            victim = int(victims[rng.integers(0, len(victims))])
            gaps = rng.exponential(config.attack_burst_gap, size=size)
            ts_b = np.minimum(starts[s] + np.cumsum(gaps), hi * config.duration)
            feats_b = shift + rng.standard_normal((size, f))
            events += [
                Event(src=attacker, dst=victim, t=float(ts_b[i]),
                      features=feats_b[i], label=Label.ATTACK)
                for i in range(size)
            ]

    events.sort(key=lambda ev: ev.t)
    return EventDataset(events=events, node_keys=[str(i) for i in range(n)], n_features=f)
