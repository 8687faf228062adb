"""Synthetic noise events injected into a test split.

Noise endpoints are independent uniform draws over the node set of the full
dataset (self-loops allowed), features are zero-mean Gaussians with a
diagonal covariance, and timestamps are uniform over the test window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Set

import numpy as np

from .ctdg import Event, Label


@dataclass
class NoiseConfig:
    ratio: float = 0.10           # noise count over normal count in the test split
    feature_var: float = 5.0      # per-dimension variance of noise features
    t_start: float = 0.0          # test window [t_start, t_end]
    t_end: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.ratio < 0:
            raise ValueError("noise ratio must be >= 0")
        if self.feature_var <= 0:
            raise ValueError("feature_var must be positive")
        if not self.t_start < self.t_end:
            raise ValueError(f"empty noise window [{self.t_start}, {self.t_end}]")


def noise_count(ratio: float, test_events: Sequence[Event]) -> int:
    """Number of noise events for a ratio against the normal test events."""
    n_normal = sum(1 for ev in test_events if ev.label == Label.NORMAL)
    return round(ratio * n_normal)


def craft_noise_events(node_set: Iterable[int], count: int, config: NoiseConfig,
                       rng: np.random.Generator, n_features: int) -> List[Event]:
    """Draw ``count`` noise events per the config.

    Endpoints are independent uniform draws from the node set, so i == j is
    possible; the node set is over the full dataset, so noise may touch
    nodes unseen in training.
    """
    config.validate()
    if count < 0:
        raise ValueError("count must be >= 0")
    pool = np.array(sorted(set(node_set)))
    if pool.size == 0:
        raise ValueError("craft_noise_events: empty node set")
    src = pool[rng.integers(0, pool.size, size=count)]
    dst = pool[rng.integers(0, pool.size, size=count)]
    ts = rng.uniform(config.t_start, config.t_end, size=count)
    feats = rng.normal(0.0, math.sqrt(config.feature_var), size=(count, n_features))
    return [
        Event(src=int(src[i]), dst=int(dst[i]), t=float(ts[i]),
              features=feats[i], label=Label.NOISE)
        for i in range(count)
    ]


def inject(test_split: Sequence[Event], noise_events: Sequence[Event]) -> List[Event]:
    """Merge noise into the test split, re-sorted by timestamp.

    The sort is stable with originals listed first, so at equal timestamps
    original events precede noise.  Filtering the result by label != Noise
    recovers the original split exactly.
    """
    if test_split:
        lo, hi = test_split[0].t, test_split[-1].t
        for ev in noise_events:
            if not lo <= ev.t <= hi:
                raise ValueError(
                    f"noise timestamp {ev.t} outside the test window [{lo}, {hi}]"
                )
    merged = list(test_split) + list(noise_events)
    merged.sort(key=lambda ev: ev.t)
    return merged
