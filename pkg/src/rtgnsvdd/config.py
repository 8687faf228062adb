"""Flat INI-style run configuration: one ``key = value`` per line, ``#``
comments, unknown keys rejected.  Every field below is a documented default;
a config file only lists the keys it overrides.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from .data import SplitSpec, SynthConfig
from .encoder import EncoderConfig
from .heads import TrainConfig


class ConfigError(ValueError):
    """Malformed run configuration; message carries file and line."""


@dataclass
class RunConfig:
    seed: int = 0
    head: str = "gaussian"

    synth_nodes: int = 100
    synth_communities: int = 4
    synth_normal_events: int = 20000
    synth_attack_events: int = 300
    synth_features: int = 12
    synth_duration: float = 100000.0
    synth_intra_community_p: float = 0.9
    synth_activity_exponent: float = 1.3
    synth_community_mean_scale: float = 1.0
    synth_attack_shift: float = 3.0
    synth_attack_dims_frac: float = 0.25
    synth_victims: int = 3
    synth_attackers: int = 5
    synth_attack_window_lo: float = 0.88
    synth_attack_window_hi: float = 1.0
    synth_attack_burst_size: int = 25
    synth_attack_burst_gap: float = 1.0

    encoder_d_memory: int = 32
    encoder_d_time: int = 8
    encoder_d_embed: int = 32
    encoder_d_hidden: int = 64
    encoder_neighbors: int = 10

    train_lr: float = 1e-3
    train_weight_decay: float = 1e-4
    train_epochs: int = 30
    train_batch_size: int = 200
    train_neg_ratio: float = 0.30
    train_sigma_neg_var: float = 5.0
    train_sigma_floor: float = 1e-4

    split_train: float = 0.70
    split_val: float = 0.15
    split_test: float = 0.15

    eval_tau_lo: float = 5.0
    eval_tau_hi: float = 25.0
    eval_tau_points: int = 21
    eval_ratios: List[float] = field(default_factory=lambda: [10.0, 20.0, 30.0, 40.0, 50.0])
    eval_resamples: int = 5
    eval_update_state: bool = True
    noise_feature_var: float = 5.0

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            n_nodes=self.synth_nodes,
            n_communities=self.synth_communities,
            n_normal_events=self.synth_normal_events,
            n_attack_events=self.synth_attack_events,
            n_features=self.synth_features,
            duration=self.synth_duration,
            intra_community_p=self.synth_intra_community_p,
            activity_exponent=self.synth_activity_exponent,
            community_mean_scale=self.synth_community_mean_scale,
            attack_shift=self.synth_attack_shift,
            attack_dims_frac=self.synth_attack_dims_frac,
            n_victims=self.synth_victims,
            n_attackers=self.synth_attackers,
            attack_window=(self.synth_attack_window_lo, self.synth_attack_window_hi),
            attack_burst_size=self.synth_attack_burst_size,
            attack_burst_gap=self.synth_attack_burst_gap,
            seed=self.seed,
        )

    def encoder_config(self, n_features: int) -> EncoderConfig:
        return EncoderConfig(
            n_features=n_features,
            d_memory=self.encoder_d_memory,
            d_time=self.encoder_d_time,
            d_embed=self.encoder_d_embed,
            d_hidden=self.encoder_d_hidden,
            n_neighbors=self.encoder_neighbors,
            head=self.head,
            sigma_floor=self.train_sigma_floor,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self.train_lr,
            weight_decay=self.train_weight_decay,
            epochs=self.train_epochs,
            batch_size=self.train_batch_size,
            neg_ratio=self.train_neg_ratio,
            sigma_neg_var=self.train_sigma_neg_var,
            sigma_floor=self.train_sigma_floor,
            seed=self.seed,
        )

    def split_spec(self) -> SplitSpec:
        return SplitSpec(train=self.split_train, val=self.split_val, test=self.split_test)

    def tau_grid(self) -> Tuple[float, ...]:
        if self.eval_tau_points < 1:
            raise ConfigError("eval_tau_points must be >= 1")
        if self.eval_tau_points == 1:
            return (self.eval_tau_lo,)
        lo, hi, n = self.eval_tau_lo, self.eval_tau_hi, self.eval_tau_points
        return tuple(lo + (hi - lo) * i / (n - 1) for i in range(n))


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _convert(key: str, raw: str, where: str):
    f = _FIELDS[key]
    try:
        if f.type in ("int", int):
            return int(raw)
        if f.type in ("float", float):
            return float(raw)
        if f.type in ("bool", bool):
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if key == "eval_ratios":
            return [float(x) for x in raw.split(",") if x.strip()]
        return raw
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {key}: {exc}") from None


def load_run_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Build a RunConfig from defaults, an optional file, then overrides
    (command-line flags win over the file)."""
    cfg = RunConfig()
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                stripped = line.split("#", 1)[0].strip()
                if not stripped:
                    continue
                if "=" not in stripped:
                    raise ConfigError(f"{path}:{lineno}: expected key = value, got {line.strip()!r}")
                key, raw = (part.strip() for part in stripped.split("=", 1))
                if key not in _FIELDS:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                setattr(cfg, key, _convert(key, raw, f"{path}:{lineno}"))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELDS:
            raise ConfigError(f"override: unknown key {key!r}")
        setattr(cfg, key, value)
    return cfg
