"""Detection heads and their objectives.

The deterministic baseline scores an event by the squared distance of the
concatenated endpoint embeddings to a trainable hypersphere center.  The
probabilistic head outputs per-node (mu, sigma) pairs; its positive
objective is the diagonal-Gaussian negative log likelihood of the
concatenated means around the center, and its negative objective pushes the
predicted sigma of randomly re-paired events toward the scale of a sampled
noise target.  Both objectives are optimized jointly.

Two scores fall out: s_mu (attack score, distance of means to the center)
and s_sigma (noise score, mean predicted standard deviation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import diffcore as dc
from .ctdg import Event, Label, TemporalAdjacencyStore, build_store
from .data import ContaminatedSplitError, Scaler
from .diffcore import OptimizerState, Tape, Value, clip_global_norm
from .encoder import (
    HEAD_GAUSSIAN,
    HEAD_SVDD,
    EncoderConfig,
    EncoderParams,
    apply_event_updates,
    embed_nodes,
    init_memory,
)

GRAD_CLIP_NORM = 5.0  # GRU recurrences through memory can spike


@dataclass
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    epochs: int = 30
    batch_size: int = 200
    neg_ratio: float = 0.30
    sigma_neg_var: float = 5.0  # diagonal of the negative-target covariance
    sigma_floor: float = 1e-4
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.neg_ratio <= 1.0:
            raise ValueError(f"neg_ratio must be in [0, 1], got {self.neg_ratio}")
        if self.sigma_neg_var <= 0:
            raise ValueError("sigma_neg_var must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


# ---------------------------------------------------------------------------
# scores (evaluation path, plain arrays)

def svdd_score(z_i: np.ndarray, z_j: np.ndarray, c: np.ndarray) -> float:
    """‖(z_i ⊕ z_j) − c‖², the baseline anomaly score."""
    z = np.concatenate([np.asarray(z_i, dtype=np.float64), np.asarray(z_j, dtype=np.float64)])
    if z.shape != np.shape(c):
        raise dc.ShapeError(f"svdd_score: event dim {z.shape} vs center {np.shape(c)}")
    d = z - c
    return float(d @ d)


def score_mu(mu_i: np.ndarray, mu_j: np.ndarray, c: np.ndarray) -> float:
    """Attack score: the SVDD distance applied to the mean outputs."""
    return svdd_score(mu_i, mu_j, c)


def score_sigma(sigma_i: np.ndarray, sigma_j: np.ndarray) -> float:
    """Noise score: mean of the concatenated predicted standard deviations."""
    s = np.concatenate([np.asarray(sigma_i, dtype=np.float64), np.asarray(sigma_j, dtype=np.float64)])
    return float(s.mean())


def svdd_objective(scores) -> float:
    """Mean anomaly score over a batch.  The quadratic weight penalty is
    realized as decoupled decay in the optimizer and never enters the
    reported loss value."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("svdd_objective: empty batch")
    return float(scores.mean())


# ---------------------------------------------------------------------------
# Gaussian objectives (training path, tape Values)

def _check_sigma(sigma: np.ndarray, floor: float) -> None:
    if np.any(sigma < floor * (1.0 - 1e-9)):
        raise ValueError(f"sigma below floor {floor}: min {sigma.min()}")


def positive_nll_rows(mu_evt: Value, sigma_evt: Value, center: Value,
                      sigma_floor: float = 1e-4) -> Value:
    """Per-event Gaussian NLL, averaged over the event dimensions.

    mu_evt, sigma_evt: [B, N] concatenated endpoint outputs.
    Each row is (1/N) Σ_m [log σ_m² + (μ_m − c_m)² / σ_m²].
    """
    _check_sigma(sigma_evt.data, sigma_floor)
    var = dc.square(sigma_evt)
    resid = dc.square(dc.sub(mu_evt, center))
    return dc.mean_last(dc.add(dc.log(var), dc.div(resid, var)))


def positive_nll(mu_i, sigma_i, mu_j, sigma_j, center, sigma_floor: float = 1e-4) -> Value:
    """Single-event positive NLL from per-node Gaussian outputs."""
    mu = dc.concat(dc._as_value(mu_i), dc._as_value(mu_j))
    sigma = dc.concat(dc._as_value(sigma_i), dc._as_value(sigma_j))
    _check_sigma(sigma.data, sigma_floor)
    var = dc.square(sigma)
    resid = dc.square(dc.sub(mu, dc._as_value(center)))
    return dc.mean(dc.add(dc.log(var), dc.div(resid, var)))


def negative_nll_rows(sigma_evt: Value, mu_hat: np.ndarray, sigma_floor: float = 1e-4) -> Value:
    """Per-negative NLL (1/N) Σ_m [log σ̂_m² + μ̂_m² / σ̂_m²].

    Its sigma-minimizer satisfies σ̂_m² = μ̂_m², pulling the predicted spread
    toward the sampled noise scale.
    """
    _check_sigma(sigma_evt.data, sigma_floor)
    var = dc.square(sigma_evt)
    num = dc.constant(np.asarray(mu_hat, dtype=np.float64) ** 2)
    return dc.mean_last(dc.add(dc.log(var), dc.div(num, var)))


def negative_nll(sigma_v, sigma_w, mu_hat, sigma_floor: float = 1e-4) -> Value:
    sigma = dc.concat(dc._as_value(sigma_v), dc._as_value(sigma_w))
    _check_sigma(sigma.data, sigma_floor)
    var = dc.square(sigma)
    num = dc.constant(np.asarray(mu_hat, dtype=np.float64) ** 2)
    return dc.mean(dc.add(dc.log(var), dc.div(num, var)))


# ---------------------------------------------------------------------------
# center and negative sampling

def init_center(event_embeddings: np.ndarray) -> np.ndarray:
    """Center = mean of the first-batch event embeddings, with components
    inside (−0.01, 0.01) clamped to ±0.01 to avoid the all-zero collapse."""
    embeds = np.atleast_2d(np.asarray(event_embeddings, dtype=np.float64))
    if embeds.size == 0:
        raise ValueError("init_center: need at least one embedding")
    c = embeds.mean(axis=0)
    small = np.abs(c) < 0.01
    c[small] = np.where(c[small] > 0, 0.01, np.where(c[small] < 0, -0.01, 0.01))
    return c


@dataclass
class NegativeBatch:
    """Endpoint-corrupted copies of batch events plus their sampled targets."""

    events: List[Event]
    mu_hat: np.ndarray  # [n_neg, N]


def sample_negatives(batch: Sequence[Event], store: TemporalAdjacencyStore, t_train_max: float,
                     neg_ratio: float, sigma_neg_var: float, event_dim: int,
                     rng: np.random.Generator) -> NegativeBatch:
    """Draw ⌈neg_ratio·|batch|⌉ negatives: batch events with both endpoints
    replaced by uniform draws (with replacement) from F(T_train), and a
    target μ̂ ~ N(0, Σ_neg) per negative.  Negatives never write memory."""
    n_neg = math.ceil(neg_ratio * len(batch))
    if n_neg == 0:
        return NegativeBatch(events=[], mu_hat=np.zeros((0, event_dim)))
    pool = np.array(sorted(store.node_set(t_train_max)))
    if pool.size == 0:
        raise ValueError("sample_negatives: empty node set")
    picks = rng.integers(0, len(batch), size=n_neg)
    v = pool[rng.integers(0, pool.size, size=n_neg)]
    w = pool[rng.integers(0, pool.size, size=n_neg)]
    mu_hat = rng.normal(0.0, math.sqrt(sigma_neg_var), size=(n_neg, event_dim))
    events = [
        replace(batch[int(picks[i])], src=int(v[i]), dst=int(w[i]))
        for i in range(n_neg)
    ]
    return NegativeBatch(events=events, mu_hat=mu_hat)


# ---------------------------------------------------------------------------
# training

@dataclass
class ModelBundle:
    """Everything needed to score events: encoder, center, config echo,
    feature scaler."""

    params: EncoderParams
    center: Value
    train_config: TrainConfig
    scaler: Optional[Scaler] = None

    @property
    def model_name(self) -> str:
        return "tgn_svdd" if self.params.config.head == HEAD_SVDD else "rtgn_svdd"


@dataclass
class TrainResult:
    bundle: ModelBundle
    loss_trace: List[Tuple[int, float, float]] = field(default_factory=list)


def train(train_events: Sequence[Event], node_count: int, encoder_config: EncoderConfig,
          config: TrainConfig, scaler: Optional[Scaler] = None,
          log_fn=None) -> TrainResult:
    """Train either head on a pure-normal stream.

    Per epoch the memory is reset to zeros and the stream replayed in time
    order in batches; the loss is the positive term plus, for the Gaussian
    head, the negative NLL weighted by the realized negative/positive count
    ratio.  The optimizer steps once per batch.  Fully deterministic given
    the config seed.
    """
    config.validate()
    if not train_events:
        raise ValueError("train: empty training split")
    bad = sum(1 for ev in train_events if ev.label != Label.NORMAL)
    if bad:
        raise ContaminatedSplitError(
            f"train: {bad} non-normal events in the training split; the one-class objective "
            f"requires pure normal traffic"
        )

    enc_cfg = replace(encoder_config, sigma_floor=config.sigma_floor)
    gaussian = enc_cfg.head == HEAD_GAUSSIAN
    rng = np.random.default_rng(config.seed)
    params = EncoderParams.init(enc_cfg, rng)

    store = build_store(train_events)
    t0 = train_events[0].t
    t_end = train_events[-1].t
    bank = init_memory(node_count, enc_cfg.d_memory, t0)
    n_events = len(train_events)
    event_dim = enc_cfg.event_dim

    # center from the first batch under the initial parameters, then trainable
    first = train_events[:config.batch_size]
    ts0 = [ev.t for ev in first]
    a_src, _ = embed_nodes([ev.src for ev in first], ts0, bank, store, params)
    a_dst, _ = embed_nodes([ev.dst for ev in first], ts0, bank, store, params)
    center = Value(init_center(np.concatenate([a_src.data, a_dst.data], axis=1)),
                   requires_grad=True)

    trainables = params.trainable() + [center]
    decay_mask = [True] * (len(trainables) - 1) + [False]
    opt = OptimizerState(trainables, lr=config.lr, weight_decay=config.weight_decay,
                         decay_mask=decay_mask)

    loss_trace: List[Tuple[int, float, float]] = []
    for epoch in range(1, config.epochs + 1):
        bank.reset()
        pos_sum = 0.0
        neg_sum = 0.0
        n_neg_total = 0
        for start in range(0, n_events, config.batch_size):
            batch = train_events[start:start + config.batch_size]
            b = len(batch)
            ts = [ev.t for ev in batch]
            with Tape() as tape:
                a_src, s_src = embed_nodes([ev.src for ev in batch], ts, bank, store, params)
                a_dst, s_dst = embed_nodes([ev.dst for ev in batch], ts, bank, store, params)
                if gaussian:
                    mu_evt = dc.rowcat([a_src, a_dst])
                    sig_evt = dc.rowcat([s_src, s_dst])
                    pos_loss = dc.mean(positive_nll_rows(mu_evt, sig_evt, center,
                                                         config.sigma_floor))
                    neg = sample_negatives(batch, store, t_end, config.neg_ratio,
                                           config.sigma_neg_var, event_dim, rng)
                    if neg.events:
                        ts_n = [ev.t for ev in neg.events]
                        _, s_v = embed_nodes([ev.src for ev in neg.events], ts_n, bank, store, params)
                        _, s_w = embed_nodes([ev.dst for ev in neg.events], ts_n, bank, store, params)
                        neg_loss = dc.mean(negative_nll_rows(dc.rowcat([s_v, s_w]), neg.mu_hat,
                                                             config.sigma_floor))
                        loss = dc.add(pos_loss, dc.scale(neg_loss, len(neg.events) / b))
                    else:
                        neg_loss = None
                        loss = pos_loss
                else:
                    evt = dc.rowcat([a_src, a_dst])
                    pos_loss = dc.mean(dc.row_sq_dist(evt, center))
                    neg_loss = None
                    loss = pos_loss
                dc.backward(tape, loss)

            apply_event_updates(batch, bank, params)  # store already holds the stream
            clip_global_norm(trainables, GRAD_CLIP_NORM)
            opt.step()
            opt.zero_grad()

            pos_sum += float(pos_loss.data) * b
            if neg_loss is not None:
                neg_sum += float(neg_loss.data) * len(neg.events)
                n_neg_total += len(neg.events)

        epoch_pos = pos_sum / n_events
        epoch_neg = neg_sum / n_neg_total if n_neg_total else 0.0
        loss_trace.append((epoch, epoch_pos, epoch_neg))
        if log_fn is not None:
            log_fn(f"epoch {epoch}/{config.epochs}: positive {epoch_pos:.6f} negative {epoch_neg:.6f}")

    bundle = ModelBundle(params=params, center=center, train_config=config, scaler=scaler)
    return TrainResult(bundle=bundle, loss_trace=loss_trace)
