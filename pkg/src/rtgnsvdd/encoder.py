"""TGN-style temporal encoder.

Per-node memory is updated by a GRU after every event; embeddings combine
the node's pre-event memory, a harmonic time encoding and a mean aggregate
over its most recent incident events.  The output head is either a point
embedding (deterministic baseline) or a (mu, sigma) pair (probabilistic
head), selected by config.

Training semantics: embeddings of a batch are computed from the memory
state at the start of the batch, then all memory updates of the batch are
applied in event order.  Gradients never flow through stored memory — the
memory entering a batch is a constant input — so the tape stays bounded
regardless of stream length.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels as K
from . import diffcore as dc
from .ctdg import Event, TemporalAdjacencyStore
from .diffcore import GruParams, Value

HEAD_SVDD = "svdd"
HEAD_GAUSSIAN = "gaussian"


@dataclass
class EncoderConfig:
    n_features: int
    d_memory: int = 32
    d_time: int = 8
    d_embed: int = 32
    d_hidden: int = 64
    n_neighbors: int = 10
    head: str = HEAD_GAUSSIAN
    sigma_floor: float = 1e-4

    @property
    def msg_dim(self) -> int:
        return 2 * self.d_memory + self.d_time + self.n_features

    @property
    def agg_dim(self) -> int:
        return self.d_memory + self.d_time + self.n_features

    @property
    def event_dim(self) -> int:
        """Dimension of a concatenated event embedding (2 * d_embed)."""
        return 2 * self.d_embed

    def validate(self) -> None:
        if self.head not in (HEAD_SVDD, HEAD_GAUSSIAN):
            raise ValueError(f"unknown head {self.head!r}")
        for name in ("n_features", "d_memory", "d_time", "d_embed", "d_hidden", "n_neighbors"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.sigma_floor <= 0:
            raise ValueError("sigma_floor must be positive")


@dataclass
class NodeEmbedding:
    z: np.ndarray


@dataclass
class GaussianNodeEmbedding:
    mu: np.ndarray
    sigma: np.ndarray


class MemoryBank:
    """Per-node memory vectors with last-update timestamps.

    Unseen nodes carry zero memory and last_update = t_start (the first
    train timestamp).
    """

    def __init__(self, node_count: int, d_memory: int, t_start: float):
        if node_count < 0:
            raise ValueError("node_count must be >= 0")
        self.h = np.zeros((node_count, d_memory))
        self.last_update = np.full(node_count, t_start, dtype=np.float64)
        self.t_start = t_start

    @property
    def node_count(self) -> int:
        return self.h.shape[0]

    def reset(self) -> None:
        self.h[:] = 0.0
        self.last_update[:] = self.t_start

    def snapshot(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.h.copy(), self.last_update.copy()

    def restore(self, snap: Tuple[np.ndarray, np.ndarray]) -> None:
        self.h[:] = snap[0]
        self.last_update[:] = snap[1]

    def state_hash(self) -> str:
        digest = hashlib.sha256()
        digest.update(self.h.tobytes())
        digest.update(self.last_update.tobytes())
        return digest.hexdigest()


def init_memory(node_count: int, d_memory: int, t_start: float = 0.0) -> MemoryBank:
    return MemoryBank(node_count, d_memory, t_start)


class EncoderParams:
    """All trainable encoder parameters, in a fixed named order."""

    def __init__(self, config: EncoderConfig, omega: Value, phi: Value, gru: GruParams,
                 w1: Value, b1: Value, w2: Value, b2: Value, head_values: dict):
        config.validate()
        self.config = config
        self.omega = omega
        self.phi = phi
        self.gru = gru
        self.w1, self.b1, self.w2, self.b2 = w1, b1, w2, b2
        self.head_values = head_values  # name -> Value, per head kind

    @classmethod
    def init(cls, config: EncoderConfig, rng: np.random.Generator) -> "EncoderParams":
        config.validate()

        def mat(rows, cols):
            a = np.sqrt(6.0 / (rows + cols))
            return Value(rng.uniform(-a, a, size=(rows, cols)), requires_grad=True)

        def vec(size, fill=0.0):
            return Value(np.full(size, fill, dtype=np.float64), requires_grad=True)

        # log-spaced harmonic frequencies spanning second-to-dataset scales
        omega = Value(10.0 ** (-np.linspace(0.0, 5.0, config.d_time)), requires_grad=True)
        phi = vec(config.d_time)
        gru = GruParams.init(config.d_memory, config.msg_dim, rng)
        d_in = config.d_memory + config.agg_dim
        w1, b1 = mat(config.d_hidden, d_in), vec(config.d_hidden)
        w2, b2 = mat(config.d_hidden, config.d_hidden), vec(config.d_hidden)
        if config.head == HEAD_SVDD:
            head = {"w_out": mat(config.d_embed, config.d_hidden), "b_out": vec(config.d_embed)}
        else:
            head = {
                "w_mu": mat(config.d_embed, config.d_hidden),
                "b_mu": vec(config.d_embed),
                "w_sigma": mat(config.d_embed, config.d_hidden),
                # softplus(0.5413) = 1.0: sigma starts neutral
                "b_sigma": vec(config.d_embed, fill=float(np.log(np.e - 1.0))),
            }
        return cls(config, omega, phi, gru, w1, b1, w2, b2, head)

    def named_values(self) -> List[Tuple[str, Value]]:
        base = [
            ("time_omega", self.omega), ("time_phi", self.phi),
            ("gru_wz", self.gru.wz), ("gru_uz", self.gru.uz), ("gru_bz", self.gru.bz),
            ("gru_wr", self.gru.wr), ("gru_ur", self.gru.ur), ("gru_br", self.gru.br),
            ("gru_wh", self.gru.wh), ("gru_uh", self.gru.uh), ("gru_bh", self.gru.bh),
            ("mlp_w1", self.w1), ("mlp_b1", self.b1),
            ("mlp_w2", self.w2), ("mlp_b2", self.b2),
        ]
        base += sorted(self.head_values.items())
        return base

    def trainable(self) -> List[Value]:
        return [v for _, v in self.named_values()]


def time_encode(delta_t, params: EncoderParams) -> Value:
    """cos(ω·Δt + φ) per channel, bounded in [-1, 1].

    A negative Δt means a clock regression upstream and is rejected.
    """
    dt = np.asarray(delta_t, dtype=np.float64)
    if not np.all(np.isfinite(dt)) or np.any(dt < 0):
        raise ValueError(f"delta_t must be finite and >= 0, got {delta_t}")
    return dc.time_encode_values(dt, params.omega, params.phi)


def compute_messages(event: Event, bank: MemoryBank, params: EncoderParams) -> Tuple[np.ndarray, np.ndarray]:
    """Raw GRU inputs for both endpoints, from pre-event memory.

    msg_src = h_src ⊕ h_dst ⊕ te(t − last_update(src)) ⊕ f; msg_dst swaps
    the roles.  Both use the bank state before either endpoint update.
    """
    cfg = params.config
    if event.features.shape[0] != cfg.n_features:
        raise ValueError(
            f"event features have dim {event.features.shape[0]}, expected {cfg.n_features}"
        )
    h_src = bank.h[event.src]
    h_dst = bank.h[event.dst]
    te_src = K.time_encode_fwd(event.t - bank.last_update[event.src], params.omega.data, params.phi.data)
    te_dst = K.time_encode_fwd(event.t - bank.last_update[event.dst], params.omega.data, params.phi.data)
    msg_src = np.concatenate([h_src, h_dst, te_src, event.features])
    msg_dst = np.concatenate([h_dst, h_src, te_dst, event.features])
    return msg_src, msg_dst


def update_memory(bank: MemoryBank, node: int, msg: np.ndarray, params: EncoderParams, t: float) -> None:
    """h_node <- GRU(h_node, msg); purely numeric, never on the tape."""
    if t < bank.last_update[node]:
        raise ValueError(
            f"time regression for node {node}: event at {t} before last update "
            f"{bank.last_update[node]}"
        )
    p = params.gru
    h_new, _, _, _ = K.gru_fwd(
        bank.h[node], msg,
        p.wz.data, p.uz.data, p.bz.data,
        p.wr.data, p.ur.data, p.br.data,
        p.wh.data, p.uh.data, p.bh.data,
    )
    bank.h[node] = h_new
    bank.last_update[node] = t


def embed_nodes(node_ids: Sequence[int], ts: Sequence[float], bank: MemoryBank,
                store: TemporalAdjacencyStore, params: EncoderParams):
    """Embed a batch of (node, t) queries with the current memory state.

    Returns (z, None) for the point head or (mu, sigma) for the Gaussian
    head, each a Value of shape [B, d_embed].  The neighbor aggregate is the
    mean over the K most recent incident events of
    [h_neighbor ⊕ te(t − t') ⊕ f']; rows without neighbors aggregate to
    zero.  Memory rows and neighbor data enter as constants — gradients flow
    only through the time encoding, the MLP and the head.
    """
    cfg = params.config
    b = len(node_ids)
    mean_h = np.zeros((b, cfg.d_memory))
    mean_f = np.zeros((b, cfg.n_features))
    dts: List[float] = []
    weights: List[Tuple[int, int, float]] = []
    for row, (node, t) in enumerate(zip(node_ids, ts)):
        hits = store.neighbors(node, t, cfg.n_neighbors)
        if not hits:
            continue
        inv = 1.0 / len(hits)
        for hit in hits:
            mean_h[row] += bank.h[hit.other]
            mean_f[row] += hit.event.features
            weights.append((row, len(dts), inv))
            dts.append(t - hit.event.t)
        mean_h[row] *= inv
        mean_f[row] *= inv

    if dts:
        pool = np.zeros((b, len(dts)))
        for row, col, inv in weights:
            pool[row, col] = inv
        te_rows = dc.time_encode_values(np.asarray(dts), params.omega, params.phi)
        te_mean = dc.matmul(dc.constant(pool), te_rows)
    else:
        te_mean = dc.constant(np.zeros((b, cfg.d_time)))

    h_self = dc.constant(bank.h[np.asarray(node_ids, dtype=np.intp)])
    inp = dc.rowcat([h_self, dc.constant(mean_h), te_mean, dc.constant(mean_f)])
    hidden = dc.tanh(dc.linear(inp, params.w1, params.b1))
    raw = dc.linear(hidden, params.w2, params.b2)

    if cfg.head == HEAD_SVDD:
        z = dc.linear(raw, params.head_values["w_out"], params.head_values["b_out"])
        return z, None
    mu = dc.linear(raw, params.head_values["w_mu"], params.head_values["b_mu"])
    sigma = dc.maximum(
        dc.softplus(dc.linear(raw, params.head_values["w_sigma"], params.head_values["b_sigma"])),
        cfg.sigma_floor,
    )
    return mu, sigma


def embed_node(node: int, t: float, bank: MemoryBank, store: TemporalAdjacencyStore,
               params: EncoderParams):
    """Single-node embedding with the memory state before any update at t."""
    a, s = embed_nodes([node], [t], bank, store, params)
    if s is None:
        return NodeEmbedding(z=a.data[0].copy())
    return GaussianNodeEmbedding(mu=a.data[0].copy(), sigma=s.data[0].copy())


def apply_event_updates(events: Sequence[Event], bank: MemoryBank, params: EncoderParams,
                        store: Optional[TemporalAdjacencyStore] = None) -> None:
    """Apply both memory updates per event, in event order; optionally insert
    each event into the store afterwards."""
    for ev in events:
        msg_src, msg_dst = compute_messages(ev, bank, params)
        update_memory(bank, ev.src, msg_src, params, ev.t)
        update_memory(bank, ev.dst, msg_dst, params, ev.t)
        if store is not None:
            store.insert_event(ev)


def process_batch(events: Sequence[Event], bank: MemoryBank, store: TemporalAdjacencyStore,
                  params: EncoderParams, insert: bool = True):
    """Embed every event's endpoints with pre-batch memory, then apply the
    memory updates and (optionally) insert the events into the store.

    With batch size 1 this is exactly per-event processing: embed with
    pre-event state, then update.  Returns (src_out, dst_out), each as
    returned by embed_nodes.
    """
    ts = [ev.t for ev in events]
    if any(ts[i] > ts[i + 1] for i in range(len(ts) - 1)):
        raise ValueError("process_batch requires a time-ordered batch")
    src_out = embed_nodes([ev.src for ev in events], ts, bank, store, params)
    dst_out = embed_nodes([ev.dst for ev in events], ts, bank, store, params)
    apply_event_updates(events, bank, params, store if insert else None)
    return src_out, dst_out
