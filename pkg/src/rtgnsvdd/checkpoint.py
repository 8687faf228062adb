"""Versioned binary checkpoint format.

Layout (all integers little-endian):

    magic   8 bytes  b"RTGNSVDD"
    version u32      currently 1
    header  5 × u32  d_memory, d_time, d_embed, n_features, n_neighbors
    count   u32      number of named blocks
    blocks  repeated: u16 name length, name (UTF-8), u8 ndim,
                      ndim × u32 dims, float64 data (little-endian)

Every block is a float64 array; scalars (head kind, config echo) are
0-d blocks.  Block order is fixed, so identical models serialize to
identical bytes.
"""

from __future__ import annotations

import struct
from typing import Dict, List, Tuple

import numpy as np

from .data import Scaler
from .diffcore import GruParams, Value
from .encoder import HEAD_GAUSSIAN, HEAD_SVDD, EncoderConfig, EncoderParams
from .heads import ModelBundle, TrainConfig

MAGIC = b"RTGNSVDD"
VERSION = 1

_HEAD_CODES = {HEAD_SVDD: 0.0, HEAD_GAUSSIAN: 1.0}
_HEAD_NAMES = {0.0: HEAD_SVDD, 1.0: HEAD_GAUSSIAN}

_CFG_FIELDS = ("lr", "weight_decay", "epochs", "batch_size", "neg_ratio",
               "sigma_neg_var", "sigma_floor", "seed")


class CheckpointError(ValueError):
    """Unreadable or incompatible checkpoint file."""


def _pack_block(name: str, arr: np.ndarray) -> bytes:
    raw = name.encode("utf-8")
    # note: ascontiguousarray would promote 0-d scalars to 1-d blocks
    data = np.asarray(arr, dtype="<f8", order="C")
    out = struct.pack("<H", len(raw)) + raw + struct.pack("<B", data.ndim)
    for dim in data.shape:
        out += struct.pack("<I", dim)
    return out + data.tobytes()


def save_checkpoint(path, bundle: ModelBundle) -> None:
    params = bundle.params
    cfg = params.config
    blocks: List[Tuple[str, np.ndarray]] = [
        ("meta_head_kind", np.asarray(_HEAD_CODES[cfg.head])),
        ("meta_d_hidden", np.asarray(float(cfg.d_hidden))),
    ]
    for fname in _CFG_FIELDS:
        blocks.append((f"cfg_{fname}", np.asarray(float(getattr(bundle.train_config, fname)))))
    blocks.append(("center", bundle.center.data))
    if bundle.scaler is not None:
        blocks.append(("scaler_mean", bundle.scaler.mean))
        blocks.append(("scaler_std", bundle.scaler.std))
    blocks.extend((name, v.data) for name, v in params.named_values())

    payload = MAGIC + struct.pack("<I", VERSION)
    payload += struct.pack(
        "<5I", cfg.d_memory, cfg.d_time, cfg.d_embed, cfg.n_features, cfg.n_neighbors
    )
    payload += struct.pack("<I", len(blocks))
    for name, arr in blocks:
        payload += _pack_block(name, arr)
    with open(path, "wb") as fh:
        fh.write(payload)


def _read_exact(fh, n: int, what: str) -> bytes:
    raw = fh.read(n)
    if len(raw) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return raw


def load_checkpoint(path) -> ModelBundle:
    with open(path, "rb") as fh:
        if _read_exact(fh, 8, "magic") != MAGIC:
            raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        d_memory, d_time, d_embed, n_features, n_neighbors = struct.unpack(
            "<5I", _read_exact(fh, 20, "dimension header")
        )
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "block count"))
        blocks: Dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "block name length"))
            name = _read_exact(fh, name_len, "block name").decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1, "block ndim"))
            shape = tuple(
                struct.unpack("<I", _read_exact(fh, 4, "block dim"))[0] for _ in range(ndim)
            )
            n_items = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(_read_exact(fh, 8 * n_items, f"block {name}"), dtype="<f8")
            blocks[name] = data.reshape(shape).astype(np.float64)

    def take(name: str) -> np.ndarray:
        if name not in blocks:
            raise CheckpointError(f"{path}: missing block {name!r}")
        return blocks[name]

    head = _HEAD_NAMES.get(float(take("meta_head_kind")))
    if head is None:
        raise CheckpointError(f"{path}: unknown head kind")
    cfg = EncoderConfig(
        n_features=n_features, d_memory=d_memory, d_time=d_time, d_embed=d_embed,
        d_hidden=int(float(take("meta_d_hidden"))), n_neighbors=n_neighbors, head=head,
        sigma_floor=float(take("cfg_sigma_floor")),
    )
    train_cfg = TrainConfig(
        lr=float(take("cfg_lr")),
        weight_decay=float(take("cfg_weight_decay")),
        epochs=int(float(take("cfg_epochs"))),
        batch_size=int(float(take("cfg_batch_size"))),
        neg_ratio=float(take("cfg_neg_ratio")),
        sigma_neg_var=float(take("cfg_sigma_neg_var")),
        sigma_floor=float(take("cfg_sigma_floor")),
        seed=int(float(take("cfg_seed"))),
    )

    def val(name: str, requires_grad: bool = True) -> Value:
        return Value(take(name).copy(), requires_grad=requires_grad)

    gru = GruParams(
        wz=val("gru_wz"), uz=val("gru_uz"), bz=val("gru_bz"),
        wr=val("gru_wr"), ur=val("gru_ur"), br=val("gru_br"),
        wh=val("gru_wh"), uh=val("gru_uh"), bh=val("gru_bh"),
    )
    head_names = ("w_out", "b_out") if head == HEAD_SVDD else ("b_mu", "b_sigma", "w_mu", "w_sigma")
    params = EncoderParams(
        cfg,
        omega=val("time_omega"), phi=val("time_phi"), gru=gru,
        w1=val("mlp_w1"), b1=val("mlp_b1"), w2=val("mlp_w2"), b2=val("mlp_b2"),
        head_values={name: val(name) for name in head_names},
    )
    scaler = None
    if "scaler_mean" in blocks:
        scaler = Scaler(mean=take("scaler_mean").copy(), std=take("scaler_std").copy())
    return ModelBundle(params=params, center=val("center"), train_config=train_cfg, scaler=scaler)
