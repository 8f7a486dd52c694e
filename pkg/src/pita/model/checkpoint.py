"""Binary checkpoint container.

Layout (all integers little-endian)::

    bytes 0-3   magic b"PITA"
    bytes 4-7   uint32 format version (currently 1)
    bytes 8-11  uint32 length N of the JSON header
    next N      UTF-8 JSON header: model_config, pos_scale, speed_scale, step,
                loss_config (or null), optimizer hyperparameters (or null)
    rest        float64 little-endian parameters in declaration order
                (encoder then decoder, weight then bias per layer, row-major);
                if the optimizer entry is present, Adam first moments then
                second moments follow in the same order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from pita.errors import SchemaError
from pita.loss import LossConfig, PhysicalLossWeights
from pita.model.network import Autoencoder, ModelConfig, ModelParams
from pita.model.optim import AdamState

MAGIC = b"PITA"
VERSION = 1


@dataclass
class Checkpoint:
    model: Autoencoder
    step: int = 0
    loss_config: LossConfig | None = None
    adam: AdamState | None = None


def _pack(arrays) -> bytes:
    return b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)


def save_checkpoint(path, checkpoint: Checkpoint) -> None:
    model = checkpoint.model
    adam = checkpoint.adam
    header = {
        "model_config": model.config.to_dict(),
        "pos_scale": model.pos_scale,
        "speed_scale": model.speed_scale,
        "step": checkpoint.step,
        "loss_config": asdict(checkpoint.loss_config) if checkpoint.loss_config else None,
        "optimizer": None
        if adam is None
        else {"lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps, "step": adam.step},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    arrays = model.params.arrays()
    payload = _pack(arrays)
    if adam is not None:
        payload += _pack(adam.m) + _pack(adam.v)
    Path(path).write_bytes(MAGIC + struct.pack("<II", VERSION, len(blob)) + blob + payload)


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise SchemaError(f"{path}: not a checkpoint (bad magic)")
    if len(raw) < 12:
        raise SchemaError(f"{path}: truncated header")
    version, n = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise SchemaError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[12 : 12 + n].decode("utf-8"))
    config = ModelConfig(**header["model_config"])
    shapes = []
    for fi, fo in config.layer_shapes():
        shapes += [(fi, fo), (fo,)]
    sizes = [int(np.prod(s)) for s in shapes]
    total = sum(sizes)
    opt = header.get("optimizer")
    expected = total * (3 if opt else 1)
    data = np.frombuffer(raw, dtype="<f8", offset=12 + n)
    if data.size != expected:
        raise SchemaError(f"{path}: expected {expected} float64 values, found {data.size}")

    def unpack(block):
        out, pos = [], block * total
        for shape, size in zip(shapes, sizes):
            out.append(data[pos : pos + size].astype(np.float64).reshape(shape))
            pos += size
        return out

    model = Autoencoder(config, ModelParams.from_arrays(unpack(0)), header["pos_scale"], header["speed_scale"])
    loss_config = None
    if header.get("loss_config"):
        lc = dict(header["loss_config"])
        lc["weights"] = PhysicalLossWeights(**lc["weights"])
        loss_config = LossConfig(**lc)
    adam = None
    if opt:
        adam = AdamState(unpack(1), unpack(2), opt["step"], opt["lr"], opt["beta1"], opt["beta2"], opt["eps"])
    return Checkpoint(model, header["step"], loss_config, adam)
