"""Versioned binary model file: config block, standardization, parameter tensors.

Layout (little-endian):

    magic "SRSMDL01" (8 bytes)
    config_len u32 | config JSON utf-8 (model + train config, history, best epoch)
    mean f32[input_dim] | std f32[input_dim]
    n_tensors u32
    tensor*: name_len u16 | name utf-8 | ndim u8 | dims u32* | data f32
"""

from __future__ import annotations

import json
import os
import struct
from typing import BinaryIO

import numpy as np

from srspla.authenticators.network import SeResNet1dConfig
from srspla.authenticators.training import TrainConfig, TrainedModel

MAGIC = b"SRSMDL01"


class ModelFileError(Exception):
    pass


def _write_tensor(fh: BinaryIO, name: str, arr: np.ndarray) -> None:
    encoded = name.encode()
    fh.write(struct.pack("<H", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<B", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_tensor(fh: BinaryIO) -> tuple[str, np.ndarray]:
    name_len, = struct.unpack("<H", fh.read(2))
    name = fh.read(name_len).decode()
    ndim, = struct.unpack("<B", fh.read(1))
    dims = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
    count = int(np.prod(dims)) if ndim else 1
    data = np.frombuffer(fh.read(4 * count), dtype="<f4").reshape(dims)
    return name, data.copy()


def save_model(path: str, model: TrainedModel) -> None:
    config = {
        "model": model.model_config.to_dict(),
        "train": model.train_config.to_dict(),
        "history": model.history,
        "best_epoch": model.best_epoch,
        "best_val_accuracy": model.best_val_accuracy,
    }
    blob = json.dumps(config, sort_keys=True).encode()
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(np.asarray(model.feat_mean, dtype="<f4").tobytes())
        fh.write(np.asarray(model.feat_std, dtype="<f4").tobytes())
        names = sorted(model.state)
        fh.write(struct.pack("<I", len(names)))
        for name in names:
            _write_tensor(fh, name, model.state[name])
    os.replace(tmp, path)


def load_model(path: str) -> TrainedModel:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ModelFileError(f"{path}: bad magic")
        config_len, = struct.unpack("<I", fh.read(4))
        config = json.loads(fh.read(config_len).decode())
        model_config = SeResNet1dConfig.from_dict(config["model"])
        train_config = TrainConfig.from_dict(config["train"])
        dim = model_config.input_dim
        mean = np.frombuffer(fh.read(4 * dim), dtype="<f4").copy()
        std = np.frombuffer(fh.read(4 * dim), dtype="<f4").copy()
        n_tensors, = struct.unpack("<I", fh.read(4))
        state = {}
        for _ in range(n_tensors):
            name, arr = _read_tensor(fh)
            state[name] = arr
    return TrainedModel(
        model_config=model_config,
        train_config=train_config,
        state=state,
        feat_mean=mean,
        feat_std=std,
        history=config["history"],
        best_epoch=config["best_epoch"],
        best_val_accuracy=config["best_val_accuracy"],
    )
