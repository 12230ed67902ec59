"""Deterministic flat checkpoint archive.

Layout: an 8-byte magic, a little-endian uint64 header length, a JSON
header naming the model configuration and the parameter table (sorted by
name, each with its shape), then the raw little-endian float64 buffers in
table order. Writing the same state twice yields identical bytes, and a
load/save round trip is byte-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .model import QualityModel
from .profiles import profile_from_dict

MAGIC = b"FQCKPT01"


def save_checkpoint(path, config: dict, params: dict[str, np.ndarray]) -> bytes:
    names = sorted(params)
    table = [{"name": n, "shape": list(np.asarray(params[n]).shape)} for n in names]
    header = json.dumps({"config": config, "params": table},
                        sort_keys=True, separators=(",", ":")).encode()
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<Q", len(header))
    blob += header
    for n in names:
        arr = np.ascontiguousarray(np.asarray(params[n], dtype=np.float64))
        blob += arr.astype("<f8", copy=False).tobytes()
    data = bytes(blob)
    Path(path).write_bytes(data)
    return data


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ConfigError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + hlen].decode())
    offset = 16 + hlen
    params: dict[str, np.ndarray] = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape)
        params[entry["name"]] = arr.astype(np.float64)
        offset += count * 8
    if offset != len(raw):
        raise ConfigError(f"{path}: trailing bytes in checkpoint")
    return header["config"], params


def save_model(path, model: QualityModel, extra: dict | None = None) -> bytes:
    config = {"profile": json.loads(model.profile.to_json())}
    if extra:
        config.update(extra)
    return save_checkpoint(path, config, model.state_dict())


def load_model(path) -> tuple[QualityModel, dict]:
    config, params = load_checkpoint(path)
    profile = profile_from_dict(config["profile"])
    model = QualityModel(profile, seed=0)
    model.load_state_dict(params)
    return model, config
