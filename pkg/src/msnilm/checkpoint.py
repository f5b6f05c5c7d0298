"""Binary checkpoint container.

Layout (all integers little-endian)::

    offset  size  field
    0       8     magic b"MSNILMCK"
    8       2     format version (uint16, currently 1)
    10      4     header length H (uint32)
    14      H     UTF-8 JSON header
    14+H    ...   parameter payload

The header holds ``model`` (the model config dict, including ``kind``),
``meta`` (free-form, e.g. seed and config digest) and ``tensors``: a list of
``{"name", "shape", "dtype", "offset", "nbytes"}`` entries whose offsets are
relative to the start of the payload. ``dtype`` is ``"<f4"`` or ``"<f8"``
and values are stored C-ordered.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from msnilm.model import build_model, config_from_dict

MAGIC = b"MSNILMCK"
VERSION = 1
_PREFIX = struct.Struct("<8sHI")


class CheckpointError(ValueError):
    pass


def config_digest(*configs: dict) -> str:
    """Stable short hash of one or more config dicts."""
    blob = json.dumps(list(configs), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save_checkpoint(path, model, meta: Optional[dict] = None) -> None:
    entries, chunks, offset = [], [], 0
    for name, p in model.named_parameters():
        arr = np.ascontiguousarray(p.data)
        raw = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        entries.append(
            {"name": name, "shape": list(arr.shape), "dtype": arr.dtype.newbyteorder("<").str,
             "offset": offset, "nbytes": len(raw)}
        )
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"model": model.config.to_dict(), "meta": meta or {}, "tensors": entries}, sort_keys=True
    ).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(header)))
        fh.write(header)
        for c in chunks:
            fh.write(c)
    tmp.replace(path)


def read_checkpoint(path) -> Tuple[dict, dict]:
    """Return ``(header, {name: array})`` without building a model."""
    blob = Path(path).read_bytes()
    if len(blob) < _PREFIX.size:
        raise CheckpointError(f"{path}: truncated checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(blob, 0)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic {magic!r})")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    start = _PREFIX.size + hlen
    header = json.loads(blob[_PREFIX.size:start].decode("utf-8"))
    tensors = {}
    for e in header["tensors"]:
        lo = start + e["offset"]
        raw = blob[lo : lo + e["nbytes"]]
        if len(raw) != e["nbytes"]:
            raise CheckpointError(f"{path}: payload for {e['name']} is truncated")
        tensors[e["name"]] = np.frombuffer(raw, dtype=np.dtype(e["dtype"])).reshape(e["shape"]).copy()
    return header, tensors


def load_checkpoint(path):
    """Rebuild the model stored at ``path``; returns ``(model, meta)``."""
    header, tensors = read_checkpoint(path)
    model = build_model(config_from_dict(header["model"]), seed=None)
    params = dict(model.named_parameters())
    if set(params) != set(tensors):
        missing = sorted(set(params) ^ set(tensors))
        raise CheckpointError(f"{path}: parameter names do not match the config: {missing[:5]}")
    for name, p in params.items():
        arr = tensors[name]
        if arr.shape != p.shape:
            raise CheckpointError(f"{path}: {name} has shape {arr.shape}, expected {p.shape}")
        p.data = arr.astype(p.dtype, copy=False)
    return model, header.get("meta", {})
