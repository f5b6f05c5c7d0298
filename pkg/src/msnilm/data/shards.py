"""Sample shard files.

Layout (little-endian)::

    header   magic b"MSNILMSH" (8 bytes) | version uint16 | record count uint32
    record   length L uint32 | scale float64 | flags uint8 | act_len uint32 | start uint64
             | aggregate L x float32 | appliance L x float32

``flags`` carries the provenance bits of :mod:`msnilm.data.sampling`
(1 positive, 2 training split, 4 filtering rule applied).
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import List, Sequence

import numpy as np

from msnilm.data.sampling import SamplePair

MAGIC = b"MSNILMSH"
VERSION = 1
_HEAD = struct.Struct("<8sHI")
_REC = struct.Struct("<IdBIQ")


class ShardError(ValueError):
    pass


def write_shard(path, pairs: Sequence[SamplePair]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(MAGIC, VERSION, len(pairs)))
        for p in pairs:
            fh.write(_REC.pack(p.window_length, float(p.scale), p.flags, p.act_len, p.start))
            fh.write(np.asarray(p.aggregate, dtype="<f4").tobytes())
            fh.write(np.asarray(p.appliance, dtype="<f4").tobytes())


def read_shard(path) -> List[SamplePair]:
    blob = Path(path).read_bytes()
    if len(blob) < _HEAD.size:
        raise ShardError(f"{path}: truncated shard header")
    magic, version, count = _HEAD.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ShardError(f"{path}: not a shard file")
    if version != VERSION:
        raise ShardError(f"{path}: unsupported shard version {version}")
    pos = _HEAD.size
    pairs = []
    for i in range(count):
        if pos + _REC.size > len(blob):
            raise ShardError(f"{path}: record {i} is truncated")
        L, scale, flags, act_len, start = _REC.unpack_from(blob, pos)
        pos += _REC.size
        nbytes = 4 * L
        if pos + 2 * nbytes > len(blob):
            raise ShardError(f"{path}: record {i} payload is truncated")
        agg = np.frombuffer(blob, dtype="<f4", count=L, offset=pos).astype(np.float32)
        app = np.frombuffer(blob, dtype="<f4", count=L, offset=pos + nbytes).astype(np.float32)
        pos += 2 * nbytes
        pairs.append(SamplePair(agg, app, scale, start, act_len, flags, normalized=True))
    return pairs


def pairs_to_arrays(pairs: Sequence[SamplePair]):
    """Stack pairs of equal window length into ``(x, y, scale)`` arrays."""
    if not pairs:
        raise ShardError("no sample pairs")
    lengths = {p.window_length for p in pairs}
    if len(lengths) != 1:
        raise ShardError(f"mixed window lengths {sorted(lengths)}")
    x = np.stack([p.aggregate for p in pairs]).astype(np.float32)
    y = np.stack([p.appliance for p in pairs]).astype(np.float32)
    scale = np.array([p.scale for p in pairs], dtype=np.float64)
    return x, y, scale
