"""Binary checkpoint format for parameter stores.

Layout (all integers little-endian unsigned 64-bit):

    magic   8 bytes  b"DIBCKPT1"
    count   u64      number of parameters
    then per parameter, in sorted path order:
        path_len u64, path bytes (utf-8)
        rank     u64, shape dims (u64 each)
        payload  float64 little-endian, C order
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"DIBCKPT1"


class CheckpointError(ValueError):
    """Raised on a malformed or truncated checkpoint file."""


def save_checkpoint(path: str | Path, state: dict[str, np.ndarray]) -> None:
    out = bytearray()
    out += MAGIC
    out += struct.pack("<Q", len(state))
    for name in sorted(state):
        arr = np.ascontiguousarray(state[name], dtype=np.float64)
        encoded = name.encode("utf-8")
        out += struct.pack("<Q", len(encoded))
        out += encoded
        out += struct.pack("<Q", arr.ndim)
        out += struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b""
        out += arr.astype("<f8").tobytes()
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:8]!r}")
    pos = 8

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(raw):
            raise CheckpointError(f"{path}: truncated at byte {pos}")
        chunk = raw[pos:pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<Q", take(8))
    state: dict[str, np.ndarray] = {}
    for _ in range(count):
        (path_len,) = struct.unpack("<Q", take(8))
        name = take(path_len).decode("utf-8")
        (rank,) = struct.unpack("<Q", take(8))
        shape = struct.unpack(f"<{rank}Q", take(8 * rank)) if rank else ()
        n_items = int(np.prod(shape)) if shape else 1
        payload = take(8 * n_items)
        arr = np.frombuffer(payload, dtype="<f8").astype(np.float64)
        state[name] = arr.reshape(shape)
    if pos != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - pos} trailing bytes")
    return state
