"""Binary array files (``.stba``) and 8-bit PGM snapshots."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"STBA"
VERSION = 1


def write_array(path, arr) -> None:
    """Header: magic, version byte, ndim byte, ``ndim`` u64 dims; then f64 payload, all little-endian."""
    a = np.ascontiguousarray(arr, dtype="<f8")
    if a.ndim > 255:
        raise ValueError("too many dimensions")
    head = MAGIC + struct.pack("<BB", VERSION, a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    Path(path).write_bytes(head + a.tobytes(order="C"))


def read_array(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not an array file")
    version, ndim = struct.unpack_from("<BB", raw, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    dims = struct.unpack_from(f"<{ndim}Q", raw, 6)
    off = 6 + 8 * ndim
    n = int(np.prod(dims, dtype=np.int64))
    if len(raw) - off != 8 * n:
        raise ValueError(f"{path}: payload is {len(raw) - off} bytes, expected {8 * n}")
    return np.frombuffer(raw, dtype="<f8", offset=off, count=n).reshape(dims).astype(float)


def to_gray(img) -> np.ndarray:
    """Linear map min -> 0, max -> 255; a constant image becomes 128."""
    a = np.asarray(img, dtype=float)
    lo, hi = a.min(), a.max()
    if hi == lo:
        return np.full(a.shape, 128, dtype=np.uint8)
    return np.rint((a - lo) / (hi - lo) * 255).astype(np.uint8)


def write_pgm(path, img) -> None:
    """Binary P5 PGM. ``img`` is indexed ``[x, y]``; rows of the file run top (max y) to bottom."""
    g = to_gray(np.asarray(img).T[::-1])
    h, w = g.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + g.tobytes())


def read_pgm(path) -> np.ndarray:
    """Inverse of :func:`write_pgm` up to the gray-level mapping, returned as uint8 ``[x, y]``."""
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h = int(parts[1]), int(parts[2])
    data = np.frombuffer(raw[-w * h:], dtype=np.uint8).reshape(h, w)
    return data[::-1].T
