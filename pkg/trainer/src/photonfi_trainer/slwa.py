"""Standalone SLWA archive writer (and reader, for round-trip checks).

This is an independent implementation of the simulator's archive format —
the binary layout is the contract between the two packages, and keeping two
implementations honest against each other guards the format doc itself.

Layout (little-endian): magic ``SLWA``; u16 version (1); u32 manifest
length + UTF-8 JSON manifest; u32 tensor count; per tensor u16 name length
+ name, u8 rank, u32 dims, float32 LE payload.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"SLWA"
VERSION = 1


def write_archive(path: str, manifest: dict, tensors: dict) -> None:
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<H", VERSION)
    out += struct.pack("<I", len(blob))
    out += blob
    out += struct.pack("<I", len(tensors))
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        nb = name.encode("utf-8")
        out += struct.pack("<H", len(nb))
        out += nb
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    with open(path, "wb") as f:
        f.write(bytes(out))


def read_archive(path: str) -> tuple[dict, dict]:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise ValueError("not an SLWA archive")
    version, = struct.unpack("<H", data[4:6])
    if version != VERSION:
        raise ValueError(f"unsupported version {version}")
    mlen, = struct.unpack("<I", data[6:10])
    pos = 10
    manifest = json.loads(data[pos:pos + mlen].decode("utf-8"))
    pos += mlen
    count, = struct.unpack("<I", data[pos:pos + 4])
    pos += 4
    tensors = {}
    for _ in range(count):
        nlen, = struct.unpack("<H", data[pos:pos + 2])
        pos += 2
        name = data[pos:pos + nlen].decode("utf-8")
        pos += nlen
        rank = data[pos]
        pos += 1
        dims = struct.unpack(f"<{rank}I", data[pos:pos + 4 * rank])
        pos += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        tensors[name] = np.frombuffer(data[pos:pos + 4 * n], dtype="<f4").reshape(dims).copy()
        pos += 4 * n
    return manifest, tensors
