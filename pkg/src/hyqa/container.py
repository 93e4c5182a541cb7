"""Versioned binary container shared by all persisted artifacts.

Layout (little-endian throughout):

    magic   4 bytes  b"HYQA"
    version u16
    kind    u8 length + ascii bytes (e.g. "sparse", "dense", "encoder")
    meta    u32 length + UTF-8 JSON (sort_keys, so rebuilds are byte-identical)
    arrays  u32 count, then per array:
              name  u16 length + ascii
              dtype u16 length + ascii numpy dtype string
              ndim  u8, dims as u64 each
              data  raw little-endian bytes, row-major

Blobs (opaque byte strings, e.g. varint postings) ride along as uint8
arrays.
"""

from __future__ import annotations

import json
import struct
from typing import Any

import numpy as np

MAGIC = b"HYQA"
VERSION = 1


class ContainerError(Exception):
    """Raised on malformed or mismatched container files."""


def save(path, kind: str, meta: dict[str, Any], arrays: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<H", VERSION))
        kb = kind.encode("ascii")
        f.write(struct.pack("<B", len(kb)))
        f.write(kb)
        mb = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
        f.write(struct.pack("<I", len(mb)))
        f.write(mb)
        f.write(struct.pack("<I", len(arrays)))
        for name in sorted(arrays):
            arr = np.ascontiguousarray(arrays[name])
            if arr.dtype.byteorder == ">":
                arr = arr.astype(arr.dtype.newbyteorder("<"))
            nb = name.encode("ascii")
            db = arr.dtype.str.lstrip("=|<").encode("ascii")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<H", len(db)))
            f.write(db)
            f.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                f.write(struct.pack("<Q", dim))
            f.write(arr.tobytes())


def load(path, kind: str | None = None) -> tuple[str, dict[str, Any], dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ContainerError(f"{path}: bad magic, not a HYQA container")
        (version,) = struct.unpack("<H", f.read(2))
        if version != VERSION:
            raise ContainerError(f"{path}: unsupported container version {version}")
        (klen,) = struct.unpack("<B", f.read(1))
        file_kind = f.read(klen).decode("ascii")
        if kind is not None and file_kind != kind:
            raise ContainerError(f"{path}: expected kind {kind!r}, found {file_kind!r}")
        (mlen,) = struct.unpack("<I", f.read(4))
        meta = json.loads(f.read(mlen).decode("utf-8"))
        (count,) = struct.unpack("<I", f.read(4))
        arrays: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", f.read(2))
            name = f.read(nlen).decode("ascii")
            (dlen,) = struct.unpack("<H", f.read(2))
            dtype = np.dtype("<" + f.read(dlen).decode("ascii"))
            (ndim,) = struct.unpack("<B", f.read(1))
            shape = tuple(struct.unpack("<Q", f.read(8))[0] for _ in range(ndim))
            nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64)) if shape else dtype.itemsize
            data = f.read(nbytes)
            if len(data) != nbytes:
                raise ContainerError(f"{path}: truncated array {name!r}")
            arrays[name] = np.frombuffer(data, dtype=dtype).reshape(shape)
    return file_kind, meta, arrays


def write_varints(values) -> bytes:
    """LEB128-encode a sequence of non-negative ints."""
    out = bytearray()
    for v in values:
        if v < 0:
            raise ValueError("varints are unsigned")
        while True:
            byte = v & 0x7F
            v >>= 7
            if v:
                out.append(byte | 0x80)
            else:
                out.append(byte)
                break
    return bytes(out)


def read_varints(data: bytes, count: int, offset: int = 0) -> tuple[list[int], int]:
    """Decode `count` varints starting at `offset`; returns (values, new offset)."""
    values = []
    pos = offset
    for _ in range(count):
        shift = 0
        v = 0
        while True:
            byte = data[pos]
            pos += 1
            v |= (byte & 0x7F) << shift
            if not byte & 0x80:
                break
            shift += 7
        values.append(v)
    return values, pos
