"""Binary weight bundles (version 1).

Layout, all integers little-endian::

    b"SWGW"  u16 version  u32 entry_count
    per entry:
        u16 name_len, name (UTF-8)
        u8 dtype (0 = f32), u8 ndim, u32 dim * ndim
        payload: prod(dims) f32 values, row-major
    u32 CRC32 of every preceding byte

An external converter can target this format to load pre-trained weights;
:func:`load_bundle` checks every parameter against the architecture.
"""

from __future__ import annotations

import os
import struct
import zlib
from collections import OrderedDict

import numpy as np

from .errors import (BundleChecksumError, BundleEntryError, BundleError, BundleVersionError,
                     ConfigurationError)
from .netzoo import ArchSpec, Network, parameter_shapes

MAGIC = b"SWGW"
VERSION = 1
DTYPE_F32 = 0


def encode(params: "OrderedDict[str, np.ndarray]") -> bytes:
    parts = [MAGIC, struct.pack("<HI", VERSION, len(params))]
    for name, arr in params.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr, dtype="<f4")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<BB", DTYPE_F32, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data: bytes, end: int):
        self.data = data
        self.pos = 0
        self.end = end

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > self.end:
            raise BundleError(f"truncated bundle while reading {what}", self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode(data: bytes) -> "OrderedDict[str, np.ndarray]":
    if len(data) < 14:
        raise BundleError("file too short to be a weight bundle", len(data))
    if data[:4] != MAGIC:
        raise BundleError("bad magic, not a weight bundle", 0)
    stored_crc, = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) != stored_crc:
        raise BundleChecksumError("CRC32 mismatch", len(data) - 4)
    r = _Reader(data, len(data) - 4)
    r.pos = 4
    version, count = r.unpack("<HI", "header")
    if version != VERSION:
        raise BundleVersionError(f"unsupported bundle version {version}", 4)
    params: OrderedDict[str, np.ndarray] = OrderedDict()
    for _ in range(count):
        start = r.pos
        n, = r.unpack("<H", "name length")
        try:
            name = r.take(n, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise BundleError("entry name is not valid UTF-8", start) from None
        dtype, ndim = r.unpack("<BB", "entry header")
        if dtype != DTYPE_F32:
            raise BundleError(f"entry {name!r}: unknown dtype code {dtype}", r.pos - 2)
        dims = r.unpack(f"<{ndim}I", "dims") if ndim else ()
        if any(d == 0 for d in dims):
            raise BundleError(f"entry {name!r}: zero-length dimension", r.pos)
        size = int(np.prod(dims, dtype=np.int64)) if dims else 1
        payload = r.take(size * 4, f"payload of {name!r}")
        if name in params:
            raise BundleError(f"duplicate entry {name!r}", start)
        params[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
    if r.pos != r.end:
        raise BundleError("trailing bytes after last entry", r.pos)
    return params


def save_bundle(net: Network, path: str | os.PathLike) -> None:
    with open(path, "wb") as f:
        f.write(encode(net.parameters))


def load_bundle(path: str | os.PathLike, spec: ArchSpec) -> Network:
    """Read a bundle and bind it to ``spec``; provenance becomes ``imported``."""
    with open(path, "rb") as f:
        params = decode(f.read())
    expected = parameter_shapes(spec)
    for name, shape in expected.items():
        if name not in params:
            raise BundleEntryError(f"bundle is missing parameter {name}", name)
        if params[name].shape != shape:
            raise BundleEntryError(
                f"parameter {name} has shape {params[name].shape}, expected {shape}", name)
    extra = [n for n in params if n not in expected]
    if extra:
        raise BundleEntryError(f"bundle has unexpected parameter {extra[0]}", extra[0])
    ordered = OrderedDict((name, params[name]) for name in expected)
    try:
        return Network(spec, ordered, seed=None, provenance="imported")
    except ConfigurationError as exc:  # pragma: no cover - guarded above
        raise BundleEntryError(str(exc), "") from exc
