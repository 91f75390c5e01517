"""Named-array container used for checkpoints and feature caches.

Layout (little-endian)::

    b"TFV1"
    payload:
        u32 array count
        per array: u16 name length, UTF-8 name, u8 dtype code, u8 rank,
                   u32 dim * rank, raw data
    u32 CRC32 of payload

dtype codes: 0 = f32, 1 = f64, 2 = u8 (opaque bytes such as JSON), 3 = i64.
"""

from __future__ import annotations

import os
import struct
import tempfile
import zlib
from collections import OrderedDict
from typing import Mapping

import numpy as np

MAGIC = b"TFV1"
_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1, np.dtype("u1"): 2, np.dtype("<i8"): 3}
_DTYPES = {v: k for k, v in _CODES.items()}


class ContainerError(ValueError):
    pass


def encode(arrays: Mapping[str, np.ndarray]) -> bytes:
    parts = [struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
        if dt not in _CODES:
            raise ContainerError(f"array {name!r}: unsupported dtype {arr.dtype}")
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF:
            raise ContainerError(f"array name too long: {name[:40]}...")
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<BB", _CODES[dt], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=dt).tobytes())
    payload = b"".join(parts)
    return MAGIC + payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)


def decode(blob: bytes) -> "OrderedDict[str, np.ndarray]":
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise ContainerError("not a TFV1 container (bad magic or truncated header)")
    payload, (crc,) = blob[4:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise ContainerError("checksum mismatch: file is corrupted or truncated")
    out: OrderedDict[str, np.ndarray] = OrderedDict()
    try:
        (count,) = struct.unpack_from("<I", payload, 0)
        pos = 4
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", payload, pos)
            pos += 2
            name = payload[pos:pos + nlen].decode("utf-8")
            pos += nlen
            code, rank = struct.unpack_from("<BB", payload, pos)
            pos += 2
            dims = struct.unpack_from(f"<{rank}I", payload, pos)
            pos += 4 * rank
            if code not in _DTYPES:
                raise ContainerError(f"array {name!r}: unknown dtype code {code}")
            dt = _DTYPES[code]
            nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
            if pos + nbytes > len(payload):
                raise ContainerError(f"array {name!r}: data runs past end of file")
            out[name] = np.frombuffer(payload, dtype=dt, count=nbytes // dt.itemsize, offset=pos).reshape(dims).copy()
            pos += nbytes
    except struct.error as exc:
        raise ContainerError(f"malformed container: {exc}") from None
    if pos != len(payload):
        raise ContainerError(f"{len(payload) - pos} trailing bytes after last array")
    return out


def save(path: str | os.PathLike, arrays: Mapping[str, np.ndarray]) -> None:
    """Atomic write: temp file in the same directory, fsync, rename."""
    blob = encode(arrays)
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load(path: str | os.PathLike) -> "OrderedDict[str, np.ndarray]":
    with open(path, "rb") as fh:
        return decode(fh.read())


def text_array(text: str) -> np.ndarray:
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).copy()


def array_text(arr: np.ndarray) -> str:
    return np.asarray(arr, dtype=np.uint8).tobytes().decode("utf-8")
