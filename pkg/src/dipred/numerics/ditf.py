"""DITF tensor files and named-tensor bundles.

DITF layout: magic ``DITF``, version byte (1), dtype byte (1 = float32,
2 = float64), rank byte, rank little-endian uint32 extents, then the
row-major little-endian payload.  Round-trips are bit-exact.

A bundle is an ASCII header listing (name, shape) entries followed by the
corresponding DITF records back to back; it backs model checkpoints.
"""

from __future__ import annotations

import io
import os
import struct
import tempfile

import numpy as np

MAGIC = b"DITF"
VERSION = 1
_DTYPE_CODES = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}
_CODE_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_BUNDLE_MAGIC = "DITF-BUNDLE"


class FormatError(ValueError):
    """Corrupt or unsupported file contents."""


def write_ditf(target, array):
    """Write one tensor; ``target`` is a path or a binary file object."""
    arr = np.asarray(array)
    if not arr.flags.c_contiguous:
        arr = np.copy(arr, order="C")
    code = _DTYPE_CODES.get(np.dtype(arr.dtype.str.replace(">", "<")))
    if code is None:
        raise FormatError(f"unsupported dtype {arr.dtype}")
    if arr.ndim > 255:
        raise FormatError("rank exceeds 255")
    if any(d <= 0 for d in arr.shape):
        raise FormatError(f"extents must be positive, got {arr.shape}")
    header = MAGIC + bytes([VERSION, code, arr.ndim])
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
    if hasattr(target, "write"):
        target.write(header + payload)
    else:
        atomic_write_bytes(target, header + payload)


def read_ditf(source):
    """Read one tensor from a path or binary file object."""
    if hasattr(source, "read"):
        return _read_stream(source)
    with open(source, "rb") as fh:
        return _read_stream(fh)


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file while reading {what}")
    return buf


def _read_stream(fh):
    if _read_exact(fh, 4, "magic") != MAGIC:
        raise FormatError("bad magic, not a DITF file")
    version, code, rank = _read_exact(fh, 3, "header")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    dtype = _CODE_DTYPES.get(code)
    if dtype is None:
        raise FormatError(f"unknown dtype code {code}")
    shape = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, "extents"))
    count = int(np.prod(shape)) if rank else 1
    payload = _read_exact(fh, count * dtype.itemsize, "payload")
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape)
    return arr.astype(arr.dtype.newbyteorder("="), copy=True)


def ditf_bytes(array):
    buf = io.BytesIO()
    write_ditf(buf, array)
    return buf.getvalue()


def write_bundle(path, entries):
    """Write named tensors: ``entries`` is an ordered (name, array) mapping."""
    items = list(entries.items()) if hasattr(entries, "items") else list(entries)
    lines = [f"{_BUNDLE_MAGIC} {VERSION} {len(items)}"]
    for name, arr in items:
        if not name or any(ch.isspace() for ch in name):
            raise FormatError(f"bad entry name {name!r}")
        shape = ",".join(str(d) for d in np.shape(arr)) or "-"
        lines.append(f"{name} {shape}")
    header = ("\n".join(lines) + "\n\n").encode("ascii")
    body = b"".join(ditf_bytes(np.asarray(arr)) for _, arr in items)
    atomic_write_bytes(path, header + body)


def read_bundle(path):
    """Read a bundle back as an ordered dict of name -> array."""
    with open(path, "rb") as fh:
        first = fh.readline().decode("ascii").split()
        if len(first) != 3 or first[0] != _BUNDLE_MAGIC:
            raise FormatError("not a tensor bundle")
        if int(first[1]) != VERSION:
            raise FormatError(f"unsupported bundle version {first[1]}")
        count = int(first[2])
        names = []
        for _ in range(count):
            line = fh.readline().decode("ascii").split()
            if len(line) != 2:
                raise FormatError("malformed bundle header line")
            names.append(line[0])
        if fh.readline() not in (b"\n", b"\r\n"):
            raise FormatError("missing header terminator")
        out = {}
        for name in names:
            if name in out:
                raise FormatError(f"duplicate entry {name!r}")
            out[name] = _read_stream(fh)
        return out


def atomic_write_bytes(path, data):
    """Write via a temp file in the same directory plus rename."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


__all__ = [
    "FormatError",
    "write_ditf",
    "read_ditf",
    "ditf_bytes",
    "write_bundle",
    "read_bundle",
    "atomic_write_bytes",
]
