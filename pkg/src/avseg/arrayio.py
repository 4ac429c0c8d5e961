"""Binary array format shared by datasets and checkpoints.

An ``.arr`` stream is: uint32 rank, ``rank`` uint32 extents, then the
values as little-endian float32 in C order. A checkpoint bundle is a
single file holding a JSON header plus a sequence of named ``.arr``
payloads in header order.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

BUNDLE_MAGIC = b"AVSB"
BUNDLE_VERSION = 1


class FormatError(ValueError):
    pass


def write_array_stream(fh, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    fh.write(struct.pack("<I", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(arr.tobytes())


def read_array_stream(fh) -> np.ndarray:
    head = fh.read(4)
    if len(head) != 4:
        raise FormatError("truncated array header")
    (rank,) = struct.unpack("<I", head)
    if rank > 32:
        raise FormatError(f"implausible array rank {rank}")
    raw = fh.read(4 * rank)
    if len(raw) != 4 * rank:
        raise FormatError("truncated shape header")
    shape = struct.unpack(f"<{rank}I", raw)
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    data = fh.read(4 * count)
    if len(data) != 4 * count:
        raise FormatError("truncated array payload")
    return np.frombuffer(data, dtype="<f4").reshape(shape).copy()


def save_array(path, arr: np.ndarray) -> None:
    with open(path, "wb") as fh:
        write_array_stream(fh, arr)


def load_array(path) -> np.ndarray:
    with open(path, "rb") as fh:
        out = read_array_stream(fh)
        if fh.read(1):
            raise FormatError(f"trailing bytes in {path}")
    return out


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def save_bundle(path, header: dict, arrays: dict) -> None:
    """Write a JSON header plus named float32 arrays into one file."""
    header = dict(header)
    header["arrays"] = list(arrays.keys())
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(BUNDLE_MAGIC)
        fh.write(struct.pack("<II", BUNDLE_VERSION, len(blob)))
        fh.write(blob)
        for name in header["arrays"]:
            write_array_stream(fh, arrays[name])


def load_bundle(path):
    """Read back a bundle; returns (header, {name: float32 array})."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != BUNDLE_MAGIC:
            raise FormatError(f"{path} is not a checkpoint bundle")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != BUNDLE_VERSION:
            raise FormatError(f"unsupported bundle version {version}")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        arrays = {name: read_array_stream(fh) for name in header["arrays"]}
    return header, arrays


def file_manifest_entry(path: Path, root: Path) -> dict:
    return {"file": str(path.relative_to(root)), "sha256": sha256_file(path)}
