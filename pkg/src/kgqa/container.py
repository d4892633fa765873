"""Named-array container file.

Layout: magic ``b"KGQA0001"``, little-endian uint64 header length, UTF-8 JSON
header, then array payloads back to back. The header holds free-form
``meta`` plus an ``arrays`` manifest of ``{name, dtype, shape, offset,
nbytes}`` with offsets relative to the start of the payload.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"KGQA0001"
_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8"), "<i4": np.dtype("<i4"), "<i8": np.dtype("<i8"), "|u1": np.dtype("u1")}


class ContainerError(Exception):
    pass


def _canonical_dtype(arr: np.ndarray) -> np.dtype:
    if arr.dtype.kind == "f":
        return np.dtype("<f4") if arr.dtype.itemsize <= 4 else np.dtype("<f8")
    if arr.dtype == np.uint8:
        return np.dtype("u1")
    if arr.dtype.kind in "iub":
        return np.dtype("<i8")
    raise ContainerError(f"unsupported dtype {arr.dtype}")


def write_container(path: str | Path, arrays: Mapping[str, np.ndarray], meta: dict | None = None, float_dtype: str | None = "<f4") -> None:
    """Write arrays in insertion order. Floats are stored as ``float_dtype`` unless it is None."""
    manifest = []
    payloads = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dt = np.dtype(float_dtype) if (float_dtype and arr.dtype.kind == "f") else _canonical_dtype(arr)
        data = np.ascontiguousarray(arr, dtype=dt).tobytes()
        manifest.append({"name": name, "dtype": dt.str, "shape": list(arr.shape), "offset": offset, "nbytes": len(data)})
        payloads.append(data)
        offset += len(data)
    header = json.dumps({"meta": meta or {}, "arrays": manifest}, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for data in payloads:
            fh.write(data)


def read_container(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ContainerError(f"{path}: not a container file")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16 : 16 + hlen])
    base = 16 + hlen
    arrays = {}
    for entry in header["arrays"]:
        dt = _DTYPES.get(entry["dtype"])
        if dt is None:
            raise ContainerError(f"{path}: unknown dtype {entry['dtype']}")
        start = base + entry["offset"]
        buf = raw[start : start + entry["nbytes"]]
        if len(buf) != entry["nbytes"]:
            raise ContainerError(f"{path}: truncated payload for {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(buf, dtype=dt).reshape(entry["shape"]).copy()
    return arrays, header.get("meta", {})
