"""Single-file checkpoint container.

Layout: 8-byte magic ``HDANCKP1``, little-endian uint64 header length, UTF-8
JSON header, then raw little-endian C-order arrays back to back. The header's
``arrays`` list gives ``name``, ``dtype``, ``shape``, ``offset`` (relative to
the end of the header) and ``nbytes`` for each array.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from .errors import FormatError, IntegrityError

MAGIC = b"HDANCKP1"
DTYPES = {"f32": "<f4", "f64": "<f8", "i64": "<i8", "u8": "u1"}
_BY_KIND = {np.dtype("<f4"): "f32", np.dtype("<f8"): "f64", np.dtype("<i8"): "i64",
            np.dtype("u1"): "u8"}


def _code(a: np.ndarray) -> str:
    dt = a.dtype.newbyteorder("<") if a.dtype.byteorder == ">" else a.dtype
    try:
        return _BY_KIND[np.dtype(dt)]
    except KeyError:
        raise FormatError(f"unsupported array dtype {a.dtype}") from None


def write_container(path, header: dict, arrays: Dict[str, np.ndarray]):
    entries, blobs, offset = [], [], 0
    for name, a in arrays.items():
        code = _code(a)
        raw = np.ascontiguousarray(a, dtype=DTYPES[code]).tobytes()
        entries.append({"name": name, "dtype": code, "shape": list(a.shape),
                        "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    head = dict(header)
    head["arrays"] = entries
    hbytes = json.dumps(head, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(hbytes)))
        fh.write(hbytes)
        for b in blobs:
            fh.write(b)


def read_container(path) -> Tuple[dict, Dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise FormatError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<Q", data[8:16])
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt header ({exc})") from exc
    base = 16 + hlen
    arrays = {}
    for e in header.get("arrays", []):
        start = base + e["offset"]
        if start + e["nbytes"] > len(data):
            raise IntegrityError(f"{path}: array {e['name']} truncated")
        a = np.frombuffer(data, dtype=DTYPES[e["dtype"]], count=int(np.prod(e["shape"], dtype=np.int64)),
                          offset=start)
        arrays[e["name"]] = a.reshape(e["shape"]).copy()
    return header, arrays
