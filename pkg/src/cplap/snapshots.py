"""Shared binary snapshot format for grid-sampled fields.

Layout: magic ``CPLF``, a little-endian uint32 header length, a UTF-8 JSON
header, then the raw payload.  The header records dims, spacing h, the field
role (coefficient / source / solution / scalar / weight), kind and params;
the payload is little-endian float64, interleaved Re/Im per cell for complex
fields, plain values for real ones.  Coefficient fields, solver states and
harness scalar fields all round-trip through this one writer/reader.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"CPLF"
SCHEMA = 1


def write_field(path, array: np.ndarray, h: float, role: str, kind: str = "", params=None):
    array = np.asarray(array)
    is_complex = np.iscomplexobj(array)
    header = {
        "schema": SCHEMA,
        "role": role,
        "dims": list(array.shape),
        "h": float(h),
        "kind": kind,
        "params": params or {},
        "complex": bool(is_complex),
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    if is_complex:
        flat = np.empty(array.size * 2, dtype="<f8")
        flat[0::2] = array.real.ravel()
        flat[1::2] = array.imag.ravel()
    else:
        flat = np.ascontiguousarray(array, dtype="<f8").ravel()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(head)))
        f.write(head)
        f.write(flat.tobytes())


def read_field(path):
    """Returns (array, header dict)."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise ValueError(f"not a field snapshot: bad magic {magic!r}")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
        payload = np.frombuffer(f.read(), dtype="<f8")
    dims = tuple(header["dims"])
    n = int(np.prod(dims))
    if header["complex"]:
        if payload.size != 2 * n:
            raise ValueError("payload size mismatch")
        arr = (payload[0::2] + 1j * payload[1::2]).reshape(dims)
    else:
        if payload.size != n:
            raise ValueError("payload size mismatch")
        arr = payload.reshape(dims)
    return arr, header
