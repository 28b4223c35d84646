"""Manifest + flat binary blob storage shared by datasets and checkpoints.

A store ``<stem>`` is two files:

``<stem>.json``
    ``{"meta": {...}, "tensors": {name: {"dtype", "shape", "offset", "count"}}}``
    where ``offset`` is a byte offset into the blob and ``count`` the number
    of float64 values.
``<stem>.bin``
    Little-endian float64 values, row-major. Complex tensors are stored as
    interleaved ``(real, imag)`` pairs.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def _paths(stem):
    stem = Path(stem)
    return stem.with_name(stem.name + ".json"), stem.with_name(stem.name + ".bin")


def save_tensors(stem, tensors, meta=None):
    manifest_path, blob_path = _paths(stem)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    entries = {}
    chunks = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if np.iscomplexobj(arr):
            dtype = "complex128"
            flat = np.ascontiguousarray(arr, dtype=np.complex128).view(np.float64).ravel()
        else:
            dtype = "float64"
            flat = np.ascontiguousarray(arr, dtype=np.float64).ravel()
        flat = flat.astype("<f8", copy=False)
        entries[name] = {"dtype": dtype, "shape": list(arr.shape), "offset": offset, "count": int(flat.size)}
        chunks.append(flat.tobytes())
        offset += flat.size * 8
    blob_path.write_bytes(b"".join(chunks))
    doc = {"meta": meta or {}, "tensors": entries}
    manifest_path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return manifest_path, blob_path


def load_tensors(stem):
    """Return ``(tensors, meta)``."""
    manifest_path, blob_path = _paths(stem)
    if not manifest_path.exists() or not blob_path.exists():
        raise FileNotFoundError(f"missing tensor store {manifest_path} / {blob_path}")
    doc = json.loads(manifest_path.read_text())
    raw = np.frombuffer(blob_path.read_bytes(), dtype="<f8")
    out = {}
    for name, e in doc["tensors"].items():
        start = e["offset"] // 8
        vals = raw[start:start + e["count"]].astype(np.float64)
        if e["dtype"] == "complex128":
            arr = vals.view(np.complex128).reshape(e["shape"])
        else:
            arr = vals.reshape(e["shape"])
        out[name] = arr.copy()
    return out, doc["meta"]
