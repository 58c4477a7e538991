"""Checkpoint file: JSON manifest + little-endian float32 tensor payload.

Layout: one UTF-8 JSON header line (sorted keys) holding the model and
train config, tokenizer vocabulary, and an ordered tensor manifest of
(name, rows, cols); then a NUL byte; then the raw float32 values in
manifest order. Deterministic byte-for-byte given identical state.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np


def save_checkpoint(path, tensors: dict, meta: dict):
    """Atomically write named 2-D float32 tensors plus JSON metadata."""
    names = sorted(tensors)
    manifest = []
    for name in names:
        arr = np.asarray(tensors[name], dtype=np.float32)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        manifest.append([name, int(arr.shape[0]), int(arr.shape[1])])
    header = dict(meta)
    header["manifest"] = manifest
    header_bytes = json.dumps(header, sort_keys=True,
                              separators=(",", ":")).encode("utf-8")
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header_bytes)
            fh.write(b"\x00")
            for name, r, c in manifest:
                arr = np.asarray(tensors[name], dtype="<f4").reshape(r, c)
                fh.write(arr.tobytes(order="C"))
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def load_checkpoint(path):
    """Returns (tensors dict of float32 arrays, meta dict)."""
    blob = Path(path).read_bytes()
    sep = blob.index(b"\x00")
    meta = json.loads(blob[:sep].decode("utf-8"))
    manifest = meta.pop("manifest")
    tensors = {}
    off = sep + 1
    for name, r, c in manifest:
        nbytes = 4 * r * c
        arr = np.frombuffer(blob[off:off + nbytes], dtype="<f4").reshape(r, c)
        tensors[name] = arr.copy()
        off += nbytes
    if off != len(blob):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return tensors, meta
