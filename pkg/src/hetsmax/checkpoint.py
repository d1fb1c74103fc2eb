"""Checkpoints: flat little-endian float64 tensors plus a JSON manifest.

The manifest lists each tensor's name, shape, and byte offset into the
binary blob, in the order written. Loading restores arrays exactly.
"""

from __future__ import annotations

import json

import numpy as np

__all__ = ["save_checkpoint", "load_checkpoint"]

_DTYPE = "<f8"


def save_checkpoint(params: dict, bin_path, manifest_path) -> None:
    """Write named arrays to bin_path and their layout to manifest_path."""
    entries = []
    offset = 0
    with open(bin_path, "wb") as fh:
        for name, value in params.items():
            arr = np.ascontiguousarray(np.asarray(value, dtype=np.float64))
            raw = arr.astype(_DTYPE).tobytes()
            fh.write(raw)
            entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
            offset += len(raw)
    manifest = {"dtype": _DTYPE, "tensors": entries}
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(bin_path, manifest_path) -> dict:
    """Read a checkpoint back into a name -> ndarray map."""
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    with open(bin_path, "rb") as fh:
        blob = fh.read()
    out = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(blob, dtype=manifest["dtype"], count=count,
                            offset=start).reshape(shape)
        out[entry["name"]] = arr.astype(np.float64)
    return out
