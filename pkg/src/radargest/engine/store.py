"""Named parameter store and the on-disk checkpoint format.

A checkpoint is a pair of files in one directory:

* ``model.json`` — ordered manifest ``[{"name", "shape", "byte_offset"}, ...]``
* ``model.bin``  — the little-endian float64 payloads concatenated in
  manifest order
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .tensor import Tensor

__all__ = ["ParamStore", "save_checkpoint", "load_checkpoint", "file_sha256"]

MANIFEST_NAME = "model.json"
PAYLOAD_NAME = "model.bin"


class ParamStore:
    """Insertion-ordered mapping of unique names to parameter tensors."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, data) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name '{name}'")
        t = data if isinstance(data, Tensor) else Tensor(data, requires_grad=True)
        t.requires_grad = True
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self):
        return iter(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad = None

    def subset(self, prefixes: tuple[str, ...]) -> "ParamStore":
        """New store sharing the tensors whose names start with a prefix."""
        out = ParamStore()
        for name, p in self._params.items():
            if name.startswith(prefixes):
                out._params[name] = p
        return out

    def copy_values(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_values(self, values: dict[str, np.ndarray], prefixes: tuple[str, ...] | None = None) -> None:
        """Overwrite parameter values in place from ``values``.

        Restricted to ``prefixes`` when given. Raises if any targeted name is
        missing from ``values`` or has the wrong shape.
        """
        targets = [n for n in self._params if prefixes is None or n.startswith(prefixes)]
        missing = [n for n in targets if n not in values]
        if missing:
            raise KeyError(f"checkpoint is missing parameters: {missing}")
        for name in targets:
            src = np.asarray(values[name], dtype=np.float64)
            dst = self._params[name]
            if src.shape != dst.data.shape:
                raise ValueError(f"parameter '{name}' shape {src.shape} != expected {dst.data.shape}")
            dst.data[...] = src


def save_checkpoint(store: ParamStore, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = []
    offset = 0
    blobs = []
    for name, p in store.items():
        raw = np.ascontiguousarray(p.data, dtype="<f8").tobytes()
        manifest.append({"name": name, "shape": list(p.data.shape), "byte_offset": offset})
        blobs.append(raw)
        offset += len(raw)
    (out_dir / PAYLOAD_NAME).write_bytes(b"".join(blobs))
    with open(out_dir / MANIFEST_NAME, "w") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    return out_dir


def load_checkpoint(ckpt_dir) -> dict[str, np.ndarray]:
    """Read a checkpoint directory into a name -> array mapping."""
    ckpt_dir = Path(ckpt_dir)
    with open(ckpt_dir / MANIFEST_NAME) as fh:
        manifest = json.load(fh)
    payload = (ckpt_dir / PAYLOAD_NAME).read_bytes()
    out: dict[str, np.ndarray] = {}
    for entry in manifest:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["byte_offset"]
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=start)
        out[entry["name"]] = arr.reshape(shape).astype(np.float64)
    return out


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
