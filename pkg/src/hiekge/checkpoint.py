"""Binary parameter checkpoints with a JSON metadata sidecar.

Layout: 8-byte magic "HIEKGE01", little-endian u32 tensor count, then per
tensor a u32 rank, rank u32 dims, and the row-major float64 payload.
The sidecar (same stem, .json extension) records the model kind, config,
vocabulary sizes, training step, seed, an optional metric snapshot, and
the tensor name/shape table. Nothing time- or host-dependent is written,
so identical params and metadata give identical bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import BaselineParams
from .hie_model import HieParams

MAGIC = b"HIEKGE01"

HIE_FIELDS = (
    "ent",
    "rel",
    "proj_head_dist",
    "proj_tail_dist",
    "proj_rel_dist",
    "proj_head_sem",
    "proj_tail_sem",
    "proj_rel_sem",
    "transform_seed",
    "extract_dist",
    "extract_sem",
    "blend_logit",
)


class CheckpointError(Exception):
    """Unreadable or inconsistent checkpoint."""


class BadMagicError(CheckpointError):
    """File does not start with the checkpoint magic."""


class TruncatedError(CheckpointError):
    """File ends before the declared tensors do."""


class ShapeMismatchError(CheckpointError):
    """Blob layout disagrees with the metadata (or has trailing bytes)."""


@dataclass
class Checkpoint:
    params: object
    meta: dict


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def save_checkpoint(params, meta, path) -> None:
    """Write the binary blob and its metadata sidecar."""
    path = Path(path)
    tensors = params.field_items()
    meta = dict(meta)
    meta["tensors"] = [{"name": name, "shape": list(t.shape)} for name, t in tensors]
    chunks = [MAGIC, struct.pack("<I", len(tensors))]
    for _, tensor in tensors:
        # np.ascontiguousarray would promote 0-d tensors to 1-d; keep the rank
        tensor = np.array(tensor, dtype="<f8", order="C", copy=None)
        chunks.append(struct.pack("<I", tensor.ndim))
        chunks.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        chunks.append(tensor.tobytes(order="C"))
    path.write_bytes(b"".join(chunks))
    with open(sidecar_path(path), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


class _Reader:
    def __init__(self, blob):
        self.blob = blob
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.blob):
            raise TruncatedError(f"checkpoint ends inside {what}")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def load_checkpoint(path) -> Checkpoint:
    """Read a checkpoint back into a params object; round trip is bit exact."""
    path = Path(path)
    blob = path.read_bytes()
    if blob[:8] != MAGIC:
        raise BadMagicError(f"{path}: not a checkpoint (bad magic)")
    reader = _Reader(blob)
    reader.pos = 8
    count = reader.u32("tensor count")
    arrays = []
    for idx in range(count):
        rank = reader.u32(f"tensor {idx} rank")
        if rank > 8:
            raise ShapeMismatchError(f"{path}: tensor {idx} claims rank {rank}")
        dims = [reader.u32(f"tensor {idx} dims") for _ in range(rank)]
        n = int(np.prod(dims, dtype=np.int64)) if dims else 1
        raw = reader.take(8 * n, f"tensor {idx} data")
        arr = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(dims)
        arrays.append(arr)
    if reader.pos != len(blob):
        raise ShapeMismatchError(f"{path}: {len(blob) - reader.pos} trailing byte(s)")

    meta_path = sidecar_path(path)
    if not meta_path.exists():
        raise CheckpointError(f"{path}: missing metadata sidecar {meta_path.name}")
    with open(meta_path, encoding="utf-8") as f:
        meta = json.load(f)
    declared = meta.get("tensors")
    if declared is None or len(declared) != count:
        raise ShapeMismatchError(f"{path}: metadata declares a different tensor count")
    named = {}
    for entry, arr in zip(declared, arrays):
        if list(arr.shape) != list(entry["shape"]):
            raise ShapeMismatchError(
                f"{path}: tensor {entry['name']} is {list(arr.shape)}, "
                f"metadata says {entry['shape']}"
            )
        named[entry["name"]] = arr

    kind = meta.get("model_kind")
    if kind == "hie":
        missing = [n for n in HIE_FIELDS if n not in named]
        if missing:
            raise ShapeMismatchError(f"{path}: missing tensors {missing}")
        params = HieParams(**{n: named[n] for n in HIE_FIELDS})
    else:
        if "ent" not in named or "rel" not in named:
            raise ShapeMismatchError(f"{path}: baseline checkpoint needs ent and rel")
        params = BaselineParams(kind=kind, ent=named["ent"], rel=named["rel"])
    return Checkpoint(params=params, meta=meta)
