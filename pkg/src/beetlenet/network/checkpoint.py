"""Binary checkpoint format.

Layout::

    b"BBCKPT1\\n"
    u64 little-endian: header length in bytes
    UTF-8 JSON header: {name: {"dtype": "f32", "shape": [...],
                               "offset": int, "length": int,
                               "trainable": bool}}
    payload: contiguous little-endian float32 data

Offsets and lengths are in bytes, relative to the start of the payload.
"""
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .store import ParameterStore

MAGIC = b"BBCKPT1\n"
_F32 = np.dtype("<f4")


class CheckpointError(Exception):
    pass


@dataclass
class LoadReport:
    matched: list = field(default_factory=list)
    missing: list = field(default_factory=list)      # in the store, absent from the file
    unexpected: list = field(default_factory=list)   # in the file, absent from the store

    def to_dict(self):
        return {"matched": self.matched, "missing": self.missing, "unexpected": self.unexpected}


def export_checkpoint(store, path):
    header = {}
    chunks = []
    offset = 0
    for name, arr in store.items():
        data = np.ascontiguousarray(arr, dtype=_F32).tobytes()
        header[name] = {"dtype": "f32", "shape": list(arr.shape), "offset": offset,
                        "length": len(data), "trainable": store.trainable(name)}
        chunks.append(data)
        offset += len(data)
    hbytes = json.dumps(header, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(hbytes)))
        fh.write(hbytes)
        for c in chunks:
            fh.write(c)


def _read(path):
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path}: bad magic bytes, not a checkpoint file")
    if len(raw) < len(MAGIC) + 8:
        raise CheckpointError(f"{path}: truncated header")
    (hlen,) = struct.unpack("<Q", raw[len(MAGIC):len(MAGIC) + 8])
    start = len(MAGIC) + 8
    try:
        header = json.loads(raw[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None
    if not isinstance(header, dict):
        raise CheckpointError(f"{path}: header must be a JSON object")
    payload = memoryview(raw)[start + hlen:]
    spans = []
    arrays = {}
    for name, meta in header.items():
        try:
            shape = tuple(int(s) for s in meta["shape"])
            off, length = int(meta["offset"]), int(meta["length"])
            dtype = meta["dtype"]
        except (KeyError, TypeError, ValueError):
            raise CheckpointError(f"{path}: malformed header entry for {name!r}") from None
        if dtype != "f32":
            raise CheckpointError(f"{path}: unsupported dtype {dtype!r} for {name!r}")
        if length != 4 * int(np.prod(shape, dtype=np.int64)) or off < 0 or off + length > len(payload):
            raise CheckpointError(f"{path}: inconsistent offset/length for {name!r}")
        spans.append((off, off + length, name))
        arrays[name] = (np.frombuffer(payload[off:off + length], dtype=_F32).reshape(shape).astype(np.float32),
                        bool(meta.get("trainable", True)))
    spans.sort()
    for (a0, a1, an), (b0, b1, bn) in zip(spans, spans[1:]):
        if b0 < a1:
            raise CheckpointError(f"{path}: overlapping payload ranges for {an!r} and {bn!r}")
    return arrays


def load_checkpoint(path):
    """Read a checkpoint into a fresh :class:`ParameterStore`, in file order."""
    store = ParameterStore()
    for name, (arr, trainable) in _read(path).items():
        store.add(name, arr, trainable)
    return store


def import_checkpoint(path, store):
    """Load the names shared by ``path`` and ``store`` into ``store`` in place.

    Names the file lacks keep their current values; a shape disagreement on
    a shared name raises :class:`CheckpointError` before anything is written.
    """
    arrays = _read(path)
    report = LoadReport()
    for name in store.names():
        if name not in arrays:
            report.missing.append(name)
            continue
        arr, _ = arrays[name]
        if arr.shape != store.shape(name):
            raise CheckpointError(f"shape mismatch for parameter {name}: "
                                  f"checkpoint {arr.shape} vs network {store.shape(name)}")
        report.matched.append(name)
    report.unexpected = [n for n in arrays if n not in store]
    for name in report.matched:
        store.assign(name, arrays[name][0])
    return report
