"""Binary tensor-record container and model checkpointing.

File layout: magic b"CNPK", version u32, record count u32, then per record a
u16 name length, the UTF-8 name, a u8 rank, u32 extents, and the values as
little-endian float32. Round trips are bit-exact for float32 data, which the
whole package treats as the on-disk precision.

Model checkpoints are one record per parameter plus reserved records:
"meta.step" and "meta.seed" hold u64 counters split into four 16-bit limbs
(each limb exact in float32), and "opt.m.<name>" / "opt.v.<name>" hold Adam
moment estimates so a resumed run reproduces the original trajectory bitwise.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"CNPK"
VERSION = 1

_META_PREFIX = "meta."
_MOMENT1_PREFIX = "opt.m."
_MOMENT2_PREFIX = "opt.v."


def write_records(path, records: dict) -> None:
    """Serialize name -> array records in insertion order."""
    blobs = []
    for name, values in records.items():
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"record name too long: {name[:40]}...")
        arr = np.asarray(values, dtype="<f4")
        if arr.ndim > 0xFF:
            raise ValueError(f"record rank {arr.ndim} exceeds format limit")
        header = struct.pack("<H", len(raw)) + raw + struct.pack("B", arr.ndim)
        header += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blobs.append(header + arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(records)))
        for blob in blobs:
            fh.write(blob)


def read_records(path) -> dict:
    """Parse a record container back into an ordered name -> float32 array dict."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError(f"not a tensor record file: bad magic in {path}")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported record format version {version}")
    offset = 12
    records = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", data, offset)
            offset += 2
            name = data[offset:offset + name_len].decode("utf-8")
            offset += name_len
            rank = data[offset]
            offset += 1
            shape = struct.unpack_from(f"<{rank}I", data, offset)
            offset += 4 * rank
            size = int(np.prod(shape, dtype=np.int64)) if rank else 1
            values = np.frombuffer(data, dtype="<f4", count=size, offset=offset)
            offset += 4 * size
            records[name] = values.reshape(shape).copy()
    except (struct.error, ValueError) as exc:
        raise ValueError(f"truncated or corrupt record file {path}: {exc}") from exc
    if offset != len(data):
        raise ValueError(f"trailing bytes in record file {path}")
    return records


def _pack_u64(value: int) -> np.ndarray:
    if value < 0 or value >= 1 << 64:
        raise ValueError(f"counter out of u64 range: {value}")
    limbs = [(value >> (16 * k)) & 0xFFFF for k in range(4)]
    return np.asarray(limbs, dtype=np.float32)


def _unpack_u64(limbs: np.ndarray) -> int:
    return sum(int(v) << (16 * k) for k, v in enumerate(limbs))


@dataclass
class CheckpointData:
    """Everything a checkpoint holds: parameters, counters, optimizer moments."""

    params: dict
    step: int
    seed: int
    moment1: dict = field(default_factory=dict)
    moment2: dict = field(default_factory=dict)


def save_checkpoint(path, params: dict, step: int, seed: int,
                    moment1: dict | None = None, moment2: dict | None = None) -> None:
    """Write model parameters plus reserved meta/optimizer records."""
    records = {}
    for name, tensor in params.items():
        if name.startswith((_META_PREFIX, _MOMENT1_PREFIX, _MOMENT2_PREFIX)):
            raise ValueError(f"parameter name collides with a reserved prefix: {name}")
        records[name] = getattr(tensor, "data", tensor)
    records["meta.step"] = _pack_u64(step)
    records["meta.seed"] = _pack_u64(seed)
    for prefix, moments in ((_MOMENT1_PREFIX, moment1), (_MOMENT2_PREFIX, moment2)):
        if moments:
            for name, values in moments.items():
                records[prefix + name] = values
    write_records(path, records)


def load_checkpoint(path) -> CheckpointData:
    records = read_records(path)
    if "meta.step" not in records or "meta.seed" not in records:
        raise ValueError(f"record file {path} is not a model checkpoint (no meta records)")
    out = CheckpointData(params={}, step=_unpack_u64(records.pop("meta.step")),
                         seed=_unpack_u64(records.pop("meta.seed")))
    for name, values in records.items():
        if name.startswith(_MOMENT1_PREFIX):
            out.moment1[name[len(_MOMENT1_PREFIX):]] = values
        elif name.startswith(_MOMENT2_PREFIX):
            out.moment2[name[len(_MOMENT2_PREFIX):]] = values
        elif name.startswith(_META_PREFIX):
            raise ValueError(f"unknown reserved record: {name}")
        else:
            out.params[name] = values
    return out


def restore_into(tensors: dict, saved: dict) -> None:
    """Copy saved arrays into live parameter tensors, enforcing exact shapes."""
    missing = set(tensors) - set(saved)
    extra = set(saved) - set(tensors)
    if missing or extra:
        raise ValueError(
            f"checkpoint/model parameter mismatch: missing={sorted(missing)[:5]} "
            f"extra={sorted(extra)[:5]}")
    for name, tensor in tensors.items():
        if tuple(saved[name].shape) != tensor.shape:
            raise ValueError(
                f"shape mismatch for {name}: checkpoint {saved[name].shape}, "
                f"model {tensor.shape}")
        tensor.data[...] = saved[name]
