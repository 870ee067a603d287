"""Binary checkpoint container for networks, optimizer state and RNG.

Layout (all integers little-endian):

    magic   b"WGTS1"
    version u32
    count   u64                      number of tensor records
    records name_len u64, name utf8, rank u64, dims u64*rank,
            payload float64*prod(dims)
    meta    len u64, UTF-8 JSON key-value block

Tensor names are namespaced: ``gen/<param>``, ``critic/<param>``,
``opt_g/<param>``, ``opt_c/<param>``. Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Scaler
from .nn import ArchitectureSpec, ParamSet
from .optim import RmspropState
from .tensor import Tensor

MAGIC = b"WGTS1"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Raised for unreadable, corrupt or incompatible checkpoint files."""


@dataclass
class Checkpoint:
    """On-disk unit of training state."""

    spec: ArchitectureSpec
    epoch: int
    generator: ParamSet
    critic: ParamSet
    opt_generator: RmspropState
    opt_critic: RmspropState
    scaler: Scaler | None = None
    rng_state: dict | None = None
    extra: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION


def _rng_state_to_json(state: dict | None):
    if state is None:
        return None

    def conv(v):
        if isinstance(v, np.ndarray):
            return {"__array__": v.tolist(), "dtype": str(v.dtype)}
        if isinstance(v, dict):
            return {k: conv(x) for k, x in v.items()}
        if isinstance(v, (np.integer,)):
            return int(v)
        return v

    return conv(state)


def _rng_state_from_json(obj):
    if obj is None:
        return None

    def conv(v):
        if isinstance(v, dict):
            if "__array__" in v:
                return np.array(v["__array__"], dtype=v["dtype"])
            return {k: conv(x) for k, x in v.items()}
        return v

    return conv(obj)


def _write_record(out: bytearray, name: str, arr: np.ndarray) -> None:
    data = np.ascontiguousarray(arr, dtype="<f8")
    nb = name.encode("utf-8")
    out += struct.pack("<Q", len(nb))
    out += nb
    out += struct.pack("<Q", data.ndim)
    if data.ndim:
        out += struct.pack(f"<{data.ndim}Q", *data.shape)
    out += data.tobytes(order="C")


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError(
                f"{self.path}: truncated at offset {self.pos} "
                f"(wanted {n} more bytes, file has {len(self.blob)})")
        chunk = self.blob[self.pos: self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]


def save_checkpoint(path, cp: Checkpoint) -> None:
    """Serialize a checkpoint; see the module docstring for the layout."""
    records: list[tuple[str, np.ndarray]] = []
    for prefix, ps in (("gen", cp.generator), ("critic", cp.critic)):
        for name, t in ps.items():
            records.append((f"{prefix}/{name}", t.data))
    for prefix, st in (("opt_g", cp.opt_generator), ("opt_c", cp.opt_critic)):
        for name, arr in st.cache.items():
            records.append((f"{prefix}/{name}", arr))

    meta = {
        "format_version": FORMAT_VERSION,
        "epoch": cp.epoch,
        "arch": {"noise_len": cp.spec.noise_len, "seq_len": cp.spec.seq_len,
                 "features": cp.spec.features, "lstm_units": cp.spec.lstm_units},
        "generator_names": cp.generator.names(),
        "critic_names": cp.critic.names(),
        "opt_steps": {"generator": cp.opt_generator.step, "critic": cp.opt_critic.step},
        "scaler": cp.scaler.to_dict() if cp.scaler is not None else None,
        "rng_state": _rng_state_to_json(cp.rng_state),
        "extra": cp.extra,
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")

    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", FORMAT_VERSION)
    out += struct.pack("<Q", len(records))
    for name, arr in records:
        _write_record(out, name, arr)
    out += struct.pack("<Q", len(meta_bytes))
    out += meta_bytes
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path) -> Checkpoint:
    """Read a checkpoint back; rejects bad magic, truncation and
    unknown format versions."""
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read {path}: {e}") from None
    r = _Reader(blob, path)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes (not a checkpoint)")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version} "
                              f"(expected {FORMAT_VERSION})")
    count = r.u64()
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        name_len = r.u64()
        name = r.take(name_len).decode("utf-8")
        rank = r.u64()
        dims = struct.unpack(f"<{rank}Q", r.take(8 * rank)) if rank else ()
        n = int(np.prod(dims)) if dims else 1
        payload = r.take(8 * n)
        tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
    meta_len = r.u64()
    try:
        meta = json.loads(r.take(meta_len).decode("utf-8"))
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path}: corrupt metadata block: {e}") from None
    if r.pos != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - r.pos} trailing bytes at offset {r.pos}")

    arch = ArchitectureSpec(**meta["arch"])

    def collect(prefix: str, names: list[str], kind: str) -> ParamSet:
        params = {}
        for name in names:
            key = f"{prefix}/{name}"
            if key not in tensors:
                raise CheckpointError(f"{path}: missing tensor record {key!r}")
            params[name] = Tensor(tensors[key])
        return ParamSet(kind, params, arch=arch)

    gen = collect("gen", meta["generator_names"], "generator")
    critic = collect("critic", meta["critic_names"], "critic")
    opt_g = RmspropState(
        cache={n: tensors[f"opt_g/{n}"] for n in meta["generator_names"]
               if f"opt_g/{n}" in tensors},
        step=meta["opt_steps"]["generator"])
    opt_c = RmspropState(
        cache={n: tensors[f"opt_c/{n}"] for n in meta["critic_names"]
               if f"opt_c/{n}" in tensors},
        step=meta["opt_steps"]["critic"])
    scaler = Scaler.from_dict(meta["scaler"]) if meta["scaler"] is not None else None
    return Checkpoint(
        spec=arch, epoch=meta["epoch"], generator=gen, critic=critic,
        opt_generator=opt_g, opt_critic=opt_c, scaler=scaler,
        rng_state=_rng_state_from_json(meta["rng_state"]),
        extra=meta.get("extra", {}), version=version,
    )
