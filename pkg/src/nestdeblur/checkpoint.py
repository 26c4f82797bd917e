"""Binary checkpoints.

Layout (little-endian): magic ``NUDC``, u32 version, u32 length + UTF-8
JSON config block, then tensors until the trailer, each as
``u32 name length, name, u32 rank, u32 dims..., f32 payload``, then a
u64 checksum (BLAKE2b, 8-byte digest) of every preceding byte.
"""
import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, CorruptionError, VersionError
from .model import NestedConfig, build_nested
from .nn import AdamState

MAGIC = b"NUDC"
VERSION = 1
ADAM_M = "adam.m:"
ADAM_V = "adam.v:"


@dataclass
class Checkpoint:
    model: object
    state: AdamState = None
    run_config: dict = field(default_factory=dict)
    epoch: int = 0
    extra: dict = field(default_factory=dict)


def _checksum(payload):
    return hashlib.blake2b(payload, digest_size=8).digest()


def _tensor_bytes(name, arr):
    arr = np.ascontiguousarray(arr, dtype="<f4")
    nb = name.encode("utf-8")
    head = struct.pack("<I", len(nb)) + nb + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.tobytes()


def encode_checkpoint(model, state=None, run_config=None, epoch=0, extra=None):
    block = {
        "model": model.config.to_dict(),
        "run": run_config or {},
        "epoch": int(epoch),
        "extra": extra or {},
    }
    if state is not None:
        block["adam"] = {"lr": state.lr, "beta1": state.beta1, "beta2": state.beta2, "eps": state.eps, "t": state.t}
    config = json.dumps(block, sort_keys=True).encode("utf-8")

    parts = [MAGIC, struct.pack("<II", VERSION, len(config)), config]
    for p in model.parameters():
        parts.append(_tensor_bytes(p.name, p.value))
    if state is not None:
        for p in model.parameters():
            if p.name in state.m:
                parts.append(_tensor_bytes(ADAM_M + p.name, state.m[p.name]))
                parts.append(_tensor_bytes(ADAM_V + p.name, state.v[p.name]))
    payload = b"".join(parts)
    return payload + _checksum(payload)


def save_checkpoint(model, state, run_config, path, epoch=0, extra=None):
    """Write atomically (temp file + rename) so readers never see a partial file."""
    path = Path(path)
    data = encode_checkpoint(model, state, run_config, epoch, extra)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def decode_checkpoint(buf, expect_config=None):
    if len(buf) < 12 + 8:
        raise CorruptionError(f"checkpoint truncated ({len(buf)} bytes)")
    if buf[:4] != MAGIC:
        raise CorruptionError(f"bad checkpoint magic {bytes(buf[:4])!r}")
    version, clen = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise VersionError(f"checkpoint version {version} unsupported (expected {VERSION})")
    body, trailer = buf[:-8], buf[-8:]
    if _checksum(body) != trailer:
        raise CorruptionError("checkpoint checksum mismatch (file corrupt or truncated)")
    if 12 + clen > len(body):
        raise CorruptionError("config block runs past end of file")
    block = json.loads(bytes(body[12:12 + clen]).decode("utf-8"))

    tensors = {}
    pos = 12 + clen
    try:
        while pos < len(body):
            (nlen,) = struct.unpack_from("<I", body, pos)
            name = bytes(body[pos + 4:pos + 4 + nlen]).decode("utf-8")
            pos += 4 + nlen
            (rank,) = struct.unpack_from("<I", body, pos)
            dims = struct.unpack_from(f"<{rank}I", body, pos + 4)
            pos += 4 + 4 * rank
            count = int(np.prod(dims)) if rank else 1
            if pos + 4 * count > len(body):
                raise CorruptionError(f"tensor {name!r} payload runs past end of file")
            tensors[name] = np.frombuffer(body, dtype="<f4", count=count, offset=pos).reshape(dims).astype(np.float32)
            pos += 4 * count
    except struct.error as exc:
        raise CorruptionError(f"malformed tensor record at byte {pos}") from exc

    config = NestedConfig(**block["model"])
    if expect_config is not None and expect_config != config:
        _check_names(build_nested(expect_config, 0), tensors, "expected model")
    model = build_nested(config, 0)
    _check_names(model, tensors, "checkpoint config")
    for p in model.parameters():
        p.value = tensors[p.name].copy()
        p.grad = np.zeros_like(p.value)

    state = None
    if "adam" in block:
        a = block["adam"]
        state = AdamState(lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"], t=a["t"])
        for p in model.parameters():
            if ADAM_M + p.name in tensors:
                state.m[p.name] = tensors[ADAM_M + p.name].copy()
                state.v[p.name] = tensors[ADAM_V + p.name].copy()
    return Checkpoint(model, state, block["run"], block["epoch"], block["extra"])


def _check_names(model, tensors, against):
    stored = {k: v for k, v in tensors.items() if not k.startswith((ADAM_M, ADAM_V))}
    expected = model.named_parameters()
    for name in expected:
        if name not in stored:
            raise ContractError(f"parameter {name!r} required by the {against} is missing from the checkpoint")
    for name in stored:
        if name not in expected:
            raise ContractError(f"checkpoint parameter {name!r} does not exist in the {against}")
    for name, p in expected.items():
        if stored[name].shape != p.value.shape:
            raise ContractError(
                f"parameter {name!r}: checkpoint shape {stored[name].shape} vs {against} shape {p.value.shape}"
            )


def load_checkpoint(path, expect_config=None):
    return decode_checkpoint(Path(path).read_bytes(), expect_config)
