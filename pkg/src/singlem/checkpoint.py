"""Checkpoint serialization: text manifest plus raw little-endian f64 payload.

A checkpoint is `<name>.ckpt` (manifest) and `<name>.ckpb` (payload). The
manifest carries a version tag, a sha256 of the payload, a flat config echo,
the optimizer step, and one line per tensor with shape/offset/trainable flag.
Optimizer moments ride along as reserved `opt.m.*` / `opt.v.*` entries so a
resumed run replays bit-exactly.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Parameter, ParamDict, Tensor
from .errors import CheckpointIntegrity, IoFailure, MalformedHeader
from .optim import AdamWState

MANIFEST_SUFFIX = ".ckpt"
PAYLOAD_SUFFIX = ".ckpb"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    params: ParamDict
    config: dict[str, str] = field(default_factory=dict)
    opt_state: AdamWState | None = None


def _paths(path: str | Path) -> tuple[Path, Path]:
    p = Path(path)
    if p.suffix in (MANIFEST_SUFFIX, PAYLOAD_SUFFIX):
        p = p.with_suffix("")
    return p.with_suffix(MANIFEST_SUFFIX), p.with_suffix(PAYLOAD_SUFFIX)


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    """Write manifest + payload atomically (temp file, then rename)."""
    manifest_path, payload_path = _paths(path)

    entries: list[tuple[str, np.ndarray, bool]] = []
    for name, p in ckpt.params.items():
        entries.append((name, p.tensor.data, p.trainable))
    if ckpt.opt_state is not None:
        for name, arr in ckpt.opt_state.m.items():
            entries.append((f"opt.m.{name}", arr, False))
        for name, arr in ckpt.opt_state.v.items():
            entries.append((f"opt.v.{name}", arr, False))

    payload = bytearray()
    lines = [f"checkpoint={FORMAT_VERSION}"]
    for key in sorted(ckpt.config):
        lines.append(f"config.{key}={ckpt.config[key]}")
    if ckpt.opt_state is not None:
        lines.append(f"opt.step={ckpt.opt_state.step}")
    tensor_lines = []
    offset = 0
    for name, arr, trainable in entries:
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        shape = ",".join(str(d) for d in arr.shape)
        tensor_lines.append(
            f"tensor={name} shape={shape} offset={offset} dtype=f8le "
            f"trainable={int(trainable)}")
        payload.extend(raw)
        offset += len(raw)
    digest = hashlib.sha256(bytes(payload)).hexdigest()
    lines.append(f"sha256={digest}")
    lines.extend(tensor_lines)

    try:
        for target, blob in ((manifest_path, ("\n".join(lines) + "\n").encode()),
                             (payload_path, bytes(payload))):
            tmp = target.with_suffix(target.suffix + ".tmp")
            tmp.write_bytes(blob)
            os.replace(tmp, target)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Read and verify a checkpoint; trainable tensors come back grad-enabled."""
    manifest_path, payload_path = _paths(path)
    if not manifest_path.exists() or not payload_path.exists():
        raise IoFailure(f"checkpoint pair {manifest_path.stem}.* not found")

    config: dict[str, str] = {}
    opt_step: int | None = None
    digest: str | None = None
    specs: list[tuple[str, tuple[int, ...], int, bool]] = []
    for line in manifest_path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        if key == "checkpoint":
            if value != str(FORMAT_VERSION):
                raise MalformedHeader(f"unsupported checkpoint version {value!r}")
        elif key.startswith("config."):
            config[key[len("config."):]] = value
        elif key == "opt.step":
            opt_step = int(value)
        elif key == "sha256":
            digest = value
        elif key == "tensor":
            fields = dict(part.split("=", 1) for part in line.split(" ") if "=" in part)
            shape = (tuple(int(d) for d in fields["shape"].split(","))
                     if fields["shape"] else ())
            specs.append((fields["tensor"], shape, int(fields["offset"]),
                          fields.get("trainable", "0") == "1"))
        else:
            raise MalformedHeader(f"unknown manifest line: {line!r}")
    if digest is None:
        raise MalformedHeader("manifest missing sha256")

    payload = payload_path.read_bytes()
    actual = hashlib.sha256(payload).hexdigest()
    if actual != digest:
        raise CheckpointIntegrity(
            f"payload hash {actual[:12]}... does not match manifest {digest[:12]}...")

    params: ParamDict = {}
    opt_m: dict[str, np.ndarray] = {}
    opt_v: dict[str, np.ndarray] = {}
    for name, shape, offset, trainable in specs:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f8", count=count,
                            offset=offset).reshape(shape).copy()
        if name.startswith("opt.m."):
            opt_m[name[len("opt.m."):]] = arr
        elif name.startswith("opt.v."):
            opt_v[name[len("opt.v."):]] = arr
        else:
            params[name] = Parameter(name, Tensor(arr, requires_grad=trainable),
                                     trainable=trainable)
    opt_state = None
    if opt_step is not None:
        opt_state = AdamWState(m=opt_m, v=opt_v, step=opt_step)
    return Checkpoint(params=params, config=config, opt_state=opt_state)
