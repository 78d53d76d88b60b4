"""Checkpoint container for agent parameters.

Byte layout (little-endian):

    magic    8 bytes  b"MACPPO\\x00\\x01"
    version  uint32
    count    uint32   number of tensors
    then per tensor:
        name_len uint16, name (utf-8)
        ndim     uint8,  shape uint32 * ndim
        data     float64 * prod(shape), C order

A JSON sidecar (same path plus ``.json``) carries the model sizes, both
configs and the optimizer step counts.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from ..errors import MacallocError, SchemaError
from .env import EnvConfig
from .nets import MLP, Adam
from .ppo import PpoConfig, PpoModel

MAGIC = b"MACPPO\x00\x01"
VERSION = 1


class CheckpointError(MacallocError):
    pass


def write_tensors(path, tensors: dict) -> None:
    out = bytearray(MAGIC)
    out += struct.pack("<II", VERSION, len(tensors))
    for name, arr in tensors.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        key = name.encode("utf-8")
        out += struct.pack("<H", len(key)) + key
        out += struct.pack("<B", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
        out += a.tobytes()
    try:
        Path(path).write_bytes(bytes(out))
    except OSError as e:
        raise CheckpointError(f"cannot write checkpoint {path}: {e}") from e


def read_tensors(path) -> dict:
    try:
        buf = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if buf[:8] != MAGIC:
        raise SchemaError(f"{path}: not a checkpoint file (bad magic)")
    pos = 8
    version, count = struct.unpack_from("<II", buf, pos)
    pos += 8
    if version != VERSION:
        raise SchemaError(f"{path}: unsupported checkpoint version {version}")
    tensors = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos:pos + n].decode("utf-8")
            pos += n
            (ndim,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", buf, pos)
            pos += 4 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            if pos + 8 * size > len(buf):
                raise SchemaError(f"{path}: tensor {name!r} runs past the end of the file")
            tensors[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(shape).copy()
            pos += 8 * size
    except struct.error as e:
        raise SchemaError(f"{path}: truncated checkpoint ({e})") from e
    if pos != len(buf):
        raise SchemaError(f"{path}: {len(buf) - pos} trailing bytes")
    return tensors


def _env_dict(cfg: EnvConfig | None):
    if cfg is None:
        return None
    d = {f.name: getattr(cfg, f.name) for f in fields(cfg) if f.name != "channels"}
    return json.loads(json.dumps(d, default=list))


def save_checkpoint(model: PpoModel, path, env_config: EnvConfig | None = None, extra: dict | None = None) -> None:
    tensors = {}
    for net, opt, tag in ((model.actor, model.actor_opt, "actor"), (model.critic, model.critic_opt, "critic")):
        for k, v in net.params.items():
            tensors[f"{tag}.{k}"] = v
        for k in net.params:
            if k in opt.m:
                tensors[f"{tag}_opt.m.{k}"] = opt.m[k]
                tensors[f"{tag}_opt.v.{k}"] = opt.v[k]
    write_tensors(path, tensors)
    meta = {
        "format": "macalloc-ppo",
        "version": VERSION,
        "actor_sizes": model.actor.sizes,
        "critic_sizes": model.critic.sizes,
        "num_heads": model.num_heads,
        "levels": model.levels,
        "ppo_config": asdict(model.config),
        "env_config": _env_dict(env_config),
        "adam_steps": {"actor": model.actor_opt.step, "critic": model.critic_opt.step},
        "tensors": {k: list(v.shape) for k, v in tensors.items()},
    }
    if extra:
        meta["extra"] = extra
    try:
        Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    except OSError as e:
        raise CheckpointError(f"cannot write sidecar for {path}: {e}") from e


def load_checkpoint(path) -> tuple[PpoModel, EnvConfig | None, dict]:
    side = Path(str(path) + ".json")
    try:
        meta = json.loads(side.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"cannot read sidecar {side}: {e}") from e
    tensors = read_tensors(path)
    cfg = PpoConfig(**meta["ppo_config"])
    nets = {}
    for tag in ("actor", "critic"):
        net = MLP(meta[f"{tag}_sizes"])
        for k in net.params:
            name = f"{tag}.{k}"
            if name not in tensors:
                raise SchemaError(f"{path}: missing tensor {name}")
            if tensors[name].shape != net.params[k].shape:
                raise SchemaError(f"{path}: {name} has shape {tensors[name].shape}, expected {net.params[k].shape}")
            net.params[k] = tensors[name]
        opt = Adam(lr=cfg.lr, step=int(meta["adam_steps"][tag]))
        for k in net.params:
            if f"{tag}_opt.m.{k}" in tensors:
                opt.m[k] = tensors[f"{tag}_opt.m.{k}"]
                opt.v[k] = tensors[f"{tag}_opt.v.{k}"]
        nets[tag] = (net, opt)
    model = PpoModel(nets["actor"][0], nets["critic"][0], int(meta["num_heads"]), int(meta["levels"]), cfg,
                     nets["actor"][1], nets["critic"][1])
    env = meta.get("env_config")
    env_cfg = EnvConfig(**env) if env else None
    return model, env_cfg, meta
