"""Checkpoint container: named tensors in an .npz plus a JSON metadata sidecar.

The archive holds every model parameter and buffer as a named float array
(``model::<name>``) and, optionally, Adam moment tensors (``opt::<name>::m``
and ``::v``).  The sidecar carries {kind, config, config_hash, step, seed}
plus free-form extras, so the format is readable without this package.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import CheckpointError


def config_hash_of(config: dict) -> str:
    """Stable sha256 of a JSON-serializable config."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class Checkpoint:
    """Named parameter tensors and training metadata for one network stage."""

    kind: str
    tensors: dict
    step: int
    config: dict
    config_hash: str
    seed: int | None = None
    extra: dict = field(default_factory=dict)
    optimizer_state: dict | None = None  # name -> {"m": arr, "v": arr, "step": int}

    def params_digest(self) -> str:
        """sha256 over the serialized parameter bytes, for freeze audits."""
        h = hashlib.sha256()
        for name in sorted(self.tensors):
            arr = np.ascontiguousarray(self.tensors[name])
            h.update(name.encode())
            h.update(str(arr.shape).encode())
            h.update(arr.tobytes())
        return h.hexdigest()


def checkpoint_from_module(module: torch.nn.Module, kind: str, config: dict,
                           step: int, seed: int | None = None,
                           optimizer: torch.optim.Optimizer | None = None,
                           extra: dict | None = None) -> Checkpoint:
    tensors = {name: value.detach().cpu().numpy().copy()
               for name, value in module.state_dict().items()}
    opt_state = None
    if optimizer is not None:
        opt_state = _optimizer_to_arrays(module, optimizer)
    return Checkpoint(kind=kind, tensors=tensors, step=step, config=dict(config),
                      config_hash=config_hash_of(config), seed=seed,
                      extra=dict(extra or {}), optimizer_state=opt_state)


def load_into_module(ckpt: Checkpoint, module: torch.nn.Module):
    """Copy checkpoint tensors into the module; shapes must match exactly."""
    state = module.state_dict()
    missing = set(state) - set(ckpt.tensors)
    unexpected = set(ckpt.tensors) - set(state)
    if missing or unexpected:
        raise CheckpointError(
            f"parameter name mismatch (missing={sorted(missing)[:4]}, "
            f"unexpected={sorted(unexpected)[:4]})")
    new_state = {}
    for name, arr in ckpt.tensors.items():
        want = tuple(state[name].shape)
        if tuple(arr.shape) != want:
            raise CheckpointError(f"{name}: shape {arr.shape} != expected {want}")
        new_state[name] = torch.as_tensor(arr)
    module.load_state_dict(new_state)


def restore_optimizer(ckpt: Checkpoint, module: torch.nn.Module,
                      optimizer: torch.optim.Optimizer):
    """Rebuild Adam moments saved by :func:`checkpoint_from_module`."""
    if not ckpt.optimizer_state:
        return
    by_name = dict(module.named_parameters())
    for name, entry in ckpt.optimizer_state.items():
        param = by_name.get(name)
        if param is None:
            raise CheckpointError(f"optimizer state for unknown parameter {name!r}")
        optimizer.state[param] = {
            "step": torch.tensor(float(entry["step"])),
            "exp_avg": torch.as_tensor(entry["m"]).clone(),
            "exp_avg_sq": torch.as_tensor(entry["v"]).clone(),
        }


def _optimizer_to_arrays(module, optimizer):
    name_of = {id(p): n for n, p in module.named_parameters()}
    out = {}
    for group in optimizer.param_groups:
        for p in group["params"]:
            st = optimizer.state.get(p)
            if not st:
                continue
            name = name_of.get(id(p))
            if name is None:
                continue
            out[name] = {
                "m": st["exp_avg"].detach().cpu().numpy().copy(),
                "v": st["exp_avg_sq"].detach().cpu().numpy().copy(),
                "step": int(st["step"]),
            }
    return out


def save_checkpoint(ckpt: Checkpoint, path_base: str) -> str:
    """Write ``<path_base>.npz`` and ``<path_base>.json``; returns the npz path."""
    os.makedirs(os.path.dirname(os.path.abspath(path_base)), exist_ok=True)
    arrays = {f"model::{k}": v for k, v in ckpt.tensors.items()}
    opt_meta = {}
    if ckpt.optimizer_state:
        for name, entry in ckpt.optimizer_state.items():
            arrays[f"opt::{name}::m"] = entry["m"]
            arrays[f"opt::{name}::v"] = entry["v"]
            opt_meta[name] = entry["step"]
    np.savez(path_base + ".npz", **arrays)
    meta = {
        "kind": ckpt.kind,
        "config": ckpt.config,
        "config_hash": ckpt.config_hash,
        "step": ckpt.step,
        "seed": ckpt.seed,
        "extra": ckpt.extra,
        "optimizer_steps": opt_meta,
    }
    with open(path_base + ".json", "w") as fh:
        json.dump(meta, fh, indent=2)
    return path_base + ".npz"


def load_checkpoint(path_base: str) -> Checkpoint:
    npz_path = path_base + ".npz"
    json_path = path_base + ".json"
    if not (os.path.exists(npz_path) and os.path.exists(json_path)):
        raise CheckpointError(f"no checkpoint at {path_base!r}")
    with open(json_path) as fh:
        meta = json.load(fh)
    tensors = {}
    opt_arrays = {}
    with np.load(npz_path) as data:
        for key in data.files:
            if key.startswith("model::"):
                tensors[key[len("model::"):]] = data[key]
            elif key.startswith("opt::"):
                opt_arrays[key[len("opt::"):]] = data[key]
    opt_state = None
    if meta.get("optimizer_steps"):
        opt_state = {}
        for name, step in meta["optimizer_steps"].items():
            opt_state[name] = {
                "m": opt_arrays[f"{name}::m"],
                "v": opt_arrays[f"{name}::v"],
                "step": int(step),
            }
    return Checkpoint(kind=meta["kind"], tensors=tensors, step=meta["step"],
                      config=meta["config"], config_hash=meta["config_hash"],
                      seed=meta.get("seed"), extra=meta.get("extra", {}),
                      optimizer_state=opt_state)
