"""Checkpoint files with a JSON sidecar describing how to rebuild the agent."""
from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..agent import ArchitectureSpec, Network
from ..autodiff import load_params, save_params
from ..errors import DataError
from ..trainer import HyperParams


def save_checkpoint(path, net: Network, hp: HyperParams | None = None, extra: dict | None = None):
    """Write <path>.navw (parameters) and <path>.json (architecture + context)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_params(path.with_suffix(".navw"), net.pv)
    meta = {"arch": asdict(net.spec)}
    if hp is not None:
        meta["hp"] = asdict(hp)
    if extra:
        meta["extra"] = extra
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")


def load_checkpoint(path, dtype=np.float32):
    """Rebuild (net, hp, extra) from a checkpoint basename or .navw path."""
    path = Path(path)
    navw = path if path.suffix == ".navw" else path.with_suffix(".navw")
    meta_path = navw.with_suffix(".json")
    if not navw.exists():
        raise FileNotFoundError(navw)
    if not meta_path.exists():
        raise DataError(f"checkpoint sidecar {meta_path} is missing")
    meta = json.loads(meta_path.read_text())
    arch = meta["arch"]
    arch["heads"] = tuple(arch.get("heads", ()))
    arch["conv1"] = tuple(arch.get("conv1", (16, 8, 4)))
    arch["conv2"] = tuple(arch.get("conv2", (32, 4, 2)))
    spec = ArchitectureSpec(**arch).validate()
    pv = load_params(navw, dtype=dtype)
    net = Network(spec, pv)
    hp = HyperParams(**meta["hp"]) if "hp" in meta else None
    return net, hp, meta.get("extra", {})
