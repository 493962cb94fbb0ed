"""Flat key=value run configuration with typed parsing."""
from __future__ import annotations

import typing
from dataclasses import asdict, dataclass, fields
from pathlib import Path


@dataclass
class RunConfig:
    preset: str = "desk"
    arch: str = "tt"
    learn_intrinsics: bool = False
    data: str = "synth"  # "synth" or "kitti:<root>"
    split: str = ""  # split file for kitti data
    exclude: str = ""  # frames never used as targets
    seed: int = 0
    epochs: int = 20
    batch_size: int = 4
    optimizer: str = "auto"  # auto (per-network recipe), adam, adamw
    lr: float = 0.0  # 0 keeps the per-network default
    weight_decay: float = 0.01
    decay_epoch: int = 15
    synth_scenes: int = 4
    pose_convention: str = "temporal"
    precision: str = "float32"

    def validate(self) -> "RunConfig":
        if self.preset not in ("desk", "paper"):
            raise ValueError("preset must be 'desk' or 'paper'")
        if self.optimizer not in ("auto", "adam", "adamw"):
            raise ValueError("optimizer must be auto, adam or adamw")
        if not (self.data == "synth" or self.data.startswith("kitti:")):
            raise ValueError("data must be 'synth' or 'kitti:<root>'")
        if self.precision not in ("float32", "float64"):
            raise ValueError("precision must be float32 or float64")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        return self


def _parse(tp, raw: str):
    tp = tp if not isinstance(tp, str) else eval(tp, vars(typing))  # postponed annotations
    if tp is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if tp is int:
        return int(raw)
    if tp is float:
        return float(raw)
    return raw.strip()


def dump_config(cfg) -> str:
    return "".join(f"{k}={v}\n" for k, v in asdict(cfg).items())


def load_config(text: str, cls=RunConfig, strict: bool = True):
    types = {f.name: f.type for f in fields(cls)}
    kw = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected key=value")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in types:
            if strict:
                raise ValueError(f"line {n}: unknown key {key!r}")
            continue
        kw[key] = _parse(types[key], val)
    return cls(**kw)


def read_config(path, cls=RunConfig):
    return load_config(Path(path).read_text(), cls)
