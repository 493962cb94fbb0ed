from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Tuple

PAPER_REASSEMBLE = (96, 768, 1536, 3072)
PAPER_EGO_CHANNELS = 2048
PAPER_DIM = 768


@dataclass
class NetConfig:
    height: int = 192
    width: int = 640
    patch_size: int = 16
    embed_dim: int = 768
    num_layers: int = 12
    num_heads: int = 12
    tap_layers: Tuple[int, ...] = (3, 6, 9, 12)
    reassemble_channels: Tuple[int, ...] = PAPER_REASSEMBLE
    ego_channels: int = PAPER_EGO_CHANNELS
    fusion_channels: int = 96
    head_channels: int = 32
    pose_channels: int = 256
    mlp_ratio: int = 4
    cnn_base: int = 64
    min_depth: float = 0.1
    max_depth: float = 100.0

    def __post_init__(self):
        self.tap_layers = tuple(int(t) for t in self.tap_layers)
        self.reassemble_channels = tuple(int(c) for c in self.reassemble_channels)
        self.validate()

    def validate(self) -> None:
        p = self.patch_size
        if self.height % 32 or self.width % 32:
            raise ValueError(f"input {self.height}x{self.width} must be divisible by 32")
        if self.height % p or self.width % p:
            raise ValueError(f"patch size {p} must divide {self.height}x{self.width}")
        if len(self.tap_layers) != 4:
            raise ValueError("exactly four tap layers are required")
        if any(b <= a for a, b in zip(self.tap_layers, self.tap_layers[1:])):
            raise ValueError("tap layers must be strictly increasing")
        if self.tap_layers[0] < 1 or self.tap_layers[-1] > self.num_layers:
            raise ValueError(f"tap layers {self.tap_layers} outside 1..{self.num_layers}")
        if len(self.reassemble_channels) != 4:
            raise ValueError("four reassemble channel counts are required")
        if self.embed_dim % self.num_heads:
            raise ValueError("embed_dim must be divisible by num_heads")
        if not 0 < self.min_depth < self.max_depth:
            raise ValueError("need 0 < min_depth < max_depth")

    @property
    def num_patches(self) -> int:
        return (self.height // self.patch_size) * (self.width // self.patch_size)

    @classmethod
    def paper(cls, height: int = 192, width: int = 640) -> "NetConfig":
        return cls(height=height, width=width)

    @classmethod
    def desk(cls, height: int = 64, width: int = 64) -> "NetConfig":
        d = 32
        scale = d / PAPER_DIM
        return cls(
            height=height,
            width=width,
            patch_size=8,
            embed_dim=d,
            num_layers=4,
            num_heads=4,
            tap_layers=(1, 2, 3, 4),
            reassemble_channels=tuple(max(1, round(c * scale)) for c in PAPER_REASSEMBLE),
            ego_channels=max(1, round(PAPER_EGO_CHANNELS * scale)),
            fusion_channels=16,
            head_channels=8,
            pose_channels=32,
            cnn_base=8,
        )

    @classmethod
    def preset(cls, name: str, height: int = None, width: int = None) -> "NetConfig":
        kw = {k: v for k, v in (("height", height), ("width", width)) if v is not None}
        if name == "paper":
            return cls.paper(**kw)
        if name == "desk":
            return cls.desk(**kw)
        raise ValueError(f"unknown preset {name!r}")

    def to_text(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            if isinstance(v, (tuple, list)):
                v = ",".join(str(x) for x in v)
            lines.append(f"{k}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "NetConfig":
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            key = key.strip()
            if key not in types:
                continue
            kw[key] = _parse_field(types[key], val.strip())
        return cls(**kw)


def _parse_field(type_name, val: str):
    t = str(type_name)
    if "Tuple" in t:
        return tuple(int(x) for x in val.split(",") if x)
    if "float" in t:
        return float(val)
    return int(val)
