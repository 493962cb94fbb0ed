"""Transformer depth network: Reassemble, Fusion and Head stages."""
from __future__ import annotations

import math

import numpy as np

from ..ndiff import Tensor, ops
from .common import init_disparity_head
from .layers import BatchNorm2d, Conv2d, ConvTranspose2d, Module
from .transformer import TransformerEncoder

# output stride of each reassemble stage; EN keeps the patch grid
STAGE_STRIDE = {"DN3": 4, "DN6": 8, "DN9": 16, "DN12": 32, "EN": None}
DEPTH_STAGES = ("DN3", "DN6", "DN9", "DN12")


class Reassemble(Module):
    """Tokens (N, Np+1, d) -> feature map (N, Nc, H/s, W/s).

    With p=16 this is exactly: DN3 x4 transpose conv, DN6 x2 transpose conv,
    DN9 identity, DN12 one 3x3 stride-2 conv. Other patch sizes keep the
    same output strides, adding or dropping resampling steps.
    """

    def __init__(self, stage, dim, channels, patch, grid, rng):
        super().__init__()
        if stage not in STAGE_STRIDE:
            raise ValueError(f"unknown reassemble stage {stage!r}")
        self.stage = stage
        self.grid = tuple(grid)
        self.project = Conv2d(dim, channels, 1, rng=rng)
        self.up = None
        self.down = []
        stride = STAGE_STRIDE[stage]
        if stride is not None and stride < patch:
            f = patch // stride
            self.up = ConvTranspose2d(channels, channels, f, stride=f, rng=rng)
        elif stride is not None and stride > patch:
            steps = int(round(math.log2(stride // patch)))
            self.down = [Conv2d(channels, channels, 3, stride=2, padding=1, rng=rng) for _ in range(steps)]

    def forward(self, tokens: Tensor, grid=None) -> Tensor:
        gh, gw = grid or self.grid
        n, t, d = tokens.shape
        if t != gh * gw + 1:
            raise ValueError(f"stage {self.stage}: {t} tokens do not match grid {gh}x{gw} plus readout")
        x = tokens[:, 1:, :].permute(0, 2, 1).reshape(n, d, gh, gw)
        x = self.project(x)
        if self.up is not None:
            x = self.up(x)
        for conv in self.down:
            x = conv(x)
        return x


class ResidualConvUnit(Module):
    def __init__(self, channels, rng):
        super().__init__()
        self.conv1 = Conv2d(channels, channels, 3, padding=1, bias=False, rng=rng)
        self.bn1 = BatchNorm2d(channels)
        self.conv2 = Conv2d(channels, channels, 3, padding=1, bias=False, rng=rng)
        self.bn2 = BatchNorm2d(channels)

    def forward(self, x):
        y = self.bn1(self.conv1(ops.relu(x)))
        y = self.bn2(self.conv2(ops.relu(y)))
        return x + y


class Fusion(Module):
    def __init__(self, skip_channels, channels, rng):
        super().__init__()
        self.project = Conv2d(skip_channels, channels, 3, padding=1, bias=False, rng=rng)
        self.rcu1 = ResidualConvUnit(channels, rng)
        self.rcu2 = ResidualConvUnit(channels, rng)

    def forward(self, skip: Tensor, deep: Tensor = None) -> Tensor:
        x = self.rcu1(self.project(skip))
        if deep is not None:
            if deep.shape != x.shape:
                raise ValueError(f"fusion: deep path {deep.shape} vs skip {x.shape}")
            x = x + deep
        x = self.rcu2(x)
        return ops.bilinear_upsample(x, 2)


class Head(Module):
    def __init__(self, channels, hidden, rng, depth_range=(0.1, 100.0)):
        super().__init__()
        self.conv1 = Conv2d(channels, hidden, 3, padding=1, rng=rng)
        self.conv2 = Conv2d(hidden, 1, 1, rng=rng)
        init_disparity_head(self.conv2, *depth_range)

    def forward(self, x):
        x = ops.relu(self.conv1(x))
        x = ops.bilinear_upsample(x, 2)
        return ops.sigmoid(self.conv2(x))


class DepthTransformer(Module):
    """Disparity pyramid [scale 0 (full res), 1, 2, 3], each (N, 1, H/2^s, W/2^s)."""

    kind = "T"

    def __init__(self, cfg, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.cfg = cfg
        self.grid = (cfg.height // cfg.patch_size, cfg.width // cfg.patch_size)
        self.encoder = TransformerEncoder(cfg, 3, rng)
        self.reassemble = [
            Reassemble(s, cfg.embed_dim, c, cfg.patch_size, self.grid, rng)
            for s, c in zip(DEPTH_STAGES, cfg.reassemble_channels)
        ]
        self.fusion = [Fusion(c, cfg.fusion_channels, rng) for c in cfg.reassemble_channels]
        self.heads = [Head(cfg.fusion_channels, cfg.head_channels, rng, (cfg.min_depth, cfg.max_depth)) for _ in range(4)]

    def features(self, image: Tensor) -> list:
        outs = self.encoder(image)
        grid = (image.shape[2] // self.cfg.patch_size, image.shape[3] // self.cfg.patch_size)
        taps = [outs[t - 1] for t in self.cfg.tap_layers]
        return [r(t, grid) for r, t in zip(self.reassemble, taps)]

    def forward(self, image: Tensor) -> list:
        feats = self.features(image)
        disps = [None] * 4
        x = None
        for level in (3, 2, 1, 0):
            x = self.fusion[level](feats[level], x)
            disps[level] = self.heads[level](x)
        return disps
