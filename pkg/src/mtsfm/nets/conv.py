"""Convolutional baseline: small residual encoder with a skip-connection decoder."""
from __future__ import annotations

import numpy as np

from ..ndiff import Tensor, ops
from .common import init_disparity_head
from .layers import BatchNorm2d, Conv2d, Module
from .pose import PoseDecoder


class BasicBlock(Module):
    def __init__(self, cin, cout, stride, rng):
        super().__init__()
        self.conv1 = Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False, rng=rng)
        self.bn1 = BatchNorm2d(cout)
        self.conv2 = Conv2d(cout, cout, 3, padding=1, bias=False, rng=rng)
        self.bn2 = BatchNorm2d(cout)
        self.short = Conv2d(cin, cout, 1, stride=stride, bias=False, rng=rng)
        self.bn_short = BatchNorm2d(cout)

    def forward(self, x):
        y = ops.relu(self.bn1(self.conv1(x)))
        y = self.bn2(self.conv2(y))
        return ops.relu(y + self.bn_short(self.short(x)))


class ResEncoder(Module):
    """Four stride-2 stages doubling channels; stage s is at H / 2^(s+1)."""

    def __init__(self, in_channels, base, rng):
        super().__init__()
        chans = [base * 2**s for s in range(4)]
        self.channels = chans
        cins = [in_channels] + chans[:-1]
        self.stages = [BasicBlock(ci, co, 2, rng) for ci, co in zip(cins, chans)]

    def forward(self, x) -> list:
        feats = []
        for st in self.stages:
            x = st(x)
            feats.append(x)
        return feats


class DepthCNN(Module):
    kind = "C"

    def __init__(self, cfg, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.cfg = cfg
        self.encoder = ResEncoder(3, cfg.cnn_base, rng)
        enc = self.encoder.channels
        dec = [max(4, c // 2) for c in enc]
        self.upconv = []
        self.iconv = []
        self.heads = []
        for level in (3, 2, 1, 0):
            cin = enc[3] if level == 3 else dec[level + 1]
            self.upconv.append(Conv2d(cin, dec[level], 3, padding=1, rng=rng))
            skip = enc[level - 1] if level > 0 else 0
            self.iconv.append(Conv2d(dec[level] + skip, dec[level], 3, padding=1, rng=rng))
            self.heads.append(Conv2d(dec[level], 1, 3, padding=1, rng=rng))
            init_disparity_head(self.heads[-1], cfg.min_depth, cfg.max_depth)

    def forward(self, image: Tensor) -> list:
        feats = self.encoder(image)
        x = feats[3]
        disps = [None] * 4
        for i, level in enumerate((3, 2, 1, 0)):
            x = ops.relu(self.upconv[i](x))
            x = ops.bilinear_upsample(x, 2)
            if level > 0:
                x = ops.concat([x, feats[level - 1]], axis=1)
            x = ops.relu(self.iconv[i](x))
            disps[level] = ops.sigmoid(self.heads[i](x))
        return disps


class EgoCNN(Module):
    kind = "C"

    def __init__(self, cfg, rng=None, predict_intrinsics=False):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(1)
        self.cfg = cfg
        self.encoder = ResEncoder(6, cfg.cnn_base, rng)
        self.decoder = PoseDecoder(self.encoder.channels[-1], cfg.pose_channels, rng, predict_intrinsics)

    @property
    def predict_intrinsics(self):
        return self.decoder.predict_intrinsics

    def forward(self, pair: Tensor, want_intrinsics: bool = None):
        return self.decoder(self.encoder(pair)[-1], pair.shape[2:], want_intrinsics)
